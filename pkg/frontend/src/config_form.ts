/** Organizer dashboard: agenda keywords and the stand-in's per-item
 * responses for one absentee.
 *
 * Validation that needs no server round-trip happens before submit
 * (every agenda item keeps at least one keyword, a fallback response
 * exists); everything else — unknown agenda items from a stale form,
 * malformed plans — is the server's verdict, rendered inline.
 */

import { ApiClient, ApiFailure } from "./api.js";
import { clear, el } from "./dom.js";
import type { Toast } from "./toast.js";
import type {
  MeetingJson,
  ResponsePlanJson,
  StandInConfigJson,
} from "./types.js";

interface ItemRow {
  itemId: string;
  keywords: HTMLInputElement;
  response: HTMLInputElement;
  error: HTMLSpanElement;
}

function splitKeywords(raw: string): string[] {
  return raw
    .split(",")
    .map((k) => k.trim())
    .filter((k) => k !== "");
}

export class ConfigForm {
  private meetingId: string | null = null;
  private absenteeId: string | null = null;
  private rows: ItemRow[] = [];

  private readonly headEl: HTMLHeadingElement;
  private readonly rowsEl: HTMLDivElement;
  private readonly fallbackInput: HTMLInputElement;
  private readonly fallbackError: HTMLSpanElement;
  private readonly addressingInput: HTMLInputElement;
  private readonly formError: HTMLSpanElement;
  private readonly saveBtn: HTMLButtonElement;

  constructor(
    host: HTMLElement,
    private readonly api: ApiClient,
    private readonly toast: Toast,
  ) {
    this.headEl = el("h3", {}, ["Stand-in configuration"]);
    this.rowsEl = el("div", { class: "config-rows" });
    this.fallbackInput = el("input", {
      type: "text",
      "data-testid": "resp-fallback",
      placeholder: "fallback response (required)",
    });
    this.fallbackError = el("span", {
      class: "inline-error",
      "data-testid": "err-fallback",
    });
    this.addressingInput = el("input", {
      type: "text",
      "data-testid": "addressing",
      placeholder: "names the stand-in answers to, comma separated",
    });
    this.formError = el("span", {
      class: "inline-error",
      "data-testid": "config-error",
    });
    this.saveBtn = el("button", { "data-testid": "save-config" }, ["save"]);
    this.saveBtn.addEventListener("click", () => void this.save());
    host.append(
      this.headEl,
      this.rowsEl,
      el("div", { class: "config-row" }, [
        el("label", {}, ["fallback"]),
        this.fallbackInput,
        this.fallbackError,
      ]),
      el("div", { class: "config-row" }, [
        el("label", {}, ["answers to"]),
        this.addressingInput,
      ]),
      el("div", { class: "config-row" }, [this.saveBtn, this.formError]),
    );
  }

  async load(meetingId: string, absenteeId: string): Promise<void> {
    const meeting = await this.api.getMeeting(meetingId);
    let config: StandInConfigJson | null = null;
    try {
      config = await this.api.getStandinConfig(meetingId, absenteeId);
    } catch (err) {
      if (!(err instanceof ApiFailure && err.status === 404)) throw err;
    }
    this.meetingId = meetingId;
    this.absenteeId = absenteeId;
    this.headEl.textContent = `Stand-in configuration — ${absenteeId} in ${meetingId}`;
    this.renderRows(meeting, config);
    this.fallbackInput.value = config?.fallback.text ?? "";
    this.addressingInput.value = (config?.addressing_names ?? []).join(", ");
    this.formError.textContent = "";
    this.fallbackError.textContent = "";
  }

  private renderRows(
    meeting: MeetingJson,
    config: StandInConfigJson | null,
  ): void {
    clear(this.rowsEl);
    this.rows = [];
    for (const item of meeting.agenda) {
      const keywords = el("input", {
        type: "text",
        value: item.keywords.join(", "),
        "data-testid": `kw-${item.item_id}`,
      });
      const response = el("input", {
        type: "text",
        value: config?.responses[item.item_id]?.text ?? "",
        placeholder: "response when this item is asked about",
        "data-testid": `resp-${item.item_id}`,
      });
      const error = el("span", {
        class: "inline-error",
        "data-testid": `err-${item.item_id}`,
      });
      this.rows.push({ itemId: item.item_id, keywords, response, error });
      this.rowsEl.append(
        el("div", { class: "config-row" }, [
          el("label", {}, [`${item.label} (${item.item_id})`]),
          keywords,
          response,
          error,
        ]),
      );
    }
  }

  /** Client-side checks; returns false (with inline errors) on failure. */
  validate(): boolean {
    let ok = true;
    for (const row of this.rows) {
      if (splitKeywords(row.keywords.value).length === 0) {
        row.error.textContent = "at least one keyword is required";
        ok = false;
      } else {
        row.error.textContent = "";
      }
    }
    if (this.fallbackInput.value.trim() === "") {
      this.fallbackError.textContent = "a fallback response is required";
      ok = false;
    } else {
      this.fallbackError.textContent = "";
    }
    return ok;
  }

  /**
   * Save keyword edits to the meeting (when changed) and PUT the stand-in
   * config. Keyword edits are applied onto a freshly fetched meeting so a
   * stale form can't resurrect deleted agenda items; response rows for
   * vanished items still go to the server, whose rejection shows up here.
   */
  async save(): Promise<boolean> {
    if (this.meetingId === null || this.absenteeId === null) return false;
    if (!this.validate()) return false;
    this.formError.textContent = "";
    try {
      const fresh = await this.api.getMeeting(this.meetingId);
      let meetingChanged = false;
      for (const row of this.rows) {
        const item = fresh.agenda.find((a) => a.item_id === row.itemId);
        if (item === undefined) continue;
        const edited = splitKeywords(row.keywords.value);
        if (JSON.stringify(edited) !== JSON.stringify(item.keywords)) {
          item.keywords = edited;
          meetingChanged = true;
        }
      }
      if (meetingChanged) await this.api.postMeeting(fresh);

      const responses: Record<string, ResponsePlanJson> = {};
      for (const row of this.rows) {
        const text = row.response.value.trim();
        if (text !== "") responses[row.itemId] = { text };
      }
      const config: StandInConfigJson = {
        absentee_id: this.absenteeId,
        responses,
        fallback: { text: this.fallbackInput.value.trim() },
        addressing_names: splitKeywords(this.addressingInput.value),
      };
      await this.api.putStandinConfig(
        this.meetingId,
        this.absenteeId,
        config,
      );
    } catch (err) {
      this.formError.textContent =
        err instanceof ApiFailure ? err.message : "save failed";
      return false;
    }
    this.toast("stand-in configuration saved");
    await this.load(this.meetingId, this.absenteeId);
    return true;
  }
}
