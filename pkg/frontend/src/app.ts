/** Page assembly: recordings list, playback viewer, comment recorder, and
 * organizer config form, sharing one ApiClient and one animation timer.
 */

import { ApiClient, FetchFn } from "./api.js";
import { ConfigForm } from "./config_form.js";
import { clear, el } from "./dom.js";
import { CaptureSource, CommentRecorder } from "./recorder.js";
import { Toast, installToasts } from "./toast.js";
import type { RecordingSummaryJson } from "./types.js";
import { PlaybackViewer } from "./viewer.js";

export interface AppOptions {
  capture?: CaptureSource;
  fetchFn?: FetchFn;
}

export class App {
  readonly api: ApiClient;
  readonly viewer: PlaybackViewer;
  readonly recorder: CommentRecorder;
  readonly configForm: ConfigForm;
  readonly toast: Toast;

  private summaries: RecordingSummaryJson[] = [];
  private readonly listEl: HTMLUListElement;
  private clockStarted = false;

  constructor(root: HTMLElement, baseUrl: string, opts: AppOptions = {}) {
    this.api = new ApiClient(baseUrl, opts.fetchFn);
    this.toast = installToasts(root);

    this.listEl = el("ul", { "data-testid": "recordings" });
    const refreshBtn = el("button", { "data-testid": "refresh" }, ["refresh"]);
    refreshBtn.addEventListener("click", () => void this.refreshRecordings());

    const viewerHost = el("div", { class: "viewer-host" });
    const recorderHost = el("div", { class: "recorder-host" });
    const configHost = el("div", { class: "config-host" });
    root.append(
      el("div", { class: "recordings" }, [
        el("h2", {}, ["Recordings"]),
        refreshBtn,
        this.listEl,
      ]),
      viewerHost,
      recorderHost,
      configHost,
    );

    this.viewer = new PlaybackViewer(viewerHost, this.api, this.toast);
    this.recorder = new CommentRecorder(
      recorderHost,
      this.api,
      this.toast,
      opts.capture,
    );
    this.configForm = new ConfigForm(configHost, this.api, this.toast);

    this.recorder.onRecordStart = () => this.viewer.pause();
    this.recorder.onSpliced = (result) => {
      void this.refreshRecordings();
      void this.open(result.recording_id);
    };
  }

  async refreshRecordings(): Promise<void> {
    this.summaries = await this.api.listRecordings();
    clear(this.listEl);
    for (const s of this.summaries) {
      const label =
        `${s.recording_id} — iteration ${s.iteration_index}, ` +
        `${s.duration_ticks} ticks` +
        (s.parent_iteration !== null
          ? ` (from iteration ${s.parent_iteration})`
          : "");
      const openBtn = el("button", { "data-rec": s.recording_id }, [label]);
      openBtn.addEventListener("click", () => void this.open(s.recording_id));
      this.listEl.append(el("li", {}, [openBtn]));
    }
  }

  /** Load a recording into the viewer and point the other panels at it. */
  async open(recordingId: string): Promise<void> {
    await this.viewer.load(recordingId);
    this.recorder.attach(recordingId, () => ({
      authorId: this.viewer.viewpoint,
      anchorTick: this.viewer.cursorTick,
    }));
    const summary = this.summaries.find(
      (s) => s.recording_id === recordingId,
    );
    const absentee = summary?.standins[0];
    if (summary !== undefined && absentee !== undefined) {
      await this.configForm.load(summary.meeting_id, absentee);
    }
  }

  /** The app's only timer; everything animated hangs off this loop. */
  startClock(): void {
    if (this.clockStarted) return;
    this.clockStarted = true;
    if (typeof requestAnimationFrame === "function") {
      let last = performance.now();
      const frame = (now: number) => {
        this.viewer.advance(now - last);
        last = now;
        requestAnimationFrame(frame);
      };
      requestAnimationFrame(frame);
    } else {
      let last = Date.now();
      setInterval(() => {
        const now = Date.now();
        this.viewer.advance(now - last);
        last = now;
      }, 33);
    }
  }
}

export function bootstrap(
  root: HTMLElement,
  baseUrl: string,
  opts: AppOptions = {},
): App {
  const app = new App(root, baseUrl, opts);
  void app.refreshRecordings();
  app.startClock();
  return app;
}
