/** Top-down playback of one recording.
 *
 * The viewer owns the canvas, the scrubber, the caption panel, and the
 * stand-in response panel. It renders exactly the view ticks the server
 * returns — the page cache only avoids refetching, never interpolates —
 * and exposes the last payload and scene as hooks so tests can check the
 * drawn frame against the API byte-for-byte.
 */

import { ApiClient, isAbort } from "./api.js";
import { clear, el } from "./dom.js";
import { Scene, sceneFromView } from "./scene.js";
import type { Toast } from "./toast.js";
import type { ManifestJson, ViewPageJson, ViewTickJson } from "./types.js";

/** Ticks fetched per request; one second of recording at the usual rate. */
export const PAGE_TICKS = 72;

const CANVAS_W = 640;
const CANVAS_H = 480;
const METERS_TO_PX = 90;
const AVATAR_PX = 14;
const PALETTE = ["#4c78a8", "#f58518", "#54a24b", "#b279a2", "#e45756",
                 "#72b7b2", "#eeca3b"];

export class PlaybackViewer {
  private manifest: ManifestJson | null = null;
  private recordingId: string | null = null;
  private _viewpoint: string | null = null;
  private page: ViewPageJson | null = null;
  private cursor = 0;
  private playhead = 0;
  private playing = false;
  private fetching = false;
  private lastView: ViewTickJson | null = null;
  private lastSceneState: Scene | null = null;
  private lastResponseText: string | null = null;
  private ctx: CanvasRenderingContext2D | null = null;
  private ctxProbed = false;

  private readonly titleEl: HTMLSpanElement;
  private readonly viewpointEl: HTMLSpanElement;
  private readonly canvas: HTMLCanvasElement;
  private readonly playBtn: HTMLButtonElement;
  private readonly scrubber: HTMLInputElement;
  private readonly tickLabel: HTMLSpanElement;
  private readonly captionsEl: HTMLDivElement;
  private readonly responseEl: HTMLDivElement;

  constructor(
    host: HTMLElement,
    private readonly api: ApiClient,
    private readonly toast: Toast,
  ) {
    this.titleEl = el("span", { class: "rec-title" }, ["no recording"]);
    this.viewpointEl = el("span", { class: "rec-viewpoint" });
    this.canvas = el("canvas", { "data-testid": "stage" });
    this.canvas.width = CANVAS_W;
    this.canvas.height = CANVAS_H;
    this.playBtn = el("button", { "data-testid": "play" }, ["play"]);
    this.playBtn.addEventListener("click", () => {
      if (this.playing) this.pause();
      else this.play();
    });
    this.scrubber = el("input", {
      type: "range",
      min: "0",
      max: "0",
      value: "0",
      "data-testid": "scrubber",
    });
    this.scrubber.addEventListener("input", () => {
      void this.scrub(Number(this.scrubber.value));
    });
    this.tickLabel = el("span", { "data-testid": "tick-label" }, ["- / -"]);
    this.captionsEl = el("div", { class: "captions", "data-testid": "captions" });
    this.responseEl = el("div", {
      class: "response-panel",
      "data-testid": "response-panel",
    });
    host.append(
      el("div", { class: "viewer-head" }, [this.titleEl, this.viewpointEl]),
      this.canvas,
      el("div", { class: "controls" }, [
        this.playBtn,
        this.scrubber,
        this.tickLabel,
      ]),
      el("div", { class: "panels" }, [
        el("div", {}, [el("h3", {}, ["Captions"]), this.captionsEl]),
        el("div", {}, [
          el("h3", {}, ["Stand-in responses"]),
          this.responseEl,
        ]),
      ]),
    );
  }

  // -- test hooks ------------------------------------------------------------

  /** The raw server payload behind the frame on screen. */
  get lastPayload(): ViewTickJson | null {
    return this.lastView;
  }

  /** What the canvas drew, as data. */
  get lastScene(): Scene | null {
    return this.lastSceneState;
  }

  get viewpoint(): string | null {
    return this._viewpoint;
  }

  get cursorTick(): number {
    return this.cursor;
  }

  get durationTicks(): number {
    return this.manifest?.duration_ticks ?? 0;
  }

  /** Pages are half-open, so the last renderable tick is duration - 1. */
  get maxTick(): number {
    return Math.max(this.durationTicks - 1, 0);
  }

  get isPlaying(): boolean {
    return this.playing;
  }

  // -- loading and scrubbing ----------------------------------------------------

  /**
   * Fetch the manifest and show the first tick. The default viewpoint is
   * the recording's first stand-in: reviewing your own absence is the
   * primary use of this screen.
   */
  async load(
    recordingId: string,
    viewpoint?: string | null,
  ): Promise<void> {
    const manifest = await this.api.manifest(recordingId);
    this.manifest = manifest;
    this.recordingId = recordingId;
    this._viewpoint =
      viewpoint !== undefined ? viewpoint : manifest.standins[0] ?? null;
    this.page = null;
    this.lastView = null;
    this.lastSceneState = null;
    this.lastResponseText = null;
    this.playing = false;
    this.playBtn.textContent = "play";
    this.scrubber.max = String(this.maxTick);
    this.titleEl.textContent = recordingId;
    this.viewpointEl.textContent =
      this._viewpoint === null
        ? " (spectator)"
        : ` viewing as ${this._viewpoint}`;
    await this.scrub(0);
  }

  /**
   * Move to a tick. Out-of-range targets clamp to the recording's edges.
   * If the tick's page is cached this renders synchronously; otherwise it
   * fetches the page, cancelling any older in-flight page request. A
   * failed fetch leaves the current frame up and raises a toast.
   */
  async scrub(toTick: number): Promise<void> {
    if (this.manifest === null || this.recordingId === null) return;
    const t = Math.min(Math.max(Math.floor(toTick), 0), this.maxTick);
    this.cursor = t;
    this.playhead = t;
    if (
      this.page !== null &&
      this.page.from <= t &&
      t < this.page.to
    ) {
      this.renderTick(t);
      return;
    }
    const from = t - (t % PAGE_TICKS);
    this.fetching = true;
    let page: ViewPageJson;
    try {
      page = await this.api.viewPage(
        this.recordingId,
        this._viewpoint,
        from,
        from + PAGE_TICKS,
      );
    } catch (err) {
      if (!isAbort(err)) {
        const reason = err instanceof Error ? err.message : String(err);
        this.toast(`playback fetch failed: ${reason}`);
      }
      return;
    } finally {
      this.fetching = false;
    }
    this.page = page;
    if (this.cursor !== t) return; // superseded while awaiting
    this.renderTick(t);
  }

  // -- playback clock ------------------------------------------------------------

  play(): void {
    if (this.manifest === null) return;
    if (this.cursor >= this.maxTick) {
      void this.scrub(0);
    }
    this.playing = true;
    this.playBtn.textContent = "pause";
  }

  pause(): void {
    this.playing = false;
    this.playBtn.textContent = "play";
  }

  /**
   * Advance the playback clock by wall-time milliseconds; the app's single
   * animation timer calls this. Holds the current frame rather than piling
   * up page requests while one is already in flight.
   */
  advance(dtMs: number): void {
    if (!this.playing || this.manifest === null) return;
    this.playhead += (dtMs * this.manifest.tick_rate) / 1000;
    const t = Math.floor(this.playhead);
    if (t === this.cursor) return;
    if (t >= this.maxTick) {
      this.pause();
      void this.scrub(this.maxTick);
      return;
    }
    if (this.fetching) return;
    void this.scrub(t);
  }

  // -- rendering ------------------------------------------------------------

  private renderTick(t: number): void {
    const page = this.page;
    if (page === null || this.manifest === null) return;
    const view = page.views[t - page.from];
    if (view === undefined) return;
    this.lastView = view;
    const scene = sceneFromView(view, this.manifest.standins);
    this.lastSceneState = scene;
    this.scrubber.value = String(t);
    this.tickLabel.textContent = `${t} / ${this.maxTick}`;
    this.drawScene(scene);
    this.renderCaptions(scene);
    this.renderResponses(scene);
  }

  private renderCaptions(scene: Scene): void {
    clear(this.captionsEl);
    for (const u of scene.captions) {
      this.captionsEl.append(
        el("div", { class: "caption" }, [`${u.speaker_id}: ${u.text}`]),
      );
    }
  }

  private renderResponses(scene: Scene): void {
    if (scene.standinResponses.length > 0) {
      this.lastResponseText = scene.standinResponses
        .map((u) => `${u.speaker_id}: ${u.text}`)
        .join("\n");
      clear(this.responseEl);
      for (const u of scene.standinResponses) {
        this.responseEl.append(
          el("div", { class: "response live" }, [
            `${u.speaker_id}: ${u.text}`,
          ]),
        );
      }
    } else if (this.lastResponseText !== null) {
      clear(this.responseEl);
      this.responseEl.append(
        el("div", { class: "response stale" }, [this.lastResponseText]),
      );
    } else {
      clear(this.responseEl);
    }
  }

  private context(): CanvasRenderingContext2D | null {
    if (!this.ctxProbed) {
      this.ctxProbed = true;
      try {
        this.ctx = this.canvas.getContext("2d");
      } catch {
        this.ctx = null; // headless DOM without canvas support
      }
    }
    return this.ctx;
  }

  private drawScene(scene: Scene): void {
    const ctx = this.context();
    if (ctx === null) return;
    ctx.clearRect(0, 0, CANVAS_W, CANVAS_H);
    ctx.fillStyle = "#fafafa";
    ctx.fillRect(0, 0, CANVAS_W, CANVAS_H);
    const cx = CANVAS_W / 2;
    const cy = CANVAS_H / 2;

    ctx.strokeStyle = "#ddd";
    ctx.beginPath();
    ctx.arc(cx, cy, METERS_TO_PX, 0, 2 * Math.PI);
    ctx.stroke();

    const pids = Object.keys(scene.participants).sort();
    pids.forEach((pid, i) => {
      const p = scene.participants[pid];
      // Top-down: world x goes right, world z goes down the screen.
      const x = cx + p.position[0] * METERS_TO_PX;
      const y = cy + p.position[2] * METERS_TO_PX;
      const color = PALETTE[i % PALETTE.length];

      if (p.speaking) {
        ctx.strokeStyle = color;
        ctx.lineWidth = 3;
        ctx.beginPath();
        ctx.arc(x, y, AVATAR_PX + 5, 0, 2 * Math.PI);
        ctx.stroke();
        ctx.lineWidth = 1;
      }

      ctx.fillStyle = color;
      ctx.beginPath();
      ctx.arc(x, y, AVATAR_PX, 0, 2 * Math.PI);
      ctx.fill();

      // Heading: yaw 0 faces +z, 90 faces +x.
      const rad = (p.yaw * Math.PI) / 180;
      ctx.strokeStyle = "#333";
      ctx.beginPath();
      ctx.moveTo(x, y);
      ctx.lineTo(
        x + Math.sin(rad) * (AVATAR_PX + 8),
        y + Math.cos(rad) * (AVATAR_PX + 8),
      );
      ctx.stroke();

      ctx.fillStyle = "#222";
      ctx.textAlign = "center";
      ctx.fillText(pid, x, y - AVATAR_PX - 8);
      if (p.gestureTag !== "none") {
        ctx.fillText(p.gestureTag, x, y + AVATAR_PX + 14);
      }
    });
  }
}
