/** Comment capture while playback is paused.
 *
 * Audio comes from an injectable CaptureSource — the real one wraps
 * getUserMedia, tests feed synthetic samples — and is conditioned to the
 * server's required 48 kHz mono WAV before upload. When the microphone is
 * unavailable the recorder degrades to text-only comments; what it never
 * does is compute durations, which come back in the server's echo.
 */

import { ApiClient, ApiFailure } from "./api.js";
import { clear, el } from "./dom.js";
import type { Toast } from "./toast.js";
import type { ContributionSummaryJson, SpliceResultJson } from "./types.js";
import { UPLOAD_SAMPLE_RATE, captureToWav } from "./wav.js";

export interface CapturedAudio {
  samples: Float32Array;
  sampleRate: number;
}

export interface CaptureSource {
  /** Rejects when capture cannot start (permission denied, no device). */
  start(): Promise<void>;
  stop(): Promise<CapturedAudio>;
}

/** Microphone capture via Web Audio; samples stay raw for resampling. */
export class MicCapture implements CaptureSource {
  private ctx: AudioContext | null = null;
  private stream: MediaStream | null = null;
  private processor: ScriptProcessorNode | null = null;
  private chunks: Float32Array[] = [];

  async start(): Promise<void> {
    if (!navigator.mediaDevices?.getUserMedia) {
      throw new Error("microphone unsupported in this browser");
    }
    this.stream = await navigator.mediaDevices.getUserMedia({
      audio: { channelCount: 1 },
    });
    this.ctx = new AudioContext();
    const source = this.ctx.createMediaStreamSource(this.stream);
    this.processor = this.ctx.createScriptProcessor(4096, 1, 1);
    this.chunks = [];
    this.processor.onaudioprocess = (ev) => {
      this.chunks.push(Float32Array.from(ev.inputBuffer.getChannelData(0)));
    };
    source.connect(this.processor);
    this.processor.connect(this.ctx.destination);
  }

  async stop(): Promise<CapturedAudio> {
    const sampleRate = this.ctx?.sampleRate ?? UPLOAD_SAMPLE_RATE;
    this.processor?.disconnect();
    this.stream?.getTracks().forEach((t) => t.stop());
    await this.ctx?.close();
    this.processor = null;
    this.stream = null;
    this.ctx = null;
    let total = 0;
    for (const c of this.chunks) total += c.length;
    const samples = new Float32Array(total);
    let at = 0;
    for (const c of this.chunks) {
      samples.set(c, at);
      at += c.length;
    }
    this.chunks = [];
    return { samples, sampleRate };
  }
}

export interface CommentContext {
  authorId: string | null;
  anchorTick: number;
}

export type RecorderState = "idle" | "recording" | "posting";

export class CommentRecorder {
  private recordingId: string | null = null;
  private context: (() => CommentContext) | null = null;
  private _state: RecorderState = "idle";
  private captured: CapturedAudio | null = null;
  private anchorAtRecord: number | null = null;

  onSpliced: ((result: SpliceResultJson) => void) | null = null;
  /** Commenting happens against a paused frame; the app hooks this to
   * stop playback the moment recording starts. */
  onRecordStart: (() => void) | null = null;

  private readonly recordBtn: HTMLButtonElement;
  private readonly indicator: HTMLSpanElement;
  private readonly textInput: HTMLInputElement;
  private readonly sendBtn: HTMLButtonElement;
  private readonly errorEl: HTMLSpanElement;
  private readonly pendingEl: HTMLUListElement;
  private readonly spliceBtn: HTMLButtonElement;

  constructor(
    host: HTMLElement,
    private readonly api: ApiClient,
    private readonly toast: Toast,
    private readonly capture: CaptureSource = new MicCapture(),
  ) {
    this.recordBtn = el("button", { "data-testid": "record" }, ["● record"]);
    this.recordBtn.addEventListener("click", () => void this.toggleRecord());
    this.indicator = el(
      "span",
      { class: "rec-indicator", "data-testid": "rec-indicator", hidden: "" },
      ["● REC"],
    );
    this.textInput = el("input", {
      type: "text",
      placeholder: "typed comment (used as caption, or alone without audio)",
      "data-testid": "comment-text",
    });
    this.sendBtn = el("button", { "data-testid": "send" }, ["post comment"]);
    this.sendBtn.addEventListener("click", () => void this.post());
    this.errorEl = el("span", {
      class: "inline-error",
      "data-testid": "comment-error",
    });
    this.pendingEl = el("ul", { "data-testid": "pending" });
    this.spliceBtn = el("button", { "data-testid": "splice" }, [
      "Splice into next iteration",
    ]);
    this.spliceBtn.addEventListener("click", () => void this.splice());
    host.append(
      el("h3", {}, ["Record a comment"]),
      el("div", { class: "recorder-row" }, [
        this.recordBtn,
        this.indicator,
        this.textInput,
        this.sendBtn,
        this.errorEl,
      ]),
      el("h3", {}, ["Pending comments"]),
      this.pendingEl,
      this.spliceBtn,
    );
  }

  get state(): RecorderState {
    return this._state;
  }

  get hasAudio(): boolean {
    return this.captured !== null && this.captured.samples.length > 0;
  }

  attach(recordingId: string, context: () => CommentContext): void {
    this.recordingId = recordingId;
    this.context = context;
    this.captured = null;
    this.anchorAtRecord = null;
    this.setState("idle");
    this.setError(null);
    void this.refreshPending();
  }

  private setState(s: RecorderState): void {
    this._state = s;
    const recording = s === "recording";
    if (recording) this.indicator.removeAttribute("hidden");
    else this.indicator.setAttribute("hidden", "");
    this.recordBtn.textContent = recording ? "■ stop" : "● record";
    this.sendBtn.disabled = s === "posting";
  }

  private setError(message: string | null): void {
    this.errorEl.textContent = message ?? "";
  }

  async toggleRecord(): Promise<void> {
    if (this.recordingId === null || this.context === null) return;
    this.setError(null);
    if (this._state === "recording") {
      this.captured = await this.capture.stop();
      this.setState("idle");
      return;
    }
    this.onRecordStart?.();
    // Anchor where the cursor sits when recording starts.
    this.anchorAtRecord = this.context().anchorTick;
    try {
      await this.capture.start();
    } catch (err) {
      const reason = err instanceof Error ? err.message : String(err);
      this.toast(`microphone unavailable (${reason}) — type your comment instead`);
      return;
    }
    this.setState("recording");
  }

  /** Upload whatever was captured, or the typed text alone. */
  async post(): Promise<ContributionSummaryJson | null> {
    if (this.recordingId === null || this.context === null) return null;
    if (this._state === "recording") {
      this.captured = await this.capture.stop();
      this.setState("idle");
    }
    const { authorId, anchorTick } = this.context();
    const text = this.textInput.value.trim();
    if (!this.hasAudio && text === "") {
      this.setError("comment is empty — record audio or type text");
      return null;
    }
    if (authorId === null) {
      this.setError("pick a participant viewpoint before commenting");
      return null;
    }
    this.setError(null);
    this.setState("posting");
    const meta = {
      author_id: authorId,
      anchor_tick: this.anchorAtRecord ?? anchorTick,
      ...(text !== "" ? { text } : {}),
    };
    const wav = this.hasAudio
      ? captureToWav(this.captured!.samples, this.captured!.sampleRate)
      : undefined;
    try {
      const summary = await this.api.postComment(this.recordingId, meta, wav);
      this.captured = null;
      this.anchorAtRecord = null;
      this.textInput.value = "";
      this.setState("idle");
      await this.refreshPending();
      this.toast(
        `comment ${summary.contribution_id} pending at tick ${summary.anchor_tick}`,
      );
      return summary;
    } catch (err) {
      this.setState("idle");
      this.setError(
        err instanceof ApiFailure ? err.message : "upload failed",
      );
      return null;
    }
  }

  async refreshPending(): Promise<void> {
    if (this.recordingId === null) return;
    const comments = await this.api.listComments(this.recordingId);
    clear(this.pendingEl);
    for (const c of comments) {
      const label =
        `${c.contribution_id} — ${c.author_id} @ ${c.anchor_tick}` +
        ` (${c.duration_ticks} ticks)` +
        (c.text !== null ? `: ${c.text}` : "");
      this.pendingEl.append(el("li", {}, [label]));
    }
    this.spliceBtn.disabled = comments.length === 0;
  }

  /** Merge all pending comments into the next iteration. */
  async splice(): Promise<SpliceResultJson | null> {
    if (this.recordingId === null) return null;
    this.setError(null);
    try {
      const result = await this.api.splice(this.recordingId);
      await this.refreshPending();
      this.toast(`spliced into ${result.recording_id}`);
      this.onSpliced?.(result);
      return result;
    } catch (err) {
      this.setError(
        err instanceof ApiFailure ? err.message : "splice failed",
      );
      return null;
    }
  }
}
