/** Shared test scaffolding: canned API payloads, a route-table fetch fake
 * with abort support, and decoders for the binary formats the client
 * produces (WAV, multipart bodies).
 */

import type { FetchFn } from "../src/api.js";
import type {
  ManifestJson,
  PoseJson,
  UtteranceJson,
  ViewPageJson,
  ViewTickJson,
} from "../src/types.js";

// -- canned payloads ----------------------------------------------------------

export function pose(
  pid: string,
  tick: number,
  position: [number, number, number],
  yaw: number,
  extra: Partial<PoseJson> = {},
): PoseJson {
  return {
    tick,
    participant_id: pid,
    position,
    yaw,
    gesture_tag: "none",
    speaking_hint: false,
    ...extra,
  };
}

export function cannedManifest(
  overrides: Partial<ManifestJson> = {},
): ManifestJson {
  return {
    meeting_id: "weekend",
    iteration_index: 1,
    tick_rate: 72,
    audio_sample_rate: 48000,
    duration_ticks: 300,
    tracks: [],
    parent_iteration: null,
    attendees: ["A", "B"],
    standins: ["C"],
    origin_spans: [
      {
        from_tick: 0,
        to_tick: 300,
        kind: "live",
        iteration: 1,
        author_id: null,
        contribution_id: null,
      },
    ],
    ...overrides,
  };
}

/** Build a view page the way the server does: half-open, clamped. */
export function cannedPage(
  recId: string,
  viewpoint: string | null,
  from: number,
  to: number,
  duration: number,
  mkTick: (t: number) => ViewTickJson,
): ViewPageJson {
  const end = Math.min(to, duration);
  const views: ViewTickJson[] = [];
  for (let t = from; t < end; t++) views.push(mkTick(t));
  return {
    recording_id: recId,
    viewpoint,
    from,
    to: end,
    duration_ticks: duration,
    views,
  };
}

export function utterance(
  speaker: string,
  start: number,
  end: number,
  text: string,
  inProgress: boolean,
): UtteranceJson {
  return {
    start_tick: start,
    end_tick: end,
    speaker_id: speaker,
    text,
    addressed_to: null,
    in_progress: inProgress,
  };
}

// -- fetch fake ------------------------------------------------------------

export interface RecordedCall {
  method: string;
  url: string;
  body?: BodyInit;
  contentType?: string;
}

export interface FakeReply {
  status?: number;
  json?: unknown;
}

export interface FakeRoute {
  method?: string;
  match: RegExp;
  reply: (
    url: string,
    init: RequestInit | undefined,
  ) => FakeReply | Promise<FakeReply>;
}

/** Route-table fetch stand-in; honors AbortSignal like the real thing. */
export function fakeFetch(
  routes: FakeRoute[],
  calls: RecordedCall[] = [],
): FetchFn {
  return async (url, init) => {
    const method = init?.method ?? "GET";
    const headers = (init?.headers ?? {}) as Record<string, string>;
    calls.push({
      method,
      url,
      body: init?.body ?? undefined,
      contentType: headers["Content-Type"],
    });
    const signal = init?.signal ?? null;
    const route = routes.find(
      (r) => (r.method ?? "GET") === method && r.match.test(url),
    );
    const replyPromise = Promise.resolve(
      route !== undefined
        ? route.reply(url, init)
        : { status: 404, json: { code: "not-found", message: url } },
    );
    const reply = await new Promise<FakeReply>((resolve, reject) => {
      const onAbort = () =>
        reject(new DOMException("request aborted", "AbortError"));
      if (signal?.aborted) return onAbort();
      signal?.addEventListener("abort", onAbort);
      replyPromise.then((r) => {
        signal?.removeEventListener("abort", onAbort);
        resolve(r);
      }, reject);
    });
    return new Response(JSON.stringify(reply.json ?? {}), {
      status: reply.status ?? 200,
      headers: { "Content-Type": "application/json" },
    });
  };
}

/** A promise you release by hand, for ordering races in tests. */
export function gate(): { promise: Promise<void>; open: () => void } {
  let open!: () => void;
  const promise = new Promise<void>((res) => {
    open = res;
  });
  return { promise, open };
}

// -- binary decoders ----------------------------------------------------------

export interface ParsedWav {
  sampleRate: number;
  channels: number;
  bitsPerSample: number;
  samples: Int16Array;
}

export function parseWav(bytes: Uint8Array): ParsedWav {
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const tag = (at: number) =>
    String.fromCharCode(...bytes.subarray(at, at + 4));
  if (tag(0) !== "RIFF" || tag(8) !== "WAVE") throw new Error("not a WAV");
  let at = 12;
  let fmt: { channels: number; rate: number; bits: number } | null = null;
  let data: Uint8Array | null = null;
  while (at + 8 <= bytes.length) {
    const id = tag(at);
    const size = view.getUint32(at + 4, true);
    if (id === "fmt ") {
      fmt = {
        channels: view.getUint16(at + 10, true),
        rate: view.getUint32(at + 12, true),
        bits: view.getUint16(at + 22, true),
      };
    } else if (id === "data") {
      data = bytes.subarray(at + 8, at + 8 + size);
    }
    at += 8 + size + (size % 2);
  }
  if (fmt === null || data === null) throw new Error("incomplete WAV");
  const samples = new Int16Array(data.length / 2);
  for (let i = 0; i < samples.length; i++) {
    samples[i] = view.getInt16(data.byteOffset - bytes.byteOffset + i * 2, true);
  }
  return {
    sampleRate: fmt.rate,
    channels: fmt.channels,
    bitsPerSample: fmt.bits,
    samples,
  };
}

export interface ParsedPart {
  name: string;
  filename?: string;
  contentType?: string;
  data: Uint8Array;
}

function indexOfBytes(
  haystack: Uint8Array,
  needle: Uint8Array,
  from: number,
): number {
  outer: for (let i = from; i + needle.length <= haystack.length; i++) {
    for (let j = 0; j < needle.length; j++) {
      if (haystack[i + j] !== needle[j]) continue outer;
    }
    return i;
  }
  return -1;
}

export function parseMultipart(
  body: Uint8Array,
  contentType: string,
): ParsedPart[] {
  const m = /boundary=(.+)$/.exec(contentType);
  if (m === null) throw new Error("no boundary in content type");
  const enc = new TextEncoder();
  const dec = new TextDecoder("latin1");
  const delim = enc.encode(`--${m[1]}`);
  const parts: ParsedPart[] = [];
  let at = indexOfBytes(body, delim, 0);
  while (at !== -1) {
    const next = indexOfBytes(body, delim, at + delim.length);
    if (next === -1) break; // trailing --boundary--
    const section = body.subarray(at + delim.length + 2, next - 2); // trim CRLFs
    const headEnd = indexOfBytes(section, enc.encode("\r\n\r\n"), 0);
    const head = dec.decode(section.subarray(0, headEnd));
    const data = section.subarray(headEnd + 4);
    const name = /name="([^"]*)"/.exec(head)?.[1] ?? "";
    const filename = /filename="([^"]*)"/.exec(head)?.[1];
    const partType = /Content-Type: ([^\r\n]+)/.exec(head)?.[1];
    parts.push({ name, filename, contentType: partType, data });
    at = next;
  }
  return parts;
}

export function textOf(part: ParsedPart): string {
  return new TextDecoder().decode(part.data);
}
