import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { PAGE_TICKS, PlaybackViewer } from "../src/viewer.js";
import type { ViewTickJson } from "../src/types.js";
import {
  FakeRoute,
  RecordedCall,
  cannedManifest,
  cannedPage,
  fakeFetch,
  gate,
  pose,
  utterance,
} from "./helpers.js";

const DURATION = 300;
const REC = "weekend__1";

// jsdom has no 2D canvas; the viewer must still track payloads and scenes.
beforeEach(() => {
  (HTMLCanvasElement.prototype as unknown as { getContext: () => null }
  ).getContext = () => null;
  document.body.innerHTML = "";
});

function mkTick(t: number): ViewTickJson {
  return {
    tick: t,
    viewpoint: "C",
    poses: {
      A: pose("A", t, [0, 0, 2], 135),
      B: t >= 1 ? pose("B", t, [2, 0, 0], 315) : null,
    },
    audio: t % 2 === 0 ? { A: { pcm: "AAAA", rms: 0.3 } } : {},
    utterances:
      t >= 10 && t <= 20
        ? [utterance("C", 10, 20, "I prefer beef noodles", true)]
        : [],
  };
}

interface Setup {
  viewer: PlaybackViewer;
  host: HTMLElement;
  toasts: string[];
  calls: RecordedCall[];
  flags: { failViews: boolean; gateFrom: number | null };
  gateCtl: ReturnType<typeof gate>;
}

function setup(): Setup {
  const calls: RecordedCall[] = [];
  const flags = { failViews: false, gateFrom: null as number | null };
  const gateCtl = gate();
  const routes: FakeRoute[] = [
    {
      match: /\/manifest$/,
      reply: () => ({
        json: { ...cannedManifest({ duration_ticks: DURATION }) },
      }),
    },
    {
      match: /\/view\?/,
      reply: async (url) => {
        const u = new URL(url);
        const from = Number(u.searchParams.get("from"));
        const to = Number(u.searchParams.get("to"));
        if (flags.gateFrom === from) await gateCtl.promise;
        if (flags.failViews) {
          return { status: 500, json: { code: "error", message: "boom" } };
        }
        return {
          json: cannedPage(REC, "C", from, to, DURATION, mkTick),
        };
      },
    },
  ];
  const api = new ApiClient("http://api", fakeFetch(routes, calls));
  const host = document.createElement("div");
  document.body.append(host);
  const toasts: string[] = [];
  const viewer = new PlaybackViewer(host, api, (m) => toasts.push(m));
  return { viewer, host, toasts, calls, flags, gateCtl };
}

function viewCalls(calls: RecordedCall[]): RecordedCall[] {
  return calls.filter((c) => c.url.includes("/view?"));
}

describe("PlaybackViewer", () => {
  it("loads a recording, defaults to the stand-in viewpoint, shows tick 0", async () => {
    const { viewer, host } = setup();
    await viewer.load(REC);
    expect(viewer.viewpoint).toBe("C");
    expect(viewer.lastPayload).toEqual(mkTick(0));
    expect(host.textContent).toContain("viewing as C");
    const scrubber = host.querySelector<HTMLInputElement>(
      '[data-testid="scrubber"]',
    )!;
    expect(scrubber.max).toBe(String(DURATION - 1));
  });

  it("renders exactly the payload for the scrubbed tick", async () => {
    const { viewer } = setup();
    await viewer.load(REC);
    await viewer.scrub(5);
    expect(viewer.lastPayload).toEqual(mkTick(5));
    const scene = viewer.lastScene!;
    expect(scene.participants.A.position).toEqual([0, 0, 2]);
    expect(scene.participants.A.yaw).toBe(135);
    expect(scene.participants.B.yaw).toBe(315);
    expect(scene.participants.A.speaking).toBe(false); // tick 5 is odd
    await viewer.scrub(6);
    expect(viewer.lastScene!.participants.A.speaking).toBe(true);
  });

  it("serves ticks inside the cached page without refetching", async () => {
    const { viewer, calls } = setup();
    await viewer.load(REC);
    await viewer.scrub(5);
    await viewer.scrub(44);
    expect(viewCalls(calls).length).toBe(1);
    await viewer.scrub(PAGE_TICKS + 10);
    expect(viewCalls(calls).length).toBe(2);
    const second = new URL(viewCalls(calls)[1].url);
    expect(second.searchParams.get("from")).toBe(String(PAGE_TICKS));
  });

  it("clamps out-of-range targets to the recording's edges", async () => {
    const { viewer } = setup();
    await viewer.load(REC);
    await viewer.scrub(5000);
    expect(viewer.cursorTick).toBe(DURATION - 1);
    expect(viewer.lastPayload!.tick).toBe(DURATION - 1);
    await viewer.scrub(-9);
    expect(viewer.cursorTick).toBe(0);
  });

  it("keeps the last good frame and raises a toast when a fetch fails", async () => {
    const { viewer, toasts, flags } = setup();
    await viewer.load(REC);
    flags.failViews = true;
    await viewer.scrub(100);
    expect(toasts.length).toBe(1);
    expect(toasts[0]).toMatch(/playback fetch failed/);
    expect(viewer.lastPayload!.tick).toBe(0); // frame retained
  });

  it("ignores a stale page response when the user has moved on", async () => {
    const { viewer, flags, gateCtl } = setup();
    await viewer.load(REC);
    flags.gateFrom = PAGE_TICKS; // hold the page for tick 100
    const slow = viewer.scrub(100);
    await viewer.scrub(5); // cached; renders immediately
    expect(viewer.lastPayload!.tick).toBe(5);
    gateCtl.open();
    await slow;
    expect(viewer.lastPayload!.tick).toBe(5);
    expect(viewer.cursorTick).toBe(5);
  });

  it("aborts the older request when scrubbing twice across pages", async () => {
    const { viewer, toasts, flags, gateCtl } = setup();
    await viewer.load(REC);
    flags.gateFrom = PAGE_TICKS;
    const first = viewer.scrub(100); // gated fetch
    const second = viewer.scrub(200); // aborts the first
    await second;
    expect(viewer.lastPayload!.tick).toBe(200);
    gateCtl.open();
    await first;
    expect(viewer.lastPayload!.tick).toBe(200);
    expect(toasts).toEqual([]); // aborts are silent
  });

  it("shows stand-in responses while they play and keeps the last one dimmed", async () => {
    const { viewer, host } = setup();
    await viewer.load(REC);
    await viewer.scrub(15);
    const panel = host.querySelector('[data-testid="response-panel"]')!;
    expect(panel.textContent).toContain("C: I prefer beef noodles");
    expect(panel.querySelector(".response.live")).not.toBeNull();
    const captions = host.querySelector('[data-testid="captions"]')!;
    expect(captions.textContent).toContain("C: I prefer beef noodles");

    await viewer.scrub(25);
    expect(captions.textContent).toBe("");
    expect(panel.querySelector(".response.stale")!.textContent).toContain(
      "I prefer beef noodles",
    );
  });

  it("advances with the shared clock and pauses at the end", async () => {
    const { viewer, host } = setup();
    await viewer.load(REC);
    viewer.play();
    expect(viewer.isPlaying).toBe(true);
    viewer.advance(125); // 125 ms at 72 t/s = 9 ticks
    expect(viewer.cursorTick).toBe(9);
    const scrubber = host.querySelector<HTMLInputElement>(
      '[data-testid="scrubber"]',
    )!;
    expect(scrubber.value).toBe("9");

    await viewer.scrub(DURATION - 5);
    viewer.play();
    viewer.advance(10_000);
    expect(viewer.isPlaying).toBe(false);
  });
});
