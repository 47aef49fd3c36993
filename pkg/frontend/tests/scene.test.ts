import { describe, expect, it } from "vitest";

import { sceneFromView } from "../src/scene.js";
import type { ViewTickJson } from "../src/types.js";
import { pose, utterance } from "./helpers.js";

function view(): ViewTickJson {
  return {
    tick: 42,
    viewpoint: "C",
    poses: {
      A: pose("A", 40, [0, 0, 2], 135),
      B: pose("B", 42, [2, 0, 0], 315, { gesture_tag: "nod" }),
      D: null,
    },
    audio: { A: { pcm: "AAAA", rms: 0.31 } },
    utterances: [
      utterance("A", 30, 90, "shall we plan the trip?", true),
      utterance("C", 100, 200, "I prefer beef noodles", false),
    ],
  };
}

describe("sceneFromView", () => {
  it("copies position and yaw verbatim and marks audible speakers", () => {
    const scene = sceneFromView(view(), ["C"]);
    expect(scene.tick).toBe(42);
    expect(Object.keys(scene.participants).sort()).toEqual(["A", "B"]);
    expect(scene.participants.A.position).toEqual([0, 0, 2]);
    expect(scene.participants.A.yaw).toBe(135);
    expect(scene.participants.A.speaking).toBe(true);
    expect(scene.participants.B.speaking).toBe(false);
    expect(scene.participants.B.gestureTag).toBe("nod");
  });

  it("drops not-yet-placed participants instead of inventing a pose", () => {
    const scene = sceneFromView(view(), ["C"]);
    expect("D" in scene.participants).toBe(false);
  });

  it("captions only in-progress utterances", () => {
    const scene = sceneFromView(view(), ["C"]);
    expect(scene.captions.map((u) => u.speaker_id)).toEqual(["A"]);
  });

  it("routes stand-in speech to the response panel list", () => {
    const v = view();
    v.utterances[1].in_progress = true;
    const scene = sceneFromView(v, ["C"]);
    expect(scene.standinResponses.map((u) => u.text)).toEqual([
      "I prefer beef noodles",
    ]);
    // Same utterance, but C is not a stand-in here: plain caption only.
    expect(sceneFromView(v, []).standinResponses).toEqual([]);
  });
});
