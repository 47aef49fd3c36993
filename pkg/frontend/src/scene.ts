/** Pure translation from a server view tick to what the canvas draws.
 *
 * No interpolation, no prediction: one view tick in, one scene out, so the
 * rendered frame can be compared field-for-field against the API payload.
 */

import type { UtteranceJson, Vec3, ViewTickJson } from "./types.js";

export interface ParticipantState {
  position: Vec3;
  yaw: number;
  gestureTag: string;
  speaking: boolean;
}

export interface Scene {
  tick: number;
  participants: Record<string, ParticipantState>;
  /** Utterances spanning this tick, for the caption panel. */
  captions: UtteranceJson[];
  /** The stand-in-authored subset of captions, for the response panel. */
  standinResponses: UtteranceJson[];
}

export function sceneFromView(
  view: ViewTickJson,
  standins: readonly string[],
): Scene {
  const participants: Record<string, ParticipantState> = {};
  for (const [pid, pose] of Object.entries(view.poses)) {
    if (pose === null) continue; // not yet placed at this tick
    participants[pid] = {
      position: pose.position,
      yaw: pose.yaw,
      gestureTag: pose.gesture_tag,
      speaking: pid in view.audio,
    };
  }
  const captions = view.utterances.filter((u) => u.in_progress);
  const standinResponses = captions.filter((u) =>
    standins.includes(u.speaker_id),
  );
  return { tick: view.tick, participants, captions, standinResponses };
}
