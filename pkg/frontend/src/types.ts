/** JSON shapes of the standin HTTP API (versioned under /v1).
 *
 * These mirror the server's wire format exactly; the client never invents
 * fields and never derives timing values the server already reports.
 */

export type Vec3 = [number, number, number];

export interface PoseJson {
  tick: number;
  participant_id: string;
  position: Vec3;
  yaw: number;
  gesture_tag: string;
  speaking_hint: boolean;
}

export interface UtteranceJson {
  start_tick: number;
  end_tick: number;
  speaker_id: string;
  text: string;
  addressed_to: string | null;
  /** Present on playback views: whether the utterance spans the view tick. */
  in_progress?: boolean;
}

export interface AudioSliceJson {
  /** One tick of 16-bit mono PCM, base64. */
  pcm: string;
  rms: number;
}

/** One tick as served by GET /recordings/{id}/view. */
export interface ViewTickJson {
  tick: number;
  viewpoint: string | null;
  /** Everyone except the viewpoint; null until a participant's first pose. */
  poses: Record<string, PoseJson | null>;
  /** Only participants audible at this tick. */
  audio: Record<string, AudioSliceJson>;
  utterances: UtteranceJson[];
}

export interface ViewPageJson {
  recording_id: string;
  viewpoint: string | null;
  from: number;
  to: number;
  duration_ticks: number;
  views: ViewTickJson[];
}

export interface RecordingSummaryJson {
  recording_id: string;
  meeting_id: string;
  iteration_index: number;
  parent_iteration: number | null;
  duration_ticks: number;
  participants: string[];
  attendees: string[];
  standins: string[];
}

export interface TrackJson {
  participant_id: string;
  kind: string;
  path: string;
  sha256: string;
}

export interface OriginSpanJson {
  from_tick: number;
  to_tick: number;
  kind: "live" | "contribution";
  iteration: number;
  author_id: string | null;
  contribution_id: string | null;
}

export interface ManifestJson {
  recording_id?: string;
  meeting_id: string;
  iteration_index: number;
  tick_rate: number;
  audio_sample_rate: number;
  duration_ticks: number;
  tracks: TrackJson[];
  parent_iteration: number | null;
  attendees: string[];
  standins: string[];
  origin_spans: OriginSpanJson[];
}

export interface ContributionSummaryJson {
  contribution_id: string;
  author_id: string;
  anchor_tick: number;
  duration_ticks: number;
  text: string | null;
}

export interface SpliceResultJson {
  recording_id: string;
  manifest: ManifestJson;
}

export interface ResponseGestureJson {
  kind: string;
  target?: string | null;
}

export interface ResponsePlanJson {
  text: string;
  /** Filled in server-side when omitted. */
  gesture?: ResponseGestureJson;
  nominal_duration_ticks?: number;
}

export interface StandInConfigJson {
  absentee_id: string;
  responses: Record<string, ResponsePlanJson>;
  fallback: ResponsePlanJson;
  addressing_names: string[];
}

export interface AgendaItemJson {
  item_id: string;
  label: string;
  keywords: string[];
  order: number;
}

export interface ParticipantProfileJson {
  participant_id: string;
  display_name: string;
  background: string;
  personality: string;
  voice_sample_ref: string | null;
}

export interface IterationRecordJson {
  index: number;
  attendee_ids: string[];
}

export interface MeetingJson {
  meeting_id: string;
  title: string;
  agenda: AgendaItemJson[];
  participants: ParticipantProfileJson[];
  iterations: IterationRecordJson[];
}

export interface MeetingSummaryJson {
  meeting_id: string;
  title: string;
  participants: string[];
  agenda: string[];
  iterations: number;
}

/** Every error the API returns has exactly this body. */
export interface ApiErrorBody {
  code: string;
  message: string;
}
