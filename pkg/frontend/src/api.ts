/** The one API client the app shares.
 *
 * Every request funnels through request(); callers that can be superseded
 * (scrubbing, mostly) pass a cancelKey so a newer call aborts the older
 * in-flight one instead of racing it.
 */

import { encodeMultipart } from "./multipart.js";
import type {
  ApiErrorBody,
  ContributionSummaryJson,
  ManifestJson,
  MeetingJson,
  MeetingSummaryJson,
  RecordingSummaryJson,
  SpliceResultJson,
  StandInConfigJson,
  ViewPageJson,
} from "./types.js";

export type FetchFn = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

/** A non-2xx response, carrying the server's {code, message} body. */
export class ApiFailure extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiFailure";
  }
}

export function isAbort(err: unknown): boolean {
  return err instanceof DOMException && err.name === "AbortError";
}

export interface CommentMeta {
  author_id: string;
  anchor_tick: number;
  text?: string;
  contribution_id?: string;
}

interface RequestOptions {
  body?: BodyInit;
  contentType?: string;
  cancelKey?: string;
}

export class ApiClient {
  private readonly inflight = new Map<string, AbortController>();

  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchFn = (...args) =>
      globalThis.fetch(...args),
  ) {}

  private async request<T>(
    method: string,
    path: string,
    opts: RequestOptions = {},
  ): Promise<T> {
    const init: RequestInit = { method };
    if (opts.body !== undefined) init.body = opts.body;
    if (opts.contentType !== undefined) {
      init.headers = { "Content-Type": opts.contentType };
    }
    let controller: AbortController | undefined;
    if (opts.cancelKey !== undefined) {
      this.inflight.get(opts.cancelKey)?.abort();
      controller = new AbortController();
      this.inflight.set(opts.cancelKey, controller);
      init.signal = controller.signal;
    }
    try {
      const resp = await this.fetchFn(this.baseUrl + path, init);
      if (!resp.ok) {
        let body: ApiErrorBody;
        try {
          body = (await resp.json()) as ApiErrorBody;
        } catch {
          body = { code: `http-${resp.status}`, message: resp.statusText };
        }
        throw new ApiFailure(resp.status, body.code, body.message);
      }
      return (await resp.json()) as T;
    } finally {
      if (controller !== undefined) {
        const current = this.inflight.get(opts.cancelKey!);
        if (current === controller) this.inflight.delete(opts.cancelKey!);
      }
    }
  }

  private postJson<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>("POST", path, {
      body: JSON.stringify(body),
      contentType: "application/json",
    });
  }

  // -- recordings ----------------------------------------------------------

  async listRecordings(): Promise<RecordingSummaryJson[]> {
    const page = await this.request<{ recordings: RecordingSummaryJson[] }>(
      "GET",
      "/v1/recordings",
    );
    return page.recordings;
  }

  manifest(recordingId: string): Promise<ManifestJson> {
    return this.request("GET", `/v1/recordings/${recordingId}/manifest`);
  }

  viewPage(
    recordingId: string,
    viewpoint: string | null,
    fromTick: number,
    toTick: number,
  ): Promise<ViewPageJson> {
    const params = new URLSearchParams();
    if (viewpoint !== null) params.set("viewpoint", viewpoint);
    params.set("from", String(fromTick));
    params.set("to", String(toTick));
    return this.request(
      "GET",
      `/v1/recordings/${recordingId}/view?${params}`,
      { cancelKey: `view:${recordingId}` },
    );
  }

  // -- comments and splicing -------------------------------------------------

  async listComments(
    recordingId: string,
  ): Promise<ContributionSummaryJson[]> {
    const page = await this.request<{
      comments: ContributionSummaryJson[];
    }>("GET", `/v1/recordings/${recordingId}/comments`);
    return page.comments;
  }

  postComment(
    recordingId: string,
    meta: CommentMeta,
    wav?: Uint8Array,
  ): Promise<ContributionSummaryJson> {
    const parts = [{ name: "meta", data: JSON.stringify(meta) }];
    if (wav !== undefined) {
      parts.push({
        name: "audio",
        data: wav,
        filename: "comment.wav",
        contentType: "audio/wav",
      } as never);
    }
    const { contentType, body } = encodeMultipart(parts);
    return this.request(
      "POST",
      `/v1/recordings/${recordingId}/comments`,
      { body: body as unknown as BodyInit, contentType },
    );
  }

  splice(
    recordingId: string,
    commentIds?: string[],
  ): Promise<SpliceResultJson> {
    const body =
      commentIds === undefined ? {} : { comment_ids: commentIds };
    return this.postJson(`/v1/recordings/${recordingId}/splice`, body);
  }

  // -- meetings and stand-in config -------------------------------------------

  async listMeetings(): Promise<MeetingSummaryJson[]> {
    const page = await this.request<{ meetings: MeetingSummaryJson[] }>(
      "GET",
      "/v1/meetings",
    );
    return page.meetings;
  }

  getMeeting(meetingId: string): Promise<MeetingJson> {
    return this.request("GET", `/v1/meetings/${meetingId}`);
  }

  postMeeting(meeting: MeetingJson): Promise<{ meeting_id: string }> {
    return this.postJson("/v1/meetings", meeting);
  }

  getStandinConfig(
    meetingId: string,
    participantId: string,
  ): Promise<StandInConfigJson> {
    return this.request(
      "GET",
      `/v1/meetings/${meetingId}/standin/${participantId}`,
    );
  }

  putStandinConfig(
    meetingId: string,
    participantId: string,
    config: StandInConfigJson,
  ): Promise<StandInConfigJson> {
    return this.request(
      "PUT",
      `/v1/meetings/${meetingId}/standin/${participantId}`,
      { body: JSON.stringify(config), contentType: "application/json" },
    );
  }
}
