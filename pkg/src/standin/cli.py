"""Operator command line: one binary, subcommand per workflow.

    meeting create|show      store and inspect meeting definitions
    config set|get           stand-in configuration per meeting
    session serve            live relay over TCP, real-time clock
    sim run                  scripted deterministic run (virtual time)
    playback info|export     recording summaries and view-JSON dumps
    splice                   merge recorded comments into a new iteration
    abridge                  per-viewer catch-up timeline over a chain
    api serve                HTTP/WS facade for browsers (see api module)

Exit codes: 0 success, 1 usage error, 2 bad or missing data, 3 I/O
failure. Output meant for machines is JSON on stdout; diagnostics are
single-line JSON ``{"code", "message"}`` on stderr.

The data root resolves from, in order: ``--data-root``, the
``STANDIN_DATA_ROOT`` environment variable, the ``data_root`` key of the
config file (``--config``, else ``STANDIN_CONFIG``, else
``~/.config/standin/config.json``), and finally ``./data``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .model import Meeting, StandInConfig, UnknownParticipant
from .playback import Contribution, abridge, open_playback, splice, \
    verify_chain
from .server import Session, SessionTCPServer, SetupError
from .store import (EntityStore, IntegrityError, NotFound, ValidationError,
                    find_recording, load, recording_id)

log = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class DataError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    """Raises instead of exiting so main() owns the exit code."""

    def error(self, message: str):  # noqa: D102 - argparse hook
        raise UsageError(message)


def _common_flags() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--data-root", metavar="DIR", default=None,
                        help="state directory (default: resolved from "
                             "environment or config file)")
    common.add_argument("--config", metavar="FILE", default=None,
                        help="JSON config file (default: "
                             "~/.config/standin/config.json)")
    return common


def build_parser() -> _Parser:
    common = _common_flags()
    parser = _Parser(prog="standin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("meeting", help="manage meeting definitions")
    msub = p.add_subparsers(dest="action", required=True)
    q = msub.add_parser("create", parents=[common])
    q.add_argument("--file", required=True,
                   help="meeting JSON ('-' for stdin)")
    q.set_defaults(func=cmd_meeting_create)
    q = msub.add_parser("show", parents=[common])
    q.add_argument("meeting_id")
    q.set_defaults(func=cmd_meeting_show)

    p = sub.add_parser("config", help="stand-in configuration")
    csub = p.add_subparsers(dest="action", required=True)
    q = csub.add_parser("set", parents=[common])
    q.add_argument("--meeting", required=True)
    q.add_argument("--file", required=True,
                   help="stand-in config JSON ('-' for stdin)")
    q.set_defaults(func=cmd_config_set)
    q = csub.add_parser("get", parents=[common])
    q.add_argument("--meeting", required=True)
    q.add_argument("--absentee", required=True)
    q.set_defaults(func=cmd_config_get)

    p = sub.add_parser("session", help="live sessions")
    ssub = p.add_subparsers(dest="action", required=True)
    q = ssub.add_parser("serve", parents=[common])
    q.add_argument("--meeting", required=True)
    q.add_argument("--iter", type=int, required=True)
    q.add_argument("--port", type=int, required=True)
    q.add_argument("--host", default="127.0.0.1")
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_session_serve)

    p = sub.add_parser("sim", help="scripted runs")
    simsub = p.add_subparsers(dest="action", required=True)
    q = simsub.add_parser("run", parents=[common])
    q.add_argument("script", help="bundle JSON: meeting, stand-in "
                                  "configs, and scripted clients")
    q.add_argument("--iter", type=int, default=1)
    q.add_argument("--runout", type=int, default=None,
                   help="extra ticks after the last scripted action")
    q.set_defaults(func=cmd_sim_run)

    p = sub.add_parser("playback", help="inspect recordings")
    psub = p.add_subparsers(dest="action", required=True)
    q = psub.add_parser("info", parents=[common])
    q.add_argument("--rec", required=True, help="recording id")
    q.set_defaults(func=cmd_playback_info)
    q = psub.add_parser("export", parents=[common])
    q.add_argument("--rec", required=True, help="recording id")
    q.add_argument("--viewpoint", default=None,
                   help="participant whose first-person view to export "
                        "(default: spectator)")
    q.add_argument("--from", dest="from_tick", type=int, required=True)
    q.add_argument("--to", dest="to_tick", type=int, required=True)
    q.add_argument("--out", default=None, help="write to file instead "
                                               "of stdout")
    q.set_defaults(func=cmd_playback_export)

    q = sub.add_parser("splice", parents=[common],
                       help="merge comments into a new iteration")
    q.add_argument("--rec", required=True, help="source recording id")
    q.add_argument("--comments", nargs="+", required=True,
                   metavar="FILE", help="contribution JSON files, in "
                                        "creation order")
    q.add_argument("--no-listening", action="store_true",
                   help="freeze other avatars instead of turning them "
                        "toward the commenter")
    q.set_defaults(func=cmd_splice)

    q = sub.add_parser("abridge", parents=[common],
                       help="per-viewer catch-up timeline")
    q.add_argument("--chain", nargs="+", required=True, metavar="REC",
                   help="recording ids from first iteration to last")
    q.add_argument("--viewer", required=True)
    q.set_defaults(func=cmd_abridge)

    p = sub.add_parser("api", help="HTTP/WS facade")
    asub = p.add_subparsers(dest="action", required=True)
    q = asub.add_parser("serve", parents=[common])
    q.add_argument("--port", type=int, required=True)
    q.add_argument("--host", default="127.0.0.1")
    q.set_defaults(func=cmd_api_serve)

    return parser


# --------------------------------------------------------------------------
# configuration resolution: flags > environment > config file > default

def resolve_data_root(args: argparse.Namespace) -> Path:
    if getattr(args, "data_root", None):
        return Path(args.data_root)
    env = os.environ.get("STANDIN_DATA_ROOT")
    if env:
        return Path(env)
    cfg_path = (getattr(args, "config", None)
                or os.environ.get("STANDIN_CONFIG")
                or os.path.expanduser("~/.config/standin/config.json"))
    path = Path(cfg_path)
    if path.is_file():
        try:
            with open(path, encoding="utf-8") as f:
                cfg = json.load(f)
        except ValueError as e:
            raise DataError("config", f"config file {path}: {e}")
        root = cfg.get("data_root")
        if root:
            return Path(os.path.expanduser(root))
    return Path("data")


def _read_json_file(path: str) -> dict:
    if path == "-":
        return json.load(sys.stdin)
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _note(message: str) -> None:
    """Human-facing progress line; stdout stays machine-clean."""
    print(message, file=sys.stderr)


# --------------------------------------------------------------------------
# subcommands

def cmd_meeting_create(args: argparse.Namespace) -> dict:
    store = EntityStore(resolve_data_root(args))
    try:
        meeting = Meeting.from_json_dict(_read_json_file(args.file))
    except (KeyError, TypeError, ValueError) as e:
        raise DataError("validation", f"malformed meeting: {e}")
    store.put_meeting(meeting)
    return {"meeting_id": meeting.meeting_id}


def cmd_meeting_show(args: argparse.Namespace) -> dict:
    store = EntityStore(resolve_data_root(args))
    return store.get_meeting(args.meeting_id).to_json_dict()


def cmd_config_set(args: argparse.Namespace) -> dict:
    store = EntityStore(resolve_data_root(args))
    try:
        cfg = StandInConfig.from_json_dict(_read_json_file(args.file))
    except (KeyError, TypeError, ValueError) as e:
        raise DataError("validation", f"malformed stand-in config: {e}")
    store.put_standin_config(args.meeting, cfg)
    return {"meeting_id": args.meeting, "absentee_id": cfg.absentee_id}


def cmd_config_get(args: argparse.Namespace) -> dict:
    store = EntityStore(resolve_data_root(args))
    return store.get_standin_config(args.meeting,
                                    args.absentee).to_json_dict()


def _stored_configs(store: EntityStore, meeting: Meeting,
                    iteration_index: int) -> list[StandInConfig]:
    """Stand-in configs on file for the iteration's absentees."""
    attending: set[str] = set()
    for it in meeting.iterations:
        if it.index == iteration_index:
            attending = set(it.attendee_ids)
    configs = []
    for p in meeting.participants:
        if p.participant_id in attending:
            continue
        try:
            configs.append(store.get_standin_config(meeting.meeting_id,
                                                    p.participant_id))
        except NotFound:
            log.info("no stand-in config for absentee %s", p.participant_id)
    return configs


def cmd_session_serve(args: argparse.Namespace) -> dict:
    root = resolve_data_root(args)
    store = EntityStore(root)
    meeting = store.get_meeting(args.meeting)
    configs = _stored_configs(store, meeting, args.iter)
    session = Session(meeting, args.iter, configs, args.seed,
                      data_root=root)
    server = SessionTCPServer(session, args.host, args.port)
    server.start_clock()
    _note(f"session {meeting.meeting_id} iteration {args.iter} on "
          f"{args.host}:{server.server_address[1]} — Ctrl-C to close")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        _note("closing")
    finally:
        server.shutdown()
        manifest = session.close()
    return {"recording_id": recording_id(Path(session.recorder.directory)),
            "manifest_path": str(Path(session.recorder.directory)
                                 / "manifest.json"),
            "duration_ticks": manifest.duration_ticks}


def cmd_sim_run(args: argparse.Namespace) -> dict:
    from .harness import RUNOUT_TICKS, load_bundle, run

    root = resolve_data_root(args)
    meeting, configs, script = load_bundle(args.script)
    # Persisting the bundle's entities lets later splice/abridge calls
    # (and the HTTP API) validate against the same meeting.
    store = EntityStore(root)
    store.put_meeting(meeting)
    for cfg in configs:
        store.put_standin_config(meeting.meeting_id, cfg)
    result = run(script, meeting, configs, data_root=root,
                 iteration_index=args.iter,
                 runout_ticks=(RUNOUT_TICKS if args.runout is None
                               else args.runout))
    return {"recording_id": recording_id(Path(result.recording_dir)),
            "manifest_path": str(Path(result.recording_dir)
                                 / "manifest.json"),
            "duration_ticks": result.manifest.duration_ticks,
            "dropped": result.drop_counters}


def cmd_playback_info(args: argparse.Namespace) -> dict:
    root = resolve_data_root(args)
    rec = load(find_recording(root, args.rec))
    man = rec.manifest
    return {"recording_id": args.rec,
            "meeting_id": man.meeting_id,
            "iteration_index": man.iteration_index,
            "parent_iteration": man.parent_iteration,
            "duration_ticks": man.duration_ticks,
            "tick_rate": man.tick_rate,
            "sample_rate": man.audio_sample_rate,
            "participants": [t.participant_id for t in man.tracks],
            "attendees": list(man.attendees),
            "standins": list(man.standins),
            "utterances": len(rec.utterances_between(0,
                                                     man.duration_ticks)),
            "origin_spans": [s.to_json_dict() for s in man.origin_spans]}


def cmd_playback_export(args: argparse.Namespace) -> dict | None:
    root = resolve_data_root(args)
    rec = load(find_recording(root, args.rec))
    try:
        playback = open_playback(rec, args.viewpoint)
    except UnknownParticipant:
        raise DataError("validation",
                        f"viewpoint {args.viewpoint} is not in this "
                        f"recording")
    duration = rec.manifest.duration_ticks
    lo = max(args.from_tick, 0)
    hi = min(args.to_tick, duration)
    if hi < lo:
        raise DataError("validation", "--to must be >= --from")
    payload = {"recording_id": args.rec, "viewpoint": args.viewpoint,
               "from": lo, "to": hi, "duration_ticks": duration,
               "views": [playback.view_at(t) for t in range(lo, hi)]}
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        _note(f"wrote {hi - lo} ticks to {args.out}")
        return None
    return payload


def cmd_splice(args: argparse.Namespace) -> dict:
    root = resolve_data_root(args)
    rec = load(find_recording(root, args.rec))
    contributions = []
    for path in args.comments:
        try:
            contributions.append(
                Contribution.from_json_dict(_read_json_file(path)))
        except (KeyError, TypeError, ValueError) as e:
            raise DataError("validation", f"{path}: {e}")
    store = EntityStore(root)
    try:
        meeting = store.get_meeting(rec.manifest.meeting_id)
    except NotFound:
        meeting = None
    merged = splice(rec, contributions, data_root=root, meeting=meeting,
                    listening=not args.no_listening)
    return {"recording_id": recording_id(merged.directory),
            "manifest_path": str(merged.directory / "manifest.json"),
            "iteration_index": merged.manifest.iteration_index,
            "parent_iteration": merged.manifest.parent_iteration,
            "duration_ticks": merged.manifest.duration_ticks}


def cmd_abridge(args: argparse.Namespace) -> dict:
    root = resolve_data_root(args)
    chain = [load(find_recording(root, rid)) for rid in args.chain]
    verify_chain(chain)
    store = EntityStore(root)
    meeting = store.get_meeting(chain[0].manifest.meeting_id)
    timeline = abridge(meeting, chain, args.viewer)
    saved = timeline.save(chain[-1].directory)
    payload = timeline.to_json_dict()
    payload["saved_to"] = str(saved)
    return payload


def cmd_api_serve(args: argparse.Namespace) -> None:
    import uvicorn

    from .api import create_app

    root = resolve_data_root(args)
    _note(f"api on {args.host}:{args.port}, data root {root}")
    uvicorn.run(create_app(root), host=args.host, port=args.port,
                log_level="warning")


# --------------------------------------------------------------------------

def _fail(code: str, message: str) -> None:
    print(json.dumps({"code": code, "message": message}, sort_keys=True),
          file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        _fail("usage", str(e))
        return 1
    try:
        payload = args.func(args)
        if payload is not None:
            _emit(payload)
        return 0
    except DataError as e:
        _fail(e.code, str(e))
        return 2
    except NotFound as e:
        _fail("not-found", str(e.args[0]) if e.args else "not found")
        return 2
    except LookupError as e:
        _fail("not-found", str(e))
        return 2
    except (ValidationError, SetupError) as e:
        _fail("validation", str(e))
        return 2
    except IntegrityError as e:
        _fail("integrity", str(e))
        return 2
    except ValueError as e:
        _fail("validation", str(e))
        return 2
    except OSError as e:
        _fail("io", str(e))
        return 3


if __name__ == "__main__":
    sys.exit(main())
