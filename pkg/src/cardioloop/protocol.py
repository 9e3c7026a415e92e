"""Line-delimited JSON frame grammar shared by every transport.

One UTF-8 JSON object per LF-terminated line, at most 64 KiB, with a `type`
field drawn from a fixed set. Unknown fields are ignored by consumers;
an unknown `type` is answered with an error frame and the connection stays
open. The same grammar rides plain TCP and the browser WebSocket gateway.
"""

from __future__ import annotations

import json

FRAME_TYPES = ("hello", "ecg", "effort", "cmd", "state", "ack", "error")
ROLES = ("sensor", "console", "observer")
COMMANDS = ("start", "stop", "set_condition", "set_age", "set_mode")
MODES = ("sensor", "manual", "sim")

MAX_FRAME_BYTES = 64 * 1024


class FrameError(Exception):
    """A frame violated the wire grammar."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def encode_frame(frame: dict) -> bytes:
    """Serialize a frame to its wire form (JSON + LF)."""
    if frame.get("type") not in FRAME_TYPES:
        raise FrameError("unknown_type",
                         f"cannot encode frame type {frame.get('type')!r}")
    data = json.dumps(frame, separators=(",", ":"), ensure_ascii=False)
    raw = data.encode("utf-8") + b"\n"
    if len(raw) > MAX_FRAME_BYTES:
        raise FrameError("frame_too_large",
                         f"frame is {len(raw)} bytes; limit {MAX_FRAME_BYTES}")
    return raw


def decode_frame(line: bytes | str) -> dict:
    """Parse one wire line into a frame dict, enforcing the grammar."""
    if isinstance(line, bytes):
        if len(line) > MAX_FRAME_BYTES:
            raise FrameError("frame_too_large",
                             f"frame is {len(line)} bytes; limit {MAX_FRAME_BYTES}")
        try:
            text = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FrameError("malformed", f"invalid UTF-8: {exc}") from exc
    else:
        text = line
    try:
        frame = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FrameError("malformed", f"invalid JSON: {exc.msg}") from exc
    if not isinstance(frame, dict):
        raise FrameError("malformed", "frame must be a JSON object")
    kind = frame.get("type")
    if kind not in FRAME_TYPES:
        raise FrameError("unknown_type", f"unknown frame type {kind!r}")
    return frame


def hello(role: str, **extra) -> dict:
    return {"type": "hello", "role": role, **extra}


def ecg(t, v) -> dict:
    """Sample frame; scalars or equal-length arrays are both legal."""
    return {"type": "ecg", "t": t, "v": v}


def effort(power_w: float) -> dict:
    return {"type": "effort", "power_w": power_w}


def cmd(name: str, **args) -> dict:
    return {"type": "cmd", "cmd": name, **args}


def ack(of: str, **extra) -> dict:
    return {"type": "ack", "ack": of, **extra}


def error(code: str, message: str, **extra) -> dict:
    return {"type": "error", "code": code, "message": message, **extra}


def ecg_points(frame: dict) -> tuple[list[float], list[float]]:
    """Normalize an ecg frame's payload to parallel float lists."""
    t = frame.get("t")
    v = frame.get("v")
    ts = [float(x) for x in (t if isinstance(t, list) else [t])]
    vs = [float(x) for x in (v if isinstance(v, list) else [v])]
    if len(ts) != len(vs):
        raise FrameError("malformed", "ecg frame t/v lengths differ")
    return ts, vs
