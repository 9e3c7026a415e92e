"""Streaming service around one live session.

Plain TCP carries newline-delimited JSON frames; a WebSocket gateway speaks
the identical grammar for browsers and also serves the static console files.
All session mutation funnels through one command queue consumed by the engine
task, which also owns the wall-clock tick loop; broadcasts are snapshot
frames pushed through per-client queues, so a stalled client only ever loses
its own frames (counted and reported on its next delivered frame).

One session is active per server instance. `CARDIOLOOP_LOG_DIR` selects where
finished sessions are written.
"""

from __future__ import annotations

import asyncio
import contextlib
import os
import time
from dataclasses import dataclass, field
from http import HTTPStatus
from pathlib import Path

from . import protocol
from .adaptation import Condition
from .errors import ParameterError, StateError, StreamError
from .rider import BikePhysics, RiderModel, RiderPolicy
from .session import (PHASE_FINISHED, Session, SessionConfig, SessionLog,
                      config_record, save_log, tick_record)
from .zones import AthleteProfile, compute_zone_model

CLIENT_QUEUE_FRAMES = 64


@dataclass(eq=False)
class _Client:
    send_line: object            # async callable(bytes)
    close: object                # async callable()
    peer: str
    role: str | None = None
    queue: asyncio.Queue = field(
        default_factory=lambda: asyncio.Queue(maxsize=CLIENT_QUEUE_FRAMES))
    dropped: int = 0
    writer_task: asyncio.Task | None = None

    def offer(self, frame: dict):
        """Queue a frame, dropping (and counting) when the client is slow."""
        if self.dropped:
            frame = {**frame, "dropped": self.dropped}
        try:
            self.queue.put_nowait(protocol.encode_frame(frame))
            self.dropped = 0
        except asyncio.QueueFull:
            self.dropped += 1


class LoopServer:
    """Engine plus transports; create one per process."""

    def __init__(self, config: SessionConfig | None = None, *,
                 mode: str = "sim",
                 rider: RiderModel | None = None,
                 policy: RiderPolicy | None = None,
                 physics: BikePhysics | None = None,
                 log_dir: str | None = None):
        if mode not in protocol.MODES:
            raise ParameterError(f"mode must be one of {protocol.MODES}")
        self.config = config or SessionConfig()
        self.mode = mode
        self.rider = rider or RiderModel()
        self.policy = policy or RiderPolicy()
        self.physics = physics or BikePhysics()
        env_dir = os.environ.get("CARDIOLOOP_LOG_DIR")
        self.log_dir = Path(log_dir) if log_dir else (
            Path(env_dir) if env_dir else None)

        self._clients: set[_Client] = set()
        self._sensor: _Client | None = None
        self._cmds: asyncio.Queue = asyncio.Queue()
        self._ecg_ts: list[float] = []
        self._ecg_vs: list[float] = []
        self._session: Session | None = None
        self._ticks: list = []
        self._tick_deadline: float | None = None
        self._engine_task: asyncio.Task | None = None
        self._servers: list = []

    # -- engine ---------------------------------------------------------------

    async def _engine(self):
        while True:
            if self._tick_deadline is None:
                item = await self._cmds.get()
                self._handle_cmd(*item)
                continue
            timeout = self._tick_deadline - time.monotonic()
            if timeout > 0:
                try:
                    item = await asyncio.wait_for(self._cmds.get(), timeout)
                    self._handle_cmd(*item)
                    continue
                except asyncio.TimeoutError:
                    pass
            self._do_tick()

    def _do_tick(self):
        session = self._session
        if session is None or session.phase == PHASE_FINISHED:
            self._tick_deadline = None
            return
        try:
            if self.mode == "sensor":
                ts, vs = self._ecg_ts, self._ecg_vs
                self._ecg_ts, self._ecg_vs = [], []
                state = session.tick(ecg=(ts, vs))
            else:
                state = session.tick()
        except StreamError as exc:
            if self._sensor is not None:
                self._sensor.offer(protocol.error("bad_stream", str(exc)))
            self._ecg_ts, self._ecg_vs = [], []
            self._tick_deadline += 1.0 / session.config.tick_hz
            return
        self._ticks.append(state)
        self._broadcast_state(state)
        if state.phase == PHASE_FINISHED:
            self._finish_session()
        else:
            self._tick_deadline += 1.0 / session.config.tick_hz

    def _broadcast_state(self, state):
        frame = {"type": "state", **{k: v for k, v in
                                     tick_record(state).items() if k != "type"},
                 "wall_t": time.time()}
        for client in list(self._clients):
            if client.role in ("console", "observer"):
                client.offer(frame)

    def _finish_session(self):
        session = self._session
        self._tick_deadline = None
        if session is None:
            return
        log = SessionLog(config=session.config,
                         sim=None if self.mode == "sensor" else {
                             "rider": vars(self.rider).copy(),
                             "policy": vars(self.policy).copy(),
                             "physics": vars(self.physics).copy()},
                         ticks=self._ticks)
        try:
            from . import metrics
            log.summary = metrics.compute(log).to_record()
        except Exception:
            log.summary = None
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            stamp = time.strftime("%Y%m%d-%H%M%S")
            name = f"{session.config.participant_id}-{stamp}.jsonl"
            save_log(log, self.log_dir / name)

    # -- commands -------------------------------------------------------------

    def _handle_cmd(self, client: _Client, frame: dict):
        kind = frame.get("type")
        if kind == "cmd":
            self._run_command(client, frame)
        elif kind == "effort":
            self._apply_effort(client, frame)

    def _session_active(self) -> bool:
        return (self._session is not None
                and self._session.phase != PHASE_FINISHED)

    def _run_command(self, client: _Client, frame: dict):
        name = frame.get("cmd")
        reply_to = frame.get("id")
        extra = {} if reply_to is None else {"id": reply_to}
        try:
            if name == "start":
                self._cmd_start(frame)
                model = compute_zone_model(AthleteProfile(
                    self.config.age, self.config.hr_max_formula))
                cfg_rec = config_record(self.config, None, model)
                started = protocol.ack("start", config=cfg_rec, **extra)
                client.offer(started)
                for other in self._clients:
                    if other is not client:
                        other.offer(protocol.ack("start", config=cfg_rec))
            elif name == "stop":
                if not self._session_active():
                    raise StateError("no running session to stop")
                state = self._session.finish()
                self._ticks.append(state)
                self._broadcast_state(state)
                self._finish_session()
                client.offer(protocol.ack("stop", **extra))
                for other in self._clients:
                    if other is not client:
                        other.offer(protocol.ack("stop"))
            elif name == "set_condition":
                self._require_idle("set_condition")
                value = Condition(frame.get("condition"))
                self.config = _replace_config(self.config, condition=value)
                client.offer(protocol.ack("set_condition",
                                          condition=value.value, **extra))
            elif name == "set_age":
                self._require_idle("set_age")
                age = int(frame.get("age"))
                self.config = _replace_config(self.config, age=age)
                client.offer(protocol.ack("set_age", age=age, **extra))
            elif name == "set_mode":
                self._require_idle("set_mode")
                mode = frame.get("mode")
                if mode not in protocol.MODES:
                    raise ParameterError(f"mode must be one of {protocol.MODES}")
                self.mode = mode
                client.offer(protocol.ack("set_mode", mode=mode, **extra))
            else:
                client.offer(protocol.error("bad_cmd",
                                            f"unknown command {name!r}", **extra))
        except (ParameterError, StateError, ValueError) as exc:
            client.offer(protocol.error("rejected", str(exc),
                                        cmd=name, **extra))

    def _require_idle(self, what: str):
        if self._session_active():
            raise StateError(f"{what} is not allowed while a session runs")

    def _cmd_start(self, frame: dict):
        if self._session_active():
            raise StateError("a session is already running")
        overrides = {}
        if "age" in frame:
            overrides["age"] = int(frame["age"])
        if "condition" in frame:
            overrides["condition"] = Condition(frame["condition"])
        if "participant_id" in frame:
            overrides["participant_id"] = str(frame["participant_id"])
        if overrides:
            self.config = _replace_config(self.config, **overrides)
        if self.mode == "sensor":
            self._session = Session(self.config)
        elif self.mode == "manual":
            self._session = Session(self.config, rider=self.rider,
                                    physics=self.physics)
        else:
            self._session = Session(self.config, rider=self.rider,
                                    policy=self.policy, physics=self.physics)
        self._ticks = []
        self._ecg_ts, self._ecg_vs = [], []
        self._tick_deadline = time.monotonic() + 1.0 / self.config.tick_hz

    def _apply_effort(self, client: _Client, frame: dict):
        if self.mode != "manual":
            client.offer(protocol.error("wrong_mode",
                                        "effort frames require manual mode"))
            return
        if not self._session_active():
            client.offer(protocol.error("wrong_phase", "no running session"))
            return
        try:
            requested = float(frame.get("power_w"))
        except (TypeError, ValueError):
            client.offer(protocol.error("malformed", "power_w must be a number"))
            return
        applied = self._session.set_power(requested)
        reply = protocol.ack("effort", power_w=applied)
        if applied != requested:
            reply["clamped"] = True
        client.offer(reply)

    # -- per-connection frame handling -----------------------------------------

    async def _on_frame(self, client: _Client, raw: bytes | str) -> bool:
        """Handle one inbound line; returns False to drop the connection."""
        try:
            frame = protocol.decode_frame(raw)
        except protocol.FrameError as exc:
            client.offer(protocol.error(exc.code, str(exc)))
            return True
        kind = frame["type"]
        if kind == "hello":
            return self._on_hello(client, frame)
        if client.role is None:
            client.offer(protocol.error("no_hello",
                                        "declare a role with a hello frame first"))
            return True
        if kind == "ecg":
            return self._on_ecg(client, frame)
        if kind in ("cmd", "effort"):
            await self._cmds.put((client, frame))
            return True
        # state/ack/error frames are server-to-client only; ignore politely
        client.offer(protocol.error("unexpected_type",
                                    f"client may not send {kind!r} frames"))
        return True

    def _on_hello(self, client: _Client, frame: dict) -> bool:
        role = frame.get("role")
        if role not in protocol.ROLES:
            client.offer(protocol.error("bad_role",
                                        f"role must be one of {protocol.ROLES}"))
            return True
        if role == "sensor":
            if self._sensor is not None:
                client.offer(protocol.error("role_conflict",
                                            "a sensor is already connected"))
                return False
            self._sensor = client
        client.role = role
        model = compute_zone_model(AthleteProfile(self.config.age,
                                                  self.config.hr_max_formula))
        client.offer(protocol.ack("hello", role=role,
                                  config=config_record(self.config, None, model)))
        return True

    def _on_ecg(self, client: _Client, frame: dict) -> bool:
        if client.role != "sensor":
            client.offer(protocol.error("wrong_role",
                                        "only the sensor may send ecg frames"))
            return True
        if self.mode != "sensor":
            client.offer(protocol.error("wrong_mode",
                                        "server is not in sensor mode"))
            return True
        try:
            ts, vs = protocol.ecg_points(frame)
        except (protocol.FrameError, TypeError, ValueError):
            client.offer(protocol.error("malformed", "bad ecg payload"))
            return True
        self._ecg_ts.extend(ts)
        self._ecg_vs.extend(vs)
        return True

    # -- transports -------------------------------------------------------------

    async def _client_writer(self, client: _Client):
        try:
            while True:
                data = await client.queue.get()
                await client.send_line(data)
        except (ConnectionError, asyncio.CancelledError):
            pass

    def _attach(self, client: _Client):
        self._clients.add(client)
        client.writer_task = asyncio.create_task(self._client_writer(client))

    async def _detach(self, client: _Client):
        self._clients.discard(client)
        if self._sensor is client:
            self._sensor = None
        if client.writer_task is not None:
            client.writer_task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await client.writer_task
        with contextlib.suppress(Exception):
            await client.close()

    async def _serve_tcp_client(self, reader: asyncio.StreamReader,
                                writer: asyncio.StreamWriter):
        peer = str(writer.get_extra_info("peername"))

        async def send_line(data: bytes):
            writer.write(data)
            await writer.drain()

        async def close():
            writer.close()
            with contextlib.suppress(Exception):
                await writer.wait_closed()

        client = _Client(send_line=send_line, close=close, peer=peer)
        self._attach(client)
        try:
            while True:
                try:
                    raw = await reader.readline()
                except (asyncio.LimitOverrunError, ValueError):
                    client.offer(protocol.error("frame_too_large",
                                                "line exceeds 64 KiB"))
                    break
                if not raw:
                    break
                if not await self._on_frame(client, raw.rstrip(b"\n")):
                    await asyncio.sleep(0.05)  # let the error frame flush
                    break
        finally:
            await self._detach(client)

    async def _serve_ws_client(self, connection):
        peer = str(connection.remote_address)

        async def send_line(data: bytes):
            await connection.send(data.decode("utf-8").rstrip("\n"))

        async def close():
            await connection.close()

        client = _Client(send_line=send_line, close=close, peer=peer)
        self._attach(client)
        try:
            async for message in connection:
                if isinstance(message, bytes):
                    message = message.decode("utf-8", errors="replace")
                for line in message.splitlines():
                    if line.strip() and not await self._on_frame(client, line):
                        await asyncio.sleep(0.05)
                        return
        except Exception:
            pass
        finally:
            await self._detach(client)

    async def start(self, host: str = "127.0.0.1", port: int = 8765, *,
                    http_port: int | None = None,
                    console_dir: str | None = None):
        """Bind transports and run the engine until cancelled."""
        self._engine_task = asyncio.create_task(self._engine())
        tcp = await asyncio.start_server(self._serve_tcp_client, host, port,
                                         limit=protocol.MAX_FRAME_BYTES + 2)
        self._servers.append(tcp)
        if http_port is not None:
            try:
                from websockets.asyncio.server import serve as ws_serve
            except ImportError as exc:  # pragma: no cover
                raise RuntimeError("websockets is required for the gateway") from exc
            handler = _static_handler(Path(console_dir) if console_dir else None)
            gateway = await ws_serve(self._serve_ws_client, host, http_port,
                                     process_request=handler)
            self._servers.append(gateway)
        return self

    async def run_forever(self):
        await asyncio.gather(*(s.serve_forever() for s in self._servers
                               if hasattr(s, "serve_forever")))

    async def stop(self):
        if self._engine_task is not None:
            self._engine_task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await self._engine_task
        for client in list(self._clients):
            await self._detach(client)
        for server in self._servers:
            server.close()
            with contextlib.suppress(Exception):
                await server.wait_closed()


def _replace_config(config: SessionConfig, **overrides) -> SessionConfig:
    base = {
        "participant_id": config.participant_id,
        "age": config.age,
        "hr_max_formula": config.hr_max_formula,
        "condition": config.condition,
        "zone_schedule": config.zone_schedule,
        "tick_hz": config.tick_hz,
        "hr_window_s": config.hr_window_s,
        "training_s": config.training_s,
        "ecg_fs": config.ecg_fs,
        "seeds": config.seeds,
        "adaptation": config.adaptation,
    }
    base.update(overrides)
    return SessionConfig(**base)


_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".png": "image/png",
    ".svg": "image/svg+xml",
}


def _static_handler(console_dir: Path | None):
    """Serve console files on the gateway port; upgrade requests pass through."""

    def handler(connection, request):
        if "Upgrade" in request.headers.get("Connection", "") or \
                request.headers.get("Upgrade", "").lower() == "websocket":
            return None
        if console_dir is None:
            return connection.respond(HTTPStatus.NOT_FOUND,
                                      "no console directory configured\n")
        raw = request.path.split("?", 1)[0]
        name = raw.lstrip("/") or "index.html"
        target = (console_dir / name).resolve()
        if not str(target).startswith(str(console_dir.resolve())) \
                or not target.is_file():
            return connection.respond(HTTPStatus.NOT_FOUND, "not found\n")
        response = connection.respond(HTTPStatus.OK, "")
        response.body = target.read_bytes()
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        for key in ("Content-Type", "Content-Length"):
            if key in response.headers:
                del response.headers[key]
        response.headers["Content-Type"] = ctype
        response.headers["Content-Length"] = str(len(response.body))
        return response

    return handler


async def serve(port: int, config: SessionConfig | None = None, *,
                host: str = "127.0.0.1", mode: str = "sim",
                http_port: int | None = None, console_dir: str | None = None,
                rider: RiderModel | None = None,
                policy: RiderPolicy | None = None,
                physics: BikePhysics | None = None,
                log_dir: str | None = None) -> LoopServer:
    """Construct, bind, and return a running service."""
    server = LoopServer(config, mode=mode, rider=rider, policy=policy,
                        physics=physics, log_dir=log_dir)
    await server.start(host, port, http_port=http_port, console_dir=console_dir)
    return server
