import asyncio
import functools
import json

import numpy as np
import pytest

from cardioloop import protocol
from cardioloop.rider import RiderModel
from cardioloop.server import LoopServer
from cardioloop.session import Seeds, SessionConfig


class LineClient:
    def __init__(self, reader, writer):
        self.reader = reader
        self.writer = writer

    @classmethod
    async def connect(cls, port):
        reader, writer = await asyncio.open_connection("127.0.0.1", port)
        return cls(reader, writer)

    async def send(self, frame):
        self.writer.write(protocol.encode_frame(frame))
        await self.writer.drain()

    async def recv(self, timeout=5.0):
        line = await asyncio.wait_for(self.reader.readline(), timeout)
        if not line:
            return None
        return json.loads(line)

    async def recv_until(self, kind, timeout=5.0):
        while True:
            frame = await self.recv(timeout)
            if frame is None:
                return None
            if frame["type"] == kind:
                return frame

    async def close(self):
        self.writer.close()
        try:
            await self.writer.wait_closed()
        except ConnectionError:
            pass


def run_async(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        asyncio.run(fn(*args, **kwargs))
    return wrapper


def server_config(**kw):
    defaults = dict(zone_schedule=((1, 5.0),), training_s=1.0, tick_hz=25,
                    hr_window_s=2.0, seeds=Seeds.from_base(2))
    defaults.update(kw)
    return SessionConfig(**defaults)


async def start_server(tmp_path=None, **kw):
    server = LoopServer(server_config(), **kw)
    await server.start("127.0.0.1", 0)
    port = server._servers[0].sockets[0].getsockname()[1]
    return server, port


@run_async
async def test_hello_ack_carries_config():
    server, port = await start_server()
    try:
        client = await LineClient.connect(port)
        await client.send(protocol.hello("console"))
        ack = await client.recv_until("ack")
        assert ack["ack"] == "hello"
        assert ack["config"]["hr_max_bpm"] == pytest.approx(187.0)
        assert len(ack["config"]["zone_boundaries"]) == 6
        await client.close()
    finally:
        await server.stop()


@run_async
async def test_second_sensor_rejected_and_closed():
    server, port = await start_server(mode="sensor")
    try:
        first = await LineClient.connect(port)
        await first.send(protocol.hello("sensor"))
        assert (await first.recv_until("ack"))["ack"] == "hello"
        second = await LineClient.connect(port)
        await second.send(protocol.hello("sensor"))
        err = await second.recv_until("error")
        assert err["code"] == "role_conflict"
        assert await second.recv() is None  # connection closed
        await first.close()
    finally:
        await server.stop()


@run_async
async def test_start_adaptive_first_state():
    server, port = await start_server(mode="sim")
    try:
        client = await LineClient.connect(port)
        await client.send(protocol.hello("console"))
        await client.recv_until("ack")
        await client.send(protocol.cmd("start", age=30, condition="adaptive"))
        ack = await client.recv_until("ack")
        assert ack["ack"] == "start"
        state = await client.recv_until("state")
        assert state["target_zone"] == 1
        assert state["npc"] is not None
        assert state["bike_view"] is None
        assert state["condition"] == "adaptive"
        await client.close()
    finally:
        await server.stop()


@run_async
async def test_start_while_running_rejected():
    server, port = await start_server(mode="sim")
    try:
        client = await LineClient.connect(port)
        await client.send(protocol.hello("console"))
        await client.recv_until("ack")
        await client.send(protocol.cmd("start"))
        await client.recv_until("ack")
        await client.send(protocol.cmd("start"))
        err = await client.recv_until("error")
        assert err["code"] == "rejected"
        await client.close()
    finally:
        await server.stop()


@run_async
async def test_stop_emits_finished_state():
    server, port = await start_server(mode="sim")
    try:
        client = await LineClient.connect(port)
        await client.send(protocol.hello("console"))
        await client.recv_until("ack")
        await client.send(protocol.cmd("start"))
        await client.recv_until("state")
        await client.send(protocol.cmd("stop"))
        state = await client.recv_until("state")
        while state["phase"] != "finished":
            state = await client.recv_until("state")
        assert state["end_prompt"] is True
        await client.close()
    finally:
        await server.stop()


@run_async
async def test_effort_clamped_and_acked():
    server, port = await start_server(mode="manual", rider=RiderModel())
    try:
        client = await LineClient.connect(port)
        await client.send(protocol.hello("console"))
        await client.recv_until("ack")
        await client.send(protocol.cmd("start"))
        await client.recv_until("ack")
        await client.send(protocol.effort(-5.0))
        ack = await client.recv_until("ack")
        assert ack["ack"] == "effort"
        assert ack["power_w"] == 0.0
        assert ack.get("clamped") is True
        await client.close()
    finally:
        await server.stop()


@run_async
async def test_effort_rejected_outside_manual_mode():
    server, port = await start_server(mode="sim")
    try:
        client = await LineClient.connect(port)
        await client.send(protocol.hello("console"))
        await client.recv_until("ack")
        await client.send(protocol.effort(100.0))
        err = await client.recv_until("error")
        assert err["code"] == "wrong_mode"
        await client.close()
    finally:
        await server.stop()


@run_async
async def test_unknown_type_keeps_connection_open():
    server, port = await start_server()
    try:
        client = await LineClient.connect(port)
        await client.send(protocol.hello("observer"))
        await client.recv_until("ack")
        client.writer.write(b'{"type":"mystery"}\n')
        await client.writer.drain()
        err = await client.recv_until("error")
        assert err["code"] == "unknown_type"
        # still alive: a valid command round-trips
        await client.send(protocol.cmd("set_age", age=40))
        ack = await client.recv_until("ack")
        assert ack["age"] == 40
        await client.close()
    finally:
        await server.stop()


@run_async
async def test_set_condition_rejected_mid_session():
    server, port = await start_server(mode="sim")
    try:
        client = await LineClient.connect(port)
        await client.send(protocol.hello("console"))
        await client.recv_until("ack")
        await client.send(protocol.cmd("start"))
        await client.recv_until("ack")
        await client.send(protocol.cmd("set_condition", condition="baseline"))
        err = await client.recv_until("error")
        assert err["code"] == "rejected"
        await client.close()
    finally:
        await server.stop()


@run_async
async def test_sensor_stream_drives_states():
    server, port = await start_server(mode="sensor")
    try:
        sensor = await LineClient.connect(port)
        await sensor.send(protocol.hello("sensor"))
        await sensor.recv_until("ack")
        observer = await LineClient.connect(port)
        await observer.send(protocol.hello("observer"))
        await observer.recv_until("ack")
        await observer.send(protocol.cmd("start", age=30, condition="baseline"))
        await observer.recv_until("ack")
        # stream a short burst of flat ecg; states should flow regardless
        ts = [i / 130.0 for i in range(26)]
        await sensor.send(protocol.ecg(ts, [0.0] * len(ts)))
        state = await observer.recv_until("state")
        assert state["bike_view"] is not None
        assert state["hr_bpm"] is None  # warm-up
        await sensor.close()
        await observer.close()
    finally:
        await server.stop()


def test_slow_client_drops_are_counted_and_reported():
    from cardioloop.server import _Client, CLIENT_QUEUE_FRAMES

    async def scenario():
        client = _Client(send_line=None, close=None, peer="test",
                         role="observer")
        frame = {"type": "state", "t_s": 0.0}
        for _ in range(CLIENT_QUEUE_FRAMES):
            client.offer(frame)
        assert client.dropped == 0
        for _ in range(5):
            client.offer(frame)  # queue full: dropped, never blocks
        assert client.dropped == 5
        client.queue.get_nowait()
        client.offer(frame)
        assert client.dropped == 0
        # drain to the reported frame and check the count rode along
        reported = None
        while not client.queue.empty():
            reported = json.loads(client.queue.get_nowait())
        assert reported["dropped"] == 5

    asyncio.run(scenario())


@run_async
async def test_frames_before_hello_rejected():
    server, port = await start_server(mode="sensor")
    try:
        client = await LineClient.connect(port)
        await client.send(protocol.ecg([0.0], [0.0]))
        err = await client.recv_until("error")
        assert err["code"] == "no_hello"
        await client.close()
    finally:
        await server.stop()


@run_async
async def test_env_var_selects_log_dir(tmp_path, monkeypatch=None):
    import os
    old = os.environ.get("CARDIOLOOP_LOG_DIR")
    os.environ["CARDIOLOOP_LOG_DIR"] = str(tmp_path)
    try:
        server = LoopServer(server_config(), mode="sim")
        assert str(server.log_dir) == str(tmp_path)
        await server.start("127.0.0.1", 0)
        await server.stop()
    finally:
        if old is None:
            os.environ.pop("CARDIOLOOP_LOG_DIR", None)
        else:
            os.environ["CARDIOLOOP_LOG_DIR"] = old


@run_async
async def test_session_log_written(tmp_path):
    server, port = await start_server(mode="sim", log_dir=str(tmp_path))
    try:
        client = await LineClient.connect(port)
        await client.send(protocol.hello("console"))
        await client.recv_until("ack")
        await client.send(protocol.cmd("start"))
        await client.recv_until("ack")
        await client.send(protocol.cmd("stop"))
        await client.recv_until("ack")
        await asyncio.sleep(0.1)
        logs = list(tmp_path.glob("*.jsonl"))
        assert len(logs) == 1
        first = json.loads(logs[0].read_text().splitlines()[0])
        assert first["type"] == "config"
        await client.close()
    finally:
        await server.stop()
