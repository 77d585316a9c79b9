"""Streaming service: one engine loop fanned out to many WebSocket clients.

Protocol (one JSON object per message, schema in :mod:`qpolarimeter.wire`):
on connect the server sends a ``hello``; thereafter it pushes ``frame``
messages and answers every client command with exactly one ``ack`` on the
same connection.  Sessions are isolated: each client has a bounded outbound
queue, and a slow or dead client only drops its own frames (counted in the
next delivered frame's ``flags`` as ``dropped=N``) without ever blocking
the acquisition loop or other clients.

The service can also replay a capture file instead of running an engine;
commands are then rejected with an error ack.
"""

from __future__ import annotations

import asyncio
import json
import threading
from typing import IO

from websockets.asyncio.server import serve
from websockets.exceptions import ConnectionClosed

from .engine import Ack, EngineConfig, PolarimeterEngine, SourceState
from .wire import (
    SchemaError,
    ack_to_wire,
    command_from_wire,
    dumps_wire,
    frame_to_wire,
    hello_message,
    read_capture,
)

__all__ = ["PolarimeterService", "ServiceHandle", "start_service"]

_CLIENT_QUEUE_SIZE = 64


class _Client:
    __slots__ = ("queue", "drops")

    def __init__(self):
        self.queue: asyncio.Queue = asyncio.Queue(maxsize=_CLIENT_QUEUE_SIZE)
        self.drops = 0


class PolarimeterService:
    """Serve one engine (or one capture file) on a WebSocket endpoint."""

    def __init__(
        self,
        config: EngineConfig,
        source: SourceState | None = None,
        host: str = "127.0.0.1",
        port: int = 8765,
        capture_stream: IO[str] | None = None,
        replay_frames: list[dict] | None = None,
        replay_interval: float | None = None,
    ):
        self.config = config
        self.source = source if source is not None else SourceState()
        self.host = host
        self.port = port
        self.bound_port: int | None = None
        self._capture = capture_stream
        self._replay_frames = replay_frames
        if replay_interval is None:
            replay_interval = config.timing.tau_m + config.timing.tau_s
        self._replay_interval = replay_interval
        self._clients: set[_Client] = set()
        self._loop: asyncio.AbstractEventLoop | None = None
        self._stopping = threading.Event()
        self._engine = None if replay_frames is not None else PolarimeterEngine(config, self.source)

    # -- lifecycle -----------------------------------------------------------

    async def run(self, ready: threading.Event | None = None) -> None:
        """Serve until :meth:`stop` is called."""
        self._loop = asyncio.get_running_loop()
        stop_async = asyncio.Event()
        self._stop_async = stop_async
        self._client_connected = asyncio.Event()
        async with serve(self._handle_client, self.host, self.port) as server:
            self.bound_port = next(iter(server.sockets)).getsockname()[1]
            if self._engine is not None:
                pump = threading.Thread(target=self._pump_engine, daemon=True)
                pump.start()
            else:
                replay_task = asyncio.create_task(self._pump_replay())
            if ready is not None:
                ready.set()
            await stop_async.wait()
            if self._engine is None:
                replay_task.cancel()

    def stop(self) -> None:
        self._stopping.set()
        if self._loop is not None:
            self._loop.call_soon_threadsafe(self._stop_async.set)

    # -- frame sources ---------------------------------------------------------

    def _pump_engine(self) -> None:
        assert self._engine is not None
        for frame in self._engine.frames():
            if self._stopping.is_set():
                break
            payload = frame_to_wire(frame)
            if self._capture is not None:
                self._capture.write(dumps_wire(payload) + "\n")
                self._capture.flush()
            self._loop.call_soon_threadsafe(self._broadcast, payload)

    async def _pump_replay(self) -> None:
        # the replay timeline starts with the first consumer
        await self._client_connected.wait()
        for payload in self._replay_frames:
            if self._stopping.is_set():
                return
            self._broadcast(payload)
            if self._replay_interval > 0:
                await asyncio.sleep(self._replay_interval)

    def _broadcast(self, payload: dict) -> None:
        for client in self._clients:
            if client.drops:
                item = dict(payload, flags=list(payload["flags"]) + [f"dropped={client.drops}"])
            else:
                item = payload
            try:
                client.queue.put_nowait(item)
                client.drops = 0
            except asyncio.QueueFull:
                client.drops += 1

    # -- client sessions -------------------------------------------------------

    def _post_ack(self, client: _Client, ack: Ack) -> None:
        # called from the engine thread
        payload = ack_to_wire(ack)
        def push():
            try:
                client.queue.put_nowait(payload)
            except asyncio.QueueFull:
                pass
        self._loop.call_soon_threadsafe(push)

    async def _handle_client(self, connection) -> None:
        client = _Client()
        self._clients.add(client)
        self._client_connected.set()
        try:
            await connection.send(dumps_wire(hello_message(self.config, self.source)))
            sender = asyncio.create_task(self._send_loop(connection, client))
            try:
                async for message in connection:
                    self._handle_message(client, message)
            finally:
                sender.cancel()
        except ConnectionClosed:
            pass
        finally:
            self._clients.discard(client)

    async def _send_loop(self, connection, client: _Client) -> None:
        try:
            while True:
                payload = await client.queue.get()
                await connection.send(dumps_wire(payload))
        except ConnectionClosed:
            pass

    def _handle_message(self, client: _Client, message) -> None:
        req_id = None
        try:
            payload = json.loads(message)
            if isinstance(payload, dict):
                raw = payload.get("req_id")
                req_id = raw if isinstance(raw, str) else None
            command = command_from_wire(payload)
        except (json.JSONDecodeError, SchemaError) as exc:
            self._post_ack(client, Ack(req_id, error=str(exc)))
            return
        if self._engine is None:
            self._post_ack(client, Ack(command.req_id, error="replay session: commands not accepted"))
            return
        self._engine.submit(command, reply=lambda ack: self._post_ack(client, ack))


class ServiceHandle:
    """A service running on its own thread/event loop (for tests and tools)."""

    def __init__(self, service: PolarimeterService):
        self.service = service
        self._ready = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True)

    def _run(self) -> None:
        asyncio.run(self.service.run(ready=self._ready))

    def start(self, timeout: float = 10.0) -> "ServiceHandle":
        self._thread.start()
        if not self._ready.wait(timeout):
            raise RuntimeError("service failed to start")
        return self

    @property
    def url(self) -> str:
        return f"ws://{self.service.host}:{self.service.bound_port}"

    def stop(self) -> None:
        self.service.stop()
        self._thread.join(timeout=5.0)


def start_service(
    config: EngineConfig,
    source: SourceState | None = None,
    host: str = "127.0.0.1",
    port: int = 0,
    capture_stream: IO[str] | None = None,
    replay_path: str | None = None,
    replay_interval: float | None = None,
) -> ServiceHandle:
    """Start a service on a background thread; port 0 picks a free port."""
    replay_frames = None
    if replay_path is not None:
        with open(replay_path, encoding="utf-8") as fh:
            replay_frames = read_capture(fh)
    service = PolarimeterService(
        config,
        source,
        host=host,
        port=port,
        capture_stream=capture_stream,
        replay_frames=replay_frames,
        replay_interval=replay_interval,
    )
    return ServiceHandle(service).start()
