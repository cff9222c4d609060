"""Live session service.

One WebSocket client drives one OnlineSession: the server streams state
per tick and belief/metrics on every update, and accepts gesture and
control messages. All traffic is logged for replay.
"""
from __future__ import annotations

import asyncio
import json
import logging
from dataclasses import dataclass, field

import websockets

from . import model as mdl
from . import observer as obs
from . import session as ses

PROTOCOL_VERSION = "reaction-session/1"
MESSAGE_TYPES = ("state", "belief", "metrics", "gesture", "control", "ack", "error")
CONTROL_COMMANDS = ("start", "pause", "reset", "seed")

log = logging.getLogger(__name__)


@dataclass
class ServiceState:
    """Mutable server-side session handle shared by the tick loop and the
    socket handler (single event loop, no locking needed)."""

    params: dict
    model_config: mdl.ModelConfig
    config: ses.SessionConfig
    session: ses.OnlineSession = None
    running: bool = False
    out_seq: int = 0
    last_in_seq: int = -1
    message_log: list[dict] = field(default_factory=list)
    client: object = None

    def __post_init__(self):
        self.session = ses.OnlineSession(self.params, self.model_config, self.config)

    def reset(self, seed: int | None = None) -> None:
        if seed is not None:
            self.config = ses.SessionConfig(**{**self.config.__dict__, "seed": seed})
        self.session = ses.OnlineSession(self.params, self.model_config, self.config)
        self.running = False


def envelope(msg_type: str, payload: dict, seq: int) -> dict:
    return {"type": msg_type, "seq": seq, "payload": payload}


class SessionService:
    def __init__(self, params: dict, model_config: mdl.ModelConfig,
                 config: ses.SessionConfig, realtime: bool = True):
        self.state = ServiceState(params=params, model_config=model_config, config=config)
        self.realtime = realtime

    # -- outbound -----------------------------------------------------------

    async def _send(self, msg_type: str, payload: dict) -> dict:
        msg = envelope(msg_type, payload, self.state.out_seq)
        self.state.out_seq += 1
        self.state.message_log.append({"dir": "out", **msg})
        if self.state.client is not None:
            try:
                await self.state.client.send(json.dumps(msg, sort_keys=True))
            except websockets.ConnectionClosed:
                self.state.client = None
        return msg

    async def _broadcast_tick(self, snapshot: dict) -> None:
        session = self.state.session
        await self._send("state", snapshot)
        row = session.history[-1]
        await self._send("belief", {"posterior": row.posterior,
                                    "entropy": row.entropy,
                                    "rankings": [ses.inf.ranking_values(r)
                                                 for r in session.belief.rankings],
                                    "map_ranking": row.map_ranking})
        await self._send("metrics", row.row())

    # -- session clock ------------------------------------------------------

    async def tick_loop(self) -> None:
        """Advance the session while running; headless synthetic sessions
        keep ticking with no client connected."""
        while True:
            if self.state.running and not self.state.session.finished:
                snapshot = self.state.session.tick()
                await self._broadcast_tick(snapshot)
                if self.state.session.finished:
                    self.state.running = False
                    await self._send("control", {"event": "finished",
                                                 "final": ses.final_summary(self.state.session)})
                if self.realtime:
                    await asyncio.sleep(self.state.config.step_period_s)
                else:
                    await asyncio.sleep(0)
            else:
                await asyncio.sleep(0.01 if self.realtime else 0)

    # -- inbound ------------------------------------------------------------

    async def handler(self, websocket) -> None:
        if self.state.client is not None:
            await websocket.send(json.dumps(envelope(
                "error", {"reason": "session busy: one client per session"}, 0),
                sort_keys=True))
            await websocket.close()
            return
        self.state.client = websocket
        await self._send("control", {"event": "hello", "protocol": PROTOCOL_VERSION,
                                     "gestures": list(obs.GESTURE_KINDS),
                                     "seed": self.state.config.seed})
        try:
            async for raw in websocket:
                await self._handle_raw(raw)
        finally:
            if self.state.client is websocket:
                self.state.client = None

    async def _handle_raw(self, raw: str) -> None:
        try:
            msg = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError):
            await self._send("error", {"reason": "malformed JSON"})
            return
        if not isinstance(msg, dict) or msg.get("type") not in MESSAGE_TYPES:
            await self._send("error", {"reason": f"unknown message type {msg.get('type')!r}"
                                       if isinstance(msg, dict) else "not an object"})
            return
        self.state.message_log.append({"dir": "in", **msg})
        seq = msg.get("seq")
        if isinstance(seq, int):
            if seq <= self.state.last_in_seq:
                await self._send("error", {"reason": f"non-increasing seq {seq}"})
                return
            self.state.last_in_seq = seq
        payload = msg.get("payload") or {}
        if msg["type"] == "gesture":
            await self._handle_gesture(payload, seq)
        elif msg["type"] == "control":
            await self._handle_control(payload, seq)
        else:
            await self._send("error",
                             {"reason": f"client may not send {msg['type']!r} messages"})

    async def _handle_gesture(self, payload: dict, seq) -> None:
        kind = payload.get("kind")
        if isinstance(kind, str):
            kind = kind.lower()
        if kind not in obs.GESTURE_KINDS:
            await self._send("error", {"reason": f"unknown gesture kind {payload.get('kind')!r}"})
            return
        if not self.state.running:
            await self._send("error", {"reason": "session paused; gesture dropped"})
            return
        event = self.state.session.inject_gesture(kind)
        await self._send("ack", {"of_seq": seq, "kind": kind,
                                 "frame": event.onset_frame})

    async def _handle_control(self, payload: dict, seq) -> None:
        command = payload.get("command")
        if command == "start":
            self.state.running = True
        elif command == "pause":
            self.state.running = False
        elif command == "reset":
            self.state.reset()
        elif command == "seed":
            try:
                self.state.reset(seed=int(payload["value"]))
            except (KeyError, TypeError, ValueError):
                await self._send("error", {"reason": "seed control needs an integer value"})
                return
        else:
            await self._send("error", {"reason": f"unknown control command {command!r}"})
            return
        await self._send("ack", {"of_seq": seq, "command": command})

    # -- lifecycle ----------------------------------------------------------

    async def serve_forever(self, host: str, port: int) -> None:
        ticker = asyncio.create_task(self.tick_loop())
        try:
            async with websockets.serve(self.handler, host, port):
                await asyncio.Future()
        finally:
            ticker.cancel()


def serve(params: dict, model_config: mdl.ModelConfig, config: ses.SessionConfig,
          host: str = "127.0.0.1", port: int = 8765, realtime: bool = True) -> None:
    service = SessionService(params, model_config, config, realtime=realtime)
    log.info("serving on ws://%s:%d (protocol %s)", host, port, PROTOCOL_VERSION)
    asyncio.run(service.serve_forever(host, port))
