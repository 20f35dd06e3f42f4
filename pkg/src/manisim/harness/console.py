"""Console service: a real-time scheduler with a WebSocket control channel.

One asyncio task owns the engine and steps it at a fixed tick rate.  Every
inbound command goes through a single ordered queue and is applied at the
next tick boundary, never mid-tick; the acknowledgment carries the tick at
which the change takes effect.  Sessions receive immutable JSON snapshots,
so any number of consoles can watch the same run.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import math
from dataclasses import replace as dc_replace
from pathlib import Path
from typing import Any

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles

from ..agents import OperatorInput
from ..blackboard import occlusion_lengths
from ..kinematics import Target, robot_joint_points
from .runner import SimEngine
from .scenario import Scenario

PROTOCOL_VERSION = 1
DEFAULT_TICK_RATE = 100.0

COMMAND_ACTIONS = ("set-enabled", "set-rate", "set-delta", "operator-input", "set-target")


class CommandError(ValueError):
    """A well-formed frame asking for something invalid."""


def _as_float(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(float(value)):
        raise CommandError(f"{name} must be a finite number")
    return float(value)


class ConsoleSession:
    """Per-connection outbound frame queue."""

    def __init__(self) -> None:
        self.outbound: asyncio.Queue[str] = asyncio.Queue()

    def send(self, frame: dict) -> None:
        self.outbound.put_nowait(json.dumps(frame))


class ConsoleServer:
    """Shared state: the engine, the command queue, and the session set."""

    def __init__(self, scenario: Scenario, tick_rate: float = DEFAULT_TICK_RATE):
        if not scenario.agents:
            raise ValueError("the console serves blackboard scenarios; this one has no agents")
        if tick_rate <= 0:
            raise ValueError("tick rate must be positive")
        self.scenario = scenario
        self.tick_rate = tick_rate
        self.engine = SimEngine(scenario)
        self.commands: asyncio.Queue[tuple[ConsoleSession, dict]] = asyncio.Queue()
        self.sessions: set[ConsoleSession] = set()
        self._runner: asyncio.Task | None = None

    # -- command handling -------------------------------------------------

    def _next_operator_tick(self) -> int:
        """First future tick at which the operator agent drains its queue."""
        tick = self.engine.board.world.tick
        rate = 1
        for spec in self.scenario.agents:
            if spec.kind == "operator":
                rate = self.engine.board.descriptor(spec.name).rate
                break
        return ((tick // rate) + 1) * rate

    def apply_command(self, msg: dict) -> dict:
        """Validate and queue one command; returns the acknowledgment frame."""
        action = msg.get("action")
        if action not in COMMAND_ACTIONS:
            raise CommandError(f"unknown action {action!r}; expected one of {COMMAND_ACTIONS}")
        board = self.engine.board
        ack: dict = {"type": "ack", "version": PROTOCOL_VERSION, "action": action}
        if "id" in msg:
            ack["id"] = msg["id"]
        try:
            if action == "set-enabled":
                result = board.set_agent_control(str(msg.get("agent")), enabled=bool(msg.get("enabled")))
            elif action == "set-rate":
                rate = msg.get("rate")
                if isinstance(rate, bool) or not isinstance(rate, int):
                    raise CommandError("rate must be an integer")
                result = board.set_agent_control(str(msg.get("agent")), rate=rate)
            elif action == "set-delta":
                kwargs = {}
                if "d_pos" in msg:
                    kwargs["d_pos"] = _as_float(msg["d_pos"], "d_pos")
                if "d_or" in msg:
                    kwargs["d_or"] = _as_float(msg["d_or"], "d_or")
                if not kwargs:
                    raise CommandError("set-delta needs d_pos or d_or")
                result = board.set_agent_control(str(msg.get("agent")), **kwargs)
            elif action == "operator-input":
                if self.engine.operator_queue is None:
                    raise CommandError("scenario has no operator agent")
                self.engine.operator_queue.push(
                    OperatorInput(
                        d_pos=[_as_float(msg.get("dx", 0.0), "dx"), _as_float(msg.get("dy", 0.0), "dy")],
                        d_theta=_as_float(msg.get("dtheta", 0.0), "dtheta"),
                        timestamp=float(msg.get("timestamp", 0.0)),
                    )
                )
                ack["effective_tick"] = self._next_operator_tick()
                return ack
            else:  # set-target
                position = msg.get("position")
                if not isinstance(position, list) or len(position) != 3:
                    raise CommandError("set-target needs a 3-element position")
                size = _as_float(msg.get("size", self.engine.board.world.target.size), "size")
                target = Target(position=[_as_float(v, "position") for v in position], size=size)
                self.engine.pending_target = target
                ack["effective_tick"] = board.world.tick + 1
                return ack
        except KeyError as exc:
            raise CommandError(f"unknown agent {msg.get('agent')!r}") from exc
        except ValueError as exc:
            raise CommandError(str(exc)) from exc
        ack["agent"] = result["agent"]
        ack["effective_tick"] = result["effective_tick"]
        return ack

    # -- frames ------------------------------------------------------------

    def hello_frame(self) -> dict:
        scene = self.scenario.scene
        return {
            "type": "hello",
            "version": PROTOCOL_VERSION,
            "scenario": self.scenario.name,
            "tick": self.engine.board.world.tick,
            "tick_rate": self.tick_rate,
            "scene": {
                "polygons": [p.vertices.tolist() for p in scene.polygons],
                "boxes": [
                    {"center": b.center.tolist(), "half_extents": b.half_extents.tolist()} for b in scene.boxes
                ],
            },
            "target": {
                "position": self.engine.board.world.target.position.tolist(),
                "size": self.engine.board.world.target.size,
            },
            "agents": self._agent_states(),
        }

    def _agent_states(self) -> list[dict]:
        board = self.engine.board
        return [
            {
                "name": a.descriptor.name,
                "enabled": a.descriptor.enabled,
                "rate": a.descriptor.rate,
                "d_pos": a.descriptor.d_pos,
                "d_or": a.descriptor.d_or,
            }
            for a in board.agents
        ]

    def snapshot_frame(self) -> dict:
        world = self.engine.board.world
        record = self.engine.last_record
        seg, cone_occ = occlusion_lengths(world)
        frame = {
            "type": "snapshot",
            "version": PROTOCOL_VERSION,
            "tick": world.tick,
            "time": self.engine.time,
            "manikin": {
                "trunk": [world.manikin.trunk.x, world.manikin.trunk.y, world.manikin.trunk.theta],
                "q_b": world.manikin.q_b.tolist(),
                "footprint": world.manikin.world_footprint().vertices.tolist(),
            },
            "target": {"position": world.target.position.tolist(), "size": world.target.size},
            "cone": {
                "vertex": world.cone.vertex.tolist(),
                "axis": world.cone.axis.tolist(),
                "aperture": world.cone.aperture,
                "eps_min": world.cone.eps_min,
                "eps_max": world.cone.eps_max,
            },
            "criteria": {
                "collision_length": record.collision_length if record else 0.0,
                "st_occlusion": seg,
                "cone_occlusion": cone_occ,
                "distance": record.distance_to_target if record else world_distance(world),
            },
            "agents": self._agent_states(),
            "failures": dict(record.failures) if record else {},
            "dropped_inputs": self.engine.dropped_inputs,
            "energies": {},
        }
        if self.engine.arm is not None:
            frame["energies"]["arm_task"] = self.engine.arm.task_energy
        if self.engine.tool is not None:
            frame["energies"]["guide"] = self.engine.tool.guide_energy
        if world.robot is not None:
            frame["robot"] = {
                "q": world.robot.q.tolist(),
                "joint_points": robot_joint_points(world.robot).tolist(),
            }
        return frame

    # -- scheduler ----------------------------------------------------------

    async def _drain_commands(self) -> None:
        while not self.commands.empty():
            session, msg = self.commands.get_nowait()
            try:
                session.send(self.apply_command(msg))
            except CommandError as exc:
                frame = {"type": "error", "version": PROTOCOL_VERSION, "message": str(exc)}
                if isinstance(msg, dict) and "id" in msg:
                    frame["id"] = msg["id"]
                session.send(frame)

    def _apply_pending_target(self) -> None:
        target = getattr(self.engine, "pending_target", None)
        if target is not None:
            board = self.engine.board
            board.world = dc_replace(board.world, target=target)
            self.engine.pending_target = None

    async def run_loop(self) -> None:
        period = 1.0 / self.tick_rate
        loop = asyncio.get_running_loop()
        next_deadline = loop.time() + period
        while self.engine.tick < self.scenario.ticks:
            await asyncio.sleep(max(0.0, next_deadline - loop.time()))
            next_deadline += period
            await self._drain_commands()
            self._apply_pending_target()
            try:
                self.engine.step()
            except Exception as exc:  # noqa: BLE001 - surface to every session
                self.engine.failure = f"tick {self.engine.tick}: {exc}"
                self.broadcast(
                    {"type": "error", "version": PROTOCOL_VERSION, "message": self.engine.failure}
                )
                return
            self.broadcast(self.snapshot_frame())

    def broadcast(self, frame: dict) -> None:
        payload = json.dumps(frame)
        for session in self.sessions:
            session.outbound.put_nowait(payload)

    def start(self) -> None:
        self._runner = asyncio.get_running_loop().create_task(self.run_loop())

    async def stop(self) -> None:
        if self._runner is not None:
            self._runner.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await self._runner
            self._runner = None


def world_distance(world) -> float:
    return float(
        math.hypot(
            world.manikin.trunk.x - world.target.position[0],
            world.manikin.trunk.y - world.target.position[1],
        )
    )


def create_console_app(
    scenario: Scenario,
    tick_rate: float = DEFAULT_TICK_RATE,
    static_dir: str | Path | None = None,
) -> FastAPI:
    """FastAPI app exposing /ws (protocol frames) and /ticklog (CSV so far)."""
    server = ConsoleServer(scenario, tick_rate=tick_rate)

    @contextlib.asynccontextmanager
    async def lifespan(_: FastAPI):
        server.start()
        try:
            yield
        finally:
            await server.stop()

    app = FastAPI(title="manisim console", lifespan=lifespan)
    app.state.server = server

    @app.get("/ticklog", response_class=PlainTextResponse)
    async def ticklog() -> str:
        return server.engine.ticklog_bytes().decode()

    @app.get("/metrics.json")
    async def metrics() -> dict:
        return server.engine.metrics()

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket) -> None:
        await websocket.accept()
        session = ConsoleSession()
        server.sessions.add(session)
        session.send(server.hello_frame())

        async def pump_outbound() -> None:
            while True:
                await websocket.send_text(await session.outbound.get())

        pump = asyncio.get_running_loop().create_task(pump_outbound())
        try:
            while True:
                raw = await websocket.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    session.send({"type": "error", "version": PROTOCOL_VERSION, "message": "frame is not valid JSON"})
                    continue
                if not isinstance(msg, dict) or msg.get("type") != "command":
                    session.send(
                        {
                            "type": "error",
                            "version": PROTOCOL_VERSION,
                            "message": 'frames must be objects with "type": "command"',
                        }
                    )
                    continue
                await server.commands.put((session, msg))
        except WebSocketDisconnect:
            pass
        finally:
            pump.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await pump
            server.sessions.discard(session)

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="console")
    return app
