"""Scenario files: one JSON document describing a full runnable setup.

A scenario combines up to three independent sections over a shared scene:
a blackboard roster (manikin, target, agents, scripted operator inputs),
a constrained planar arm (vertical-plane dynamics against contacts), and
a free guided tool following a replay track.  Every value is SI; every
angle is radians.  Validation reports the JSON field path of the first
offending value so files can be fixed by hand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from ..agents import OperatorInput
from ..geometry import Box3, PlanarPose, Polygon2, Scene
from ..guides import (
    DEFAULT_DAMPING_POS,
    DEFAULT_DAMPING_ROT,
    DEFAULT_MECH_DAMPING,
    DEFAULT_STIFFNESS_POS,
    DEFAULT_STIFFNESS_ROT,
)
from ..kinematics import ManikinModel, RobotModel, Target

SCHEMA_VERSION = 1
AGENT_KINDS = ("attraction", "repulsion", "head", "visibility", "operator")


class ScenarioError(ValueError):
    """A scenario file failed to parse or validate.

    ``field_path`` points at the offending value ("agents[2].rate"), or is
    empty for document-level problems.
    """

    def __init__(self, message: str, field_path: str = ""):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}" if field_path else message)


def _require(data: Mapping, key: str, path: str) -> Any:
    if key not in data:
        raise ScenarioError("required field is missing", f"{path}.{key}" if path else key)
    return data[key]


def _expect_mapping(value: Any, path: str) -> Mapping:
    if not isinstance(value, Mapping):
        raise ScenarioError("expected an object", path)
    return value


def _expect_list(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise ScenarioError("expected an array", path)
    return value


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"expected a number, got {value!r}", path)
    if not np.isfinite(value):
        raise ScenarioError(f"expected a finite number, got {value!r}", path)
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"expected an integer, got {value!r}", path)
    return value


def _vector(value: Any, n: int, path: str) -> np.ndarray:
    items = _expect_list(value, path)
    if len(items) != n:
        raise ScenarioError(f"expected {n} numbers, got {len(items)}", path)
    return np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(items)])


def _build(path: str, ctor, *args, **kwargs):
    """Run a model constructor, converting its invariant errors to field paths."""
    try:
        return ctor(*args, **kwargs)
    except ValueError as exc:
        raise ScenarioError(str(exc), path) from exc


@dataclass(frozen=True)
class AgentSpec:
    """Roster entry: which agent to build and its scheduling parameters."""

    name: str
    kind: str
    rate: int = 1
    d_pos: float = 0.01
    d_or: float = 0.05
    enabled: bool = True
    params: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ConeConfig:
    aperture: float = np.radians(10.0)
    eps_min: float = np.radians(2.0)
    eps_max: float = np.radians(30.0)
    length: float = 1.0


@dataclass(frozen=True)
class ArmConfig:
    """Planar arm in the vertical x-z plane pressing against contacts."""

    link_lengths: np.ndarray
    q0: np.ndarray
    damping: np.ndarray            # diagonal of B_a
    task_stiffness: np.ndarray     # diagonal of K, B_c = 0
    task_target: np.ndarray        # (x, z)
    half_spaces: tuple[tuple[np.ndarray, float], ...] = ()
    joint_limits: np.ndarray | None = None


@dataclass(frozen=True)
class ReplayConfig:
    """Either an external track file or a seeded noisy generated track."""

    file: str | None = None
    seed: int = 0
    start: np.ndarray | None = None
    end: np.ndarray | None = None
    duration: float = 2.0
    sample_hz: float = 100.0
    noise_pos: float = 0.02
    noise_rot: float = 0.2
    base_rotvec: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True)
class ToolConfig:
    """Free first-order tool tracking a replay target frame."""

    start_position: np.ndarray
    start_rotvec: np.ndarray
    damping_linear: float
    damping_angular: float
    track_stiffness_pos: float
    track_stiffness_rot: float
    ideal_axis: np.ndarray
    axis_local: np.ndarray
    replay: ReplayConfig


@dataclass(frozen=True)
class GuideSpec:
    kind: str                      # "slide" or "spotlight"
    axis_origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    axis_direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    target_rotvec: np.ndarray = field(default_factory=lambda: np.zeros(3))
    aim_point: np.ndarray | None = None
    stiffness_pos: float = DEFAULT_STIFFNESS_POS
    stiffness_rot: float = DEFAULT_STIFFNESS_ROT
    damping_pos: float = DEFAULT_DAMPING_POS
    damping_rot: float = DEFAULT_DAMPING_ROT
    mech_damping: float = DEFAULT_MECH_DAMPING


@dataclass(frozen=True)
class Scenario:
    """A validated, runnable scenario document."""

    name: str
    ticks: int
    dt: float
    scene: Scene = field(default_factory=Scene)
    target: Target | None = None
    manikin: ManikinModel | None = None
    robot: RobotModel | None = None
    cone: ConeConfig = field(default_factory=ConeConfig)
    agents: tuple[AgentSpec, ...] = ()
    operator_script: Mapping[int, OperatorInput] = field(default_factory=dict)
    arm: ArmConfig | None = None
    tool: ToolConfig | None = None
    guides: tuple[GuideSpec, ...] = ()
    source: str = "<memory>"


def _parse_scene(data: Mapping, path: str) -> Scene:
    polygons = []
    for i, verts in enumerate(_expect_list(data.get("polygons", []), f"{path}.polygons")):
        pts = _expect_list(verts, f"{path}.polygons[{i}]")
        arr = np.array([_vector(p, 2, f"{path}.polygons[{i}][{j}]") for j, p in enumerate(pts)])
        polygons.append(_build(f"{path}.polygons[{i}]", Polygon2, arr))
    boxes = []
    for i, b in enumerate(_expect_list(data.get("boxes", []), f"{path}.boxes")):
        b = _expect_mapping(b, f"{path}.boxes[{i}]")
        boxes.append(
            _build(
                f"{path}.boxes[{i}]",
                Box3,
                center=_vector(_require(b, "center", f"{path}.boxes[{i}]"), 3, f"{path}.boxes[{i}].center"),
                half_extents=_vector(
                    _require(b, "half_extents", f"{path}.boxes[{i}]"), 3, f"{path}.boxes[{i}].half_extents"
                ),
            )
        )
    return Scene(polygons=tuple(polygons), boxes=tuple(boxes))


def _parse_manikin(data: Mapping, path: str) -> ManikinModel:
    trunk = _vector(_require(data, "trunk", path), 3, f"{path}.trunk")
    kwargs: dict[str, Any] = {"trunk": PlanarPose(*trunk)}
    if "trunk_height" in data:
        kwargs["trunk_height"] = _number(data["trunk_height"], f"{path}.trunk_height")
    if "eye_offset" in data:
        kwargs["eye_offset"] = _vector(data["eye_offset"], 3, f"{path}.eye_offset")
    if "q_b" in data:
        kwargs["q_b"] = _vector(data["q_b"], 3, f"{path}.q_b")
    if "limits" in data:
        rows = _expect_list(data["limits"], f"{path}.limits")
        kwargs["limits"] = np.array(
            [_vector(r, 2, f"{path}.limits[{i}]") for i, r in enumerate(rows)]
        )
    return _build(path, ManikinModel, **kwargs)


def _parse_robot(data: Mapping, path: str) -> RobotModel:
    base = _vector(_require(data, "base", path), 3, f"{path}.base")
    lengths = _expect_list(_require(data, "link_lengths", path), f"{path}.link_lengths")
    kwargs: dict[str, Any] = {
        "base": PlanarPose(*base),
        "link_lengths": np.array([_number(v, f"{path}.link_lengths[{i}]") for i, v in enumerate(lengths)]),
    }
    if "q" in data:
        kwargs["q"] = _vector(data["q"], len(lengths), f"{path}.q")
    if "limits" in data:
        rows = _expect_list(data["limits"], f"{path}.limits")
        kwargs["limits"] = np.array([_vector(r, 2, f"{path}.limits[{i}]") for i, r in enumerate(rows)])
    if "aspect" in data:
        kwargs["aspect"] = _integer(data["aspect"], f"{path}.aspect")
    return _build(path, RobotModel, **kwargs)


def _parse_agents(items: list, path: str) -> tuple[AgentSpec, ...]:
    specs = []
    seen: set[str] = set()
    for i, item in enumerate(items):
        item = _expect_mapping(item, f"{path}[{i}]")
        kind = _require(item, "kind", f"{path}[{i}]")
        name = item.get("name", kind.capitalize())
        agent_path = f"{path}[{i}] ({name})"
        if kind not in AGENT_KINDS:
            raise ScenarioError(f"unknown agent kind {kind!r}; expected one of {AGENT_KINDS}", f"{agent_path}.kind")
        if name in seen:
            raise ScenarioError(f"duplicate agent name {name!r}", f"{agent_path}.name")
        seen.add(name)
        rate = item.get("rate", 1)
        if isinstance(rate, bool) or not isinstance(rate, int) or rate < 1:
            raise ScenarioError(f"rate must be a positive integer, got {rate!r}", f"{agent_path}.rate")
        d_pos = _number(item.get("d_pos", 0.01), f"{agent_path}.d_pos")
        d_or = _number(item.get("d_or", 0.05), f"{agent_path}.d_or")
        if d_pos <= 0:
            raise ScenarioError("d_pos must be positive", f"{agent_path}.d_pos")
        if d_or <= 0:
            raise ScenarioError("d_or must be positive", f"{agent_path}.d_or")
        enabled = item.get("enabled", True)
        if not isinstance(enabled, bool):
            raise ScenarioError("enabled must be a boolean", f"{agent_path}.enabled")
        params = _expect_mapping(item.get("params", {}), f"{agent_path}.params")
        specs.append(
            AgentSpec(name=name, kind=kind, rate=rate, d_pos=d_pos, d_or=d_or, enabled=enabled, params=dict(params))
        )
    return tuple(specs)


def _parse_operator_script(data: Mapping, path: str) -> dict[int, OperatorInput]:
    script: dict[int, OperatorInput] = {}
    for key, value in data.items():
        try:
            tick = int(key)
        except ValueError:
            raise ScenarioError(f"script keys must be tick integers, got {key!r}", path) from None
        if tick < 1:
            raise ScenarioError("script ticks must be >= 1", f"{path}.{key}")
        value = _expect_mapping(value, f"{path}.{key}")
        script[tick] = OperatorInput(
            d_pos=np.array(
                [_number(value.get("dx", 0.0), f"{path}.{key}.dx"), _number(value.get("dy", 0.0), f"{path}.{key}.dy")]
            ),
            d_theta=_number(value.get("dtheta", 0.0), f"{path}.{key}.dtheta"),
        )
    return script


def _parse_arm(data: Mapping, path: str) -> ArmConfig:
    lengths = _expect_list(_require(data, "link_lengths", path), f"{path}.link_lengths")
    n = len(lengths)
    half_spaces = []
    for i, hs in enumerate(_expect_list(data.get("half_spaces", []), f"{path}.half_spaces")):
        hs = _expect_mapping(hs, f"{path}.half_spaces[{i}]")
        normal = _vector(_require(hs, "normal", f"{path}.half_spaces[{i}]"), 2, f"{path}.half_spaces[{i}].normal")
        if np.linalg.norm(normal) == 0:
            raise ScenarioError("normal must be nonzero", f"{path}.half_spaces[{i}].normal")
        half_spaces.append((normal, _number(hs.get("offset", 0.0), f"{path}.half_spaces[{i}].offset")))
    limits = None
    if data.get("joint_limits") is not None:
        rows = _expect_list(data["joint_limits"], f"{path}.joint_limits")
        if len(rows) != n:
            raise ScenarioError(f"expected {n} limit rows", f"{path}.joint_limits")
        limits = np.array([_vector(r, 2, f"{path}.joint_limits[{i}]") for i, r in enumerate(rows)])
    damping = _vector(_require(data, "damping", path), n, f"{path}.damping")
    if np.any(damping <= 0):
        raise ScenarioError("damping entries must be positive", f"{path}.damping")
    stiffness = _vector(_require(data, "task_stiffness", path), 2, f"{path}.task_stiffness")
    if np.any(stiffness < 0):
        raise ScenarioError("task stiffness must be nonnegative", f"{path}.task_stiffness")
    return ArmConfig(
        link_lengths=np.array([_number(v, f"{path}.link_lengths[{i}]") for i, v in enumerate(lengths)]),
        q0=_vector(_require(data, "q0", path), n, f"{path}.q0"),
        damping=damping,
        task_stiffness=stiffness,
        task_target=_vector(_require(data, "task_target", path), 2, f"{path}.task_target"),
        half_spaces=tuple(half_spaces),
        joint_limits=limits,
    )


def _parse_replay(data: Mapping, path: str) -> ReplayConfig:
    if "file" in data:
        return ReplayConfig(file=str(data["file"]))
    cfg = ReplayConfig(
        seed=_integer(_require(data, "seed", path), f"{path}.seed"),
        start=_vector(_require(data, "start", path), 3, f"{path}.start"),
        end=_vector(_require(data, "end", path), 3, f"{path}.end"),
        duration=_number(data.get("duration", 2.0), f"{path}.duration"),
        sample_hz=_number(data.get("sample_hz", 100.0), f"{path}.sample_hz"),
        noise_pos=_number(data.get("noise_pos", 0.02), f"{path}.noise_pos"),
        noise_rot=_number(data.get("noise_rot", 0.2), f"{path}.noise_rot"),
        base_rotvec=_vector(data.get("base_rotvec", [0.0, 0.0, 0.0]), 3, f"{path}.base_rotvec"),
    )
    if cfg.duration <= 0:
        raise ScenarioError("duration must be positive", f"{path}.duration")
    if cfg.sample_hz <= 0:
        raise ScenarioError("sample_hz must be positive", f"{path}.sample_hz")
    return cfg


def _parse_tool(data: Mapping, path: str) -> ToolConfig:
    damping_linear = _number(_require(data, "damping_linear", path), f"{path}.damping_linear")
    damping_angular = _number(_require(data, "damping_angular", path), f"{path}.damping_angular")
    if damping_linear <= 0 or damping_angular <= 0:
        raise ScenarioError("tool damping must be positive", f"{path}.damping_linear")
    ideal_axis = _vector(data.get("ideal_axis", [0.0, 0.0, 1.0]), 3, f"{path}.ideal_axis")
    norm = np.linalg.norm(ideal_axis)
    if abs(norm - 1.0) > 1e-9:
        raise ScenarioError("ideal_axis must be unit norm", f"{path}.ideal_axis")
    axis_local = _vector(data.get("axis_local", [0.0, 0.0, 1.0]), 3, f"{path}.axis_local")
    if abs(np.linalg.norm(axis_local) - 1.0) > 1e-9:
        raise ScenarioError("axis_local must be unit norm", f"{path}.axis_local")
    return ToolConfig(
        start_position=_vector(_require(data, "start_position", path), 3, f"{path}.start_position"),
        start_rotvec=_vector(data.get("start_rotvec", [0.0, 0.0, 0.0]), 3, f"{path}.start_rotvec"),
        damping_linear=damping_linear,
        damping_angular=damping_angular,
        track_stiffness_pos=_number(data.get("track_stiffness_pos", 100.0), f"{path}.track_stiffness_pos"),
        track_stiffness_rot=_number(data.get("track_stiffness_rot", 2.0), f"{path}.track_stiffness_rot"),
        ideal_axis=ideal_axis,
        axis_local=axis_local,
        replay=_parse_replay(_expect_mapping(_require(data, "replay", path), f"{path}.replay"), f"{path}.replay"),
    )


def _parse_guides(items: list, path: str) -> tuple[GuideSpec, ...]:
    guides = []
    for i, item in enumerate(items):
        item = _expect_mapping(item, f"{path}[{i}]")
        kind = item.get("kind", "slide")
        if kind not in ("slide", "spotlight"):
            raise ScenarioError(f"unknown guide kind {kind!r}", f"{path}[{i}].kind")
        kwargs: dict[str, Any] = {"kind": kind}
        if kind == "slide":
            kwargs["axis_origin"] = _vector(
                _require(item, "axis_origin", f"{path}[{i}]"), 3, f"{path}[{i}].axis_origin"
            )
            kwargs["axis_direction"] = _vector(
                _require(item, "axis_direction", f"{path}[{i}]"), 3, f"{path}[{i}].axis_direction"
            )
            if "target_rotvec" in item:
                kwargs["target_rotvec"] = _vector(item["target_rotvec"], 3, f"{path}[{i}].target_rotvec")
        else:
            kwargs["aim_point"] = _vector(_require(item, "aim_point", f"{path}[{i}]"), 3, f"{path}[{i}].aim_point")
        for key in ("stiffness_pos", "stiffness_rot", "damping_pos", "damping_rot", "mech_damping"):
            if key in item:
                value = _number(item[key], f"{path}[{i}].{key}")
                if value <= 0:
                    raise ScenarioError(f"{key} must be positive", f"{path}[{i}].{key}")
                kwargs[key] = value
        guides.append(GuideSpec(**kwargs))
    return tuple(guides)


def scenario_from_dict(data: Mapping, source: str = "<memory>", name: str | None = None) -> Scenario:
    """Validate a parsed scenario document and build the model objects."""
    data = _expect_mapping(data, "")
    version = _require(data, "version", "")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported version {version!r}; this build reads {SCHEMA_VERSION}", "version")

    run = _expect_mapping(_require(data, "run", ""), "run")
    ticks = _integer(_require(run, "ticks", "run"), "run.ticks")
    if ticks < 1:
        raise ScenarioError("must be >= 1", "run.ticks")
    dt = _number(run.get("dt", 1e-2), "run.dt")
    if dt <= 0:
        raise ScenarioError("must be positive", "run.dt")

    scene = _parse_scene(_expect_mapping(data.get("scene", {}), "scene"), "scene")

    target = None
    if data.get("target") is not None:
        t = _expect_mapping(data["target"], "target")
        target = _build(
            "target",
            Target,
            position=_vector(_require(t, "position", "target"), 3, "target.position"),
            size=_number(t.get("size", 0.05), "target.size"),
        )

    manikin = _parse_manikin(_expect_mapping(data["manikin"], "manikin"), "manikin") if data.get("manikin") else None
    robot = _parse_robot(_expect_mapping(data["robot"], "robot"), "robot") if data.get("robot") else None

    cone = ConeConfig()
    if data.get("cone") is not None:
        c = _expect_mapping(data["cone"], "cone")
        cone = ConeConfig(
            aperture=_number(c.get("aperture", cone.aperture), "cone.aperture"),
            eps_min=_number(c.get("eps_min", cone.eps_min), "cone.eps_min"),
            eps_max=_number(c.get("eps_max", cone.eps_max), "cone.eps_max"),
            length=_number(c.get("length", cone.length), "cone.length"),
        )
        if not 0 < cone.eps_min <= cone.eps_max:
            raise ScenarioError("requires 0 < eps_min <= eps_max", "cone.eps_min")

    agents = _parse_agents(_expect_list(data.get("agents", []), "agents"), "agents")
    script = _parse_operator_script(_expect_mapping(data.get("operator_script", {}), "operator_script"), "operator_script")

    if agents:
        if manikin is None:
            raise ScenarioError("agents need a manikin", "manikin")
        if target is None:
            raise ScenarioError("agents need a target", "target")
        kinds = {spec.kind for spec in agents}
        if script and "operator" not in kinds:
            raise ScenarioError("scripted inputs need an operator agent in the roster", "operator_script")

    arm = _parse_arm(_expect_mapping(data["arm"], "arm"), "arm") if data.get("arm") else None
    tool = _parse_tool(_expect_mapping(data["tool"], "tool"), "tool") if data.get("tool") else None
    guides = _parse_guides(_expect_list(data.get("guides", []), "guides"), "guides")
    if guides and tool is None:
        raise ScenarioError("guides need a tool section to act on", "guides")
    if not (agents or arm or tool):
        raise ScenarioError("scenario has nothing to run: needs agents, an arm, or a tool", "")

    return Scenario(
        name=name or str(data.get("name", Path(source).stem)),
        ticks=ticks,
        dt=dt,
        scene=scene,
        target=target,
        manikin=manikin,
        robot=robot,
        cone=cone,
        agents=agents,
        operator_script=script,
        arm=arm,
        tool=tool,
        guides=guides,
        source=source,
    )


def load_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario file."""
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(data, source=str(path))


def bundled_scenario_path(name: str) -> Path:
    """Filesystem path of a scenario shipped with the package."""
    root = resources.files("manisim.scenarios")
    candidate = root / f"{name}.json"
    if not candidate.is_file():
        available = sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))
        raise KeyError(f"no bundled scenario {name!r}; available: {available}")
    return Path(str(candidate))
