"""Replay tracks: timestamped target frames standing in for a capture device."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .scenario import ScenarioError

TRACK_VERSION = 1


@dataclass(frozen=True)
class ReplayTrack:
    """Strictly increasing timestamps with one target frame per sample."""

    times: np.ndarray        # (n,)
    positions: np.ndarray    # (n, 3)
    rotvecs: np.ndarray      # (n, 3)

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float).ravel()
        positions = np.asarray(self.positions, dtype=float).reshape(len(times), 3)
        rotvecs = np.asarray(self.rotvecs, dtype=float).reshape(len(times), 3)
        if len(times) == 0:
            raise ValueError("track must contain at least one frame")
        if np.any(np.diff(times) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if not all(np.all(np.isfinite(a)) for a in (times, positions, rotvecs)):
            raise ValueError("track values must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "rotvecs", rotvecs)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])


def replay_trajectory(track: ReplayTrack, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Interpolated (position, rotation matrix) at time ``t``.

    Positions interpolate linearly between the bracketing samples and the
    orientation travels the shortest rotation between them.  Outside the
    recorded range the nearest end frame holds.
    """
    times = track.times
    if t <= times[0]:
        index = 0
        return track.positions[index].copy(), Rotation.from_rotvec(track.rotvecs[index]).as_matrix()
    if t >= times[-1]:
        index = len(times) - 1
        return track.positions[index].copy(), Rotation.from_rotvec(track.rotvecs[index]).as_matrix()
    hi = int(np.searchsorted(times, t, side="right"))
    lo = hi - 1
    w = (t - times[lo]) / (times[hi] - times[lo])
    position = (1.0 - w) * track.positions[lo] + w * track.positions[hi]
    pair = Rotation.from_rotvec(track.rotvecs[[lo, hi]])
    rotation = Slerp(times[[lo, hi]], pair)(t).as_matrix()
    return position, rotation


def _smooth(samples: np.ndarray, window: int) -> np.ndarray:
    """Moving-average smoothing along axis 0 with edge padding."""
    if window <= 1:
        return samples
    kernel = np.ones(window) / window
    padded = np.concatenate([samples[:1].repeat(window, axis=0), samples, samples[-1:].repeat(window, axis=0)])
    out = np.column_stack([np.convolve(padded[:, j], kernel, mode="same") for j in range(samples.shape[1])])
    return out[window:-window]


def noisy_replay_track(
    seed: int,
    start,
    end,
    duration: float = 2.0,
    sample_hz: float = 100.0,
    noise_pos: float = 0.02,
    noise_rot: float = 0.2,
    base_rotvec=(0.0, 0.0, 0.0),
) -> ReplayTrack:
    """A straight-line track corrupted by smooth seeded noise.

    The same seed always yields the same track, so runs built on it stay
    reproducible.  Noise is zero-mean, band-limited by a moving average,
    and applied to both the position and the orientation samples.
    """
    if duration <= 0 or sample_hz <= 0:
        raise ValueError("duration and sample_hz must be positive")
    rng = np.random.default_rng(seed)
    n = max(2, int(round(duration * sample_hz)) + 1)
    times = np.linspace(0.0, duration, n)
    alphas = times / duration
    start = np.asarray(start, dtype=float).reshape(3)
    end = np.asarray(end, dtype=float).reshape(3)
    base_rotvec = np.asarray(base_rotvec, dtype=float).reshape(3)
    window = max(1, int(round(sample_hz * 0.1)))
    pos_noise = _smooth(rng.normal(scale=noise_pos, size=(n, 3)), window)
    rot_noise = _smooth(rng.normal(scale=noise_rot, size=(n, 3)), window)
    positions = (1.0 - alphas)[:, None] * start + alphas[:, None] * end + pos_noise
    rotvecs = base_rotvec[None, :] + rot_noise
    return ReplayTrack(times=times, positions=positions, rotvecs=rotvecs)


def load_replay_track(path: str | Path) -> ReplayTrack:
    """Read a track file: {"version": 1, "frames": [{"t", "position", "rotvec"}]}."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("expected an object", "")
    if data.get("version") != TRACK_VERSION:
        raise ScenarioError(f"unsupported version {data.get('version')!r}", "version")
    frames = data.get("frames")
    if not isinstance(frames, list) or not frames:
        raise ScenarioError("needs a non-empty frames array", "frames")
    times, positions, rotvecs = [], [], []
    for i, frame in enumerate(frames):
        if not isinstance(frame, dict) or "t" not in frame or "position" not in frame:
            raise ScenarioError("frame needs t and position", f"frames[{i}]")
        times.append(float(frame["t"]))
        positions.append(np.asarray(frame["position"], dtype=float).reshape(3))
        rotvecs.append(np.asarray(frame.get("rotvec", (0.0, 0.0, 0.0)), dtype=float).reshape(3))
    try:
        return ReplayTrack(times=np.array(times), positions=np.array(positions), rotvecs=np.array(rotvecs))
    except ValueError as exc:
        raise ScenarioError(str(exc), "frames") from exc
