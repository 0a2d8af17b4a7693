"""Quasi-static rigid-instrument-in-a-curved-canal simulation.

The canal centerline is planar (x-z plane): a straight entry segment along
+x, a circular arc that turns the tangent by ``180 - flexion`` degrees, and a
straight exit segment, each one third of the canal length. Units are mm,
radians, seconds, newtons.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

OBS_DIM = 12
ACTION_DIM = 5
WORKSPACE_HALF_WIDTH = 100.0
N_SHAFT_SAMPLES = 4
SHAFT_SPACING_MM = 5.0


@dataclass(frozen=True)
class InstrumentPose:
    position: np.ndarray  # tip, mm
    orientation: np.ndarray  # roll, pitch, yaw in rad

    def axis(self) -> np.ndarray:
        return instrument_axis(self.orientation)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def instrument_axis(orientation) -> np.ndarray:
    """Forward unit axis for Z-Y-X Euler angles (roll is irrelevant for a tube)."""
    _, pitch, yaw = orientation
    cp = math.cos(pitch)
    return np.array([cp * math.cos(yaw), cp * math.sin(yaw), -math.sin(pitch)])


def axis_to_pitch_yaw(direction) -> tuple:
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    pitch = -math.asin(max(-1.0, min(1.0, d[2])))
    yaw = math.atan2(d[1], d[0])
    return pitch, yaw


@dataclass(frozen=True)
class CanalAnatomy:
    """Canal geometry plus the contact and timing constants of the scene."""

    flexion_angle_deg: float = 150.0
    canal_length_mm: float = 40.0
    canal_radius_mm: float = 2.25
    checkpoint_fractions: tuple = (0.2, 0.4, 0.6, 0.8, 1.0)
    trigger_radius_mm: float = 2.0
    instrument_radius_mm: float = 2.5
    k_wall: float = 0.5  # N/mm
    force_cap: float = 5.0  # N
    dt: float = 0.02
    episode_cap_s: float = 20.0
    max_translation_step_mm: float = 1.0
    max_rotation_step_rad: float = 0.0175
    reset_position_noise_mm: float = 1.0
    reset_angle_noise_deg: float = 2.0
    force_observation: str = "vector"  # or "modulus"
    radius_profile: Optional[Callable[[float], float]] = field(default=None, compare=False)

    def __post_init__(self):
        if not 115.0 <= self.flexion_angle_deg <= 185.0:
            raise ValueError(f"flexion angle {self.flexion_angle_deg} outside [115, 185] degrees")
        fr = tuple(float(f) for f in self.checkpoint_fractions)
        if not fr or any(b <= a for a, b in zip(fr, fr[1:])) or fr[0] <= 0.0 or fr[-1] != 1.0:
            raise ValueError("checkpoint fractions must be strictly increasing in (0, 1] and end at 1.0")
        object.__setattr__(self, "checkpoint_fractions", fr)
        if self.trigger_radius_mm <= 0 or self.canal_length_mm <= 0 or self.canal_radius_mm <= 0:
            raise ValueError("lengths and radii must be positive")
        if self.force_observation not in ("vector", "modulus"):
            raise ValueError("force_observation must be 'vector' or 'modulus'")

    @property
    def bend_angle(self) -> float:
        """Signed tangent turn over the arc, rad (0 for a straight canal)."""
        return math.radians(180.0 - self.flexion_angle_deg)

    @property
    def n_checkpoints(self) -> int:
        return len(self.checkpoint_fractions)

    @property
    def max_steps(self) -> int:
        return int(round(self.episode_cap_s / self.dt))

    def radius_at(self, s):
        if self.radius_profile is None:
            return np.full_like(np.asarray(s, dtype=np.float64), self.canal_radius_mm)
        return np.vectorize(self.radius_profile, otypes=[float])(s)

    @property
    def entry_pose(self) -> InstrumentPose:
        return InstrumentPose(np.zeros(3), np.zeros(3))

    def checkpoint_points(self) -> np.ndarray:
        return _checkpoint_points(self).copy()

    def config_items(self) -> dict:
        return {
            "flexion_angle_deg": self.flexion_angle_deg,
            "canal_length_mm": self.canal_length_mm,
            "canal_radius_mm": self.canal_radius_mm,
            "checkpoint_fractions": ",".join(repr(f) for f in self.checkpoint_fractions),
            "trigger_radius_mm": self.trigger_radius_mm,
            "instrument_radius_mm": self.instrument_radius_mm,
            "k_wall": self.k_wall,
            "force_cap": self.force_cap,
            "dt": self.dt,
            "episode_cap_s": self.episode_cap_s,
            "max_translation_step_mm": self.max_translation_step_mm,
            "max_rotation_step_rad": self.max_rotation_step_rad,
            "reset_position_noise_mm": self.reset_position_noise_mm,
            "reset_angle_noise_deg": self.reset_angle_noise_deg,
            "force_observation": self.force_observation,
        }

    def config_hash(self) -> str:
        text = "\n".join(f"{k}={v!r}" for k, v in sorted(self.config_items().items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


# --- centerline geometry -------------------------------------------------

@lru_cache(maxsize=64)
def _segments(anatomy: CanalAnatomy):
    seg = anatomy.canal_length_mm / 3.0
    kappa = anatomy.bend_angle / seg
    p1 = np.array([seg, 0.0, 0.0])
    beta = anatomy.bend_angle
    p2 = p1 + _arc_offset(kappa, seg)
    t2 = np.array([math.cos(beta), 0.0, -math.sin(beta)])
    return seg, kappa, p1, p2, t2


def _arc_offset(kappa: float, sigma: float) -> np.ndarray:
    if abs(kappa) < 1e-12:
        return np.array([sigma, 0.0, 0.0])
    th = kappa * sigma
    return np.array([math.sin(th) / kappa, 0.0, -(1.0 - math.cos(th)) / kappa])


def centerline_point(anatomy: CanalAnatomy, s: float):
    """Point (mm) and unit tangent at arc-length fraction ``s`` in [0, 1]."""
    s = float(s)
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"arc-length fraction {s} outside [0, 1]")
    seg, kappa, p1, p2, t2 = _segments(anatomy)
    sigma = s * anatomy.canal_length_mm
    if sigma <= seg:
        return np.array([sigma, 0.0, 0.0]), np.array([1.0, 0.0, 0.0])
    if sigma <= 2.0 * seg:
        a = sigma - seg
        th = kappa * a
        return p1 + _arc_offset(kappa, a), np.array([math.cos(th), 0.0, -math.sin(th)])
    return p2 + (sigma - 2.0 * seg) * t2, t2.copy()


def nearest_centerline(anatomy: CanalAnatomy, points: np.ndarray):
    """Nearest centerline point for each row of ``points``.

    Returns ``(s, nearest, inside)`` where ``inside`` is False for points that
    project before the entry or past the exit (outside the canal).
    """
    q = np.atleast_2d(np.asarray(points, dtype=np.float64))
    seg, kappa, p1, p2, t2 = _segments(anatomy)
    n = q.shape[0]

    # entry segment: along +x from the origin
    a0 = q[:, 0]
    sig0 = np.minimum(np.maximum(a0, 0.0), seg)
    c0 = np.zeros((n, 3))
    c0[:, 0] = sig0

    # arc
    c1 = np.zeros((n, 3))
    if abs(kappa) < 1e-12:
        a1 = np.minimum(np.maximum(q[:, 0] - seg, 0.0), seg)
        c1[:, 0] = seg + a1
    else:
        cz = -1.0 / kappa
        theta = np.arctan2(kappa * (q[:, 0] - seg), kappa * (q[:, 2] - cz))
        beta = kappa * seg
        theta = np.minimum(np.maximum(theta, min(0.0, beta)), max(0.0, beta))
        a1 = theta / kappa
        c1[:, 0] = seg + np.sin(theta) / kappa
        c1[:, 2] = cz + np.cos(theta) / kappa

    # exit segment
    a2_raw = (q - p2) @ t2
    a2 = np.minimum(np.maximum(a2_raw, 0.0), seg)
    c2 = p2 + a2[:, None] * t2

    d0 = np.einsum("ij,ij->i", q - c0, q - c0)
    d1 = np.einsum("ij,ij->i", q - c1, q - c1)
    d2 = np.einsum("ij,ij->i", q - c2, q - c2)
    best = np.where(d1 < d0, 1, 0)
    best = np.where(d2 < np.minimum(d0, d1), 2, best)
    nearest = np.where((best == 0)[:, None], c0, np.where((best == 1)[:, None], c1, c2))
    sigma = np.where(best == 0, sig0, np.where(best == 1, seg + a1, 2.0 * seg + a2))
    inside = ~(((best == 0) & (a0 < 0.0)) | ((best == 2) & (a2_raw > seg)))
    return sigma / anatomy.canal_length_mm, nearest, inside


# --- contact ---------------------------------------------------------------

def instrument_samples(pose: InstrumentPose) -> np.ndarray:
    """Tip followed by shaft points spaced behind it along the axis."""
    axis = pose.axis()
    offsets = SHAFT_SPACING_MM * np.arange(N_SHAFT_SAMPLES + 1)
    return pose.position[None, :] - offsets[:, None] * axis[None, :]


def contact_force(anatomy: CanalAnatomy, pose: InstrumentPose) -> np.ndarray:
    """Penalty force (N) exerted by the canal wall on the instrument.

    Each sample sphere overlapping the wall is pushed back toward the
    centerline by ``k_wall`` times its penetration. When the instrument is
    wider than the canal both sides of the wall press on it; the opposite
    side's penetration is subtracted so the force vanishes on the centerline
    and stays continuous in the pose.
    """
    pts = instrument_samples(pose)
    s, nearest, inside = nearest_centerline(anatomy, pts)
    radial = pts - nearest
    dist = np.sqrt(np.einsum("ij,ij->i", radial, radial))
    excess = anatomy.instrument_radius_mm - anatomy.radius_at(s)
    near_side = np.maximum(0.0, dist + excess)
    far_side = np.maximum(0.0, excess - dist)
    push = anatomy.k_wall * (near_side - far_side)
    safe = np.where(dist > 0.0, dist, 1.0)
    unit = radial / safe[:, None]
    contrib = -(push * inside)[:, None] * unit
    force = contrib.sum(axis=0)
    norm = float(np.linalg.norm(force))
    if norm > anatomy.force_cap:
        scale = anatomy.force_cap / norm
        # rounding can leave the rescaled norm one ulp above the cap
        while np.linalg.norm(force * scale) > anatomy.force_cap:
            scale = np.nextafter(scale, 0.0)
        force = force * scale
    return force


# --- episode state -----------------------------------------------------------

@dataclass(frozen=True)
class EnvState:
    pose: InstrumentPose
    next_checkpoint_index: int = 0
    step_count: int = 0
    elapsed_time: float = 0.0
    last_contact_force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    done: bool = False
    success: bool = False


@dataclass(frozen=True)
class StepEvents:
    checkpoint_reached: bool
    checkpoint_distance: float  # d_c, mm to the next unconsumed checkpoint
    force_modulus: float  # F, N
    dt: float


@lru_cache(maxsize=64)
def _checkpoint_points(anatomy: CanalAnatomy) -> np.ndarray:
    return np.array([centerline_point(anatomy, f)[0] for f in anatomy.checkpoint_fractions])


def _checkpoint_distance(anatomy: CanalAnatomy, position: np.ndarray, index: int) -> float:
    if index >= anatomy.n_checkpoints:
        return 0.0
    return float(np.linalg.norm(_checkpoint_points(anatomy)[index] - position))


def observe(state: EnvState, anatomy: CanalAnatomy) -> np.ndarray:
    """12-vector: scaled tip position, Euler angles, unit target direction, scaled force."""
    pos = state.pose.position
    obs = np.zeros(OBS_DIM)
    obs[0:3] = pos / anatomy.canal_length_mm
    obs[3:6] = state.pose.orientation
    if state.next_checkpoint_index < anatomy.n_checkpoints:
        delta = _checkpoint_points(anatomy)[state.next_checkpoint_index] - pos
        norm = np.linalg.norm(delta)
        if norm > 0.0:
            obs[6:9] = delta / norm
    f = state.last_contact_force
    if anatomy.force_observation == "vector":
        obs[9:12] = f / anatomy.force_cap
    else:
        obs[9] = np.linalg.norm(f) / anatomy.force_cap
    return obs


def env_reset(anatomy: CanalAnatomy, seed: int):
    """Entry pose jittered by the seeded generator; returns ``(state, obs)``."""
    rng = np.random.default_rng(seed)
    entry = anatomy.entry_pose
    dp = rng.uniform(-anatomy.reset_position_noise_mm, anatomy.reset_position_noise_mm, size=3)
    da = np.radians(rng.uniform(-anatomy.reset_angle_noise_deg, anatomy.reset_angle_noise_deg, size=2))
    orient = entry.orientation.copy()
    orient[1:3] += da
    pose = InstrumentPose(entry.position + dp, wrap_angle(orient))
    state = EnvState(pose=pose, last_contact_force=contact_force(anatomy, pose))
    return state, observe(state, anatomy)


def env_step(state: EnvState, action, anatomy: CanalAnatomy):
    """Advance one control period. Returns ``(state, obs, events)``."""
    if state.done:
        raise RuntimeError("cannot step an episode that is already done")
    a = np.asarray(action, dtype=np.float64)
    if a.shape != (ACTION_DIM,) or not np.all(np.isfinite(a)):
        raise ValueError(f"action must be a finite {ACTION_DIM}-vector, got {a!r}")
    a = np.clip(a, -1.0, 1.0)

    position = np.clip(state.pose.position + a[:3] * anatomy.max_translation_step_mm,
                       -WORKSPACE_HALF_WIDTH, WORKSPACE_HALF_WIDTH)
    orient = state.pose.orientation.copy()
    orient[1:3] += a[3:5] * anatomy.max_rotation_step_rad
    pose = InstrumentPose(position, wrap_angle(orient))
    force = contact_force(anatomy, pose)

    index = state.next_checkpoint_index
    reached = False
    if index < anatomy.n_checkpoints and _checkpoint_distance(anatomy, position, index) <= anatomy.trigger_radius_mm:
        index += 1
        reached = True
    steps = state.step_count + 1
    success = index >= anatomy.n_checkpoints
    done = success or steps >= anatomy.max_steps
    new = EnvState(pose, index, steps, steps * anatomy.dt, force, done, success)
    events = StepEvents(reached, _checkpoint_distance(anatomy, position, index),
                        float(np.linalg.norm(force)), anatomy.dt)
    return new, observe(new, anatomy), events


class CanalEnv:
    """Stateful reset/step wrapper around the pure functions above."""

    def __init__(self, anatomy: Optional[CanalAnatomy] = None):
        self.anatomy = anatomy or CanalAnatomy()
        self.state: Optional[EnvState] = None

    def reset(self, seed: int) -> np.ndarray:
        self.state, obs = env_reset(self.anatomy, seed)
        return obs

    def step(self, action):
        self.state, obs, events = env_step(self.state, action, self.anatomy)
        return obs, events, self.state.done

    def with_anatomy(self, **changes) -> "CanalEnv":
        return CanalEnv(replace(self.anatomy, **changes))
