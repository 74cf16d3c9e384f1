"""Desk-scale plants: a damped 2-D point mass and a linear testbed."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DT = 0.05
DAMPING = 0.9
ACTION_BOUND = 2.0
EPISODE_LENGTH = 200
DEFAULT_GOAL = (0.5, 0.5)


def clip_action(a, bound: float = ACTION_BOUND):
    return np.clip(a, -bound, bound)


def apply_perturbation(a_total, p, bound: float = ACTION_BOUND):
    """Effective actuator command ``clip(a_total * (1 + p))``."""
    a_total = np.asarray(a_total, dtype=float)
    p = np.asarray(p, dtype=float)
    if a_total.shape != p.shape:
        raise ValueError(f"action shape {a_total.shape} != perturbation shape {p.shape}")
    return clip_action(a_total * (1.0 + p), bound)


@dataclass(frozen=True, eq=False)
class PointMassState:
    position: np.ndarray
    velocity: np.ndarray
    goal: np.ndarray
    t: int = 0

    def __post_init__(self):
        for name in ("position", "velocity", "goal"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (2,) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 2-vector, got {v!r}")
            object.__setattr__(self, name, v)
        if self.t < 0:
            raise ValueError("t must be >= 0")

    def vector(self) -> np.ndarray:
        """Observation: position, velocity and goal concatenated."""
        return np.concatenate([self.position, self.velocity, self.goal])

    @classmethod
    def from_vector(cls, s, t: int = 0) -> "PointMassState":
        s = np.asarray(s, dtype=float)
        return cls(s[0:2], s[2:4], s[4:6], t)


OBS_DIM = 6
ACTION_DIM = 2


@dataclass(frozen=True, eq=False)
class StepResult:
    next_state: object
    reward: float
    observation: np.ndarray


def pointmass_reset(goal=DEFAULT_GOAL, position=(0.0, 0.0)) -> PointMassState:
    return PointMassState(np.array(position, float), np.zeros(2), np.array(goal, float), 0)


def pointmass_step(state: PointMassState, a_eff) -> StepResult:
    a = np.asarray(a_eff, dtype=float)
    if a.shape != (2,) or not np.all(np.isfinite(a)):
        raise ValueError(f"action must be a finite 2-vector, got {a!r}")
    a = clip_action(a)
    velocity = DAMPING * state.velocity + DT * a
    position = state.position + DT * velocity
    nxt = object.__new__(PointMassState)  # fields are finite by construction
    for name, value in (("position", position), ("velocity", velocity),
                        ("goal", state.goal), ("t", state.t + 1)):
        object.__setattr__(nxt, name, value)
    dx, dy = position - state.goal
    reward = -math.sqrt(dx * dx + dy * dy)
    return StepResult(nxt, reward, nxt.vector())


@dataclass(frozen=True, eq=False)
class LinearPlant:
    """``z' = A z + B a + w`` with ``w ~ N(0, noise_std^2 I)``."""

    A: np.ndarray
    B: np.ndarray
    noise_std: float = 0.0
    _check: bool = field(default=True, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n:
            raise ValueError(f"incompatible shapes A{A.shape}, B{B.shape}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self._check:
            if np.max(np.abs(np.linalg.eigvals(A))) >= 1.0:
                raise ValueError("A must have spectral radius < 1")
            if np.linalg.matrix_rank(B) < B.shape[1]:
                raise ValueError("B must have full column rank")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def latent_dim(self) -> int:
        return self.A.shape[0]

    @property
    def action_dim(self) -> int:
        return self.B.shape[1]


def linear_step(plant: LinearPlant, z, a_eff, rng: np.random.Generator | None = None):
    z = np.asarray(z, dtype=float)
    a = np.asarray(a_eff, dtype=float)
    if z.shape != (plant.latent_dim,) or a.shape != (plant.action_dim,):
        raise ValueError(
            f"expected z{(plant.latent_dim,)} and a{(plant.action_dim,)}, got {z.shape}, {a.shape}"
        )
    out = plant.A @ z + plant.B @ a
    if plant.noise_std > 0:
        if rng is None:
            raise ValueError("a noisy plant needs a random generator")
        out = out + plant.noise_std * rng.standard_normal(plant.latent_dim)
    return out


def linear_plant_equilibrium_input(plant: LinearPlant, z_ref):
    """Constant input holding the noiseless plant at ``z_ref`` (least squares)."""
    rhs = (np.eye(plant.latent_dim) - plant.A) @ np.asarray(z_ref, float)
    return np.linalg.lstsq(plant.B, rhs, rcond=None)[0]



class PointMassEnv:
    """Episodic wrapper: ``reset() -> obs`` and ``step(a_eff) -> (obs, reward)``."""

    action_dim = ACTION_DIM
    obs_dim = OBS_DIM

    def __init__(self, goal=DEFAULT_GOAL, start=(0.0, 0.0), randomize_goal: bool = False,
                 randomize_start: bool = False, seed: int = 0):
        self.goal = np.asarray(goal, float)
        self.start = np.asarray(start, float)
        self.randomize_goal = randomize_goal
        self.randomize_start = randomize_start
        self.rng = np.random.default_rng(seed)
        self.state = None

    def reset(self):
        goal = self.rng.uniform(0.0, 1.0, 2) if self.randomize_goal else self.goal
        start = self.rng.uniform(0.0, 1.0, 2) if self.randomize_start else self.start
        self.state = pointmass_reset(goal, start)
        return self.state.vector()

    def step(self, a_eff):
        res = pointmass_step(self.state, a_eff)
        self.state = res.next_state
        return res.observation, res.reward


class LinearEnv:
    """Continuing linear plant with reward ``-||z' - z_ref||``."""

    def __init__(self, plant: LinearPlant, z_ref, z0=None, seed: int = 0):
        self.plant = plant
        self.z_ref = np.asarray(z_ref, float)
        self.z0 = self.z_ref.copy() if z0 is None else np.asarray(z0, float)
        self.rng = np.random.default_rng(seed)
        self.action_dim = plant.action_dim
        self.obs_dim = plant.latent_dim
        self.z = None

    def reset(self):
        self.z = self.z0.copy()
        return self.z.copy()

    def step(self, a_eff):
        self.z = linear_step(self.plant, self.z, a_eff, self.rng)
        return self.z.copy(), -float(np.linalg.norm(self.z - self.z_ref))
