"""Constants of the control-error analysis and empirical checks of the bounds.

Notation: ``L`` bounds the largest singular value of ``dF/da``, ``alpha``
the smallest, ``eps`` the model error, ``P`` the perturbation norm, ``eta``
the analytic reflex step and ``gamma = 1 - eta alpha^2 + eta L^2`` the
stated contraction factor.  Since ``alpha <= L`` always, that formula never
drops below 1; the reports therefore also carry the measured contraction
rate ``gamma_empirical``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .baseline import BaselinePolicy
from .diffnet import Network, NetworkSpec
from .envs import LinearEnv, LinearPlant, linear_plant_equilibrium_input
from .worldmodel import ForwardModel, action_jacobian, exact_linear_model, predict


@dataclass
class SystemConstants:
    L: float
    alpha: float
    eps: float
    P: float
    eta: float
    gamma: float | None = None
    H_M: float | None = None

    def __post_init__(self):
        if self.gamma is None:
            self.gamma = contraction_factor(self.eta, self.alpha, self.L)
        if self.eps < 0 or self.P < 0:
            raise ValueError("eps and P must be >= 0")


def estimate_jacobian_bounds(F: ForwardModel, samples, n_samples: int | None = None):
    """``(L_hat, alpha_hat)`` over ``(z, a0)`` samples.

    ``L_hat`` is the largest and ``alpha_hat`` the smallest singular value
    of ``dF/da`` seen across the samples.  A zero ``alpha_hat`` means the
    model has no control authority somewhere; this is warned about, not
    hidden.
    """
    L_hat, alpha_hat, count = 0.0, math.inf, 0
    for z, a0 in samples:
        if n_samples is not None and count >= n_samples:
            break
        s = np.linalg.svd(action_jacobian(F, z, a0), compute_uv=False)
        L_hat = max(L_hat, float(s[0]))
        alpha_hat = min(alpha_hat, float(s[min(F.latent_dim, F.action_dim) - 1]))
        count += 1
    if count == 0:
        raise ValueError("need at least one sample")
    if alpha_hat <= 0.0:
        warnings.warn("dF/da is singular at a sampled point: no control authority",
                      RuntimeWarning, stacklevel=2)
    return L_hat, alpha_hat


def estimate_model_error(F: ForwardModel, transitions) -> float:
    """``max ||F(z, a0) - z_next||`` over nominal ``(z, a0, z_next)`` triples."""
    worst = 0.0
    for z, a0, z_next in transitions:
        d = predict(F, z, a0) - np.asarray(z_next, float)
        worst = max(worst, float(np.sqrt(d @ d)))
    return worst


def contraction_factor(eta: float, alpha: float, L: float) -> float:
    return 1.0 - eta * alpha ** 2 + eta * L ** 2


def steady_state_bound(consts: SystemConstants) -> float:
    if consts.alpha <= 0:
        raise ValueError("alpha must be positive")
    return math.sqrt(consts.eps ** 2 + consts.P ** 2 / consts.alpha ** 2)


def error_bound(t, e0_norm: float, consts: SystemConstants):
    """``gamma^t ||e(0)|| + sqrt(eps^2 + P^2 / alpha^2)``."""
    return consts.gamma ** np.asarray(t, dtype=float) * e0_norm + steady_state_bound(consts)


def recurrence_fixed_point(eps: float, P: float, alpha: float, gamma: float) -> float:
    """Fixed point of ``x -> gamma x + eps + P / alpha`` (needs ``gamma < 1``)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if gamma >= 1:
        return math.inf
    return (eps + P / alpha) / (1.0 - gamma)


def fit_log_decay(norms, floor: float = 1e-12) -> float:
    """Per-step decay factor from a least-squares line through ``log ||e(t)||``."""
    norms = np.asarray(norms, float)
    keep = norms > floor
    idx = np.flatnonzero(keep)
    if idx.size < 2:
        raise ValueError("need at least two error norms above the floor")
    slope = np.polyfit(idx.astype(float), np.log(norms[idx]), 1)[0]
    return float(np.exp(slope))


def verify_recurrence(error_norms, consts: SystemConstants, floor: float = 1e-12) -> dict:
    """Check ``||e(t+1)|| <= gamma ||e(t)|| + eps + P / alpha`` step by step.

    ``consts.gamma`` is used as given; pass the measured contraction rate to
    test the recurrence with it.
    """
    e = np.asarray(error_norms, float)
    lhs, rhs = e[1:], consts.gamma * e[:-1] + consts.eps + consts.P / consts.alpha
    ok = lhs <= rhs * (1 + 1e-12) + 1e-15
    valid = e[:-1] > floor
    ratios = lhs[valid] / e[:-1][valid]
    report = {
        "steps": int(lhs.size),
        "fraction_satisfied": float(ok.mean()) if lhs.size else float("nan"),
        "ratio_median": float(np.median(ratios)) if ratios.size else float("nan"),
        "ratio_q05": float(np.quantile(ratios, 0.05)) if ratios.size else float("nan"),
        "ratio_q95": float(np.quantile(ratios, 0.95)) if ratios.size else float("nan"),
        "fixed_point": recurrence_fixed_point(consts.eps, consts.P, consts.alpha, consts.gamma),
    }
    try:
        report["fitted_decay"] = fit_log_decay(e, floor)
    except ValueError:
        report["fitted_decay"] = float("nan")
    return report


def quadratic_value(z, z_star, H, v_star: float = 0.0):
    """``V(z) = V* - 1/2 (z - z*)^T H (z - z*)`` for a batch or single ``z``."""
    d = np.asarray(z, float) - np.asarray(z_star, float)
    return v_star - 0.5 * np.einsum("...i,ij,...j->...", d, np.asarray(H, float), d)


def value_bound(H, consts: SystemConstants) -> float:
    H_M = float(np.max(np.linalg.eigvalsh(np.asarray(H, float))))
    return 0.5 * H_M * (consts.eps ** 2 + consts.P ** 2 / consts.alpha ** 2)


def value_bound_check(states, z_star, H, consts: SystemConstants) -> dict:
    """Compare the value gap ``V(z*) - V(z)`` along ``states`` with the bound."""
    gaps = -quadratic_value(states, z_star, H)
    bound = value_bound(H, consts)
    gaps = np.atleast_1d(gaps)
    return {
        "H_M": float(np.max(np.linalg.eigvalsh(np.asarray(H, float)))),
        "value_bound": bound,
        "value_gap_max": float(gaps.max()),
        "value_gap_median": float(np.median(gaps)),
        "fraction_within": float(np.mean(gaps <= bound)),
        "slack": float(bound - gaps.max()),
        "passed": bool(np.all(gaps <= bound)),
    }


def bounds_report(consts: SystemConstants, steady_state_error_measured: float,
                  value_gap_measured: float | None = None,
                  value_bound_value: float | None = None, **extra) -> dict:
    """The bounds-report record written to ``bounds.json``."""
    out = {
        "L": consts.L,
        "alpha": consts.alpha,
        "eps": consts.eps,
        "P": consts.P,
        "eta": consts.eta,
        "gamma": consts.gamma,
        "steady_state_error_measured": steady_state_error_measured,
        "steady_state_bound": steady_state_bound(consts) if consts.alpha > 0 else None,
        "value_gap_measured": value_gap_measured,
        "value_bound": value_bound_value,
    }
    out.update(extra)
    return out


# -- linear testbed ----------------------------------------------------------

@dataclass(eq=False)
class LinearTestbed:
    """Stable linear plant held at ``z_ref`` by a feedforward-plus-feedback policy.

    The base policy is ``a0 = u_ff + K (z_ref - z)`` with ``u_ff`` the input
    that makes ``z_ref`` an equilibrium, so without perturbation the state
    stays at ``z_ref`` and ``a0 = u_ff``.  The forward model is exact.
    """

    plant: LinearPlant
    z_ref: np.ndarray
    K: np.ndarray

    @property
    def u_ff(self) -> np.ndarray:
        return linear_plant_equilibrium_input(self.plant, self.z_ref)

    def policy(self) -> BaselinePolicy:
        n, m = self.plant.latent_dim, self.plant.action_dim
        W = -np.asarray(self.K, float)
        b = self.u_ff + np.asarray(self.K, float) @ self.z_ref
        spec = NetworkSpec((n, m), "identity")
        net = Network(spec, np.concatenate([W.ravel(), b]))
        return BaselinePolicy("learned", None, net, action_bounds=(-np.inf, np.inf))

    def model(self) -> ForwardModel:
        return exact_linear_model(self.plant.A, self.plant.B)

    def env(self, z0=None, seed: int = 0) -> LinearEnv:
        return LinearEnv(self.plant, self.z_ref, z0, seed)


def default_linear_testbed(kappa: float = 1.0, noise_std: float = 0.0) -> LinearTestbed:
    A = np.array([[0.5, 0.2], [-0.2, 0.5]])
    plant = LinearPlant(A, kappa * np.eye(2), noise_std)
    return LinearTestbed(plant, np.array([2.0, 1.0]), 0.3 * np.eye(2))


def as_dict(consts: SystemConstants) -> dict:
    return asdict(consts)
