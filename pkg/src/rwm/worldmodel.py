"""Forward model ``z' ~ F(z, a0)``, its training loop and transition storage."""
from __future__ import annotations

import csv
import json
import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffnet import (Network, NetworkSpec, adam_init, adam_step, forward, grad_input,
                      grad_params, init_network, network_from_dict, network_to_dict)

log = logging.getLogger(__name__)


def encode(s):
    """Identity encoder: the latent state is the observation itself."""
    return np.array(s, dtype=float, copy=True)


@dataclass(frozen=True, eq=False)
class ForwardModel:
    network: Network
    latent_dim: int
    action_dim: int
    residual: bool = False

    def __post_init__(self):
        spec = self.network.spec
        if spec.input_size != self.latent_dim + self.action_dim:
            raise ValueError("network input size must be latent_dim + action_dim")
        if spec.output_size != self.latent_dim:
            raise ValueError("network output size must be latent_dim")

    def with_network(self, net: Network) -> "ForwardModel":
        return ForwardModel(net, self.latent_dim, self.action_dim, self.residual)

    def to_dict(self) -> dict:
        return {"latent_dim": self.latent_dim, "action_dim": self.action_dim,
                "residual": self.residual, "network": network_to_dict(self.network)}

    @classmethod
    def from_dict(cls, d: dict) -> "ForwardModel":
        return cls(network_from_dict(d["network"]), d["latent_dim"], d["action_dim"],
                   d["residual"])


def save_model(model: ForwardModel, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(model.to_dict()))
    tmp.replace(path)


def load_model(path) -> ForwardModel:
    return ForwardModel.from_dict(json.loads(Path(path).read_text()))


def make_forward_model(latent_dim: int, action_dim: int, hidden=(64, 64),
                       activation: str = "tanh", residual: bool = False,
                       seed: int = 0) -> ForwardModel:
    spec = NetworkSpec((latent_dim + action_dim, *hidden, latent_dim), activation)
    return ForwardModel(init_network(spec, seed), latent_dim, action_dim, residual)


def model_forward(F: ForwardModel, z, a):
    """Prediction plus tape; ``z`` and ``a`` may be single vectors or batches."""
    z = np.asarray(z, dtype=float)
    a = np.asarray(a, dtype=float)
    if z.shape[-1] != F.latent_dim or a.shape[-1] != F.action_dim:
        raise ValueError(
            f"expected latent dim {F.latent_dim} and action dim {F.action_dim}, "
            f"got {z.shape} and {a.shape}"
        )
    out, tape = forward(F.network, np.concatenate([z, a], axis=-1))
    if F.residual:
        out = out + z
    return out, tape


def model_vjp(F: ForwardModel, tape, cotangent):
    """Split ``u^T dF/d(z, a)`` into its latent and action parts."""
    g = grad_input(tape, cotangent)
    gz, ga = g[..., :F.latent_dim], g[..., F.latent_dim:]
    if F.residual:
        gz = gz + cotangent
    return gz, ga


def predict(F: ForwardModel, z, a0):
    """Next-latent prediction conditioned on the base action."""
    return model_forward(F, z, a0)[0]


def prediction_loss(z_hat, z_next) -> float:
    """Squared Euclidean distance ``||z_hat - z_next||^2``."""
    d = np.asarray(z_hat, dtype=float) - np.asarray(z_next, dtype=float)
    return float(d @ d)


def action_jacobian(F: ForwardModel, z, a0) -> np.ndarray:
    """``dF/da`` at ``(z, a0)``, one VJP per latent row."""
    _, tape = model_forward(F, z, a0)
    rows = np.eye(F.latent_dim)
    return np.array([model_vjp(F, tape, r)[1] for r in rows])


def rollout_reference(F: ForwardModel, z_t, policy, k: int):
    """Open-loop predictions ``z_hat_{t+1..t+k}`` under the base policy."""
    if k < 1:
        raise ValueError("k must be >= 1")
    out = []
    z = np.asarray(z_t, dtype=float)
    for _ in range(k):
        z = predict(F, z, policy(z))
        out.append(z)
    return out


# -- transitions -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TransitionRecord:
    z: np.ndarray
    a0: np.ndarray
    ac: np.ndarray
    a_eff: np.ndarray
    z_next: np.ndarray
    z_hat: np.ndarray | None
    reward: float
    t: int
    p: np.ndarray

    def __post_init__(self):
        for name in ("z", "a0", "ac", "a_eff", "z_next", "p"):
            v = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite {name} in transition at t={self.t}")
            object.__setattr__(self, name, v)
        if self.z_hat is not None:
            object.__setattr__(self, "z_hat", np.asarray(self.z_hat, dtype=float))
        if not np.isfinite(self.reward):
            raise ValueError(f"non-finite reward at t={self.t}")

    def consistent(self, bound: float) -> bool:
        """Whether ``a_eff == clip((a0 + ac)(1 + p))`` under ``bound``."""
        expected = np.clip((self.a0 + self.ac) * (1.0 + self.p), -bound, bound)
        return bool(np.allclose(self.a_eff, expected, rtol=1e-12, atol=1e-12))


_GROUPS = ("z", "a0", "ac", "a_eff", "z_next", "z_hat", "p")


class ReplayBuffer:
    """Bounded FIFO of :class:`TransitionRecord`, oldest dropped first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items = deque(maxlen=capacity)

    def add(self, rec: TransitionRecord) -> None:
        self._items.append(rec)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def arrays(self):
        """``(Z, A0, Z_next)`` stacked in insertion order."""
        items = list(self._items)
        return (np.array([r.z for r in items]), np.array([r.a0 for r in items]),
                np.array([r.z_next for r in items]))

    def to_csv(self, path) -> None:
        items = list(self._items)
        if not items:
            raise ValueError("cannot dump an empty buffer")
        r0 = items[0]
        dims = {g: (len(r0.z) if g == "z_hat" else len(getattr(r0, g))) for g in _GROUPS}
        header = ["t", "reward"] + [f"{g}_{i}" for g in _GROUPS for i in range(dims[g])]
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in items:
                row = [r.t, repr(float(r.reward))]
                for g in _GROUPS:
                    v = getattr(r, g)
                    row += [""] * dims[g] if v is None else [repr(float(x)) for x in v]
                w.writerow(row)
        tmp.replace(path)

    @classmethod
    def from_csv(cls, path, capacity: int | None = None) -> "ReplayBuffer":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        cols = {g: [i for i, h in enumerate(header) if h.rsplit("_", 1)[0] == g] for g in _GROUPS}
        buf = cls(capacity or max(len(body), 1))
        for row in body:
            vals = {}
            for g, idx in cols.items():
                cells = [row[i] for i in idx]
                vals[g] = None if g == "z_hat" and cells and cells[0] == "" else \
                    np.array([float(c) for c in cells])
            buf.add(TransitionRecord(vals["z"], vals["a0"], vals["ac"], vals["a_eff"],
                                     vals["z_next"], vals["z_hat"], float(row[1]),
                                     int(row[0]), vals["p"]))
        return buf


# -- training --------------------------------------------------------------

def train_forward_model(buffer: ReplayBuffer, epochs: int = 200, batch_size: int = 64,
                        lr: float = 1e-3, seed: int = 0, model: ForwardModel | None = None,
                        hidden=(64, 64), activation: str = "tanh", residual: bool = False,
                        lr_final: float | None = None):
    """Fit ``F`` by minibatch Adam on the squared prediction error.

    The last 10% of the buffer (insertion order) is held out for validation.
    Returns ``(model, history)`` where ``history`` holds one
    ``{"epoch", "train_mse", "val_mse"}`` dict per epoch.  ``lr`` decays
    geometrically to ``lr_final`` when that is given.
    """
    n = len(buffer)
    if n == 0:
        raise ValueError("cannot train on an empty buffer")
    if n < batch_size:
        raise ValueError(f"buffer has {n} transitions, fewer than batch_size={batch_size}")
    Z, A, Zn = buffer.arrays()
    n_val = n // 10
    n_tr = n - n_val
    if model is None:
        model = make_forward_model(Z.shape[1], A.shape[1], hidden, activation, residual, seed)
    X = np.concatenate([Z, A], axis=1)
    Y = Zn - Z if model.residual else Zn
    rng = np.random.default_rng(seed)
    net = model.network
    opt = adam_init(net, lr)
    decay = 1.0 if lr_final is None else (lr_final / lr) ** (1.0 / max(epochs - 1, 1))

    def mse(net_, lo, hi):
        if hi <= lo:
            return float("nan")
        out, _ = forward(net_, X[lo:hi])
        d = out - Y[lo:hi]
        return float(np.mean(np.sum(d * d, axis=1)))

    history = []
    for epoch in range(epochs):
        order = rng.permutation(n_tr)
        for start in range(0, n_tr, batch_size):
            idx = order[start:start + batch_size]
            out, tape = forward(net, X[idx])
            diff = out - Y[idx]
            loss = np.mean(np.sum(diff * diff, axis=1))
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
            net, opt = adam_step(net, opt, grad_params(tape, 2.0 * diff / len(idx)))
        history.append({"epoch": epoch, "train_mse": mse(net, 0, n_tr),
                        "val_mse": mse(net, n_tr, n)})
        log.debug("epoch %d train %.3e val %.3e", epoch, history[-1]["train_mse"],
                  history[-1]["val_mse"])
        if decay != 1.0:
            opt = type(opt)(opt.first_moment, opt.second_moment, opt.step_count,
                            opt.learning_rate * decay, opt.beta1, opt.beta2, opt.eps)
    return model.with_network(net), history


def exact_linear_model(A, B) -> ForwardModel:
    """A one-layer identity network computing ``A z + B a`` exactly."""
    A = np.atleast_2d(np.asarray(A, float))
    B = np.asarray(B, float)
    n, m = A.shape[0], B.shape[1]
    spec = NetworkSpec((n + m, n), "identity")
    params = np.concatenate([np.hstack([A, B]).ravel(), np.zeros(n)])
    return ForwardModel(Network(spec, params), n, m, residual=False)
