"""Small dense networks with reverse-mode gradients and an Adam optimizer.

Parameters live in one flat vector, laid out layer by layer as the
row-major weight matrix ``W`` (shape ``fan_out x fan_in``) followed by the
bias ``b``.  A layer computes ``W @ h + b``.

Every call to :func:`forward` returns a :class:`Tape` holding what the two
vector-Jacobian products need; tapes are never reused across calls.
Inputs may be a single vector or a batch (rows); gradients with respect to
parameters are summed over the batch.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("relu", "mish", "tanh", "identity")
OUTPUT_ACTIVATIONS = ("identity", "tanh")
CHECKPOINT_FORMAT = "rwm.network"
CHECKPOINT_VERSION = 1


def _act(name, x):
    if name == "identity":
        return x
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "tanh":
        return np.tanh(x)
    if name == "mish":
        return x * np.tanh(np.logaddexp(0.0, x))
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name, x, y):
    """Derivative of the activation at pre-activation ``x`` (``y`` = act(x))."""
    if name == "identity":
        return np.ones_like(x)
    if name == "relu":
        return (x > 0.0).astype(x.dtype)
    if name == "tanh":
        return 1.0 - y * y
    if name == "mish":
        t = np.tanh(np.logaddexp(0.0, x))
        sig = 0.5 * (1.0 + np.tanh(0.5 * x))
        return t + x * (1.0 - t * t) * sig
    raise ValueError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class NetworkSpec:
    layer_sizes: tuple[int, ...]
    activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ValueError(f"need at least 2 layer sizes, got {sizes}")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be >= 1, got {sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def parameter_count(self) -> int:
        return sum(i * o + o for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    def layer_slices(self):
        """``(w_slice, b_slice, fan_in, fan_out)`` per layer, into the flat vector."""
        try:
            return self.__dict__["_slices"]
        except KeyError:
            pass
        out, k = [], 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w = slice(k, k + fan_in * fan_out)
            k += fan_in * fan_out
            b = slice(k, k + fan_out)
            k += fan_out
            out.append((w, b, fan_in, fan_out))
        self.__dict__["_slices"] = out
        return out

    def activation_of(self, layer: int) -> str:
        return self.output_activation if layer == len(self.layer_sizes) - 2 else self.activation

    @property
    def activations(self) -> tuple[str, ...]:
        acts = self.__dict__.get("_acts")
        if acts is None:
            acts = tuple(self.activation_of(i) for i in range(self.n_layers))
            self.__dict__["_acts"] = acts
        return acts

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation,
            "output_activation": self.output_activation,
        }


@dataclass(frozen=True, eq=False)
class Network:
    """An immutable parameterised MLP.  Use :func:`init_network` to build one."""

    spec: NetworkSpec
    parameters: np.ndarray
    _layers: list = field(init=False, repr=False)

    def __post_init__(self):
        params = np.array(self.parameters, dtype=float, copy=True).ravel()
        if params.size != self.spec.parameter_count:
            raise ValueError(
                f"expected {self.spec.parameter_count} parameters, got {params.size}"
            )
        if not np.all(np.isfinite(params)):
            raise ValueError("network parameters must be finite")
        params.flags.writeable = False
        object.__setattr__(self, "parameters", params)
        layers = [
            (params[w].reshape(fan_out, fan_in), params[b])
            for w, b, fan_in, fan_out in self.spec.layer_slices()
        ]
        object.__setattr__(self, "_layers", layers)

    @property
    def parameter_count(self) -> int:
        return self.parameters.size

    @property
    def layers(self):
        return self._layers

    def with_parameters(self, parameters) -> "Network":
        return Network(self.spec, parameters)

    @classmethod
    def _trusted(cls, spec: NetworkSpec, params: np.ndarray) -> "Network":
        # Skips validation; ``params`` must be a fresh, finite, correctly sized array.
        net = object.__new__(cls)
        params.flags.writeable = False
        object.__setattr__(net, "spec", spec)
        object.__setattr__(net, "parameters", params)
        object.__setattr__(net, "_layers", [
            (params[w].reshape(fan_out, fan_in), params[b])
            for w, b, fan_in, fan_out in spec.layer_slices()
        ])
        return net

    def __call__(self, x):
        return forward(self, x)[0]


@dataclass(frozen=True, eq=False)
class Tape:
    network: Network
    inputs: list  # input to each layer, 2-D
    preacts: list  # pre-activation of each layer, 2-D
    outputs: list  # post-activation of each layer, 2-D
    batched: bool


def init_network(spec: NetworkSpec, seed: int) -> Network:
    """Uniform(+-sqrt(1/fan_in)) weights, zero biases, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    params = np.zeros(spec.parameter_count)
    for w, _, fan_in, fan_out in spec.layer_slices():
        bound = math.sqrt(1.0 / fan_in)
        params[w] = rng.uniform(-bound, bound, size=fan_in * fan_out)
    return Network(spec, params)


def zero_output_layer(net: Network) -> Network:
    """Copy of ``net`` whose last layer weights and bias are zero."""
    params = net.parameters.copy()
    w, b, _, _ = net.spec.layer_slices()[-1]
    params[w] = 0.0
    params[b] = 0.0
    return net.with_parameters(params)


def forward(net: Network, x):
    x = np.asarray(x, dtype=float)
    batched = x.ndim == 2
    if x.ndim not in (1, 2) or x.shape[-1] != net.spec.input_size:
        raise ValueError(
            f"input shape {x.shape} does not match input size {net.spec.input_size}"
        )
    h = x if batched else x[None, :]
    inputs, preacts, outputs = [], [], []
    for (W, b), name in zip(net._layers, net.spec.activations):
        inputs.append(h)
        z = h @ W.T + b
        h = _act(name, z)
        preacts.append(z)
        outputs.append(h)
    tape = Tape(net, inputs, preacts, outputs, batched)
    return (h if batched else h[0]), tape


def _backward(tape: Tape, cotangent, want_params: bool):
    net = tape.network
    u = np.asarray(cotangent, dtype=float)
    expected = (len(tape.inputs[0]), net.spec.output_size) if tape.batched else (net.spec.output_size,)
    if u.shape != expected:
        raise ValueError(f"cotangent shape {u.shape} does not match output shape {expected}")
    delta = u if tape.batched else u[None, :]
    grads = np.empty(net.parameter_count) if want_params else None
    spec = net.spec
    slices = spec.layer_slices()
    acts = spec.activations
    for i in range(spec.n_layers - 1, -1, -1):
        name = acts[i]
        if name != "identity":
            delta = delta * _act_grad(name, tape.preacts[i], tape.outputs[i])
        W, _ = net._layers[i]
        if want_params:
            w, b, _, _ = slices[i]
            grads[w] = (delta.T @ tape.inputs[i]).ravel()
            grads[b] = delta.sum(axis=0)
        delta = delta @ W
    if want_params:
        return grads
    return delta if tape.batched else delta[0]


def grad_input(tape: Tape, cotangent):
    """Vector-Jacobian product ``u^T d(output)/d(input)``."""
    return _backward(tape, cotangent, want_params=False)


def grad_params(tape: Tape, cotangent):
    """Vector-Jacobian product with respect to the flat parameter vector."""
    return _backward(tape, cotangent, want_params=True)


@dataclass(frozen=True, eq=False)
class OptimizerState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(net: Network, learning_rate: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> OptimizerState:
    if learning_rate <= 0:
        raise ValueError("learning rate must be positive")
    n = net.parameter_count
    return OptimizerState(np.zeros(n), np.zeros(n), 0, float(learning_rate), beta1, beta2, eps)


def adam_step(net: Network, opt: OptimizerState, gradient):
    """One bias-corrected Adam update.  Returns ``(new_net, new_state)``."""
    g = np.asarray(gradient, dtype=float)
    if g.shape != (net.parameter_count,):
        raise ValueError(f"gradient shape {g.shape} != ({net.parameter_count},)")
    bad = np.flatnonzero(~np.isfinite(g))
    if bad.size:
        raise ValueError(
            f"non-finite gradient at {bad.size} entries (first index {bad[0]}: {g[bad[0]]})"
        )
    t = opt.step_count + 1
    m = opt.beta1 * opt.first_moment + (1.0 - opt.beta1) * g
    v = opt.beta2 * opt.second_moment + (1.0 - opt.beta2) * g * g
    m_hat = m / (1.0 - opt.beta1 ** t)
    v_hat = v / (1.0 - opt.beta2 ** t)
    params = net.parameters - opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.eps)
    new_opt = OptimizerState(m, v, t, opt.learning_rate, opt.beta1, opt.beta2, opt.eps)
    return Network._trusted(net.spec, params), new_opt


# -- checkpoints -----------------------------------------------------------

def network_to_dict(net: Network) -> dict:
    # Python floats serialise with repr, which round-trips exactly.
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": net.spec.to_dict(),
        "parameters": [float(p) for p in net.parameters],
    }


def network_from_dict(data: dict) -> Network:
    if data.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a network checkpoint: format={data.get('format')!r}")
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')!r}")
    spec = NetworkSpec(tuple(data["spec"]["layer_sizes"]), data["spec"]["activation"],
                       data["spec"]["output_activation"])
    return Network(spec, np.array(data["parameters"], dtype=float))


def save_network(net: Network, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(network_to_dict(net)))
    tmp.replace(path)


def load_network(path) -> Network:
    return network_from_dict(json.loads(Path(path).read_text()))
