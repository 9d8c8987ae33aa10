"""MLP feature extractor, linear projection head and Adam optimizer."""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, ShapeError

ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu}


@dataclass
class NetworkParams:
    """Extractor layers (theta) and projection head (psi).

    Weights are stored ``(fan_in, fan_out)`` so a batch maps as ``x @ W + b``.
    """

    extractor: list  # [(W, b), ...] as Tensors
    projection: tuple  # (W, b)
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")
        prev = None
        for W, b in [*self.extractor, self.projection]:
            if W.data.ndim != 2 or b.shape != (W.shape[1],):
                raise ShapeError(f"layer shapes W{W.shape} b{b.shape} are inconsistent")
            if prev is not None and W.shape[0] != prev:
                raise ShapeError(f"layer expects {W.shape[0]} inputs, previous emits {prev}")
            prev = W.shape[1]

    @property
    def input_dim(self) -> int:
        first = self.extractor[0] if self.extractor else self.projection
        return first[0].shape[0]

    @property
    def dim(self) -> int:
        return self.projection[0].shape[1]

    def tensors(self) -> list:
        out = []
        for W, b in [*self.extractor, self.projection]:
            out.extend((W, b))
        return out

    def n_params(self) -> int:
        return sum(t.size for t in self.tensors())

    def frozen(self) -> "NetworkParams":
        """Deep copy with read-only arrays and no gradient tracking."""

        def clone(t):
            out = Tensor(t.data)
            out.data.setflags(write=False)
            return out

        return NetworkParams(
            [(clone(W), clone(b)) for W, b in self.extractor],
            (clone(self.projection[0]), clone(self.projection[1])),
            self.activation,
        )


def init_network(input_dim, hidden, dim, rng, activation="tanh", gain=1.0) -> NetworkParams:
    """Uniform(-gain/sqrt(fan_in), gain/sqrt(fan_in)) weights, zero biases."""
    if dim < 1 or input_dim < 1:
        raise ContractError("input_dim and dim must be >= 1")

    def layer(fan_in, fan_out):
        bound = gain / np.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        return Tensor(W, requires_grad=True), Tensor(np.zeros(fan_out), requires_grad=True)

    sizes = [input_dim, *hidden]
    extractor = [layer(a, b) for a, b in zip(sizes[:-1], sizes[1:])]
    return NetworkParams(extractor, layer(sizes[-1], dim), activation)


def embed(params: NetworkParams, x) -> Tensor:
    """z = f_psi(phi_theta(x)) for a batch ``x`` of shape (batch, input_dim)."""
    if not isinstance(x, Tensor):
        x = Tensor(np.atleast_2d(x))
    h = x
    if h.data.ndim != 2 or h.shape[1] != params.input_dim:
        raise ShapeError(f"expected (batch, {params.input_dim}) input, got {h.shape}")
    act = ACTIVATIONS[params.activation]
    for W, b in params.extractor:
        h = act(ad.add(ad.matmul(h, W), b))
    W, b = params.projection
    return ad.add(ad.matmul(h, W), b)


@dataclass
class AdamState:
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 1e-4
    decoupled: bool = True  # False: L2 term added to the gradient instead
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ContractError("betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ContractError("epsilon must be positive")


def adam_step(state: AdamState, params: NetworkParams, grads: dict):
    """One Adam update of ``params`` in place; returns ``(params, state)``."""
    tensors = params.tensors()
    missing = [i for i, t in enumerate(tensors) if t not in grads]
    if missing:
        raise ContractError(f"no gradient for parameter tensors {missing}")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(t.data) for t in tensors]
        state.second_moment = [np.zeros_like(t.data) for t in tensors]
    state.step_count += 1
    b1, b2, lr, wd = state.beta1, state.beta2, state.learning_rate, state.weight_decay
    c1 = 1.0 - b1**state.step_count
    c2 = 1.0 - b2**state.step_count
    for t, m, v in zip(tensors, state.first_moment, state.second_moment):
        g = np.asarray(grads[t])
        if g.shape != t.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {t.shape}")
        if wd and not state.decoupled:
            g = g + wd * t.data
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        if wd and state.decoupled:
            t.data -= lr * wd * t.data
    return params, state
