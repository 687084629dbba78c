"""Linear and feedforward multi-label classifiers.

Both families score an input row vector ``x`` (length ``d``) into ``m`` raw
margins; the predicted sign of label ``j`` is ``+1`` iff ``h_j(x) > 0``.
Input gradients are computed analytically so the attacks never need autodiff.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

ACTIVATIONS = ("tanh", "sigmoid", "identity")
LIPSCHITZ = {"tanh": 1.0, "sigmoid": 0.25, "identity": 1.0}


class ConvergenceWarning(UserWarning):
    pass


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return z


def _act_deriv(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - np.tanh(z) ** 2
    if name == "sigmoid":
        s = 0.5 * (1.0 + np.tanh(0.5 * z))
        return s * (1.0 - s)
    return np.ones_like(z)


@dataclass(frozen=True)
class LinearModel:
    """``h(x) = x @ W`` with ``W`` of shape ``(d, m)``."""

    W: np.ndarray

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64)
        if W.ndim != 2:
            raise ValueError("W must be a 2-d matrix")
        if not np.all(np.isfinite(W)):
            raise ValueError("W has non-finite entries")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> int:
        return self.W.shape[1]

    @property
    def kind(self) -> str:
        return "linear"

    def scores(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.W

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """``d x m`` matrix whose column ``j`` is the input gradient of ``h_j``."""
        return np.array(self.W)


@dataclass(frozen=True)
class Layer:
    A: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64)
        if A.ndim != 2:
            raise ValueError("layer matrix must be 2-d")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not np.all(np.isfinite(A)):
            raise ValueError("layer matrix has non-finite entries")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def rho(self) -> float:
        return LIPSCHITZ[self.activation]


@dataclass(frozen=True)
class MlpModel:
    """Bias-free feedforward net ``H_i = g_i(H_{i-1} A_i)``; last layer is identity."""

    layers: tuple

    def __post_init__(self):
        layers = tuple(
            l if isinstance(l, Layer) else Layer(*l) for l in self.layers
        )
        if not layers:
            raise ValueError("an MLP needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.A.shape[1] != nxt.A.shape[0]:
                raise ValueError(
                    f"dimension chain broken: {prev.A.shape} -> {nxt.A.shape}"
                )
        if layers[-1].activation != "identity":
            raise ValueError("final layer must be identity-activated (raw margins)")
        object.__setattr__(self, "layers", layers)

    @property
    def d(self) -> int:
        return self.layers[0].A.shape[0]

    @property
    def m(self) -> int:
        return self.layers[-1].A.shape[1]

    @property
    def kind(self) -> str:
        return "mlp"

    @property
    def dims(self) -> list[int]:
        return [self.d] + [l.A.shape[1] for l in self.layers]

    def forward(self, X: np.ndarray):
        """Batched forward pass; returns (pre-activations, activations)."""
        H = np.asarray(X, dtype=np.float64)
        pre, post = [], [H]
        for layer in self.layers:
            Z = H @ layer.A
            H = _act(layer.activation, Z)
            pre.append(Z)
            post.append(H)
        return pre, post

    def scores(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[1][-1]

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        pre, _ = self.forward(x)
        J = np.eye(self.d)
        for layer, z in zip(self.layers, pre):
            J = (J @ layer.A) * _act_deriv(layer.activation, z)
        return J


MultiLabelModel = Union[LinearModel, MlpModel]


def _check_x(model: MultiLabelModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.d:
        raise ValueError(f"dimension mismatch: x has {x.shape[-1]} features, model expects {model.d}")
    return x


def scores(model: MultiLabelModel, x) -> np.ndarray:
    """Raw margins ``h(x)``, one per label (batched over leading axes)."""
    return model.scores(_check_x(model, x))


def predict(model: MultiLabelModel, X) -> np.ndarray:
    return np.where(scores(model, X) > 0, 1, -1)


def score_grad(model: MultiLabelModel, x, j: int) -> np.ndarray:
    """Exact input gradient of ``h_j`` at ``x``."""
    x = _check_x(model, x)
    if x.ndim != 1:
        raise ValueError("score_grad takes a single instance")
    if not 0 <= j < model.m:
        raise IndexError(f"label index {j} out of range [0, {model.m})")
    return model.jacobian(x)[:, j]


def spectral_norm(M, tol: float = 1e-10, max_iter: int = 20000) -> float:
    """Largest singular value by power iteration on ``M^T M``.

    Emits :class:`ConvergenceWarning` and returns the best estimate if the
    relative change does not drop below ``tol`` within ``max_iter`` steps.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.size == 0:
        raise ValueError("spectral_norm of an empty matrix")
    if M.ndim == 1:
        M = M[:, None]
    G = M.T @ M
    n = G.shape[0]
    # deterministic start with a small seeded perturbation to avoid null starts
    v = np.ones(n) + 0.01 * np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        lam_new = float(v @ G @ v)
        if abs(lam_new - lam) <= tol * lam_new:
            return float(np.sqrt(max(lam_new, 0.0)))
        lam = lam_new
    warnings.warn("spectral_norm: power iteration did not converge", ConvergenceWarning)
    return float(np.sqrt(max(lam, 0.0)))


def numerical_rank(M, tol: float = 1e-8) -> int:
    """Number of singular values exceeding ``tol * sigma_max``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    s = np.linalg.svd(np.atleast_2d(np.asarray(M, dtype=np.float64)), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def lipschitz_capacity(model: MultiLabelModel) -> float:
    """``C_h = max(||W||, 1)`` for linear models, ``C_nn = max(1, prod rho_i ||A_i||)`` for MLPs."""
    if isinstance(model, LinearModel):
        return max(spectral_norm(model.W), 1.0)
    prod = 1.0
    for layer in model.layers:
        prod *= layer.rho * spectral_norm(layer.A)
    return max(1.0, prod)


def layer_constants(model: MlpModel) -> np.ndarray:
    """Per-layer constants ``C_1..C_L``, where ``C_1`` covers the last layer.

    ``C_i = prod_{j=L-i+1}^{L} rho_j * prod_{j=L+2-i}^{L} ||A_j||``.
    """
    if not isinstance(model, MlpModel):
        raise TypeError("layer_constants needs an MlpModel")
    L = len(model.layers)
    rho = [l.rho for l in model.layers]
    norms = [spectral_norm(l.A) for l in model.layers]
    out = np.empty(L)
    for i in range(1, L + 1):
        c = 1.0
        for j in range(L - i + 1, L + 1):
            c *= rho[j - 1]
        for j in range(L + 2 - i, L + 1):
            c *= norms[j - 1]
        out[i - 1] = c
    return out


def linear_as_mlp(model: LinearModel) -> MlpModel:
    """Wrap a linear model as a one-layer identity MLP."""
    return MlpModel((Layer(model.W, "identity"),))


def init_mlp(dims: Sequence[int], activations: Sequence[str], seed: int = 0) -> MlpModel:
    """Glorot-uniform initialization; ``activations`` covers the hidden layers."""
    if len(dims) < 2:
        raise ValueError("need at least input and output dimension")
    acts = list(activations)
    if len(acts) == len(dims) - 2:
        acts = acts + ["identity"]
    if len(acts) != len(dims) - 1:
        raise ValueError("one activation per layer expected")
    rng = np.random.default_rng(seed)
    layers = []
    for (a, b), act in zip(zip(dims[:-1], dims[1:]), acts):
        lim = np.sqrt(6.0 / (a + b))
        layers.append(Layer(rng.uniform(-lim, lim, size=(a, b)), act))
    return MlpModel(tuple(layers))
