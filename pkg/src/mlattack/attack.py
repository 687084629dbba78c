"""Minimal-norm targeted attacks on multi-label classifiers.

A targeted attack on label set ``T`` looks for the smallest ``r`` such that

    s_j * h_j(x + r) >= t_j   for every constrained label j,

with ``s_j = -y_j`` for ``j in T`` (flip) and ``s_j = y_j`` otherwise (keep).
With ``preserve_others=False`` only the labels in ``T`` are constrained.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .model import LinearModel, MultiLabelModel
from .qp import min_norm_point

METHODS = ("pgd", "penalty", "exact_linear")
LOSSES = ("lse", "squared_hinge", "logistic")

# tiny floor on margins so that t=0 solutions land strictly past the boundary
_MARGIN_FLOOR = 1e-12
_TOL = 1e-9
# PGD aims this far (as a fraction of mu_r, annealed to ~0) past each boundary
_OVERSHOOT = 1e-3


class AttackError(RuntimeError):
    pass


@dataclass
class AttackSpec:
    mu_r: float
    t: float | np.ndarray = 1e-3
    max_iter: int = 500
    step: float | None = None  # defaults to mu_r / 20
    restarts: int = 3
    method: str = "pgd"
    seed: int = 0
    preserve_others: bool = True
    loss: str = "lse"  # used by loss_ascent only
    trace: list | None = None  # when a list, PGD appends (iteration, norm, violation)

    def __post_init__(self):
        if not self.mu_r >= 0:
            raise ValueError("mu_r must be nonnegative")
        if np.any(np.asarray(self.t) < 0):
            raise ValueError("margins t must be nonnegative")
        if self.method not in METHODS:
            raise ValueError(f"unknown attack method {self.method!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")

    @property
    def step_size(self) -> float:
        return self.step if self.step is not None else self.mu_r / 20.0

    def margins(self, m: int) -> np.ndarray:
        t = np.broadcast_to(np.asarray(self.t, dtype=np.float64), (m,))
        return np.array(t)


@dataclass
class AttackOutcome:
    r: np.ndarray
    norm: float
    flipped: frozenset
    feasible: bool
    iterations: int = 0
    target: frozenset = frozenset()
    # "ok", "budget" (a solution exists but exceeds mu_r / was not found within it)
    # or "infeasible" (constraints contradictory)
    reason: str = "ok"
    violation: float = 0.0

    def to_json(self) -> dict:
        return dict(
            r=self.r.tolist(), norm=self.norm, flipped=sorted(self.flipped),
            feasible=self.feasible, iterations=self.iterations,
            target=sorted(self.target), reason=self.reason,
        )


def _signs(y: np.ndarray, T: frozenset) -> np.ndarray:
    s = np.array(y, dtype=np.float64)
    for j in T:
        s[j] = -s[j]
    return s


def _mask(m: int, T: frozenset, preserve: bool) -> np.ndarray:
    if preserve:
        return np.ones(m, dtype=bool)
    mask = np.zeros(m, dtype=bool)
    mask[list(T)] = True
    return mask


def flipped_set(model: MultiLabelModel, x, y, r) -> frozenset:
    h = model.scores(np.asarray(x) + r)
    return frozenset(int(j) for j in np.flatnonzero(np.asarray(y) * h <= 0))


def evaluate(model, x, y, T, r, t, mu_r, preserve_others=True, iterations=0) -> AttackOutcome:
    """Package ``r`` as an :class:`AttackOutcome`, checking every constraint."""
    T = frozenset(int(j) for j in T)
    m = model.m
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (m,))
    s = _signs(y, T)
    mask = _mask(m, T, preserve_others)
    h = model.scores(np.asarray(x) + r)
    viol = np.maximum(t - s * h, 0.0)[mask]
    violation = float(viol.sum())
    flipped = frozenset(int(j) for j in np.flatnonzero(np.asarray(y) * h <= 0))
    norm = float(np.linalg.norm(r))
    sat = bool(np.all(viol <= _TOL)) and T <= flipped
    if preserve_others:
        sat = sat and not (flipped - T)
    feasible = sat and norm <= mu_r + _TOL
    reason = "ok" if feasible else "budget"
    return AttackOutcome(
        r=np.asarray(r, dtype=np.float64), norm=norm, flipped=flipped,
        feasible=feasible, iterations=iterations, target=T, reason=reason,
        violation=violation,
    )


def _check_inputs(model, x, y, T):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.shape != (model.d,):
        raise ValueError(f"x must have shape ({model.d},)")
    if y.shape != (model.m,):
        raise ValueError(f"y must have shape ({model.m},)")
    T = frozenset(int(j) for j in T)
    if any(not 0 <= j < model.m for j in T):
        raise ValueError("target labels out of range")
    return x, y, T


def linear_targeted_exact(model: LinearModel, x, y, T: Iterable[int], t=1e-3,
                          preserve_others: bool = True, mu_r: float = np.inf) -> AttackOutcome:
    """Exact minimum-norm targeted attack on a linear model (convex QP).

    The budget is not imposed on the optimisation; ``feasible`` compares the
    optimal norm to ``mu_r`` (unbounded by default).
    """
    if not isinstance(model, LinearModel):
        raise TypeError("linear_targeted_exact needs a LinearModel")
    x, y, T = _check_inputs(model, x, y, T)
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (model.m,))
    s = _signs(y, T)
    mask = _mask(model.m, T, preserve_others)
    normals = (model.W * s).T[mask]
    rhs = (np.maximum(t, _MARGIN_FLOOR) - s * (x @ model.W))[mask]
    res = min_norm_point(normals, rhs)
    if not res.feasible:
        out = evaluate(model, x, y, T, res.r, t, mu_r, preserve_others, res.iterations)
        out.feasible = False
        out.reason = "infeasible"
        return out
    return evaluate(model, x, y, T, res.r, t, mu_r, preserve_others, res.iterations)


def _hinge_grad(model, x, r, s, t_eff, mask, overshoot=0.0):
    """Hinge gradient toward margins ``t_eff`` pushed ``overshoot`` (in input distance) further.

    Returns ``(gradient, aimed violation, feasible at t_eff)``.
    """
    z = x + r
    h = model.scores(z)
    sh = s * h
    feasible = bool(np.all(sh[mask] >= t_eff[mask]))
    J = model.jacobian(z)
    aim = t_eff + overshoot * np.linalg.norm(J, axis=0)
    viol = np.where(mask, aim - sh, -np.inf)
    active = viol > 0
    if not active.any():
        return np.zeros_like(r), 0.0, feasible
    v = viol[active]
    g = -(J[:, active] @ (s[active] * v))
    return g, float(0.5 * v @ v), feasible


def _pgd(model, x, y, T, spec: AttackSpec, rng) -> AttackOutcome:
    """Adaptive-radius projected gradient descent on the squared hinge.

    Each iterate takes a Polyak-capped step on the squared hinge violation,
    aimed slightly past every boundary, and is projected onto an L2 ball whose
    radius shrinks while the iterate is feasible and grows otherwise (never
    above ``mu_r``). Step, radius changes and overshoot are cosine-annealed so
    the radius settles on the minimal feasible norm.
    """
    m = model.m
    t = spec.margins(m)
    t_eff = np.maximum(t, _MARGIN_FLOOR)
    s = _signs(y, T)
    mask = _mask(m, T, spec.preserve_others)
    mu_r = float(spec.mu_r)
    best_feas, best_any = None, None
    best_norm, best_viol = np.inf, np.inf
    iters = 0
    if not mask.any():
        return evaluate(model, x, y, T, np.zeros(model.d), t, mu_r, spec.preserve_others)
    for restart in range(max(1, spec.restarts)):
        if restart == 0:
            r = np.zeros(model.d)
        else:
            v = rng.standard_normal(model.d)
            r = v / np.linalg.norm(v) * mu_r * rng.uniform(0.0, 1.0)
        eps = mu_r
        alpha0 = spec.step_size
        for k in range(spec.max_iter):
            iters += 1
            frac = k / max(spec.max_iter - 1, 1)
            cos = 0.5 * (1.0 + np.cos(np.pi * frac))
            alpha = alpha0 * (0.02 + 0.98 * cos)
            gamma = 0.05 * cos + 1e-4
            g, viol, feasible = _hinge_grad(model, x, r, s, t_eff, mask, mu_r * (_OVERSHOOT * cos + 1e-6))
            if not np.all(np.isfinite(g)):
                raise AttackError("NaN in attack gradient")
            nr = float(np.linalg.norm(r))
            if spec.trace is not None:
                spec.trace.append((iters, nr, viol))
            if feasible:
                if nr < best_norm:
                    best_norm, best_feas = nr, r.copy()
                eps = min(eps, nr) * (1.0 - gamma)
            else:
                if viol < best_viol:
                    best_viol, best_any = viol, r.copy()
                eps = min(mu_r, eps * (1.0 + gamma), max(eps, best_norm))
            gn = np.linalg.norm(g)
            if gn > 0:
                # Polyak step on the squared hinge: projects exactly onto an
                # isolated violated halfspace
                r = r - min(alpha, 2.0 * viol / gn) * g / gn
            n_new = np.linalg.norm(r)
            if n_new > eps:
                r = r * (eps / n_new)
    if best_feas is not None:
        out = evaluate(model, x, y, T, best_feas, t, mu_r, spec.preserve_others, iters)
        if out.feasible:
            return out
    r = best_any if best_any is not None else np.zeros(model.d)
    out = evaluate(model, x, y, T, r, t, mu_r, spec.preserve_others, iters)
    out.feasible = False
    out.reason = "budget"
    return out


def _penalty(model, x, y, T, spec: AttackSpec, rng) -> AttackOutcome:
    """Carlini-Wagner style: Adam on ``||r||^2 + c * sq_hinge``, growing ``c`` until feasible."""
    m = model.m
    t = spec.margins(m)
    t_eff = np.maximum(t, _MARGIN_FLOOR)
    s = _signs(y, T)
    mask = _mask(m, T, spec.preserve_others)
    mu_r = float(spec.mu_r)
    best, best_norm = None, np.inf
    best_any, best_viol = np.zeros(model.d), np.inf
    rounds = 8
    inner = max(spec.max_iter // 4, 25)
    iters = 0
    c = 1.0
    for _ in range(rounds):
        r = np.zeros(model.d)
        mom, vel = np.zeros(model.d), np.zeros(model.d)
        found = False
        for k in range(1, inner + 1):
            iters += 1
            g, viol, feasible = _hinge_grad(model, x, r, s, t_eff, mask, _OVERSHOOT * mu_r)
            if not np.all(np.isfinite(g)):
                raise AttackError("NaN in attack gradient")
            nr = float(np.linalg.norm(r))
            if feasible and nr <= mu_r:
                found = True
                if nr < best_norm:
                    best_norm, best = nr, r.copy()
            elif viol < best_viol:
                best_viol, best_any = viol, r.copy()
            grad = 2.0 * r + c * g
            mom = 0.9 * mom + 0.1 * grad
            vel = 0.999 * vel + 0.001 * grad * grad
            mhat = mom / (1 - 0.9 ** k)
            vhat = vel / (1 - 0.999 ** k)
            lr = spec.step_size * (1.0 - 0.9 * k / inner)
            r = r - lr * mhat / (np.sqrt(vhat) + 1e-12)
            nr = np.linalg.norm(r)
            if nr > mu_r:
                r *= mu_r / nr
        if found:
            break
        c *= 4.0
    r = best if best is not None else best_any
    out = evaluate(model, x, y, T, r, t, mu_r, spec.preserve_others, iters)
    if best is None or not out.feasible:
        out.feasible = False
        out.reason = "budget"
    return out


def targeted_attack(model: MultiLabelModel, x, y, T: Iterable[int], spec: AttackSpec,
                    rng: np.random.Generator | None = None) -> AttackOutcome:
    """Minimal-norm perturbation flipping ``T`` within the budget ``spec.mu_r``."""
    x, y, T = _check_inputs(model, x, y, T)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    if spec.method == "exact_linear":
        return linear_targeted_exact(model, x, y, T, spec.margins(model.m),
                                     spec.preserve_others, spec.mu_r)
    if spec.mu_r == 0:
        return evaluate(model, x, y, T, np.zeros(model.d), spec.margins(model.m), 0.0,
                        spec.preserve_others)
    if spec.method == "penalty":
        return _penalty(model, x, y, T, spec, rng)
    return _pgd(model, x, y, T, spec, rng)


def loss_value(model, x, y, loss: str = "lse") -> float:
    h = model.scores(x)
    if loss == "lse":
        return float(np.linalg.norm(y - h))
    if loss == "squared_hinge":
        return float(np.sum(np.maximum(0.0, 1.0 - y * h) ** 2))
    return float(np.sum(np.logaddexp(0.0, -y * h)))


def loss_input_grad(model, x, y, loss: str = "lse") -> np.ndarray:
    h = model.scores(x)
    if loss == "lse":
        res = y - h
        nr = np.linalg.norm(res)
        if nr == 0:
            return np.zeros_like(x)
        dh = -res / nr
    elif loss == "squared_hinge":
        dh = -2.0 * y * np.maximum(0.0, 1.0 - y * h)
    else:
        dh = -y * 0.5 * (1.0 - np.tanh(0.5 * y * h))  # -y * sigmoid(-y h)
    if not np.any(dh):
        return np.zeros_like(x)
    return model.jacobian(x) @ dh


def loss_ascent(model: MultiLabelModel, x, y, mu_r: float, spec: AttackSpec | None = None,
                loss: str | None = None) -> AttackOutcome:
    """Untargeted normalised gradient ascent on the training loss up to ``||r|| = mu_r``.

    ``flipped`` holds every label wrong at ``x + r``; ``target`` holds the
    labels that were correct at ``x`` and are wrong at ``x + r``.
    """
    x, y, _ = _check_inputs(model, x, y, ())
    spec = spec or AttackSpec(mu_r=max(mu_r, 1e-12))
    loss = loss or spec.loss
    step = spec.step if spec.step is not None else max(mu_r, 1e-12) / 20.0
    r = np.zeros(model.d)
    it = 0
    if mu_r > 0:
        for it in range(1, spec.max_iter + 1):
            g = loss_input_grad(model, x + r, y, loss)
            if not np.all(np.isfinite(g)):
                raise AttackError("NaN in loss gradient")
            gn = np.linalg.norm(g)
            if gn == 0:
                break
            r = r + step * g / gn
            nr = np.linalg.norm(r)
            if nr >= mu_r:
                r *= mu_r / nr
                break
    h0 = model.scores(x)
    h1 = model.scores(x + r)
    wrong = frozenset(int(j) for j in np.flatnonzero(y * h1 <= 0))
    newly = frozenset(int(j) for j in np.flatnonzero((y * h0 > 0) & (y * h1 <= 0)))
    return AttackOutcome(r=r, norm=float(np.linalg.norm(r)), flipped=wrong, feasible=True,
                         iterations=it, target=newly)


def dump_trace(trace: list, path) -> None:
    rows = [dict(iteration=int(i), norm=float(n), violation=float(v)) for i, n, v in trace]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=1)
