"""Exhaustive ground truth at tiny label counts.

Every subset ``T`` of labels gets its exact minimal squared flip cost
``g(T)``; the maximal flippable count ``C*`` and the global optimum of
``psi(S) = |S| - g(S)`` are then read off the table. The MLP variant replaces
the exact inner solve by multi-restart PGD and is only approximate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .attack import AttackSpec, linear_targeted_exact, targeted_attack
from .model import LinearModel, MlpModel

EXACT_GUARD = 14
APPROX_GUARD = 10
TABLE_GUARD = 8  # per-subset tables are written to certificates up to this m


class EnumerationGuardError(ValueError):
    pass


def _subset(mask: int, m: int) -> tuple:
    return tuple(j for j in range(m) if mask >> j & 1)


def _guard(m: int, limit: int) -> None:
    if m > limit:
        raise EnumerationGuardError(f"enumeration guard: m={m} exceeds {limit}")


@dataclass
class SubsetTable:
    """``g`` and feasibility for every label subset; ``g`` is inf when infeasible."""

    m: int
    g: dict  # tuple(T) -> squared minimal norm
    r: dict  # tuple(T) -> minimiser

    def feasible(self, T) -> bool:
        return np.isfinite(self.g[tuple(sorted(T))])

    def rows(self) -> list:
        return [dict(T=list(T), g=(float(v) if np.isfinite(v) else None), feasible=bool(np.isfinite(v)))
                for T, v in sorted(self.g.items(), key=lambda kv: (len(kv[0]), kv[0]))]


def subset_table(model: LinearModel, x, y, t=1e-3, preserve_others: bool = True) -> SubsetTable:
    if not isinstance(model, LinearModel):
        raise TypeError("the exact oracle needs a LinearModel")
    m = model.m
    _guard(m, EXACT_GUARD)
    g, rs = {}, {}
    for mask in range(1 << m):
        T = _subset(mask, m)
        if not T:
            g[T], rs[T] = 0.0, np.zeros(model.d)
            continue
        out = linear_targeted_exact(model, x, y, T, t, preserve_others)
        if out.reason == "infeasible":
            g[T], rs[T] = np.inf, out.r
        else:
            g[T], rs[T] = out.norm ** 2, out.r
    return SubsetTable(m, g, rs)


def _best(table: SubsetTable, mu_r: float):
    cap = mu_r ** 2 * (1 + 1e-12) + 1e-18
    best = ()
    for T, v in table.g.items():
        if v > cap:
            continue
        key = (-len(T), v, T)
        if key < (-len(best), table.g[best], best):
            best = T
    return best


def exact_cstar(model: LinearModel, x, y, mu_r: float, t=1e-3, table: SubsetTable | None = None):
    """Largest number of labels flippable within ``mu_r``; returns ``(cstar, S_star, r_star)``.

    Ties go to the cheaper subset, then to the lexicographically smaller one.
    """
    table = table or subset_table(model, x, y, t)
    S = _best(table, mu_r)
    return len(S), S, np.array(table.r[S])


@dataclass
class PsiOptimum:
    psi_star: float
    S_star: tuple
    maximizers: list  # every subset attaining psi_star (within 1e-9)
    by_cardinality: dict  # k -> (psi, subset) best of each size within budget

    def __iter__(self):
        return iter((self.psi_star, self.S_star))


def psi(table: SubsetTable, S) -> float:
    S = tuple(sorted(S))
    return len(S) - table.g[S]


def psi_optimum(model: LinearModel, x, y, mu_r: float, t=1e-3,
                table: SubsetTable | None = None) -> PsiOptimum:
    """Global maximum of ``|S| - g(S)`` over subsets with ``g(S) <= mu_r^2``."""
    table = table or subset_table(model, x, y, t)
    cap = mu_r ** 2 * (1 + 1e-12) + 1e-18
    vals = {T: len(T) - v for T, v in table.g.items() if v <= cap}
    best = max(vals.values())
    maxi = sorted((T for T, v in vals.items() if v >= best - 1e-9), key=lambda T: (len(T), T))
    by_k = {}
    for T, v in vals.items():
        k = len(T)
        if k not in by_k or (v, tuple(-j for j in T)) > (by_k[k][0], tuple(-j for j in by_k[k][1])):
            by_k[k] = (v, T)
    return PsiOptimum(float(best), maxi[0], maxi, dict(sorted(by_k.items())))


def approx_cstar_mlp(model: MlpModel, x, y, mu_r: float, spec: AttackSpec | None = None,
                     rng=None):
    """Approximate ``C*`` for an MLP: descending-cardinality search with PGD inner solves.

    A subset counts only if PGD finds a feasible point, so the result may
    undercount but never reports an unverified flip set.
    """
    m = model.m
    _guard(m, APPROX_GUARD)
    if mu_r <= 0:
        return 0, ()
    spec = replace(spec or AttackSpec(mu_r=mu_r), mu_r=float(mu_r), trace=None)
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    by_size: dict = {}
    for mask in range(1, 1 << m):
        T = _subset(mask, m)
        by_size.setdefault(len(T), []).append(T)
    for k in range(m, 0, -1):
        found = []
        for T in by_size[k]:
            out = targeted_attack(model, x, y, T, spec, rng)
            if out.feasible:
                found.append((out.norm, T))
        if found:
            return k, min(found)[1]
    return 0, ()


@dataclass
class Certificate:
    instance: int
    budget: float
    cstar: int
    S_star: tuple
    psi_star: float
    psi_gase: float
    S_gase: tuple
    ratio: float
    table: list = field(default_factory=list)

    def to_json(self) -> dict:
        return dict(instance=self.instance, budget=self.budget, cstar=self.cstar,
                    S_star=list(self.S_star), psi_star=self.psi_star, psi_gase=self.psi_gase,
                    S_gase=list(self.S_gase), ratio=self.ratio, table=self.table)


def psi_ratio(psi_hat: float, psi_star: float) -> float:
    """``psi_hat / psi_star`` with the 0/0 case reported as 1."""
    if psi_star <= 1e-12:
        return 1.0 if psi_hat >= -1e-12 else -np.inf
    return psi_hat / psi_star


def write_certificates(certs, path, summary: dict | None = None) -> None:
    doc = dict(summary or {}, instances=[c.to_json() for c in certs])
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
