"""Label-space exploration: grow the attacked label set under an L2 budget.

``gase`` ranks candidates by the margin-to-gradient ratio and attacks once
per accepted label; ``pgs`` attacks every candidate each round; ``rs``, ``os_search``
and ``ls_search`` are the random, oblivious and loss-guided baselines.
``indicator`` averages the explored set sizes over a test population.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .attack import AttackSpec, linear_targeted_exact, loss_ascent, targeted_attack
from .dataset import Dataset
from .model import LinearModel

STOP_REASONS = ("budget_exhausted", "all_labels", "no_candidate")
EXPLORERS = ("gase", "pgs", "rs", "os", "ls")
POPULATIONS = ("correct_only", "all")


class EmptyPopulationError(ValueError):
    pass


@dataclass
class ExplorationResult:
    S: list
    step_norms: list
    final_r: np.ndarray
    attack_calls: int
    stop_reason: str
    calls_at_step: list = field(default_factory=list)  # cumulative calls when each label was accepted
    method: str = ""

    def to_json(self) -> dict:
        return dict(
            S=[int(j) for j in self.S], step_norms=[float(v) for v in self.step_norms],
            attack_calls=self.attack_calls, stop_reason=self.stop_reason,
            calls_at_step=list(self.calls_at_step), method=self.method,
            final_norm=float(np.linalg.norm(self.final_r)),
        )


def _rng(rng, spec: AttackSpec) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(spec.seed)


def _pick_least(values: dict, tie_tol: float, rng, top_q: int | None = None) -> int:
    """Uniform choice among keys whose value is within ``tie_tol`` (relative) of the minimum."""
    keys = sorted(values)
    vals = np.array([values[k] for k in keys], dtype=np.float64)
    if top_q is not None and top_q > 1:
        order = np.argsort(vals, kind="stable")[:top_q]
        pool = [keys[i] for i in order]
    else:
        vmin = vals.min()
        if np.isinf(vmin):
            pool = keys
        else:
            thr = vmin + tie_tol * max(abs(vmin), 1e-300)
            pool = [k for k, v in zip(keys, vals) if v <= thr]
    if len(pool) == 1:
        return pool[0]
    return pool[int(rng.integers(len(pool)))]


def selection_scores(model, x, y, r, candidates, t=None) -> dict:
    """``d_j = |y_j h_j(x+r)| / ||grad h_j(x+r)||`` for each candidate label.

    Passing ``t`` adds the margin to the numerator, ``|y_j h_j + t_j| / ||grad||``.
    """
    z = np.asarray(x) + r
    h = model.scores(z)
    J = model.jacobian(z)
    gnorm = np.linalg.norm(J, axis=0)
    num = np.abs(np.asarray(y) * h)
    if t is not None:
        num = np.abs(np.asarray(y) * h + np.broadcast_to(t, h.shape))
    out = {}
    for j in candidates:
        out[j] = float(num[j] / gnorm[j]) if gnorm[j] > 0 else np.inf
    return out


def _at_budget(r, mu_r) -> bool:
    return float(np.linalg.norm(r)) >= mu_r - 1e-12


INELIGIBILITY = ("round", "instance")


def _incremental(model, x, y, spec, rng, choose, method, ineligible="round") -> ExplorationResult:
    """Shared loop for GASE and RS: one targeted attack per tried candidate.

    A rejected candidate is skipped for the rest of the round (``round``) or
    for the rest of the instance (``instance``).
    """
    if ineligible not in INELIGIBILITY:
        raise ValueError(f"unknown ineligibility scope {ineligible!r}")
    m = model.m
    x = np.asarray(x, dtype=np.float64)
    S: list = []
    norms: list = []
    at_step: list = []
    r = np.zeros(model.d)
    calls = 0
    rejected_budget = False
    eligible = set(range(m))
    while len(S) < m and not _at_budget(r, spec.mu_r):
        cands = sorted(eligible - set(S))
        if not cands:
            break
        accepted = False
        rejected_budget = False
        while cands:
            j = choose(r, cands)
            out = targeted_attack(model, x, y, S + [j], spec, rng)
            calls += 1
            if out.feasible:
                S.append(j)
                r = out.r
                norms.append(out.norm)
                at_step.append(calls)
                accepted = True
                break
            if out.reason != "infeasible":
                rejected_budget = True
            if ineligible == "instance":
                eligible.discard(j)
            cands.remove(j)
        if not accepted:
            break
    if len(S) == m:
        reason = "all_labels"
    elif _at_budget(r, spec.mu_r) or rejected_budget:
        reason = "budget_exhausted"
    else:
        reason = "no_candidate"
    return ExplorationResult(S, norms, r, calls, reason, at_step, method)


def gase(model, x, y, spec: AttackSpec, tie_tol: float = 1e-9, rng=None,
         top_q: int | None = None, margin_in_score: bool = False,
         ineligible: str = "round") -> ExplorationResult:
    """Greedy attack-space expansion.

    Picks the candidate with the smallest ``d_j`` at the current perturbed
    point (uniformly among ties, or among the ``top_q`` smallest), attacks
    ``S + [j]`` and accepts it when feasible. A rejected candidate is skipped
    and the next best is tried; ``ineligible`` sets whether the rejection
    lasts for the round or for the whole instance.
    """
    rng = _rng(rng, spec)
    t = spec.margins(model.m) if margin_in_score else None

    def choose(r, cands):
        return _pick_least(selection_scores(model, x, y, r, cands, t), tie_tol, rng, top_q)

    return _incremental(model, x, y, spec, rng, choose, "gase", ineligible)


def rs(model, x, y, spec: AttackSpec, seed: int | None = None, rng=None,
       ineligible: str = "round") -> ExplorationResult:
    """Random search: a uniformly random candidate per round."""
    if rng is None:
        rng = np.random.default_rng(spec.seed if seed is None else seed)

    def choose(r, cands):
        return cands[int(rng.integers(len(cands)))]

    return _incremental(model, x, y, spec, rng, choose, "rs", ineligible)


def pgs(model, x, y, spec: AttackSpec, tie_tol: float = 1e-9, rng=None) -> ExplorationResult:
    """Primitive greedy search: attack every candidate, keep the least marginal norm increase.

    Each round after the first re-solves the attack on the current set to get
    ``||r(S)||``, so reaching ``|S| = k`` costs ``(m+1)k - k(k-1)/2 - 1`` attacks.
    Candidates that fail in one round are attacked again in the next, since a
    label that cannot be flipped alone may become flippable with others.
    """
    rng = _rng(rng, spec)
    m = model.m
    x = np.asarray(x, dtype=np.float64)
    S: list = []
    norms: list = []
    at_step: list = []
    r = np.zeros(model.d)
    calls = 0
    rejected_budget = False
    while len(S) < m and not _at_budget(r, spec.mu_r):
        rejected_budget = False
        if S:
            cur = targeted_attack(model, x, y, S, spec, rng)
            calls += 1
            if cur.feasible:
                r = cur.r
        base = float(np.linalg.norm(r))
        gains, outs = {}, {}
        for j in sorted(set(range(m)) - set(S)):
            out = targeted_attack(model, x, y, S + [j], spec, rng)
            calls += 1
            if out.feasible:
                gains[j] = out.norm - base
                outs[j] = out
            elif out.reason != "infeasible":
                rejected_budget = True
        if not gains:
            break
        j = _pick_least(gains, tie_tol, rng)
        S.append(j)
        r = outs[j].r
        norms.append(outs[j].norm)
        at_step.append(calls)
    if len(S) == m:
        reason = "all_labels"
    elif _at_budget(r, spec.mu_r) or rejected_budget:
        reason = "budget_exhausted"
    else:
        reason = "no_candidate"
    return ExplorationResult(S, norms, r, calls, reason, at_step, "pgs")


def solo_costs(model, x, y, spec: AttackSpec, rng=None) -> np.ndarray:
    """Norm needed to flip each label alone while keeping the others (inf if impossible)."""
    rng = _rng(rng, spec)
    costs = np.full(model.m, np.inf)
    for j in range(model.m):
        if isinstance(model, LinearModel):
            out = linear_targeted_exact(model, x, y, [j], spec.margins(model.m),
                                        spec.preserve_others)
            ok = out.reason != "infeasible"
        else:
            out = targeted_attack(model, x, y, [j], spec, rng)
            ok = out.feasible
        if ok:
            costs[j] = out.norm
    return costs


def os_search(model, x, y, spec: AttackSpec, rng=None) -> ExplorationResult:
    """Oblivious search: sort solo flip costs, keep the largest jointly feasible prefix."""
    rng = _rng(rng, spec)
    x = np.asarray(x, dtype=np.float64)
    costs = solo_costs(model, x, y, spec, rng)
    calls = model.m
    order = [int(j) for j in np.argsort(costs, kind="stable")]
    k_max = int(np.sum(costs <= spec.mu_r + 1e-9))
    for k in range(k_max, 0, -1):
        out = targeted_attack(model, x, y, order[:k], spec, rng)
        calls += 1
        if out.feasible:
            S = order[:k]
            reason = "all_labels" if k == model.m else "budget_exhausted"
            return ExplorationResult(S, [out.norm] * k, out.r, calls, reason, [calls] * k, "os")
    return ExplorationResult([], [], np.zeros(model.d), calls, "budget_exhausted", [], "os")


def ls_search(model, x, y, spec: AttackSpec, rng=None) -> ExplorationResult:
    """Loss-guided search: plain loss ascent, reporting the labels it newly flips."""
    out = loss_ascent(model, x, y, spec.mu_r, spec)
    S = sorted(out.target)
    reason = "all_labels" if len(S) == model.m else "budget_exhausted"
    return ExplorationResult(S, [out.norm] * len(S), out.r, 0, reason, [0] * len(S), "ls")


def explore(method: str, model, x, y, spec: AttackSpec, rng=None, tie_tol: float = 1e-9):
    if method == "gase":
        return gase(model, x, y, spec, tie_tol, rng)
    if method == "pgs":
        return pgs(model, x, y, spec, tie_tol, rng)
    if method == "rs":
        return rs(model, x, y, spec, rng=rng)
    if method == "os":
        return os_search(model, x, y, spec, rng)
    if method == "ls":
        return ls_search(model, x, y, spec, rng)
    raise ValueError(f"unknown exploration method {method!r}")


@dataclass
class AttackabilityCurve:
    method: str
    population: str
    budgets: list
    counts: dict  # budget -> per-instance flipped-label counts
    instances: list  # dataset row indices in the population
    details: dict = field(default_factory=dict)  # budget -> per-instance ExplorationResult json

    def mean(self, budget) -> float:
        return float(np.mean(self.counts[budget]))

    def std(self, budget) -> float:
        return float(np.std(self.counts[budget]))

    def means(self) -> list:
        return [self.mean(b) for b in self.budgets]

    def rows(self) -> list:
        return [
            dict(budget=b, method=self.method, population=self.population,
                 mean_flipped=self.mean(b), std=self.std(b), n_instances=len(self.counts[b]))
            for b in self.budgets
        ]


def population_indices(model, ds: Dataset, population: str, split: str = "test") -> np.ndarray:
    idx = ds.indices(split) if (split != "all") else np.arange(ds.n)
    if population == "all":
        return idx
    if population != "correct_only":
        raise ValueError(f"unknown population {population!r}")
    H = model.scores(ds.X[idx])
    ok = np.all(ds.Y[idx] * H > 0, axis=1)
    return idx[ok]


def instance_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _count(model, x, y, res: ExplorationResult, population: str) -> int:
    if population == "correct_only":
        return len(res.S)
    h = model.scores(np.asarray(x) + res.final_r)
    return int(np.sum(np.asarray(y) * h <= 0))


def _run_one(args):
    model, x, y, budgets, method, population, spec, seed, index, tie_tol = args
    out = []
    for b in budgets:
        sp = replace(spec, mu_r=float(b), preserve_others=(population == "correct_only"),
                     trace=None)
        res = explore(method, model, x, y, sp, instance_rng(seed, index), tie_tol)
        out.append((_count(model, x, y, res, population), res.to_json()))
    return out


def default_workers() -> int:
    return int(os.environ.get("MLATK_WORKERS", "1"))


def indicator(model, ds: Dataset, budgets, method: str = "gase", population: str = "correct_only",
              spec: AttackSpec | None = None, seed: int = 0, split: str = "test",
              workers: int | None = None, tie_tol: float = 1e-9, max_instances: int | None = None,
              keep_details: bool = False) -> AttackabilityCurve:
    """Average explored set size per budget over a test population.

    ``correct_only`` keeps instances whose labels are all correct and counts
    ``|S|``; ``all`` relaxes label preservation and counts every wrong label at
    the final perturbed point.
    """
    if population not in POPULATIONS:
        raise ValueError(f"unknown population {population!r}")
    spec = spec or AttackSpec(mu_r=1.0)
    idx = population_indices(model, ds, population, split)
    if max_instances is not None:
        idx = idx[:max_instances]
    if idx.size == 0:
        raise EmptyPopulationError(f"no instances in population {population!r} of split {split!r}")
    budgets = [float(b) for b in budgets]
    jobs = [(model, ds.X[i], ds.Y[i], budgets, method, population, spec, seed, int(i), tie_tol)
            for i in idx]
    workers = workers or default_workers()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_run_one(job) for job in jobs]
    counts = {b: [res[k][0] for res in results] for k, b in enumerate(budgets)}
    details = {b: [res[k][1] for res in results] for k, b in enumerate(budgets)} if keep_details else {}
    return AttackabilityCurve(method, population, budgets, counts, [int(i) for i in idx], details)
