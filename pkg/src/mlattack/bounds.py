"""Attackability risk bounds for linear and feedforward multi-label classifiers.

Every bound is reported term by term. The empirical adversarial risk enters
through its Lipschitz surrogate, clean LSE risk plus ``C * mu_r``, where ``C``
is the capacity of the classifier; the adversary-free variants drop that
increment.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .attack import AttackSpec, loss_value
from .dataset import Dataset
from .explore import gase, instance_rng
from .model import (LinearModel, MlpModel, layer_constants, lipschitz_capacity, numerical_rank,
                    spectral_norm)

KINDS = ("linear_thm1", "mlp_thm2_main", "mlp_thm2_supp", "adv_free_linear", "adv_free_mlp")
VARIANTS = ("main", "supp")


@dataclass
class BoundReport:
    kind: str
    emp_adv_risk: float
    emp_clean_risk: float
    complexity_term: float
    diameter_term: float
    confidence_term: float
    total: float
    vacuous: bool
    loss: str = "lse"
    inputs: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    def row(self) -> dict:
        return dict(kind=self.kind, mu_r=self.inputs.get("mu_r"), sigma=self.inputs.get("sigma"),
                    emp_adv_risk=self.emp_adv_risk, emp_clean_risk=self.emp_clean_risk,
                    complexity_term=self.complexity_term, diameter_term=self.diameter_term,
                    confidence_term=self.confidence_term, total=self.total, vacuous=self.vacuous)


def _rows(ds: Dataset, split: str | None) -> np.ndarray:
    if split is None:
        split = "train" if ds.split_tags is not None else "all"
    idx = ds.indices(split)
    if idx.size == 0:
        raise ValueError(f"split {split!r} is empty")
    return idx


def clean_risk(model, ds: Dataset, split: str | None = None, loss: str = "lse") -> float:
    idx = _rows(ds, split)
    if loss == "zero_one":
        return float(np.mean(np.sum(ds.Y[idx] * model.scores(ds.X[idx]) <= 0, axis=1)))
    return float(np.mean([loss_value(model, ds.X[i], ds.Y[i], "lse") for i in idx]))


def adversarial_losses(model, ds: Dataset, mu_r: float, spec: AttackSpec | None = None,
                       loss: str = "lse", split: str | None = None, seed: int = 0) -> np.ndarray:
    """Per-instance loss at ``x + r`` where ``r`` is the GASE perturbation at budget ``mu_r``."""
    if loss not in ("lse", "zero_one"):
        raise ValueError(f"unknown loss {loss!r}")
    idx = _rows(ds, split)
    spec = replace(spec or AttackSpec(mu_r=mu_r), mu_r=float(mu_r), trace=None)
    out = np.empty(idx.size)
    for k, i in enumerate(idx):
        x, y = ds.X[i], ds.Y[i]
        r = np.zeros(model.d)
        if mu_r > 0:
            r = gase(model, x, y, spec, rng=instance_rng(seed, int(i))).final_r
        if loss == "lse":
            out[k] = loss_value(model, x + r, y, "lse")
        else:
            out[k] = float(np.sum(y * model.scores(x + r) <= 0))
    return out


def empirical_adv_risk(model, ds: Dataset, mu_r: float, spec: AttackSpec | None = None,
                       loss: str = "lse", split: str | None = None, seed: int = 0) -> float:
    """Mean loss under GASE perturbations (``zero_one`` counts wrong labels)."""
    return float(np.mean(adversarial_losses(model, ds, mu_r, spec, loss, split, seed)))


def linear_terms(n: int, m: int, Lam: float, mu_x: float, R: float, sigma: float, C_h: float):
    """``(complexity, diameter, confidence)`` terms of the linear bound."""
    _check(n, sigma)
    complexity = 96.0 * np.sqrt(mu_x * Lam * R * (1.0 + mu_x * Lam) / n)
    diameter = 12.0 * C_h * np.sqrt(np.pi) * (m + 2.0 * mu_x) / np.sqrt(n)
    confidence = (m + Lam * mu_x) * np.sqrt(np.log(1.0 / sigma) / (2.0 * n))
    return float(complexity), float(diameter), float(confidence)


def mlp_terms(n: int, m: int, d: int, widths, Lams, Rs, Cs, C_nn: float, mu_x: float,
              sigma: float, variant: str = "supp"):
    """``(complexity, diameter, confidence)`` terms of the feedforward bound.

    ``widths``, ``Lams``, ``Rs`` and ``Cs`` are per layer. ``main`` uses the
    ``sqrt(d m Lambda_L)`` prefactor, ``supp`` uses ``sqrt(m L Lambda_L)``.
    """
    _check(n, sigma)
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    L = len(Lams)
    s = sum(R * np.sqrt(di * lam * c) for R, di, lam, c in zip(Rs, widths, Lams, Cs))
    pre = d * m * Lams[-1] if variant == "main" else m * L * Lams[-1]
    complexity = 96.0 * np.sqrt(pre) * s / np.sqrt(n)
    diameter = 12.0 * C_nn * (2.0 * mu_x + m) * np.sqrt(np.pi) / np.sqrt(n)
    confidence = 2.0 * m * np.sqrt(np.log(1.0 / sigma) / (2.0 * n))
    return float(complexity), float(diameter), float(confidence)


def _check(n, sigma):
    if n <= 0:
        raise ValueError("degenerate sample: n must be positive")
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (0, 1)")


def _report(kind, clean, cap, mu_r, terms, m, inputs) -> BoundReport:
    adv = clean + cap * mu_r
    total = adv + sum(terms)
    return BoundReport(kind, float(adv), float(clean), *terms, float(total), bool(total > m),
                       "lse", inputs)


def linear_bound(model: LinearModel, ds: Dataset, mu_r: float, sigma: float,
                 split: str | None = None) -> BoundReport:
    if not isinstance(model, LinearModel):
        raise TypeError("linear_bound needs a LinearModel")
    n = _rows(ds, split).size
    Lam = spectral_norm(model.W)
    R = numerical_rank(model.W)
    C_h = lipschitz_capacity(model)
    terms = linear_terms(n, model.m, Lam, ds.mu_x, R, sigma, C_h)
    inputs = dict(n=n, m=model.m, d=model.d, mu_x=ds.mu_x, mu_r=mu_r, sigma=sigma,
                  Lambda=Lam, R=R, C=C_h)
    return _report("linear_thm1", clean_risk(model, ds, split), C_h, mu_r, terms, model.m, inputs)


def mlp_bound(model: MlpModel, ds: Dataset, mu_r: float, sigma: float, variant: str = "supp",
              split: str | None = None) -> BoundReport:
    if not isinstance(model, MlpModel):
        raise TypeError("mlp_bound needs an MlpModel")
    n = _rows(ds, split).size
    Lams = [spectral_norm(l.A) for l in model.layers]
    Rs = [numerical_rank(l.A) for l in model.layers]
    Cs = list(layer_constants(model))
    widths = model.dims[1:]
    C_nn = lipschitz_capacity(model)
    terms = mlp_terms(n, model.m, model.d, widths, Lams, Rs, Cs, C_nn, ds.mu_x, sigma, variant)
    inputs = dict(n=n, m=model.m, d=model.d, mu_x=ds.mu_x, mu_r=mu_r, sigma=sigma,
                  Lambda=Lams, R=Rs, widths=widths, C=C_nn, C_layers=Cs, variant=variant)
    kind = "mlp_thm2_main" if variant == "main" else "mlp_thm2_supp"
    return _report(kind, clean_risk(model, ds, split), C_nn, mu_r, terms, model.m, inputs)


def adv_free_bound(model, ds: Dataset, sigma: float, variant: str = "supp",
                   split: str | None = None) -> BoundReport:
    """The same bound with every budget-dependent term removed."""
    if isinstance(model, LinearModel):
        rep = linear_bound(model, ds, 0.0, sigma, split)
        kind = "adv_free_linear"
    else:
        rep = mlp_bound(model, ds, 0.0, sigma, variant, split)
        kind = "adv_free_mlp"
    rep.inputs.pop("mu_r", None)
    return replace(rep, kind=kind)


def bound(model, ds: Dataset, mu_r: float, sigma: float, variant: str = "supp",
          split: str | None = None) -> BoundReport:
    if isinstance(model, LinearModel):
        return linear_bound(model, ds, mu_r, sigma, split)
    return mlp_bound(model, ds, mu_r, sigma, variant, split)


def write_reports(reports, json_path=None, csv_path=None) -> None:
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump([r.to_json() for r in reports], fh, indent=1)
    if csv_path is not None:
        rows = [r.row() for r in reports]
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
