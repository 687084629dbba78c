"""Multi-label datasets: sparse text I/O, synthetic generation, splits, normalisation.

Sparse text format, one instance per line::

    #mlatk d=<d> m=<m>
    0,2 1:0.5 3:1.0
    - 0:0.25

Labels are a comma-separated list of 0-based indices (``-`` for none), followed
by 0-based ``idx:val`` feature pairs. Lines starting with ``#`` are comments;
the header line is mandatory and must come before any instance.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
_HEADER = re.compile(r"^#mlatk\s+d=(\d+)\s+m=(\d+)\s*$")


class FormatError(ValueError):
    """Malformed sparse multi-label file."""


@dataclass(frozen=True)
class Instance:
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Dense feature matrix ``X`` (n x d) and sign-coded labels ``Y`` (n x m)."""

    X: np.ndarray
    Y: np.ndarray
    mu_x: float = 1.0
    split_tags: np.ndarray | None = None
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, ndmin=2)
        Y = np.array(self.Y, dtype=np.int8, ndmin=2)
        if X.shape[0] != Y.shape[0]:
            raise ValueError("X and Y disagree on the number of instances")
        if not np.all(np.isin(Y, (-1, 1))):
            raise ValueError("labels must be -1 or +1")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        if self.split_tags is not None:
            tags = np.asarray(self.split_tags, dtype="<U5")
            if tags.shape != (X.shape[0],) or not np.all(np.isin(tags, SPLITS)):
                raise ValueError("split tags must be one of train/val/test per instance")
            object.__setattr__(self, "split_tags", tags)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.Y.shape[1]

    @property
    def instances(self) -> list[Instance]:
        return [Instance(x, y) for x, y in zip(self.X, self.Y)]

    def indices(self, split: str = "all") -> np.ndarray:
        if split == "all":
            return np.arange(self.n)
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        if self.split_tags is None:
            raise ValueError("dataset has no split tags; call split() first")
        return np.flatnonzero(self.split_tags == split)

    def subset(self, split: str = "all") -> "Dataset":
        idx = self.indices(split)
        tags = None if self.split_tags is None else self.split_tags[idx]
        return replace(self, X=self.X[idx], Y=self.Y[idx], split_tags=tags)


def load_sparse(path) -> Dataset:
    text = Path(path).read_text(encoding="utf-8")
    d = m = None
    xs, ys = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            log.warning("%s:%d: blank line skipped", path, lineno)
            continue
        if line.startswith("#"):
            hm = _HEADER.match(line)
            if hm and d is None:
                d, m = int(hm.group(1)), int(hm.group(2))
            continue
        if d is None:
            raise FormatError(f"line {lineno}: instance before '#mlatk d=<d> m=<m>' header")
        parts = line.split()
        y = -np.ones(m, dtype=np.int8)
        if parts[0] != "-":
            for tok in parts[0].split(","):
                try:
                    j = int(tok)
                except ValueError:
                    raise FormatError(f"line {lineno}: bad label {tok!r}") from None
                if not 0 <= j < m:
                    raise FormatError(f"line {lineno}: label index out of range: {j}")
                y[j] = 1
        x = np.zeros(d)
        for tok in parts[1:]:
            idx, sep, val = tok.partition(":")
            try:
                i, v = int(idx), float(val)
            except ValueError:
                raise FormatError(f"line {lineno}: bad feature pair {tok!r}") from None
            if not sep:
                raise FormatError(f"line {lineno}: bad feature pair {tok!r}")
            if not 0 <= i < d:
                raise FormatError(f"line {lineno}: feature index out of range: {i}")
            x[i] = v
        xs.append(x)
        ys.append(y)
    if d is None:
        raise FormatError("empty file: missing '#mlatk d=<d> m=<m>' header")
    if not xs:
        raise FormatError("empty file: no instances")
    X = np.vstack(xs)
    mu = float(np.max(np.linalg.norm(X, axis=1)))
    return Dataset(X, np.vstack(ys), mu_x=mu if mu > 0 else 1.0)


def save_sparse(ds: Dataset, path) -> None:
    lines = [f"#mlatk d={ds.d} m={ds.m}"]
    for x, y in zip(ds.X, ds.Y):
        labels = ",".join(str(j) for j in np.flatnonzero(y > 0)) or "-"
        feats = " ".join(f"{i}:{float(x[i])!r}" for i in np.flatnonzero(x))
        lines.append(f"{labels} {feats}".rstrip())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def synthesize(
    n: int,
    d: int,
    m: int,
    rank: int,
    label_corr: float = 0.0,
    noise: float = 0.0,
    seed: int = 0,
    mu_x: float = 1.0,
    feature_decay: float = 1.0,
):
    """Draw a rank-``rank`` teacher ``W0`` and labels ``y = sign(z W0 + noise)``.

    ``z`` is standard Gaussian; the observed features are ``x = z * decay**i``
    (feature ``i`` scaled by ``feature_decay**i``) with rows clipped to the
    ``mu_x`` ball, so with ``feature_decay < 1`` the labels depend on
    low-variance features as much as on high-variance ones. Returns
    ``(dataset, W0)``; ``W0`` acts on ``z``. ``label_corr`` blends independent
    per-label noise with one shared noise component; ``sign(0)`` resolves to ``+1``.
    """
    if not 1 <= rank <= min(d, m):
        raise ValueError(f"rank must lie in [1, {min(d, m)}]")
    if n < 10:
        raise ValueError("n must be at least 10")
    if not 0.0 <= label_corr <= 1.0:
        raise ValueError("label_corr must lie in [0, 1]")
    if noise < 0:
        raise ValueError("noise must be nonnegative")
    if not 0.0 < feature_decay <= 1.0:
        raise ValueError("feature_decay must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    W0 = rng.standard_normal((d, rank)) @ rng.standard_normal((rank, m)) / np.sqrt(rank)
    Z = rng.standard_normal((n, d))
    X = Z * feature_decay ** np.arange(d)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    X = X * (mu_x / np.maximum(norms, mu_x))
    own = rng.standard_normal((n, m))
    shared = rng.standard_normal((n, 1))
    eps = noise * (np.sqrt(1.0 - label_corr) * own + np.sqrt(label_corr) * shared)
    # noise is scaled by the typical score magnitude so `noise` is unit-free
    scale = np.std(Z @ W0) if noise > 0 else 0.0
    Y = np.where(Z @ W0 + scale * eps >= 0, 1, -1).astype(np.int8)
    meta = dict(n=n, d=d, m=m, rank=rank, label_corr=label_corr, noise=noise, seed=seed,
                feature_decay=feature_decay)
    return Dataset(X, Y, mu_x=mu_x, seed=seed, meta=meta), W0


def split(ds: Dataset, fractions=(0.5, 0.3, 0.2), seed: int = 0) -> Dataset:
    """Assign train/val/test tags by a seeded shuffle.

    Counts use largest-remainder rounding, ties going to the earlier (larger)
    fraction, so a single instance always lands in ``train`` for the default split.
    """
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.shape != (3,) or np.any(fr <= 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise ValueError("fractions must be three positive numbers summing to 1")
    raw = fr * ds.n
    counts = np.floor(raw).astype(int)
    rem = raw - counts
    order = sorted(range(3), key=lambda i: (-round(rem[i], 12), -fr[i], i))
    for i in order[: ds.n - counts.sum()]:
        counts[i] += 1
    tags = np.repeat(np.array(SPLITS), counts)
    perm = np.random.default_rng(seed).permutation(ds.n)
    out = np.empty(ds.n, dtype="<U5")
    out[perm] = tags
    return replace(ds, split_tags=out, seed=seed)


def normalize(ds: Dataset, mu_x: float = 1.0) -> Dataset:
    """Rescale rows with ``||x|| > mu_x`` onto the sphere of radius ``mu_x``."""
    if not mu_x > 0:
        raise ValueError("mu_x must be positive")
    norms = np.linalg.norm(ds.X, axis=1)
    X = np.array(ds.X)
    big = norms > mu_x
    X[big] *= (mu_x / norms[big])[:, None]
    return replace(ds, X=X, mu_x=float(mu_x))
