import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_linear_instance
from mlattack.attack import AttackSpec
from mlattack.explore import gase
from mlattack.model import LinearModel, linear_as_mlp
from mlattack.oracle import (Certificate, EnumerationGuardError, approx_cstar_mlp, exact_cstar,
                             psi, psi_optimum, psi_ratio, subset_table, write_certificates)
from mlattack.qp import min_norm_point

I2 = LinearModel(np.eye(2))


def test_cstar_examples():
    x, y = np.array([0.2, 5.0]), np.array([1, 1])
    c, S, r = exact_cstar(I2, x, y, 1.0, t=0)
    assert (c, S) == (1, (0,))
    c, S, r = exact_cstar(I2, x, y, 6.0, t=0)
    assert (c, S) == (2, (0, 1))
    assert np.linalg.norm(r) == pytest.approx(np.sqrt(25.04), abs=1e-9)
    # the same joint system through the generic min-norm solver
    qp = min_norm_point(-np.diag(y), y * x)
    assert np.linalg.norm(qp.r) == pytest.approx(np.linalg.norm(r), abs=1e-9)
    c, S, r = exact_cstar(I2, x, y, 0.1, t=0)
    assert (c, S) == (0, ()) and np.all(r == 0)


def test_cstar_requires_linear_and_guard():
    with pytest.raises(TypeError):
        exact_cstar(linear_as_mlp(I2), [1, 1], [1, 1], 1)
    with pytest.raises(EnumerationGuardError):
        exact_cstar(LinearModel(np.eye(15)), np.ones(15), np.ones(15), 1)
    with pytest.raises(EnumerationGuardError):
        approx_cstar_mlp(linear_as_mlp(LinearModel(np.eye(11))), np.ones(11), np.ones(11), 1)


def test_psi_examples():
    x, y = np.array([1.0, 1.0]), np.array([1, 1])
    table = subset_table(I2, x, y, t=0)
    assert table.g[(0,)] == pytest.approx(1) and table.g[(0, 1)] == pytest.approx(2)
    assert psi(table, ()) == 0
    opt = psi_optimum(I2, x, y, 2.0, t=0, table=table)
    assert opt.psi_star == pytest.approx(0, abs=1e-12)
    assert set(opt.maximizers) == {(), (0,), (1,), (0, 1)}
    psi_star, S_star = opt
    assert S_star == ()
    assert set(opt.by_cardinality) == {0, 1, 2}


@given(st.integers(0, 2**31 - 1), st.floats(0.05, 3))
@settings(max_examples=25)
def test_psi_star_nonnegative_and_scaling(seed, mu):
    model, x, y = random_linear_instance(np.random.default_rng(seed), 5, 4)
    a = psi_optimum(model, x, y, mu)
    assert a.psi_star >= 0
    # halving W halves every margin and norm, but the margin t is fixed, so use t=0 here
    a0 = psi_optimum(model, x, y, mu, t=0)
    b0 = psi_optimum(LinearModel(model.W * 0.5), x, y, mu, t=0)
    assert b0.psi_star >= a0.psi_star - 1e-9


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=25)
def test_cstar_monotone_in_budget(seed):
    model, x, y = random_linear_instance(np.random.default_rng(seed), 6, 5)
    table = subset_table(model, x, y)
    counts = [exact_cstar(model, x, y, mu, table=table)[0] for mu in (0, 0.1, 0.3, 1, 3, 10)]
    assert counts == sorted(counts)


@given(st.integers(0, 2**31 - 1), st.floats(0.1, 2))
@settings(max_examples=25)
def test_enumeration_dominates_gase(seed, mu):
    model, x, y = random_linear_instance(np.random.default_rng(seed), 6, 5)
    table = subset_table(model, x, y)
    opt = psi_optimum(model, x, y, mu, table=table)
    res = gase(model, x, y, AttackSpec(mu_r=mu, method="exact_linear"))
    assert opt.psi_star >= psi(table, res.S) - 1e-12
    assert exact_cstar(model, x, y, mu, table=table)[0] >= len(res.S)


def test_g_is_modular_for_orthogonal_columns():
    rng = np.random.default_rng(0)
    m = 6
    Q = np.linalg.qr(rng.standard_normal((10, m)))[0]
    x = Q @ rng.uniform(0.1, 1.0, m)
    y = np.ones(m, dtype=int)
    table = subset_table(LinearModel(Q), x, y)
    violations = 0
    for _ in range(500):
        B = set(j for j in range(m) if rng.random() < 0.5)
        rest = [j for j in range(m) if j not in B]
        if not rest:
            continue
        j = int(rng.choice(rest))
        A = set(j2 for j2 in B if rng.random() < 0.5)
        g = lambda S: table.g[tuple(sorted(S))]
        if g(A | {j}) - g(A) > g(B | {j}) - g(B) + 1e-7:
            violations += 1
    assert violations == 0


def test_mlp_wrapper_matches_exact():
    rng = np.random.default_rng(11)
    mismatches = []
    for k in range(50):
        model, x, y = random_linear_instance(rng, 4, 3)
        mu = float(rng.uniform(0.2, 1.5))
        c_exact, _, _ = exact_cstar(model, x, y, mu)
        c_mlp, _ = approx_cstar_mlp(linear_as_mlp(model), x, y, mu,
                                    AttackSpec(mu_r=mu, max_iter=400), np.random.default_rng(k))
        if c_exact != c_mlp:
            mismatches.append((k, c_exact, c_mlp))
    assert not mismatches


def test_approx_zero_budget():
    assert approx_cstar_mlp(linear_as_mlp(I2), np.ones(2), np.ones(2), 0.0) == (0, ())


def test_ratio_convention_and_certificate_json(tmp_path):
    assert psi_ratio(0.0, 0.0) == 1.0
    assert psi_ratio(0.5, 1.0) == 0.5
    table = subset_table(I2, np.ones(2), np.ones(2), t=0)
    cert = Certificate(0, 1.0, 1, (0,), 0.0, 0.0, (0,), 1.0, table.rows())
    write_certificates([cert], tmp_path / "c.json", dict(min_ratio=1.0))
    doc = json.loads((tmp_path / "c.json").read_text())
    assert doc["min_ratio"] == 1.0
    assert len(doc["instances"][0]["table"]) == 4
    assert doc["instances"][0]["table"][0] == dict(T=[], g=0.0, feasible=True)
