import importlib.util
import pathlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlattack.attack import AttackSpec
from mlattack.bounds import (adv_free_bound, adversarial_losses, bound, clean_risk,
                             empirical_adv_risk, linear_bound, linear_terms, mlp_bound, mlp_terms,
                             write_reports)
from mlattack.dataset import Dataset, split, synthesize
from mlattack.model import Layer, LinearModel, MlpModel, init_mlp, lipschitz_capacity

_here = pathlib.Path(__file__).resolve().parents[1] / "scripts" / "bound_oracle.py"
_spec = importlib.util.spec_from_file_location("bound_oracle", _here)
oracle = importlib.util.module_from_spec(_spec)
_spec.loader.exec_module(oracle)

# values printed by scripts/bound_oracle.py before the library existed
FROZEN = dict(linear_complexity=13.576450198781712, linear_diameter=8.507778484346478,
              linear_confidence=0.3218949039434021, mlp_confidence=0.3330218444630791)


def unit_dataset(n=100, d=2, m=2, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    X /= np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1.0)
    return Dataset(X, np.where(X[:, :m] >= 0, 1, -1) if d >= m else np.ones((n, m)), mu_x=1.0)


def test_oracle_script_is_frozen():
    for k, v in FROZEN.items():
        assert oracle.SPOTS[k] == pytest.approx(v, abs=1e-12)


def test_linear_spot_values():
    comp, diam, conf = linear_terms(100, 2, 1.0, 1.0, 1, 0.1, 1.0)
    assert comp == pytest.approx(FROZEN["linear_complexity"], abs=1e-3)
    assert diam == pytest.approx(FROZEN["linear_diameter"], abs=1e-3)
    assert conf == pytest.approx(FROZEN["linear_confidence"], abs=1e-3)
    rep = linear_bound(LinearModel(np.diag([1.0, 0.0])), unit_dataset(), 0.0, 0.1)
    assert rep.inputs["Lambda"] == pytest.approx(1) and rep.inputs["R"] == 1
    assert rep.complexity_term == pytest.approx(comp, abs=1e-9)
    assert rep.diameter_term == pytest.approx(diam, abs=1e-9)
    assert rep.confidence_term == pytest.approx(conf, abs=1e-9)
    assert rep.total == pytest.approx(rep.emp_adv_risk + comp + diam + conf)


def test_mlp_confidence_spot():
    _, _, conf = mlp_terms(200, 4, 1, [4], [1.0], [1], [1.0], 1.0, 1.0, 0.5)
    assert conf == pytest.approx(FROZEN["mlp_confidence"], abs=1e-12)
    assert conf == pytest.approx(0.33310, abs=1e-3)


def test_sigma_to_one_and_root_two_scaling():
    assert linear_terms(100, 2, 1, 1, 1, 1 - 1e-12, 1)[2] < 1e-5
    a = linear_terms(100, 2, 1, 1, 1, 0.1, 1)[0]
    b = linear_terms(100, 2, 1, 1, 2, 0.1, 1)[0]
    assert b / a == pytest.approx(np.sqrt(2))


def test_invalid_inputs():
    with pytest.raises(ValueError):
        linear_terms(0, 2, 1, 1, 1, 0.1, 1)
    with pytest.raises(ValueError):
        linear_terms(10, 2, 1, 1, 1, 1.0, 1)
    with pytest.raises(TypeError):
        mlp_bound(LinearModel(np.eye(2)), unit_dataset(), 0.1, 0.1)
    with pytest.raises(TypeError):
        linear_bound(init_mlp([2, 2], []), unit_dataset(), 0.1, 0.1)
    empty = split(unit_dataset(n=1), seed=0)
    with pytest.raises(ValueError):
        clean_risk(LinearModel(np.eye(2)), empty, "test")


def test_variants_differ_only_in_complexity():
    net = MlpModel((Layer(np.array([[1.0]]), "identity"),))
    ds = Dataset(np.linspace(-1, 1, 20)[:, None], np.where(np.linspace(-1, 1, 20) >= 0, 1, -1)[:, None])
    a, b = mlp_bound(net, ds, 0.1, 0.1, "main"), mlp_bound(net, ds, 0.1, 0.1, "supp")
    # d = L = 1 here so the two prefactors coincide
    assert a.complexity_term == pytest.approx(b.complexity_term)
    net2 = init_mlp([5, 4, 3], ["tanh"], seed=0)
    ds2 = Dataset(np.random.default_rng(0).uniform(-0.4, 0.4, (30, 5)), np.ones((30, 3)))
    a, b = mlp_bound(net2, ds2, 0.1, 0.1, "main"), mlp_bound(net2, ds2, 0.1, 0.1, "supp")
    assert a.kind == "mlp_thm2_main" and b.kind == "mlp_thm2_supp"
    assert a.complexity_term / b.complexity_term == pytest.approx(np.sqrt(5 / 2))
    for f in ("emp_adv_risk", "emp_clean_risk", "diameter_term", "confidence_term"):
        assert getattr(a, f) == getattr(b, f)


def test_scaling_last_layer_doubles_capacity():
    net = MlpModel((Layer(np.eye(3) * 2, "tanh"), Layer(np.eye(3) * 1.5, "identity")))
    ds = Dataset(np.random.default_rng(1).uniform(-0.3, 0.3, (20, 3)), np.ones((20, 3)))
    big = MlpModel((net.layers[0], Layer(net.layers[1].A * 2, "identity")))
    assert lipschitz_capacity(big) == pytest.approx(2 * lipschitz_capacity(net))
    a, b = mlp_bound(net, ds, 0.5, 0.1), mlp_bound(big, ds, 0.5, 0.1)
    assert (b.emp_adv_risk - b.emp_clean_risk) == pytest.approx(2 * (a.emp_adv_risk - a.emp_clean_risk))


@pytest.mark.parametrize("model", [LinearModel(np.array([[1.0, 0.5], [0.2, -0.3]])),
                                   init_mlp([2, 3, 2], ["sigmoid"], seed=2)])
def test_adv_free_relation(model):
    ds = unit_dataset(n=40)
    rep = bound(model, ds, 0.7, 0.05)
    free = adv_free_bound(model, ds, 0.05)
    assert free.kind.startswith("adv_free")
    assert rep.total - free.total == pytest.approx(lipschitz_capacity(model) * 0.7, rel=1e-12)
    assert bound(model, ds, 0.0, 0.05).total == free.total
    assert "mu_r" not in free.inputs


def test_rank_one_beats_rank_five():
    rng = np.random.default_rng(0)
    U = np.linalg.qr(rng.standard_normal((8, 5)))[0]
    V = np.linalg.qr(rng.standard_normal((5, 5)))[0]
    W1 = U[:, :1] @ V[:, :1].T
    W5 = U @ V.T
    ds = unit_dataset(n=50, d=8, m=5)
    a, b = adv_free_bound(LinearModel(W1), ds, 0.1), adv_free_bound(LinearModel(W5), ds, 0.1)
    assert a.inputs["Lambda"] == pytest.approx(b.inputs["Lambda"])
    assert a.complexity_term < b.complexity_term
    assert a.total < b.total


def test_lse_risk_at_zero_budget_is_clean():
    ds, W0 = synthesize(40, 5, 3, 2, seed=1)
    model = LinearModel(W0 * 0.3)
    assert empirical_adv_risk(model, ds, 0.0) == clean_risk(model, ds)
    assert empirical_adv_risk(model, ds, 0.0, loss="zero_one") == clean_risk(model, ds, loss="zero_one")


def test_zero_one_below_cheapest_flip():
    ds, W0 = synthesize(40, 5, 3, 2, seed=2)
    model = LinearModel(W0)
    margins = np.abs(ds.X @ W0) / np.linalg.norm(W0, axis=0)
    tiny = float(margins.min()) * 0.5
    spec = AttackSpec(mu_r=tiny, method="exact_linear")
    assert empirical_adv_risk(model, ds, tiny, spec, loss="zero_one") == clean_risk(model, ds, loss="zero_one")


@given(st.integers(0, 2**31 - 1), st.sampled_from([0.1, 0.5, 1.0]))
@settings(max_examples=10)
def test_surrogate_inequality_per_instance(seed, mu):
    ds, W0 = synthesize(30, 6, 4, 2, noise=0.3, seed=seed % 1000)
    model = LinearModel(W0 * 0.5)
    C = lipschitz_capacity(model)
    adv = adversarial_losses(model, ds, mu, AttackSpec(mu_r=mu, max_iter=100))
    clean = adversarial_losses(model, ds, 0.0)
    assert np.all(adv <= clean + C * mu + 1e-6)


def test_monotonicity_in_budget_scale_and_rank():
    rng = np.random.default_rng(5)
    ds = unit_dataset(n=60, d=6, m=4)
    W = rng.standard_normal((6, 4))
    totals = [linear_bound(LinearModel(W), ds, mu, 0.1).total for mu in (0, 0.1, 0.5, 1, 2)]
    assert totals == sorted(totals)

    def data_free(rep):
        # everything except the model's (data-dependent) clean fit
        return rep.total - rep.emp_clean_risk

    scaled = [data_free(linear_bound(LinearModel(W * c), ds, 0.3, 0.1)) for c in (0.5, 1, 2, 4)]
    assert scaled == sorted(scaled)
    U, s, Vt = np.linalg.svd(W, full_matrices=False)
    ranks = []
    for k in range(1, 5):
        sk = np.where(np.arange(4) < k, s[0], 0.0)  # pad with copies of the top singular value
        ranks.append(data_free(linear_bound(LinearModel((U * sk) @ Vt), ds, 0.3, 0.1)))
    assert ranks == sorted(ranks)


def test_report_files(tmp_path):
    reps = [bound(LinearModel(np.eye(2)), unit_dataset(), 0.1, 0.1),
            adv_free_bound(LinearModel(np.eye(2)), unit_dataset(), 0.1)]
    write_reports(reps, tmp_path / "b.json", tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0].startswith("kind,mu_r,sigma") and len(lines) == 3
    assert reps[0].vacuous  # desk-scale bounds exceed the trivial cap m
