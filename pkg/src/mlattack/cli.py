"""Command-line interface: ``mlattack {synth,train,explore,certify,bounds,report}``.

Every option can also come from an INI file given by ``--config``; the
section is named after the subcommand and keys use underscores
(``lambda_nuc = 0.05``). Command-line flags win over the file.

Exit codes: 0 success, 2 configuration or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attack import METHODS, AttackError, AttackSpec
from .bounds import adv_free_bound, bound, write_reports
from .checkpoint import CheckpointError, load_model, save_model
from .dataset import FormatError, load_sparse, save_sparse, split, synthesize
from .explore import (EXPLORERS, POPULATIONS, EmptyPopulationError, gase, indicator,
                      instance_rng, population_indices)
from .model import LinearModel
from .oracle import (EXACT_GUARD, TABLE_GUARD, Certificate, EnumerationGuardError, exact_cstar,
                     psi, psi_optimum, psi_ratio, subset_table, write_certificates)
from .train import TrainConfig, TrainingError, train_linear, train_mlp, write_manifest

log = logging.getLogger("mlattack")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


class Settings:
    """Flag-over-config lookup for one subcommand section."""

    def __init__(self, args, parser: configparser.ConfigParser | None, section: str):
        self.args = args
        self.section = section
        self.cfg = parser[section] if parser is not None and parser.has_section(section) else {}

    def get(self, name: str, kind=str, default=None, required: bool = False):
        val = getattr(self.args, name, None)
        src = "--" + name.replace("_", "-")
        if val is None and name in self.cfg:
            val = self.cfg[name]
            src = f"[{self.section}] {name}"
        if val is None:
            if required:
                raise ConfigError(f"missing required field [{self.section}] {name} "
                                  f"(or --{name.replace('_', '-')})")
            return default
        try:
            return _convert(val, kind)
        except (TypeError, ValueError):
            raise ConfigError(f"{src}: invalid value {val!r}") from None


def _convert(val, kind):
    if kind is bool:
        if isinstance(val, bool):
            return val
        s = str(val).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ValueError(val)
    if kind == "floats":
        return [float(v) for v in str(val).split(",") if v.strip()]
    if kind == "ints":
        return [int(v) for v in str(val).split(",") if v.strip()]
    if kind == "strs":
        return [v.strip() for v in str(val).split(",") if v.strip()]
    return kind(val)


def _load_data(st: Settings):
    path = st.get("data", required=True)
    if not Path(path).is_file():
        raise ConfigError(f"[{st.section}] data: no such file {path!r}")
    fr = st.get("fractions", "floats", [0.5, 0.3, 0.2])
    return split(load_sparse(path), tuple(fr), seed=st.get("split_seed", int, 0))


def _load_model(st: Settings, ds=None):
    path = st.get("model", required=True)
    if not Path(path).is_file():
        raise ConfigError(f"[{st.section}] model: no such file {path!r}")
    model = load_model(path)
    if ds is not None and (model.d != ds.d or model.m != ds.m):
        raise ConfigError(f"incompatible dimensions: model is d={model.d}, m={model.m}; "
                          f"data is d={ds.d}, m={ds.m}")
    return model


def _workers(st: Settings) -> int:
    return st.get("workers", int, int(os.environ.get("MLATK_WORKERS", "1")))


def _attack_spec(st: Settings, mu_r: float = 1.0) -> AttackSpec:
    method = st.get("attack", str, "pgd")
    if method not in METHODS:
        raise ConfigError(f"[{st.section}] attack: unknown method {method!r}")
    return AttackSpec(mu_r=mu_r, t=st.get("t", float, 1e-3), max_iter=st.get("max_iter", int, 500),
                      restarts=st.get("restarts", int, 3), method=method,
                      seed=st.get("seed", int, 0))


def _out_dir(st: Settings, default: str) -> Path:
    out = Path(st.get("out", str, default))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(st: Settings) -> int:
    ds, W0 = synthesize(
        st.get("n", int, 300), st.get("d", int, 30), st.get("m", int, 10), st.get("rank", int, 3),
        label_corr=st.get("label_corr", float, 0.0), noise=st.get("noise", float, 0.0),
        seed=st.get("seed", int, 0), mu_x=st.get("mu_x", float, 1.0),
        feature_decay=st.get("feature_decay", float, 1.0))
    out = Path(st.get("out", str, "data.txt"))
    save_sparse(ds, out)
    teacher = st.get("teacher", str, None)
    if teacher:
        save_model(LinearModel(W0), teacher)
    print(f"wrote {ds.n} instances (d={ds.d}, m={ds.m}) to {out}")
    return EXIT_OK


def cmd_train(st: Settings) -> int:
    ds = _load_data(st)
    adv = st.get("adv_training", bool, False)
    cfg = TrainConfig(
        loss=st.get("loss", str, "squared_hinge"), l2=st.get("l2", float, 0.0),
        lambda_nuc=st.get("lambda_nuc", float, 0.0), adv_training=adv,
        adv_mu_r=st.get("adv_mu_r", float, None), adv_fraction=st.get("adv_fraction", float, 0.5),
        epochs=st.get("epochs", int, 50), lr=st.get("lr", float, 0.1),
        batch=st.get("batch", int, 32), seed=st.get("seed", int, 0),
        adv_steps=st.get("adv_steps", int, 20),
        adv_method=st.get("adv_method", str, "loss_ascent"))
    kind = st.get("kind", str, "linear")
    history: list = []
    if kind == "linear":
        model = train_linear(ds, cfg, history)
    elif kind == "mlp":
        hidden = st.get("hidden", "ints", [16])
        acts = st.get("activation", "strs", ["tanh"])
        if len(acts) == 1:
            acts = acts * len(hidden)
        model = train_mlp(ds, cfg, ([ds.d] + hidden + [ds.m], acts), history)
    else:
        raise ConfigError(f"[{st.section}] kind: expected linear or mlp, got {kind!r}")
    out = Path(st.get("model_out", str, "model.ckpt"))
    checksum = save_model(model, out)
    manifest = st.get("manifest", str, str(out) + ".json")
    write_manifest(manifest, cfg, history, model, ds, _workers(st), dict(kind=kind))
    print(f"wrote {out} (sha256 {checksum[:16]})")
    return EXIT_OK


def cmd_explore(st: Settings) -> int:
    ds = _load_data(st)
    model = _load_model(st, ds)
    budgets = st.get("budgets", "floats", [0.1, 0.5, 1.0])
    methods = st.get("methods", "strs", ["gase"])
    population = st.get("population", str, "correct_only")
    for meth in methods:
        if meth not in EXPLORERS:
            raise ConfigError(f"[{st.section}] methods: unknown method {meth!r}")
    if population not in POPULATIONS:
        raise ConfigError(f"[{st.section}] population: unknown population {population!r}")
    spec = _attack_spec(st)
    seed = st.get("seed", int, 0)
    out = _out_dir(st, "explore_out")
    rows, details = [], {}
    for meth in methods:
        curve = indicator(model, ds, budgets, meth, population, spec, seed,
                          split=st.get("split", str, "test"), workers=_workers(st),
                          keep_details=True)
        rows.extend(curve.rows())
        details[meth] = dict(instances=curve.instances,
                             per_budget={repr(b): curve.details[b] for b in curve.budgets})
    rows.sort(key=lambda r: (r["budget"], EXPLORERS.index(r["method"])))
    with open(out / "curve.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["budget", "method", "population", "mean_flipped", "std", "n_instances"])
        for r in rows:
            w.writerow([repr(r["budget"]), r["method"], r["population"], repr(r["mean_flipped"]),
                        repr(r["std"]), r["n_instances"]])
    with open(out / "instances.json", "w", encoding="utf-8") as fh:
        json.dump(dict(seed=seed, population=population, budgets=budgets, methods=details), fh,
                  indent=1, sort_keys=True)
    print(f"wrote {out / 'curve.csv'}")
    return EXIT_OK


def certify(model: LinearModel, ds, budgets, split_name: str = "test", seed: int = 0,
            t: float = 1e-3, max_instances: int | None = None,
            population: str = "correct_only"):
    """GASE versus the exhaustive optimum of ``psi`` on a population of a split."""
    if model.m > EXACT_GUARD:
        raise EnumerationGuardError(f"enumeration guard: m={model.m} exceeds {EXACT_GUARD}")
    idx = population_indices(model, ds, population, split_name)
    if idx.size == 0:
        raise EmptyPopulationError(f"no instances in population {population!r} of split {split_name!r}")
    if max_instances is not None:
        idx = idx[:max_instances]
    certs = []
    for i in idx:
        x, y = ds.X[i], ds.Y[i]
        tab = subset_table(model, x, y, t)
        for b in budgets:
            spec = AttackSpec(mu_r=float(b), t=t, method="exact_linear")
            res = gase(model, x, y, spec, rng=instance_rng(seed, int(i)))
            opt = psi_optimum(model, x, y, b, t, table=tab)
            c, S_c, _ = exact_cstar(model, x, y, b, t, table=tab)
            ph = psi(tab, res.S)
            certs.append(Certificate(int(i), float(b), c, S_c, opt.psi_star, ph,
                                     tuple(sorted(res.S)), psi_ratio(ph, opt.psi_star),
                                     tab.rows() if model.m <= TABLE_GUARD else []))
    return certs


def cmd_certify(st: Settings) -> int:
    ds = _load_data(st)
    model = _load_model(st, ds)
    if not isinstance(model, LinearModel):
        raise ConfigError("certify needs a linear model (the exhaustive oracle is exact only there)")
    budgets = st.get("budget", "floats", [1.0])
    population = st.get("population", str, "correct_only")
    if population not in POPULATIONS:
        raise ConfigError(f"[{st.section}] population: unknown population {population!r}")
    certs = certify(model, ds, budgets, st.get("split", str, "test"), st.get("seed", int, 0),
                    st.get("t", float, 1e-3), st.get("max_instances", int, None), population)
    ratios = [c.ratio for c in certs]
    summary = dict(budgets=budgets, n_certificates=len(certs),
                   min_ratio=float(min(ratios)) if ratios else 1.0,
                   violations=int(sum(r < 0.25 for r in ratios)))
    out = Path(st.get("out", str, "certificate.json"))
    write_certificates(certs, out, summary)
    print(f"min ratio {summary['min_ratio']:.4f}, violations {summary['violations']}; wrote {out}")
    return EXIT_OK


def cmd_bounds(st: Settings) -> int:
    ds = _load_data(st)
    model = _load_model(st, ds)
    mu_r = st.get("mu_r", float, 0.0)
    sigma = st.get("sigma", float, 0.05)
    variant = st.get("variant", str, "supp")
    split_name = st.get("split", str, "train")
    if variant not in ("main", "supp", "both"):
        raise ConfigError(f"[{st.section}] variant: expected main, supp or both, got {variant!r}")
    variants = ["main", "supp"] if variant == "both" else [variant]
    if isinstance(model, LinearModel):
        variants = variants[:1]
    reports = [bound(model, ds, mu_r, sigma, v, split_name) for v in variants]
    reports.append(adv_free_bound(model, ds, sigma, variants[-1], split_name))
    out = _out_dir(st, "bounds_out")
    write_reports(reports, out / "bounds.json", out / "bounds.csv")
    for r in reports:
        print(f"{r.kind}: total {r.total:.6g}{' (vacuous)' if r.vacuous else ''}")
    return EXIT_OK


def cmd_report(st: Settings) -> int:
    root = Path(st.get("run_dir", required=True))
    files = sorted(p for p in root.rglob("curve.csv")) if root.is_dir() else []
    if not files:
        raise ConfigError(f"no explore runs (curve.csv) under {str(root)!r}")
    rows = []
    for f in files:
        run = f.parent.relative_to(root).as_posix() or "."
        with open(f, encoding="utf-8", newline="") as fh:
            for r in csv.DictReader(fh):
                rows.append([run, r["budget"], r["method"], r["population"], r["mean_flipped"],
                             r["std"], r["n_instances"]])
    rows.sort(key=lambda r: (r[0], float(r[1]), r[2]))
    out = Path(st.get("out", str, str(root / "report.csv")))
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "budget", "method", "population", "mean_flipped", "std", "n_instances"])
        w.writerows(rows)
    print(f"wrote {out} ({len(rows)} rows from {len(files)} runs)")
    return EXIT_OK


COMMANDS = dict(synth=cmd_synth, train=cmd_train, explore=cmd_explore, certify=cmd_certify,
                bounds=cmd_bounds, report=cmd_report)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mlattack", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True, model=False):
        sp.add_argument("--config", help="INI file; the section named after the command is read")
        sp.add_argument("--seed", type=int, help="random seed (default 0)")
        sp.add_argument("-v", "--verbose", action="store_true", default=None)
        if data:
            sp.add_argument("--data", help="sparse multi-label data file")
            sp.add_argument("--split-seed", type=int, help="seed of the train/val/test split")
            sp.add_argument("--fractions", help="train,val,test fractions (default 0.5,0.3,0.2)")
        if model:
            sp.add_argument("--model", help="model checkpoint")
        return sp

    s = common(sub.add_parser("synth", help="generate a synthetic low-rank data set"), data=False)
    for flag, kind, hlp in [("--n", int, "instances"), ("--d", int, "features"),
                            ("--m", int, "labels"), ("--rank", int, "teacher rank"),
                            ("--noise", float, "label noise level"),
                            ("--label-corr", float, "shared share of the noise"),
                            ("--mu-x", float, "feature norm cap"),
                            ("--feature-decay", float, "per-feature scale ratio")]:
        s.add_argument(flag, type=kind, help=hlp)
    s.add_argument("--out", help="output data file (default data.txt)")
    s.add_argument("--teacher", help="also write the teacher as a linear checkpoint")

    t = common(sub.add_parser("train", help="train a linear or MLP classifier"))
    t.add_argument("--kind", choices=["linear", "mlp"])
    t.add_argument("--hidden", help="hidden widths, e.g. 32,16")
    t.add_argument("--activation", help="hidden activations (tanh, sigmoid, identity)")
    t.add_argument("--loss", choices=["squared_hinge", "logistic"])
    for flag, kind in [("--l2", float), ("--lambda-nuc", float), ("--adv-mu-r", float),
                       ("--adv-fraction", float), ("--epochs", int), ("--lr", float),
                       ("--batch", int), ("--adv-steps", int), ("--workers", int)]:
        t.add_argument(flag, type=kind)
    t.add_argument("--adv-training", action="store_true", default=None)
    t.add_argument("--adv-method", choices=["loss_ascent", "gase"],
                   help="adversarial example generator (default loss_ascent)")
    t.add_argument("--model-out", help="checkpoint path (default model.ckpt)")
    t.add_argument("--manifest", help="run manifest path (default <model-out>.json)")

    def attack_opts(sp):
        sp.add_argument("--attack", choices=list(METHODS), help="targeted attack solver")
        sp.add_argument("--t", type=float, help="label margin (default 1e-3)")
        sp.add_argument("--max-iter", type=int)
        sp.add_argument("--restarts", type=int)
        sp.add_argument("--workers", type=int, help="parallel workers (env MLATK_WORKERS)")
        sp.add_argument("--split", help="train, val, test or all")

    e = common(sub.add_parser("explore", help="attackability curves per exploration method"),
               model=True)
    e.add_argument("--budgets", help="comma-separated L2 budgets")
    e.add_argument("--methods", help="comma-separated subset of " + ",".join(EXPLORERS))
    e.add_argument("--population", choices=list(POPULATIONS))
    e.add_argument("--out", help="output directory (default explore_out)")
    attack_opts(e)

    c = common(sub.add_parser("certify", help="compare GASE with the exhaustive optimum"),
               model=True)
    c.add_argument("--budget", help="one or more comma-separated budgets")
    c.add_argument("--t", type=float)
    c.add_argument("--split")
    c.add_argument("--max-instances", type=int)
    c.add_argument("--population", choices=list(POPULATIONS),
                   help="correct_only (default) or all instances of the split")
    c.add_argument("--out", help="certificate JSON (default certificate.json)")

    b = common(sub.add_parser("bounds", help="evaluate the attackability risk bounds"),
               model=True)
    b.add_argument("--mu-r", type=float)
    b.add_argument("--sigma", type=float)
    b.add_argument("--variant", choices=["main", "supp", "both"])
    b.add_argument("--split")
    b.add_argument("--out", help="output directory (default bounds_out)")

    r = common(sub.add_parser("report", help="merge explore runs into one long CSV"), data=False)
    r.add_argument("--run-dir")
    r.add_argument("--out", help="merged CSV (default <run-dir>/report.csv)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = None
        if args.config:
            cfg = configparser.ConfigParser()
            if not cfg.read(args.config, encoding="utf-8"):
                raise ConfigError(f"--config: cannot read {args.config!r}")
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            return COMMANDS[args.command](Settings(args, cfg, args.command))
    except (TrainingError, AttackError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"mlattack {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, FormatError, CheckpointError, EnumerationGuardError,
            EmptyPopulationError, configparser.Error, OSError, ValueError, TypeError) as exc:
        print(f"mlattack {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
