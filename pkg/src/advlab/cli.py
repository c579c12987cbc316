"""Command line entry point: ``advlab verify|train|risk|sweep|rates|equiv``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import bounds
from .config import attack_config, load_config, train_config
from .data import PosteriorSpec, make_holder_target, sample_classification, sample_regression
from .losses import hinge, quadratic
from .nn import Architecture, load_params, random_params
from .risk import sandwich, w1_worst_case_upper
from .sweep import EVAL_SEED_OFFSET, plan, run_eps, run_sweep
from .train import adv_train, as_model, save_checkpoint
from .transport import random_instance, verify_equivalence
from .verify import FAULTS, format_report, report_json, run_verify


def _emit(rows: list[dict], fmt: str, out=None) -> str:
    if fmt == "json":
        text = json.dumps(rows, indent=1, sort_keys=True, default=str)
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        text = buf.getvalue().rstrip("\n")
    if out is not None:
        Path(out).write_text(text + "\n")
    return text


def _data_for(cfg, n, seed, eps):
    target = make_holder_target(cfg.data.d, cfg.data.alpha, cfg.data.J, cfg.data.target_seed)
    if cfg.data.task == "classification_hinge":
        post = PosteriorSpec(cfg.data.margin, cfg.data.d, base=target)
        return target, sample_classification(post, n, eps, seed), hinge()
    loss = quadratic(cfg.train.clamp or 1.0) if cfg.data.task == "regression_quadratic" else hinge()
    return target, sample_regression(target, cfg.data.sigma, n, eps, seed), loss


def cmd_verify(args, cfg) -> int:
    suites = tuple(args.suite) if args.suite else cfg.verify.suites
    seed = cfg.verify.seed if args.seed is None else args.seed
    status, report = run_verify(suites, seed=seed, scale=cfg.verify.scale, faults=tuple(args.inject or ()))
    print(format_report(report))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "verify.json").write_text(report_json(report) + "\n")
    print("all suites passed" if status == 0 else "some suites FAILED")
    return status


def _train(cfg, seed, n=None):
    n = cfg.data.n if n is None else n
    eps = run_eps(cfg, n)
    K, hidden, _ = plan(cfg, n)
    target, data, loss = _data_for(cfg, n, seed, eps)
    tcfg = train_config(cfg, K=K, eps=eps, seed=seed)
    params, hist = adv_train(data, Architecture(cfg.data.d, hidden), tcfg, loss)
    return params, hist, tcfg, eps, loss


def cmd_train(args, cfg) -> int:
    seed = cfg.train.seed if args.seed is None else args.seed
    params, hist, tcfg, eps, _ = _train(cfg, seed)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, tcfg, out / "checkpoint.json")
    hist.to_csv(out / "history.csv")
    rows = [{"epoch": r["epoch"], "adv_risk_est": r["adv_risk_est"], "nat_risk": r["nat_risk"],
             "kappa": r["kappa"]} for r in hist.records]
    print(_emit(rows, args.format))
    print(f"checkpoint written to {out / 'checkpoint.json'} (trajectory {hist.trajectory_hash[:16]})")
    return 0


def cmd_risk(args, cfg) -> int:
    seed = cfg.train.seed if args.seed is None else args.seed
    if args.checkpoint:
        params = load_params(args.checkpoint)
        eps = cfg.data.eps
        K = float(params.lipschitz_bound())
        _, _, loss = _data_for(cfg, 1, seed, eps)
    else:
        params, _, tcfg, eps, loss = _train(cfg, seed)
        K = tcfg.K
    _, eval_data, _ = _data_for(cfg, cfg.data.n_eval, seed + EVAL_SEED_OFFSET, eps)
    model = as_model(params, cfg.train.clamp)
    if loss.kind == "quadratic" and cfg.train.clamp is None:
        loss = quadratic(max(1.0, float(np.abs(model.predict(eval_data.X)).max()) + K * eps))
    rep = sandwich(model, loss, eval_data, eps, attack_config(cfg, eps))
    row = {**rep.to_dict(), "w1_upper": w1_worst_case_upper(rep, loss, K, eps)}
    print(_emit([row], args.format, Path(args.out) / f"risk.{args.format}" if args.out else None))
    return 0


def cmd_sweep(args, cfg) -> int:
    if args.seed is not None:
        cfg.sweep.seeds = (args.seed,)
    summary = run_sweep(cfg, args.out or "results", threads=args.threads)
    keys = ("runs", "ok_runs", "y_col", "slope", "stderr", "theory_slope", "seconds", "fit_error")
    print(_emit([{k: summary[k] for k in keys if k in summary}], args.format))
    return 0 if summary["ok_runs"] == summary["runs"] else 1


def rates_table(d: int, alpha, n_list) -> list[dict]:
    ex = bounds.rate_exponents(d, alpha)
    rows = []
    for n in n_list:
        row = {"d": d, "alpha": str(ex.alpha), "n": n, "gamma": ex.gamma, "c": ex.c,
               "r1": str(ex.r1), "r2": str(ex.r2), "r3": str(ex.r3), "r4": str(ex.r4), "r5": str(ex.r5),
               "xi": str(ex.xi), "lambda": str(ex.lam), "en_exp": str(ex.en_exponent)}
        for task in bounds.TASKS:
            K, WL = bounds.schedule(n, d, ex.alpha, task)
            row[f"K_{task}"] = f"{float(K):.6g}"
            row[f"WL_{task}"] = f"{float(WL):.6g}"
        rows.append(row)
    return rows


def cmd_rates(args, cfg) -> int:
    d = args.d or cfg.data.d
    alpha = args.alpha or cfg.data.alpha
    n_list = tuple(args.n) if args.n else cfg.sweep.n_list
    rows = rates_table(d, alpha, n_list)
    fmt = args.format
    if fmt == "csv" and not args.out and sys.stdout.isatty():
        fmt = "text"
    if fmt == "text":
        cols = list(rows[0])
        widths = [max(len(c), *(len(str(r[c])) for r in rows)) for c in cols]
        print("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
        for r in rows:
            print("  ".join(str(r[c]).ljust(w) for c, w in zip(cols, widths)))
    else:
        print(_emit(rows, fmt, Path(args.out) / f"rates.{fmt}" if args.out else None))
    return 0


def cmd_equiv(args, cfg) -> int:
    seed = cfg.verify.seed if args.seed is None else args.seed
    rng = np.random.default_rng([seed, 7])
    trials = max(1, int(100 * cfg.verify.scale))
    rows = []
    for i in range(trials):
        inst = random_instance(rng)
        p = random_params(Architecture(1, (int(rng.integers(1, 5)),)), rng, scale=2.0)
        equal, lhs, rhs = verify_equivalence(inst, p, hinge())
        rows.append({"instance": i, "atoms": len(inst.P.atoms), "eps": str(inst.eps), "pointwise": float(lhs),
                     "distributional": float(rhs), "equal": bool(equal)})
    failures = sum(not r["equal"] for r in rows)
    for r in rows:
        print(f"{'PASS' if r['equal'] else 'FAIL'}  #{r['instance']:<3} atoms={r['atoms']} eps={r['eps']:<5} "
              f"risk={r['pointwise']:.6f}")
    print(f"{trials - failures}/{trials} instances equal")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "equiv.json").write_text(json.dumps({"instances": rows, "failures": failures}, indent=1))
    return 0 if failures == 0 else 1


COMMANDS = {
    "verify": cmd_verify, "train": cmd_train, "risk": cmd_risk,
    "sweep": cmd_sweep, "rates": cmd_rates, "equiv": cmd_equiv,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="advlab", description="Adversarial training laboratory")
    ap.add_argument("command", choices=list(COMMANDS))
    ap.add_argument("--config", help="INI experiment configuration")
    ap.add_argument("--seed", type=int, help="override the configured seed")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("--format", choices=("csv", "json", "text"), default="csv")
    ap.add_argument("--suite", action="append", help="verify: run only this suite (repeatable)")
    ap.add_argument("--inject", action="append", choices=FAULTS, help="verify: inject a fault")
    ap.add_argument("--checkpoint", help="risk: evaluate a saved network instead of training")
    ap.add_argument("--d", type=int, help="rates: input dimension")
    ap.add_argument("--alpha", type=float, help="rates: smoothness")
    ap.add_argument("--n", type=int, action="append", help="rates: sample size (repeatable)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (OSError, ValueError) as exc:
        print(f"advlab: {exc}", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("advlab: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args, cfg)
    except ValueError as exc:
        print(f"advlab: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
