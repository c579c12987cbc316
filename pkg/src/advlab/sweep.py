"""Sample-size sweeps: one training run per ``(n, seed)``, evaluated on fresh data.

Rows are written in a fixed order through a single writer and flushed after
each run, so a crash leaves every completed row on disk.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import bounds
from .config import attack_config, dump, train_config
from .data import PosteriorSpec, make_holder_target, sample_classification, sample_regression
from .errors import InvariantViolation
from .losses import hinge, quadratic
from .nn import Architecture
from .report import emit_svg, fit_slope, mean_by
from .risk import adversarial_risk_lower, l2_sq_distance, sandwich, w1_worst_case_upper, zero_one_adversarial
from .train import adv_train, as_model

SCHEMA_VERSION = "v1"
COLUMNS = (
    "schema_version", "task", "seed", "n", "d", "alpha", "eps", "K", "W", "L", "loss", "attack",
    "natural", "adv_lower", "adv_upper", "reference", "excess_adv", "l2_sq", "l2_sq_se", "kappa",
    "w1_upper", "zero_one_adv", "below_width_floor", "status", "seconds",
)
WALL_CLOCK = ("seconds",)
EVAL_SEED_OFFSET = 1_000_003


def theory_task(task: str) -> str:
    return "quadratic" if task == "regression_quadratic" else "lipschitz"


def run_eps(cfg: SimpleNamespace, n: int) -> float:
    if cfg.sweep.eps_rule == "fixed":
        return cfg.data.eps
    return bounds.eps_schedule(n, cfg.data.d, cfg.data.alpha, theory_task(cfg.data.task), cfg.sweep.eps_const)


def plan(cfg: SimpleNamespace, n: int):
    """``(K, hidden widths, below_floor flag)`` for a run of size ``n``."""
    d, a = cfg.data.d, cfg.data.alpha
    if cfg.sweep.use_schedule and not cfg.model.hidden:
        choice = bounds.architecture_for(n, d, a, theory_task(cfg.data.task), cfg.model.c_K, cfg.model.c_WL,
                                         cfg.model.width_const)
        return max(1.0, choice.K), (choice.W,) * choice.L, choice.below_floor
    return cfg.model.K, cfg.model.hidden or (8, 8), False


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_single(cfg: SimpleNamespace, n: int, seed: int) -> dict:
    """Train and evaluate one ``(n, seed)`` cell; failures become a status string."""
    start = time.perf_counter()
    d, alpha, task = cfg.data.d, cfg.data.alpha, cfg.data.task
    eps = run_eps(cfg, n)
    K, hidden, below = plan(cfg, n)
    row = {c: "" for c in COLUMNS}
    row.update(schema_version=SCHEMA_VERSION, task=task, seed=seed, n=n, d=d, alpha=alpha, eps=eps, K=K,
               W=max(hidden), L=len(hidden), below_width_floor=int(below))
    try:
        target = make_holder_target(d, alpha, cfg.data.J, cfg.data.target_seed)
        if task == "classification_hinge":
            post = PosteriorSpec(cfg.data.margin, d, base=target)
            train_data = sample_classification(post, n, eps, seed)
            eval_data = sample_classification(post, cfg.data.n_eval, eps, seed + EVAL_SEED_OFFSET)
        else:
            train_data = sample_regression(target, cfg.data.sigma, n, eps, seed)
            eval_data = sample_regression(target, cfg.data.sigma, cfg.data.n_eval, eps, seed + EVAL_SEED_OFFSET)
        clamp = cfg.train.clamp
        loss = quadratic(clamp if clamp else 1.0) if task == "regression_quadratic" else hinge()
        tcfg = train_config(cfg, K=K, eps=eps, seed=seed)
        params, _ = adv_train(train_data, Architecture(d, hidden), tcfg, loss, eval_each_epoch=False)
        model = as_model(params, clamp)
        attack = attack_config(cfg, eps)
        if loss.kind == "quadratic" and clamp is None:
            # the quadratic Lipschitz constant needs a bound on the predictions
            loss = quadratic(max(1.0, float(np.abs(model.predict(eval_data.X)).max()) + K * eps))
        rep = sandwich(model, loss, eval_data, eps, attack)
        if rep.kappa > K * (1 + 1e-9) and tcfg.project:
            raise InvariantViolation(f"kappa {rep.kappa} exceeds K={K}")
        reference = adversarial_risk_lower(target, loss, eval_data, attack) if task != "classification_hinge" else float("nan")
        l2, l2_se = l2_sq_distance(model, target, cfg.data.n_eval, eps, seed + 2 * EVAL_SEED_OFFSET)
        row.update(
            loss=loss.describe(), attack=attack.describe(), natural=rep.natural, adv_lower=rep.adv_lower,
            adv_upper=rep.adv_upper, reference=reference,
            excess_adv=rep.adv_lower - reference if math.isfinite(reference) else float("nan"),
            l2_sq=l2, l2_sq_se=l2_se, kappa=rep.kappa, w1_upper=w1_worst_case_upper(rep, loss, K, eps),
            zero_one_adv=zero_one_adversarial(model, eval_data, attack) if task == "classification_hinge" else float("nan"),
            status="ok",
        )
    except Exception as exc:  # recorded per run; the sweep keeps going
        row["status"] = f"error: {type(exc).__name__}: {exc}"
    row["seconds"] = round(time.perf_counter() - start, 3)
    return row


def _cell(args):
    cfg, n, seed = args
    return run_single(cfg, n, seed)


def validate_row(row: dict, tol: float = 1e-9):
    if row["status"] != "ok":
        return
    if not (row["natural"] <= row["adv_lower"] + tol and row["adv_lower"] <= row["adv_upper"] + tol):
        raise InvariantViolation(f"sandwich ordering broken in run n={row['n']} seed={row['seed']}")
    if row["kappa"] > row["K"] * (1 + tol):
        raise InvariantViolation(f"kappa above budget in run n={row['n']} seed={row['seed']}")


def run_sweep(cfg: SimpleNamespace, out_dir, threads: int = 1, name: str = "sweep") -> dict:
    """Run every ``(n, seed)`` cell and write ``<name>.csv``, ``<name>.json`` and ``<name>.svg``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = [(cfg, n, s) for n in cfg.sweep.n_list for s in cfg.sweep.seeds]
    if len(cells) > cfg.sweep.max_runs:
        raise ValueError(f"{len(cells)} runs exceed sweep.max_runs={cfg.sweep.max_runs}")
    csv_path = out / f"{name}.csv"
    start = time.perf_counter()
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        fh.flush()
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                rows = pool.map(_cell, cells)
                for row in rows:
                    _write(writer, fh, row)
        else:
            for cell in cells:
                _write(writer, fh, _cell(cell))
    summary = summarize(cfg, csv_path)
    summary["seconds"] = round(time.perf_counter() - start, 3)
    summary["config"] = dump(cfg)
    (out / f"{name}.json").write_text(json.dumps(summary, indent=1, sort_keys=True, default=str))
    return summary


def _write(writer, fh, row):
    validate_row(row)
    writer.writerow([_fmt(row[c]) for c in COLUMNS])
    fh.flush()


def summarize(cfg: SimpleNamespace, csv_path) -> dict:
    from .report import read_rows

    rows = [r for r in read_rows(csv_path) if r["status"] == "ok"]
    ex = bounds.rate_exponents(cfg.data.d, cfg.data.alpha)
    task = cfg.data.task
    y_col = "l2_sq" if task == "regression_quadratic" else "excess_adv"
    theory = -float(ex.r2) if task == "regression_quadratic" else -float(ex.r1)
    summary = {
        "csv": str(csv_path), "runs": len(read_rows(csv_path)), "ok_runs": len(rows),
        "y_col": y_col, "theory_slope": theory,
    }
    try:
        slope, intercept, stderr = fit_slope(rows, "n", y_col)[None]
        summary.update(slope=slope, intercept=intercept, stderr=stderr)
        xs, ys = mean_by(rows, "n", y_col)
        keep = ys > 0
        emit_svg([{"label": f"{y_col} (slope {slope:.3f}, theory {theory:.3f})", "x": xs[keep], "y": ys[keep],
                   "fit": (slope, intercept)}], Path(csv_path).with_suffix(".svg"), title=task, y_label=y_col)
    except ValueError as exc:
        summary["fit_error"] = str(exc)
    return summary


def read_numeric(csv_path, drop=WALL_CLOCK) -> list:
    """Rows with wall-clock columns removed, for determinism comparisons."""
    from .report import read_rows

    return [{k: v for k, v in r.items() if k not in drop} for r in read_rows(csv_path)]
