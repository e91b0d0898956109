"""Report emission: per-seed CSVs, mean-over-seeds summaries, curve points.

Everything written here is a pure function of the experiment result, with
fixed row order, repr-formatted floats, and "\n" line endings, so a rerun
of the same config produces byte-identical files. Display rounding (one
decimal of a percent, saturating at "100.") is applied only in the
rendered table; CSV and JSON keep full precision.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict
from pathlib import Path

from ..metrics import pr_points, roc_points
from ..scoring import write_scores_csv
from .pipeline import ExperimentResult


def display_percent(value: float) -> str:
    """Fraction -> table cell: one decimal of a percent, half-up, and
    anything reaching 100.0 renders as "100." exactly."""
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"display_percent expects a fraction, got {value}")
    tenths = math.floor(value * 1000.0 + 0.5)
    if tenths >= 1000:
        return "100."
    return f"{tenths // 10}.{tenths % 10}"


_CSV_FIELDS = ["auroc", "aupr", "fpr_at_n", "n_level", "base_rate"]


def _per_seed_rows(exp: ExperimentResult):
    cfg = exp.config
    for sr in exp.seed_results:
        for phase in ("baseline", "final"):
            for spec in cfg.d_out_test:
                rep = sr.reports[phase][spec.name]
                yield [
                    sr.seed, phase, cfg.d_in.name, spec.name, cfg.detector, cfg.pipeline,
                    repr(rep.auroc), repr(rep.aupr), repr(rep.fpr_at_n),
                    repr(rep.n_level), rep.base_rate,
                ]


def write_per_seed_csv(path, exp: ExperimentResult) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "phase", "d_in", "d_out", "detector", "pipeline", *_CSV_FIELDS])
        for row in _per_seed_rows(exp):
            w.writerow(row)


def write_summary_csv(path, exp: ExperimentResult) -> None:
    cfg = exp.config
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["phase", "d_in", "d_out", "detector", "pipeline",
                    "auroc", "aupr", "fpr_at_n", "n_level", "base_rate", "n_seeds"])
        for phase in ("baseline", "final"):
            for spec in cfg.d_out_test:
                cell = exp.summary[phase][spec.name]
                w.writerow([
                    phase, cfg.d_in.name, spec.name, cfg.detector, cfg.pipeline,
                    repr(cell["auroc"]), repr(cell["aupr"]), repr(cell["fpr_at_n"]),
                    repr(cell["n_level"]), cell["base_rate"], cell["n_seeds"],
                ])


def summary_payload(exp: ExperimentResult) -> dict:
    cfg = exp.config
    per_seed = []
    for sr in exp.seed_results:
        entry = {
            "seed": sr.seed,
            "reports": {
                phase: {name: asdict(rep) for name, rep in phase_reports.items()}
                for phase, phase_reports in sr.reports.items()
            },
        }
        if sr.train_accuracy is not None:
            entry["train_accuracy"] = sr.train_accuracy
        if sr.calibration is not None:
            entry["calibration"] = {k: asdict(v) for k, v in sr.calibration.items()}
        per_seed.append(entry)
    return {"config": cfg.to_dict(), "summary": exp.summary, "per_seed": per_seed}


def render_table(exp: ExperimentResult) -> str:
    cfg = exp.config
    lines = [
        f"{cfg.name}: detector={cfg.detector} pipeline={cfg.pipeline} "
        f"seeds={len(cfg.seeds)} base_rate={cfg.base_rate[0]}:{cfg.base_rate[1]}",
        f"{'phase':<9} {'d_out':<22} {'AUROC':>6} {'AUPR':>6} {'FPR@' + repr(cfg.n_level):>9}",
    ]
    for phase in ("baseline", "final"):
        for spec in cfg.d_out_test:
            cell = exp.summary[phase][spec.name]
            lines.append(
                f"{phase:<9} {spec.name:<22} "
                f"{display_percent(cell['auroc']):>6} "
                f"{display_percent(cell['aupr']):>6} "
                f"{display_percent(cell['fpr_at_n']):>9}"
            )
    return "\n".join(lines) + "\n"


def write_curves(out_dir: Path, exp: ExperimentResult) -> None:
    curve_dir = out_dir / "curves"
    curve_dir.mkdir(parents=True, exist_ok=True)
    for sr in exp.seed_results:
        for name, pool in sr.pools.items():
            for stem, (xs, ys), cols in (
                ("roc", roc_points(pool), ("fpr", "tpr")),
                ("pr", pr_points(pool), ("recall", "precision")),
            ):
                path = curve_dir / f"{stem}_{name}_seed{sr.seed}.csv"
                with path.open("w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(cols)
                    for a, b in zip(xs, ys):
                        w.writerow([repr(float(a)), repr(float(b))])


def write_score_files(out_dir: Path, exp: ExperimentResult) -> None:
    score_dir = out_dir / "scores"
    score_dir.mkdir(parents=True, exist_ok=True)
    for sr in exp.seed_results:
        for name, pool in sr.pools.items():
            scores = list(pool.in_scores) + list(pool.out_scores)
            flags = [0] * pool.in_scores.size + [1] * pool.out_scores.size
            write_scores_csv(score_dir / f"{name}_seed{sr.seed}.csv", scores, flags)


def write_reports(out_dir, exp: ExperimentResult) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_per_seed_csv(out / "per_seed.csv", exp)
    write_summary_csv(out / "summary.csv", exp)
    (out / "summary.json").write_text(
        json.dumps(summary_payload(exp), indent=2, sort_keys=True) + "\n"
    )
    (out / "config_resolved.json").write_text(
        json.dumps(exp.config.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    (out / "table.txt").write_text(render_table(exp))
    write_curves(out, exp)
    write_score_files(out, exp)
    for sr in exp.seed_results:
        if sr.calibration is not None:
            payload = {k: asdict(v) for k, v in sr.calibration.items()}
            (out / f"calibration_seed{sr.seed}.json").write_text(
                json.dumps(payload, indent=2, sort_keys=True) + "\n"
            )
