"""Command-line entry point.

Subcommands: run, train, finetune, eval, calibrate, gen-outliers,
make-data. Exit codes: 0 on success, 1 when a config/parameter/data
validation fails, 2 on any other runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .. import calibration as calib_mod
from .. import density as density_mod
from .. import nn_core
from ..errors import ConfigurationError, DataError, ValidationError
from . import pipeline, reports
from .config import ExperimentConfig, load_config
from .datasets import (
    SequenceDataset,
    write_sequences_csv,
    write_vectors_csv,
)
from .presets import PRESET_NAMES, get_preset


def _resolve_config(value: str) -> ExperimentConfig:
    if value in PRESET_NAMES:
        return get_preset(value)
    return load_config(value)


def _pick_seed(config: ExperimentConfig, args) -> int:
    return int(args.seed) if args.seed is not None else int(config.seeds[0])


def _out_dir(args, default: str) -> Path:
    out = Path(args.out) if args.out else Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _save_model(model, path: Path) -> None:
    if isinstance(model, density_mod.ARModelParams):
        density_mod.save_ar_model(model, path)
    else:
        nn_core.save_params(model, path)


def _load_model(config: ExperimentConfig, path: str):
    if config.detector == "density_bpp":
        return density_mod.load_ar_model(path)
    return nn_core.load_params(path)


def _write_dataset(path: Path, data) -> None:
    if isinstance(data, SequenceDataset):
        write_sequences_csv(path, data)
    else:
        write_vectors_csv(path, data)


def cmd_run(args) -> int:
    config = _resolve_config(args.config)
    if args.seed is not None:
        config.seeds = (int(args.seed),)
        config.validate()
    out = _out_dir(args, f"runs/{config.name}")
    pipeline.run_experiment(config, out_dir=out, quiet=args.quiet)
    if not args.quiet:
        print(f"reports written to {out}")
    return 0


def cmd_train(args) -> int:
    config = _resolve_config(args.config)
    seed = _pick_seed(config, args)
    out = _out_dir(args, f"runs/{config.name}")
    bundle = pipeline.prepare_data(config, seed)
    model = pipeline.train_baseline(config, bundle, seed)
    path = out / f"baseline_seed{seed}.bin"
    _save_model(model, path)
    if not args.quiet:
        print(f"baseline model written to {path}")
    return 0


def cmd_finetune(args) -> int:
    config = _resolve_config(args.config)
    seed = _pick_seed(config, args)
    out = _out_dir(args, f"runs/{config.name}")
    bundle = pipeline.prepare_data(config, seed)
    baseline = _load_model(config, args.params)
    model = pipeline.finetune_oe(config, bundle, baseline, seed)
    path = out / f"finetuned_seed{seed}.bin"
    _save_model(model, path)
    if not args.quiet:
        print(f"fine-tuned model written to {path}")
    return 0


def cmd_eval(args) -> int:
    config = _resolve_config(args.config)
    seed = _pick_seed(config, args)
    out = _out_dir(args, f"runs/{config.name}")
    bundle = pipeline.prepare_data(config, seed)
    model = _load_model(config, args.params)
    rep, pools = pipeline.evaluate_detector(model, config, bundle, seed)
    payload = {name: asdict(r) for name, r in rep.items()}
    (out / f"eval_seed{seed}.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    from ..scoring import write_scores_csv

    for name, pool in pools.items():
        scores = list(pool.in_scores) + list(pool.out_scores)
        flags = [0] * pool.in_scores.size + [1] * pool.out_scores.size
        write_scores_csv(out / f"scores_{name}_seed{seed}.csv", scores, flags)
    if not args.quiet:
        for name, r in rep.items():
            print(f"{name}: auroc={r.auroc:.4f} aupr={r.aupr:.4f} fpr@{r.n_level:g}={r.fpr_at_n:.4f}")
    return 0


def _read_predictions_csv(path: str):
    p = Path(path)
    if not p.exists():
        raise DataError(f"prediction file {p} does not exist")
    records = []
    with p.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{p}: empty prediction file")
        header = [h.strip().lower() for h in header]
        if "confidence" not in header or "correct" not in header:
            raise DataError(f"{p}: prediction files need 'confidence' and 'correct' columns")
        ci, xi = header.index("confidence"), header.index("correct")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                records.append(
                    calib_mod.PredictionRecord(float(row[ci]), bool(int(row[xi])))
                )
            except (ValueError, IndexError) as exc:
                raise DataError(f"{p}:{lineno}: {exc}") from exc
    if not records:
        raise DataError(f"{p}: no prediction rows")
    return records


def cmd_calibrate(args) -> int:
    records = _read_predictions_csv(args.predictions)
    report = calib_mod.report_from_records(records)
    out = _out_dir(args, ".")
    path = out / (Path(args.predictions).stem + "_calibration.json")
    path.write_text(json.dumps(asdict(report), indent=2, sort_keys=True) + "\n")
    if not args.quiet:
        print(f"rms={report.rms_error:.6f} mad={report.mad_error:.6f} soft_f1={report.soft_f1:.6f}")
        print(f"calibration report written to {path}")
    return 0


def cmd_gen_outliers(args) -> int:
    config = _resolve_config(args.config)
    seed = _pick_seed(config, args)
    out = _out_dir(args, f"runs/{config.name}")
    specs = {s.name: s for s in config.d_out_test + config.d_out_val}
    if config.d_out_oe is not None:
        specs[config.d_out_oe.name] = config.d_out_oe
    name = args.name or (config.d_out_oe.name if config.d_out_oe else next(iter(specs)))
    if name not in specs:
        raise ConfigurationError(f"no outlier spec named {name!r}; have {sorted(specs)}")
    spec = specs[name]
    bundle_dim = None
    din = None
    if spec.kind == "generator" and spec.params.get("generator") != "markov_chain":
        bundle = pipeline.prepare_data(config, seed)
        bundle_dim = None if bundle.sequence else bundle.din_train.dim
        din = bundle.din_train
    from .datasets import materialize

    data = materialize(
        spec, n=int(spec.params.get("n", 200)), seed=pipeline._ss(seed, pipeline.ROLE_OE),
        dim=bundle_dim, din=din,
    )
    path = out / f"{name}_seed{seed}.csv"
    _write_dataset(path, data)
    if not args.quiet:
        print(f"{data.n} rows written to {path}")
    return 0


def cmd_make_data(args) -> int:
    config = _resolve_config(args.config)
    seed = _pick_seed(config, args)
    out = _out_dir(args, f"runs/{config.name}")
    bundle = pipeline.prepare_data(config, seed)
    named = {
        "din_train": bundle.din_train,
        "din_val": bundle.din_val,
        "din_test": bundle.din_test,
    }
    if bundle.oe is not None:
        named["oe_" + config.d_out_oe.name] = bundle.oe
    for name, data in bundle.tests.items():
        named["test_" + name] = data
    for name, data in bundle.vals.items():
        named["val_" + name] = data
    for name, data in named.items():
        _write_dataset(out / f"{name}_seed{seed}.csv", data)
    if not args.quiet:
        print(f"{len(named)} dataset files written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oewb",
        description="Outlier-exposure workbench: train, expose, score, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", "-c", required=True,
                           help=f"config JSON path or preset name {PRESET_NAMES}")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", "-o", default=None, help="output directory")
        p.add_argument("--quiet", "-q", action="store_true", help="suppress progress output")

    p = sub.add_parser("run", help="full multi-seed pipeline with reports")
    common(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("train", help="train the baseline model for one seed")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("finetune", help="exposure fine-tune a saved baseline")
    common(p)
    p.add_argument("--params", required=True, help="saved baseline model file")
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("eval", help="score and report a saved model")
    common(p)
    p.add_argument("--params", required=True, help="saved model file")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("calibrate", help="calibration report from a prediction CSV")
    p.add_argument("predictions", help="CSV with 'confidence' and 'correct' columns")
    common(p, needs_config=False)
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("gen-outliers", help="materialize one outlier spec to CSV")
    common(p)
    p.add_argument("--name", default=None, help="outlier spec name (default: the auxiliary set)")
    p.set_defaults(fn=cmd_gen_outliers)

    p = sub.add_parser("make-data", help="materialize every dataset in the config to CSV")
    common(p)
    p.set_defaults(fn=cmd_make_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 2
    except Exception as exc:  # runtime failure, distinct from bad input
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
