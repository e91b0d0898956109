"""Seeded experiment execution: data preparation, training, scoring, reports.

Seeds are fully independent; every random draw inside one seed flows from
np.random.SeedSequence([seed, *role]) with a fixed role id per purpose, so
any stage can be recomputed in isolation and reruns are bit-identical.
Test outlier sets influence nothing upstream of final evaluation; the
validation outlier sets are the only sets hyperparameter selection may read.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import calibration as calib_mod
from .. import density as density_mod
from .. import metrics as metrics_mod
from .. import nn_core
from .. import scoring as scoring_mod
from ..errors import ConfigurationError, DataError
from ..objectives import ObjectiveSpec
from .config import ExperimentConfig
from .datasets import SequenceDataset, VectorDataset, check_disjoint, materialize

# Role ids for seed derivation. Never renumber: stored artifacts depend on them.
ROLE_DIN = 0
ROLE_SPLIT = 1
ROLE_OE = 3
ROLE_TEST = 4
ROLE_VAL = 5
ROLE_INIT = 10
ROLE_TRAIN_SHUFFLE = 11
ROLE_FINETUNE_SHUFFLE = 12
ROLE_SCRATCH_SHUFFLE = 13
ROLE_BASE_RATE = 20
ROLE_VAL_BASE_RATE = 21
ROLE_CALIBRATION = 30


def _ss(seed: int, *role) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed)] + [int(r) for r in role])


@dataclass
class DataBundle:
    din_train: object
    din_val: object
    din_test: object
    oe: object | None
    tests: dict
    vals: dict
    n_classes: int | None = None

    @property
    def sequence(self) -> bool:
        return isinstance(self.din_train, SequenceDataset)


def _spec_n(spec, default: int = 200) -> int:
    return int(spec.params.get("n", default))


def prepare_data(config: ExperimentConfig, seed: int) -> DataBundle:
    """Materialize and split every dataset the config names, then refuse to
    continue if any auxiliary outlier row reappears in a test outlier set."""
    config.validate()
    din = materialize(config.d_in, n=config.d_in.params.get("n"), seed=_ss(seed, ROLE_DIN))
    n = din.n
    order = np.random.default_rng(_ss(seed, ROLE_SPLIT)).permutation(n)
    n_train = int(round(0.7 * n))
    n_val = int(round(0.15 * n))
    if n_train == 0 or n_val == 0 or n_train + n_val >= n:
        raise DataError(f"{n} in-distribution rows are too few to split")
    din_train = din.subset(order[:n_train])
    din_val = din.subset(order[n_train : n_train + n_val])
    din_test = din.subset(order[n_train + n_val :])

    dim = None if isinstance(din, SequenceDataset) else din.dim
    oe = None
    if config.d_out_oe is not None:
        oe = materialize(
            config.d_out_oe, n=_spec_n(config.d_out_oe, 2000), seed=_ss(seed, ROLE_OE),
            dim=dim, din=din_train,
        )
    tests = {}
    for i, spec in enumerate(config.d_out_test):
        tests[spec.name] = materialize(
            spec, n=_spec_n(spec), seed=_ss(seed, ROLE_TEST, i), dim=dim, din=din_train
        )
        if oe is not None:
            check_disjoint(oe, tests[spec.name], config.d_out_oe.name, spec.name)
    vals = {}
    for i, spec in enumerate(config.d_out_val):
        vals[spec.name] = materialize(
            spec, n=_spec_n(spec), seed=_ss(seed, ROLE_VAL, i), dim=dim, din=din_train
        )

    wants_sequences = config.detector == "density_bpp"
    for name, data in [("d_in", din), ("d_out_oe", oe), *tests.items(), *vals.items()]:
        if data is None:
            continue
        if isinstance(data, SequenceDataset) != wants_sequences:
            kind = "sequence" if wants_sequences else "vector"
            raise ConfigurationError(f"detector {config.detector!r} needs {kind} data, but {name!r} is not")

    n_classes = None
    if isinstance(din, VectorDataset) and din.labels is not None:
        n_classes = int(din.labels.max()) + 1
        if n_classes < 2:
            raise ConfigurationError("classification needs at least two classes")
    return DataBundle(din_train, din_val, din_test, oe, tests, vals, n_classes)


# ---------------------------------------------------------------------------
# Training


def _classifier_objective(config: ExperimentConfig, *, exposed: bool) -> ObjectiveSpec:
    if config.detector == "confidence_branch":
        return ObjectiveSpec("confidence_branch_oe", lam=config.lam if exposed else 0.0)
    return ObjectiveSpec("multiclass_oe", lam=config.lam if exposed else 0.0)


def _train_classifier(
    params: nn_core.NetworkParams,
    train_data: VectorDataset,
    oe_data,
    objective: ObjectiveSpec,
    *,
    epochs: int,
    lr0: float,
    model_settings,
    shuffle_seed,
) -> nn_core.NetworkParams:
    X, y = train_data.features, train_data.labels
    if y is None:
        raise DataError("classifier training needs labeled in-distribution data")
    n = X.shape[0]
    bs = min(int(model_settings.batch_size), n)
    steps_per_epoch = (n + bs - 1) // bs
    state = nn_core.init_optimizer(
        params, lr0, total_steps=epochs * steps_per_epoch,
        momentum=model_settings.momentum, weight_decay=model_settings.weight_decay,
    )
    rng = np.random.default_rng(shuffle_seed)
    use_oe = objective.lam > 0
    if use_oe:
        if oe_data is None:
            raise ConfigurationError("exposure training needs auxiliary outlier data")
        oe_X = oe_data.features
        oe_order = rng.permutation(oe_X.shape[0])
        oe_ptr = 0
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, bs):
            idx = perm[start : start + bs]
            in_batch = nn_core.Batch(X[idx], y[idx])
            oe_batch = None
            if use_oe:
                take = idx.size
                sel = (oe_ptr + np.arange(take)) % oe_X.shape[0]
                oe_ptr = int((oe_ptr + take) % oe_X.shape[0])
                oe_batch = nn_core.Batch(oe_X[oe_order[sel]])
            g = nn_core.grad(params, objective, in_batch, oe_batch)
            params, state = nn_core.sgd_step(params, g, state)
    return params


def _init_classifier(config: ExperimentConfig, bundle: DataBundle, seed: int) -> nn_core.NetworkParams:
    dims = (bundle.din_train.dim, *config.model.hidden_dims, bundle.n_classes)
    return nn_core.init_network(
        dims, seed=_ss(seed, ROLE_INIT), activation=config.model.activation,
        with_branch=config.detector == "confidence_branch",
    )


def train_baseline(config: ExperimentConfig, bundle: DataBundle, seed: int):
    """In-distribution-only training (λ = 0); the starting point every
    exposure pipeline shares."""
    if config.detector == "density_bpp":
        model = density_mod.init_ar_model(
            bundle.din_train.alphabet_size, config.model.context_window,
            config.model.hidden_dims, seed=_ss(seed, ROLE_INIT), activation=config.model.activation,
        )
        return density_mod.train_density(
            model, bundle.din_train.sequences,
            epochs=config.epochs, batch_size=config.model.batch_size, lr0=config.model.lr0,
            momentum=config.model.momentum, weight_decay=config.model.weight_decay,
            seed=_ss(seed, ROLE_TRAIN_SHUFFLE),
        )
    params = _init_classifier(config, bundle, seed)
    return _train_classifier(
        params, bundle.din_train, None, _classifier_objective(config, exposed=False),
        epochs=config.epochs, lr0=config.model.lr0, model_settings=config.model,
        shuffle_seed=_ss(seed, ROLE_TRAIN_SHUFFLE),
    )


def finetune_oe(config: ExperimentConfig, bundle: DataBundle, baseline, seed: int, lam=None):
    """Exposure fine-tuning from a trained baseline at the fine-tune rate."""
    if config.finetune_epochs == 0:
        return baseline
    if config.detector == "density_bpp":
        return density_mod.finetune_density_oe(
            baseline, bundle.din_train.sequences, bundle.oe.sequences,
            margin=config.model.margin, epochs=config.finetune_epochs,
            batch_size=config.model.batch_size, lr0=config.model.finetune_lr0,
            momentum=config.model.momentum, weight_decay=config.model.weight_decay,
            mle_weight=config.model.mle_weight, margin_weight=config.model.margin_weight,
            seed=_ss(seed, ROLE_FINETUNE_SHUFFLE),
        )
    objective = _classifier_objective(config, exposed=True)
    if lam is not None:
        objective = ObjectiveSpec(objective.kind, lam=float(lam))
    return _train_classifier(
        baseline.copy(), bundle.din_train, bundle.oe, objective,
        epochs=config.finetune_epochs, lr0=config.model.finetune_lr0,
        model_settings=config.model, shuffle_seed=_ss(seed, ROLE_FINETUNE_SHUFFLE),
    )


def train_scratch_oe(config: ExperimentConfig, bundle: DataBundle, seed: int):
    """Exposure training from random init for the full epoch budget."""
    total_epochs = config.epochs + config.finetune_epochs
    if config.detector == "density_bpp":
        model = density_mod.init_ar_model(
            bundle.din_train.alphabet_size, config.model.context_window,
            config.model.hidden_dims, seed=_ss(seed, ROLE_INIT), activation=config.model.activation,
        )
        # The paired margin objective already carries the MLE term, so
        # training it from scratch is the simultaneous form.
        return density_mod.finetune_density_oe(
            model, bundle.din_train.sequences, bundle.oe.sequences,
            margin=config.model.margin, epochs=total_epochs,
            batch_size=config.model.batch_size, lr0=config.model.lr0,
            momentum=config.model.momentum, weight_decay=config.model.weight_decay,
            mle_weight=config.model.mle_weight, margin_weight=config.model.margin_weight,
            seed=_ss(seed, ROLE_SCRATCH_SHUFFLE),
        )
    params = _init_classifier(config, bundle, seed)
    return _train_classifier(
        params, bundle.din_train, bundle.oe, _classifier_objective(config, exposed=True),
        epochs=total_epochs, lr0=config.model.lr0, model_settings=config.model,
        shuffle_seed=_ss(seed, ROLE_SCRATCH_SHUFFLE),
    )


def classifier_accuracy(params: nn_core.NetworkParams, data: VectorDataset) -> float:
    logits, _ = nn_core.forward(params, data.features)
    return float(np.mean(np.argmax(logits, axis=1) == data.labels))


# ---------------------------------------------------------------------------
# Evaluation


def _raw(data) -> np.ndarray:
    return data.sequences if isinstance(data, SequenceDataset) else data.features


def evaluate_detector(model, config: ExperimentConfig, bundle: DataBundle, seed: int,
                      detector: str | None = None, outlier_sets: dict | None = None,
                      base_rate_role: int = ROLE_BASE_RATE):
    """Scored base-rate pools and detection reports for every outlier set.

    Returns (reports, pools) keyed by set name; the subsample that fixes
    the out:in ratio is seeded per set, so baseline and fine-tuned models
    are compared on identical example pools.
    """
    kind = detector or config.detector
    sets = bundle.tests if outlier_sets is None else outlier_sets
    in_scores = scoring_mod.score_dataset(model, kind, _raw(bundle.din_test))
    reports, pools = {}, {}
    for i, (name, data) in enumerate(sets.items()):
        out_scores = scoring_mod.score_dataset(model, kind, _raw(data))
        pool = metrics_mod.enforce_base_rate(
            in_scores, out_scores, ratio=config.base_rate, seed=_ss(seed, base_rate_role, i)
        )
        reports[name] = metrics_mod.detection_report(pool, config.n_level)
        pools[name] = pool
    return reports, pools


def select_lambda(config: ExperimentConfig, bundle: DataBundle, baseline, seed: int,
                  candidates=(0.0, 0.1, 0.5, 1.0, 2.0)):
    """Pick λ by mean AUROC on the validation outlier sets only. Test
    outlier sets are never consulted here."""
    if not bundle.vals:
        raise ConfigurationError("lambda selection needs at least one validation outlier set")
    table = {}
    for lam in candidates:
        tuned = finetune_oe(config, bundle, baseline, seed, lam=lam)
        reports, _ = evaluate_detector(
            tuned, config, bundle, seed, outlier_sets=bundle.vals, base_rate_role=ROLE_VAL_BASE_RATE
        )
        table[float(lam)] = float(np.mean([r.auroc for r in reports.values()]))
    best = max(table, key=lambda lam: (table[lam], -lam))
    return best, table


def _confidences(params, data: VectorDataset, temperature: float):
    logits, _ = nn_core.forward(params, data.features)
    probs = nn_core.softmax(logits, temperature=temperature)
    conf = probs.max(axis=1)
    correct = np.argmax(logits, axis=1) == data.labels
    return conf, correct


def calibration_eval(config: ExperimentConfig, bundle: DataBundle, baseline, final, seed: int) -> dict:
    """Mixed-pool calibration comparison: baseline model with a tuned
    temperature, exposure-trained model with its own tuned temperature,
    and the latter after rescaling confidences to the [1/k, 1] -> [0, 1]
    posterior range. The pool mixes in-distribution test rows with pooled
    test outliers at equal counts; outliers count as incorrect."""
    if bundle.din_val.labels is None or bundle.din_test.labels is None:
        raise DataError("calibration needs labeled in-distribution splits")
    k = bundle.n_classes
    ood_rows = np.concatenate([_raw(d) for d in bundle.tests.values()], axis=0)
    out = {}
    for tag, model in (("baseline", baseline), ("final", final)):
        val_logits, _ = nn_core.forward(model, bundle.din_val.features)
        temp = calib_mod.tune_temperature(val_logits, bundle.din_val.labels)
        conf_in, correct = _confidences(model, bundle.din_test, temp)
        ood_logits, _ = nn_core.forward(model, ood_rows)
        conf_ood = nn_core.softmax(ood_logits, temperature=temp).max(axis=1)
        records = calib_mod.mixed_prediction_records(
            conf_in, correct, conf_ood, seed=_ss(seed, ROLE_CALIBRATION)
        )
        out[f"{tag}_temp"] = calib_mod.report_from_records(records, temperature=temp)
        if tag == "final":
            rescaled = [
                calib_mod.PredictionRecord(calib_mod.posterior_rescale(r.confidence, k), r.correct)
                for r in records
            ]
            out["final_temp_rescaled"] = calib_mod.report_from_records(
                rescaled, temperature=temp, rescaled=True
            )
    return out


# ---------------------------------------------------------------------------
# Per-seed and whole-experiment drivers


@dataclass
class SeedResult:
    seed: int
    reports: dict  # phase -> {set name -> DetectionReport}
    pools: dict  # set name -> ScoredSet for the final phase
    calibration: dict | None = None
    train_accuracy: float | None = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    seed_results: list
    summary: dict = field(default_factory=dict)


def run_seed(config: ExperimentConfig, seed: int) -> SeedResult:
    bundle = prepare_data(config, seed)
    baseline = train_baseline(config, bundle, seed)
    if config.pipeline == "finetune_oe":
        final = finetune_oe(config, bundle, baseline, seed)
    elif config.pipeline == "scratch_oe":
        final = train_scratch_oe(config, bundle, seed)
    else:
        final = baseline
    base_reports, _ = evaluate_detector(baseline, config, bundle, seed)
    final_reports, pools = evaluate_detector(final, config, bundle, seed)
    cal = None
    if config.calibration:
        cal = calibration_eval(config, bundle, baseline, final, seed)
    acc = None
    if config.detector != "density_bpp":
        acc = classifier_accuracy(final, bundle.din_train)
    return SeedResult(seed, {"baseline": base_reports, "final": final_reports}, pools, cal, acc)


def summarize(config: ExperimentConfig, seed_results) -> dict:
    """Arithmetic mean over seeds of every reported metric, per phase and
    outlier set, plus the per-seed raw values the mean was taken from."""
    summary = {}
    for phase in ("baseline", "final"):
        phase_tab = {}
        for spec in config.d_out_test:
            name = spec.name
            rows = [sr.reports[phase][name] for sr in seed_results]
            phase_tab[name] = {
                "auroc": float(np.mean([r.auroc for r in rows])),
                "aupr": float(np.mean([r.aupr for r in rows])),
                "fpr_at_n": float(np.mean([r.fpr_at_n for r in rows])),
                "n_level": config.n_level,
                "base_rate": rows[0].base_rate,
                "n_seeds": len(rows),
            }
        summary[phase] = phase_tab
    return summary


def run_experiment(config: ExperimentConfig, out_dir=None, quiet: bool = False) -> ExperimentResult:
    config.validate()
    results = [run_seed(config, s) for s in config.seeds]
    summary = summarize(config, results)
    exp = ExperimentResult(config, results, summary)
    if out_dir is not None:
        from .reports import write_reports

        write_reports(out_dir, exp)
    if not quiet:
        from .reports import render_table

        print(render_table(exp), end="")
    return exp
