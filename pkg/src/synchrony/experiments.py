"""Experiment orchestration: windowed datasets, training runs, group-level
cross-validation, the chimeric-group control baseline, and the LSTM-count
sweep.

Splits are always group-disjoint: every window carries the group id of the
sample it was cut from, and all windows of a group land on the same side
of any train/validation or train/test boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import InteractionSample, TimeSeries, Window, extract_windows, normalize_sample
from .generate import GeneratedPair, gen_dataset, gen_group_dataset
from .metrics import EvalReport, build_report
from .nn import (
    Optimizer,
    SynchronyModel,
    TrainConfig,
    forward_batch,
    init_model,
    loss_and_grads,
    mse_loss,
    windows_to_batch,
)

PREDICT_BATCH = 1024


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a full experiment run needs."""

    window_length: int = 100
    stride: int = 1
    train_fraction: float = 0.8
    n_folds: int = 5
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    aggregation: str = "mean"
    normalize: bool = False
    # When set, each fold draws this many test groups independently instead
    # of partitioning (e.g. fixed 8-group test folds); the standard mode
    # partitions the groups into n_folds near-equal parts.
    fold_test_size: int | None = None

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError("train_fraction must be in (0, 1)")
        if self.n_folds < 2:
            raise ValueError("n_folds must be >= 2")
        if self.aggregation not in ("mean", "median"):
            raise ValueError("aggregation must be 'mean' or 'median'")


@dataclass(frozen=True)
class FoldResult:
    fold: int
    model: SynchronyModel
    test_group_ids: tuple[str, ...]
    per_group: tuple[tuple[str, float, float], ...]


@dataclass(frozen=True)
class TrainHistory:
    epochs: tuple[dict, ...]
    best_epoch: int

    @property
    def best_val_mse(self) -> float:
        return self.epochs[self.best_epoch]["val_mse"]

    @property
    def best_train_mse(self) -> float:
        return min(e["train_mse"] for e in self.epochs)


def build_windowed_dataset(
    samples: list[InteractionSample],
    window_length: int,
    stride: int = 1,
    normalize: bool = False,
) -> list[Window]:
    """Window every sample; each window keeps its sample's label and group."""
    if not samples:
        raise ValueError("no samples")
    dims = {(s.n_participants, s.n_channels) for s in samples}
    if len(dims) != 1:
        raise ValueError("all samples must share participant/channel counts")
    out: list[Window] = []
    for s in samples:
        if normalize:
            s = normalize_sample(s)
        out.extend(extract_windows(s, window_length, stride))
    return out


def _group_ids(windows: list[Window]) -> list[str]:
    seen: dict[str, None] = {}
    for w in windows:
        seen.setdefault(w.group_id)
    return list(seen)


def _eval_mse(model, x, y, lookback) -> float:
    preds = np.concatenate(
        [
            forward_batch(model, x[i : i + PREDICT_BATCH], lookback=lookback)
            for i in range(0, len(x), PREDICT_BATCH)
        ]
    )
    return mse_loss(preds, y)


def train_experiment(
    dataset: list[Window], config: ExperimentConfig
) -> tuple[SynchronyModel, TrainHistory]:
    """Train on a group-disjoint train/validation split of the windows.

    Records per-epoch train/validation MSE and returns the parameters from
    the epoch with the best validation loss. Deterministic given config.
    """
    groups = _group_ids(dataset)
    if len(groups) < 2:
        raise ValueError("need at least 2 groups to split")
    tc = config.train
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    order = list(np.array(groups)[rng.permutation(len(groups))])
    n_train = min(max(int(round(config.train_fraction * len(groups))), 1),
                  len(groups) - 1)
    train_groups = set(order[:n_train])

    train_windows = [w for w in dataset if w.group_id in train_groups]
    val_windows = [w for w in dataset if w.group_id not in train_groups]
    x_train, y_train = windows_to_batch(train_windows)
    x_val, y_val = windows_to_batch(val_windows)

    input_size = x_train.shape[2]
    model = init_model(
        input_size,
        n_lstms=tc.n_lstms,
        hidden_size=tc.hidden_size,
        seed=tc.seed,
        cell_activation=tc.cell_activation,
    )
    if tc.epochs == 0:
        hist = TrainHistory(
            epochs=(
                {
                    "epoch": 0,
                    "train_mse": _eval_mse(model, x_train, y_train, tc.lookback),
                    "val_mse": _eval_mse(model, x_val, y_val, tc.lookback),
                },
            ),
            best_epoch=0,
        )
        return model, hist

    opt = Optimizer(tc)
    best_model = model
    best_val = np.inf
    best_epoch = 0
    epochs = []
    n = len(x_train)
    for epoch in range(tc.epochs):
        perm = rng.permutation(n)
        running = 0.0
        for start in range(0, n, tc.batch_size):
            idx = perm[start : start + tc.batch_size]
            loss, grads = loss_and_grads(
                model, x_train[idx], y_train[idx], lookback=tc.lookback
            )
            running += loss * len(idx)
            model = opt.step(model, grads)
        train_mse = running / n
        val_mse = _eval_mse(model, x_val, y_val, tc.lookback)
        epochs.append({"epoch": epoch, "train_mse": train_mse, "val_mse": val_mse})
        if val_mse < best_val:
            best_val = val_mse
            best_model = model
            best_epoch = epoch
    return best_model, TrainHistory(tuple(epochs), best_epoch)


def predict_sample(
    model: SynchronyModel,
    sample: InteractionSample,
    window_length: int,
    stride: int = 1,
    aggregation: str = "mean",
    lookback: int | None = None,
    normalize: bool = False,
) -> float:
    """Window-level predictions aggregated to one score for the sample."""
    if normalize:
        sample = normalize_sample(sample)
    windows = extract_windows(sample, window_length, stride)
    x, _ = windows_to_batch(windows)
    preds = np.concatenate(
        [
            forward_batch(model, x[i : i + PREDICT_BATCH], lookback=lookback)
            for i in range(0, len(x), PREDICT_BATCH)
        ]
    )
    if aggregation == "mean":
        return float(np.mean(preds))
    if aggregation == "median":
        return float(np.median(preds))
    raise ValueError(f"unknown aggregation: {aggregation!r}")


def partition_groups(
    group_ids: list[str], n_folds: int, seed: int
) -> list[list[str]]:
    """Seeded near-equal partition of groups into folds."""
    if n_folds > len(group_ids):
        raise ValueError("more folds than groups")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    order = [group_ids[i] for i in rng.permutation(len(group_ids))]
    return [list(part) for part in np.array_split(order, n_folds)]


def kfold_cv(
    samples: list[InteractionSample], config: ExperimentConfig
) -> tuple[list[FoldResult], EvalReport]:
    """Group-level k-fold cross-validation.

    Each fold trains a fresh model on the other folds' windows and scores
    the held-out groups via predict_sample; pooled per-group predictions
    across folds feed one report.
    """
    by_id = {s.group_id: s for s in samples}
    if len(by_id) != len(samples):
        raise ValueError("duplicate group ids")
    windows = build_windowed_dataset(
        samples, config.window_length, config.stride, normalize=config.normalize
    )
    group_ids = list(by_id)
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_folds + 1)
    part_seed = int(seeds[0].generate_state(1)[0])

    if config.fold_test_size is None:
        folds = partition_groups(group_ids, config.n_folds, part_seed)
    else:
        if config.fold_test_size >= len(group_ids):
            raise ValueError("fold_test_size must leave groups for training")
        rng = np.random.default_rng(np.random.SeedSequence(part_seed))
        folds = [
            [group_ids[i] for i in rng.choice(len(group_ids),
                                              config.fold_test_size,
                                              replace=False)]
            for _ in range(config.n_folds)
        ]

    results = []
    for fold_idx, test_ids in enumerate(folds):
        test_set = set(test_ids)
        train_windows = [w for w in windows if w.group_id not in test_set]
        fold_cfg = replace(config, seed=int(seeds[fold_idx + 1].generate_state(1)[0]))
        model, _ = train_experiment(train_windows, fold_cfg)
        per_group = tuple(
            (
                gid,
                by_id[gid].label,
                predict_sample(
                    model,
                    by_id[gid],
                    config.window_length,
                    config.stride,
                    aggregation=config.aggregation,
                    lookback=config.train.lookback,
                    normalize=config.normalize,
                ),
            )
            for gid in test_ids
        )
        results.append(FoldResult(fold_idx, model, tuple(test_ids), per_group))
    pooled = [row for r in results for row in r.per_group]
    return results, build_report(pooled)


def make_chimera(
    sample: InteractionSample,
    donors: list[InteractionSample],
    rng: np.random.Generator,
) -> InteractionSample:
    """Keep one member of the group, replace the others with members drawn
    from distinct donor groups; the original label is retained."""
    k = sample.n_participants
    if len(donors) < k - 1:
        raise ValueError("need at least K-1 donor groups")
    keep = int(rng.integers(k))
    donor_idx = rng.choice(len(donors), size=k - 1, replace=False)
    parts = []
    di = 0
    for j in range(k):
        if j == keep:
            parts.append(sample.participants[j])
        else:
            donor = donors[int(donor_idx[di])]
            member = int(rng.integers(donor.n_participants))
            parts.append(donor.participants[member])
            di += 1
    return InteractionSample(
        tuple(parts), label=sample.label, group_id=f"{sample.group_id}:chimera"
    )


def permutation_baseline(
    samples: list[InteractionSample],
    fold_results: list[FoldResult],
    config: ExperimentConfig,
    seed: int | None = None,
) -> EvalReport:
    """Control baseline on chimeric groups.

    For each fold's test group, one member is kept and the rest are
    replaced with members of other randomly chosen groups; the fold's
    trained model predicts on the chimera and is scored against the
    ORIGINAL group's label.
    """
    by_id = {s.group_id: s for s in samples}
    if len(by_id) < 3:
        raise ValueError("need at least 3 groups for the baseline")
    rng = np.random.default_rng(
        np.random.SeedSequence(config.seed if seed is None else seed)
    )
    pooled = []
    for fr in fold_results:
        for gid in fr.test_group_ids:
            sample = by_id[gid]
            donors = [s for g, s in by_id.items() if g != gid]
            chimera = make_chimera(sample, donors, rng)
            pred = predict_sample(
                fr.model,
                chimera,
                config.window_length,
                config.stride,
                aggregation=config.aggregation,
                lookback=config.train.lookback,
                normalize=config.normalize,
            )
            pooled.append((chimera.group_id, sample.label, pred))
    return build_report(pooled)


def pair_to_sample(pair: GeneratedPair, group_id: str) -> InteractionSample:
    """A generated pair as a 2-participant, 1-channel labeled sample."""
    if pair.coupling is None:
        raise ValueError("pair carries no coupling label")
    return InteractionSample(
        ((pair.x,), (pair.y,)), label=float(pair.coupling), group_id=group_id
    )


def group_to_interaction_sample(
    members: list[TimeSeries], label: float, group_id: str
) -> InteractionSample:
    """Latent-driver group members as a K-participant, 1-channel sample."""
    return InteractionSample(
        tuple((m,) for m in members), label=label, group_id=group_id
    )


def covariance_recovery_experiment(
    n_train_pairs: int,
    n_test_pairs: int,
    length: int,
    config: ExperimentConfig,
    phi12_range: tuple[float, float] = (0.1, 0.9),
) -> tuple[SynchronyModel, TrainHistory, EvalReport]:
    """End-to-end synthetic covariance recovery.

    Trains on generated pairs (group-disjoint 80/20 validation split) and
    reports percent-error metrics on freshly generated test pairs.
    Deterministic given config.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    train_pairs = gen_dataset(
        n_train_pairs, length, phi12_range, int(seeds[0].generate_state(1)[0])
    )
    test_pairs = gen_dataset(
        n_test_pairs, length, phi12_range, int(seeds[1].generate_state(1)[0])
    )
    train_samples = [
        pair_to_sample(p, f"train_{i:04d}") for i, p in enumerate(train_pairs)
    ]
    windows = build_windowed_dataset(
        train_samples, config.window_length, config.stride,
        normalize=config.normalize,
    )
    model, history = train_experiment(windows, config)
    per_group = []
    for i, p in enumerate(test_pairs):
        sample = pair_to_sample(p, f"test_{i:04d}")
        pred = predict_sample(
            model,
            sample,
            config.window_length,
            config.stride,
            aggregation=config.aggregation,
            lookback=config.train.lookback,
            normalize=config.normalize,
        )
        per_group.append((sample.group_id, sample.label, pred))
    return model, history, build_report(per_group)


def latent_group_samples(
    n_groups: int,
    n_members: int,
    length: int,
    coupling_range: tuple[float, float] = (0.1, 0.9),
    seed: int = 0,
) -> list[InteractionSample]:
    """Labeled latent-driver groups ready for kfold_cv / the baseline."""
    raw = gen_group_dataset(n_groups, n_members, length, coupling_range, seed)
    return [
        group_to_interaction_sample(members, label, f"group_{i:03d}")
        for i, (members, label) in enumerate(raw)
    ]


def sweep_lstm_count(
    dataset: list[Window], counts: list[int], config: ExperimentConfig
) -> list[dict]:
    """Train once per LSTM count; report each run's best train/val MSE."""
    if not counts:
        raise ValueError("counts must be non-empty")
    rows = []
    for count in counts:
        cfg = replace(config, train=replace(config.train, n_lstms=count))
        _, hist = train_experiment(dataset, cfg)
        rows.append(
            {
                "count": count,
                "train_error": hist.best_train_mse,
                "val_error": hist.best_val_mse,
            }
        )
    return rows
