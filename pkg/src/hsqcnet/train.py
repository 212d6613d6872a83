"""Two-stage training.

Stage one pre-trains on atom-annotated 1D shift data with per-modality
masked L1 losses, over-sampling the proton-bearing minority. Stage two
fine-tunes on unlabeled peak lists by alternating pseudo-annotation
(matching predictions to observations) with training on the matched
targets, until the assignments stop moving or the iteration cap hits.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .assign import (
    MatchSettings,
    ObservedPeak,
    PseudoLabels,
    pseudo_annotate,
)
from .autodiff import Adam, ComputeRecord, Tensor, backward, zero_gradients
from .model import CrossPeakModel, ModelConfig, Molecule, SolventClass

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    pass


@dataclass
class Sample1D:
    molecule: Molecule
    solvent: SolventClass
    c_targets: dict[int, float]
    h_targets: dict[int, float]

    @property
    def graph(self):
        return self.molecule.graph

    def __post_init__(self) -> None:
        if not self.c_targets and not self.h_targets:
            raise ValueError(f"sample {self.molecule.smiles!r} has no shift targets")


@dataclass
class SampleHSQC:
    molecule: Molecule
    solvent: SolventClass
    peaks: list[ObservedPeak]
    saccharide: bool = False

    @property
    def graph(self):
        return self.molecule.graph


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 4
    learning_rate: float = 1e-4
    oversample_factor: int = 8
    max_iterations: int = 5
    convergence_fraction: float = 0.01
    validation_split: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.epochs, self.batch_size, self.oversample_factor) < 1:
            raise ValueError("epochs, batch_size, oversample_factor must be >= 1")
        if self.learning_rate <= 0 or self.max_iterations < 1:
            raise ValueError("learning_rate and max_iterations must be positive")
        if not 0.0 < self.convergence_fraction <= 1.0:
            raise ValueError("convergence_fraction must lie in (0, 1]")
        if not 0.0 <= self.validation_split < 1.0:
            raise ValueError("validation_split must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "oversample_factor": self.oversample_factor,
            "max_iterations": self.max_iterations,
            "convergence_fraction": self.convergence_fraction,
            "validation_split": self.validation_split,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(data: dict) -> "TrainConfig":
        return TrainConfig(**data)


@dataclass
class TrainResult:
    best_state: dict[str, np.ndarray]
    final_state: dict[str, np.ndarray]
    history: list[dict]
    best_metric: float
    best_epoch: int


def masked_mtt_loss(
    sample: Sample1D,
    predictions: tuple[dict[int, Tensor], dict[int, Tensor]],
    model: CrossPeakModel,
) -> Tensor:
    """Mean absolute error over the targets the sample actually carries.

    An absent modality contributes no term, hence no gradient to its head.
    A target atom without a prediction is a contract violation.
    """
    c_preds, h_preds = predictions
    terms: list[Tensor] = []
    targets: list[float] = []
    for idx, ppm in sorted(sample.c_targets.items()):
        if idx not in c_preds:
            raise ValueError(f"no prediction covers carbon target {idx}")
        terms.append(c_preds[idx])
        targets.append(model.normalize_c(ppm))
    for idx, ppm in sorted(sample.h_targets.items()):
        if idx not in h_preds:
            raise ValueError(f"no prediction covers proton target {idx}")
        terms.append(h_preds[idx])
        targets.append(model.normalize_h(ppm))
    return ad.mean_abs_error(terms, targets)


def _sample_errors(model: CrossPeakModel, sample: Sample1D) -> tuple[list, list]:
    """Absolute errors in ppm for one 1D sample, per modality."""
    c_preds, h_preds = model.atom_shift_tensors(
        sample.molecule,
        sample.solvent,
        sorted(sample.c_targets),
        sorted(sample.h_targets),
    )
    c_err = [
        abs(model.ppm_c(c_preds[i].item()) - ppm)
        for i, ppm in sorted(sample.c_targets.items())
    ]
    h_err = [
        abs(model.ppm_h(h_preds[i].item()) - ppm)
        for i, ppm in sorted(sample.h_targets.items())
    ]
    return c_err, h_err


def dataset_mae(model: CrossPeakModel, dataset: list[Sample1D]) -> tuple[float, float]:
    """(carbon MAE, proton MAE) in ppm; NaN for an absent modality."""
    c_all: list[float] = []
    h_all: list[float] = []
    for sample in dataset:
        c_err, h_err = _sample_errors(model, sample)
        c_all.extend(c_err)
        h_all.extend(h_err)
    mae = lambda xs: float(np.mean(xs)) if xs else float("nan")
    return mae(c_all), mae(h_all)


def _selection_metric(mae_c: float, mae_h: float, config: ModelConfig) -> float:
    """Worst normalized modality error; checkpoints are selected on the
    weaker head so neither modality degrades unchecked."""
    c = 0.0 if np.isnan(mae_c) else mae_c / config.c_scale
    h = 0.0 if np.isnan(mae_h) else mae_h / config.h_scale
    return max(c, h)


def mtt_pretrain(
    dataset: list[Sample1D],
    config: TrainConfig,
    model_config: ModelConfig | None = None,
    init_state: dict[str, np.ndarray] | None = None,
    start_epoch: int = 0,
    log_fn=None,
) -> TrainResult:
    """Multi-task pre-training with masked losses and over-sampling.

    Proton-bearing samples are replicated ``oversample_factor`` times per
    epoch. The checkpoint with the best validation MAE is retained next to
    the final state; with no validation split the training MAE decides.
    """
    if not dataset:
        raise ValueError("empty pre-training dataset")
    model_config = model_config or ModelConfig()
    model = CrossPeakModel(model_config)
    if init_state is not None:
        model.load_state(init_state)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)

    split_rng = np.random.default_rng([config.seed, 101])
    perm = split_rng.permutation(len(dataset))
    val_n = int(round(len(dataset) * config.validation_split))
    val_idx = list(perm[:val_n])
    train_idx = list(perm[val_n:])
    if not train_idx:
        raise ValueError("validation split leaves no training samples")
    val_samples = [dataset[i] for i in val_idx]
    train_samples = [dataset[i] for i in train_idx]

    base_order: list[int] = []
    for i, sample in enumerate(train_samples):
        copies = config.oversample_factor if sample.h_targets else 1
        base_order.extend([i] * copies)

    history: list[dict] = []
    best_metric = float("inf")
    best_epoch = -1
    best_state = model.state_arrays()
    for epoch in range(start_epoch, start_epoch + config.epochs):
        rng = np.random.default_rng([config.seed, 7, epoch])
        order = [base_order[k] for k in rng.permutation(len(base_order))]
        epoch_loss = 0.0
        first_batch_loss = float("nan")
        batches = 0
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            zero_gradients(model.parameters())
            batch_loss = 0.0
            for i in batch:
                sample = train_samples[i]
                with ComputeRecord() as record:
                    preds = model.atom_shift_tensors(
                        sample.molecule,
                        sample.solvent,
                        sorted(sample.c_targets),
                        sorted(sample.h_targets),
                    )
                    loss = ad.scale(
                        masked_mtt_loss(sample, preds, model), 1.0 / len(batch)
                    )
                backward(loss, record)
                batch_loss += loss.item()
            optimizer.step()
            if batches == 0:
                first_batch_loss = batch_loss
            epoch_loss += batch_loss
            batches += 1
        eval_set = val_samples if val_samples else train_samples
        mae_c, mae_h = dataset_mae(model, eval_set)
        metric = _selection_metric(mae_c, mae_h, model.config)
        if metric < best_metric:
            best_metric = metric
            best_epoch = epoch
            best_state = model.state_arrays()
        line = {
            "stage": "pretrain",
            "epoch": epoch,
            "loss": epoch_loss / max(batches, 1),
            "first_batch_loss": first_batch_loss,
            "mae_c": mae_c,
            "mae_h": mae_h,
            "validation": bool(val_samples),
        }
        history.append(line)
        if log_fn is not None:
            log_fn(line)
    return TrainResult(
        best_state=best_state,
        final_state=model.state_arrays(),
        history=history,
        best_metric=best_metric,
        best_epoch=best_epoch,
    )


# ---------------------------------------------------------------------------
# Unsupervised fine-tuning
# ---------------------------------------------------------------------------


@dataclass
class ArchiveEntry:
    """Everything needed to replay one fine-tuning iteration exactly."""

    iteration: int
    labels: list[PseudoLabels | None]
    state: dict[str, np.ndarray]
    initial_loss: float


@dataclass
class FinetuneResult:
    best_state: dict[str, np.ndarray]
    final_state: dict[str, np.ndarray]
    history: list[dict]
    archive: list[ArchiveEntry]
    iterations_run: int
    converged: bool


def _finetune_loss(
    model: CrossPeakModel, sample: SampleHSQC, labels: PseudoLabels
) -> Tensor:
    """L1 loss of the sample's head outputs against its pseudo-labels.

    Labels address (carbon, slot); slot 2 present for a carbon means its
    two proton outputs were emitted separately at annotation time,
    otherwise the single label trains the slot mean. This keeps the loss
    well-defined even if the merge decision flips during the iteration.
    """
    heads = {
        unit.carbon_index: (raw_c, raw_h)
        for unit, raw_c, raw_h in model._unit_head_tensors(sample.molecule, sample.solvent)
    }
    by_carbon: dict[int, list] = {}
    for entry in labels.entries:
        by_carbon.setdefault(entry.carbon_index, []).append(entry)
    terms: list[Tensor] = []
    targets: list[float] = []
    for carbon in sorted(by_carbon):
        raw_c, raw_h = heads[carbon]
        entries = sorted(by_carbon[carbon], key=lambda e: e.slot)
        two_slot = any(e.slot == 2 for e in entries)
        for entry in entries:
            terms.append(raw_c)
            targets.append(model.normalize_c(entry.delta_c))
            if two_slot:
                h_tensor = ad.component(raw_h, entry.slot - 1)
            else:
                h_tensor = ad.scale(
                    ad.neighbor_sum([ad.component(raw_h, 0), ad.component(raw_h, 1)]),
                    0.5,
                )
            terms.append(h_tensor)
            targets.append(model.normalize_h(entry.delta_h))
    return ad.mean_abs_error(terms, targets)


def pseudo_label_training_loss(
    state: dict[str, np.ndarray],
    model_config: ModelConfig,
    dataset: list[SampleHSQC],
    labels: list[PseudoLabels | None],
) -> float:
    """Mean per-molecule loss of ``state`` on a frozen label set; the
    replay path for archived iterations."""
    model = CrossPeakModel(model_config)
    model.load_state(state)
    losses = [
        _finetune_loss(model, sample, lab).item()
        for sample, lab in zip(dataset, labels)
        if lab is not None and not lab.rejected
    ]
    if not losses:
        raise ConvergenceError("every molecule was rejected by the cost threshold")
    return float(np.mean(losses))


def annotate_dataset(
    model: CrossPeakModel,
    dataset: list[SampleHSQC],
    settings: MatchSettings,
) -> list[PseudoLabels | None]:
    out = []
    for sample in dataset:
        preds = model.predict_cross_peaks(sample.molecule, sample.solvent)
        out.append(pseudo_annotate(sample.molecule, preds, sample.peaks, settings))
    return out


def _assignment_map(labels: list[PseudoLabels | None]) -> dict:
    return {
        (k, e.carbon_index, e.slot): e.obs_index
        for k, lab in enumerate(labels)
        if lab is not None
        for e in lab.entries
    }


def assignment_change_fraction(
    current: list[PseudoLabels | None], previous: list[PseudoLabels | None]
) -> float:
    cur = _assignment_map(current)
    prev = _assignment_map(previous)
    if not cur:
        return 0.0
    changed = sum(1 for key, obs in cur.items() if prev.get(key) != obs)
    return changed / len(cur)


def matched_mae(
    model: CrossPeakModel,
    dataset: list[SampleHSQC],
    settings: MatchSettings,
) -> tuple[float, float]:
    """(carbon, proton) MAE in ppm over matched prediction/observation
    pairs; the label-free quality signal available on HSQC data."""
    c_err: list[float] = []
    h_err: list[float] = []
    for sample in dataset:
        preds = model.predict_cross_peaks(sample.molecule, sample.solvent)
        labels = pseudo_annotate(sample.molecule, preds, sample.peaks, settings)
        if labels is None:
            continue
        by_key = {(p.ch_unit.carbon_index, p.peak_slot): p for p in preds}
        for entry in labels.entries:
            pred = by_key[(entry.carbon_index, entry.slot)]
            c_err.append(abs(pred.delta_c - entry.delta_c))
            h_err.append(abs(pred.delta_h - entry.delta_h))
    mae = lambda xs: float(np.mean(xs)) if xs else float("nan")
    return mae(c_err), mae(h_err)


def finetune_unsupervised(
    init_state: dict[str, np.ndarray],
    dataset: list[SampleHSQC],
    valset: list[SampleHSQC] | None,
    config: TrainConfig,
    model_config: ModelConfig | None = None,
    match: MatchSettings | None = None,
    log_fn=None,
) -> FinetuneResult:
    """Iterative self-training on unlabeled peak lists.

    Each iteration pseudo-annotates every molecule with the current model,
    trains on the accepted labels, and stops once fewer than
    ``convergence_fraction`` of the assignments change between iterations
    (or at ``max_iterations``). The best-validation checkpoint is retained.
    """
    if not dataset:
        raise ValueError("empty fine-tuning dataset")
    model_config = model_config or ModelConfig()
    match = match or MatchSettings()
    model = CrossPeakModel(model_config)
    model.load_state(init_state)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)

    history: list[dict] = []
    archive: list[ArchiveEntry] = []
    best_metric = float("inf")
    best_state = model.state_arrays()
    previous: list[PseudoLabels | None] | None = None
    converged = False
    iterations_run = 0

    for iteration in range(1, config.max_iterations + 1):
        settings = MatchSettings(
            c_scale=match.c_scale,
            reject_threshold=match.reject_threshold,
            ga=match.ga,
            iteration=iteration,
        )
        labels = annotate_dataset(model, dataset, settings)
        usable = [
            (sample, lab)
            for sample, lab in zip(dataset, labels)
            if lab is not None and not lab.rejected
        ]
        rejected = sum(1 for lab in labels if lab is not None and lab.rejected)
        if not usable:
            raise ConvergenceError(
                "every molecule was rejected by the cost threshold"
            )
        change = (
            assignment_change_fraction(labels, previous)
            if previous is not None
            else float("nan")
        )
        if previous is not None and change < config.convergence_fraction:
            converged = True
            line = {
                "stage": "finetune",
                "iteration": iteration,
                "label_change_fraction": change,
                "converged": True,
            }
            history.append(line)
            if log_fn is not None:
                log_fn(line)
            break
        previous = labels
        iterations_run = iteration

        state_before = model.state_arrays()
        initial_loss = float(
            np.mean([_finetune_loss(model, s, lab).item() for s, lab in usable])
        )
        archive.append(
            ArchiveEntry(
                iteration=iteration,
                labels=labels,
                state=state_before,
                initial_loss=initial_loss,
            )
        )

        for epoch in range(config.epochs):
            rng = np.random.default_rng([config.seed, 13, iteration, epoch])
            order = rng.permutation(len(usable))
            for lo in range(0, len(order), config.batch_size):
                batch = order[lo : lo + config.batch_size]
                zero_gradients(model.parameters())
                for k in batch:
                    sample, lab = usable[k]
                    with ComputeRecord() as record:
                        loss = ad.scale(
                            _finetune_loss(model, sample, lab), 1.0 / len(batch)
                        )
                    backward(loss, record)
                optimizer.step()

        eval_set = valset if valset else dataset
        mae_c, mae_h = matched_mae(model, eval_set, settings)
        metric = _selection_metric(mae_c, mae_h, model.config)
        if metric < best_metric:
            best_metric = metric
            best_state = model.state_arrays()
        line = {
            "stage": "finetune",
            "iteration": iteration,
            "initial_loss": initial_loss,
            "mae_c": mae_c,
            "mae_h": mae_h,
            "label_change_fraction": change,
            "rejected": rejected,
            "validation": bool(valset),
        }
        history.append(line)
        if log_fn is not None:
            log_fn(line)

    return FinetuneResult(
        best_state=best_state,
        final_state=model.state_arrays(),
        history=history,
        archive=archive,
        iterations_run=iterations_run,
        converged=converged,
    )
