"""Alternating discriminator/generator optimization with checkpointing and
validation-based model selection."""
from __future__ import annotations

import copy
import csv
import dataclasses
import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import torch

from .checkpoint import Checkpoint
from .core import ImageMaskPair
from .errors import ConfigError, EmptyList, NonFiniteLoss
from .evaluation import Prediction, pixel_auc
from .inference import estimate_masks, image_to_network, localize, mask_to_network
from .losses import LOSS_CSV_HEADER, LossConfig, adversarial_loss_D, reconstruction_loss, total_generator_loss
from .models import build_model, discriminator_forward, generator_forward, preset

log = logging.getLogger(__name__)

# pixel_auc: pooled pixel ROC AUC over the validation split (default).
# recon_loss: negated reconstruction loss on the validation split, which unlike a
# rank statistic also tracks the background level of the estimates.
VALIDATION_METRICS = ("pixel_auc", "recon_loss")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 1
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    checkpoint_every: int = 10
    preset: str = "paper"
    validation_metric: str = "pixel_auc"

    def __post_init__(self):
        if isinstance(self.loss, dict):
            object.__setattr__(self, "loss", LossConfig(**self.loss))
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.checkpoint_every < 1:
            raise ConfigError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        if self.validation_metric not in VALIDATION_METRICS:
            raise ConfigError(f"validation_metric must be one of {VALIDATION_METRICS}")
        preset(self.preset)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**obj)


def derive_seed(seed: int, tag: str) -> int:
    return int(np.random.SeedSequence([seed, *tag.encode()]).generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass
class TrainState:
    config: TrainConfig
    generator: torch.nn.Module
    discriminator: torch.nn.Module
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    rng: torch.Generator  # dropout stream
    epoch: int = 0
    step: int = 0

    @classmethod
    def initialize(cls, config: TrainConfig) -> "TrainState":
        gspec, dspec = preset(config.preset)
        generator = build_model(gspec, derive_seed(config.seed, "generator"))
        discriminator = build_model(dspec, derive_seed(config.seed, "discriminator"))
        rng = torch.Generator().manual_seed(derive_seed(config.seed, "dropout"))
        return cls(config, generator, discriminator, *_optimizers(config, generator, discriminator), rng)

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint, config: TrainConfig | None = None) -> "TrainState":
        config = config or TrainConfig.from_json(checkpoint.config)
        generator = build_model(checkpoint.generator_spec)
        generator.load_state_dict(checkpoint.generator)
        discriminator = build_model(checkpoint.discriminator_spec)
        discriminator.load_state_dict(checkpoint.discriminator)
        opt_g, opt_d = _optimizers(config, generator, discriminator)
        if checkpoint.optimizer:
            opt_g.load_state_dict(checkpoint.optimizer["generator"])
            opt_d.load_state_dict(checkpoint.optimizer["discriminator"])
        rng = torch.Generator()
        if checkpoint.rng_state is not None:
            rng.set_state(checkpoint.rng_state)
        else:
            rng.manual_seed(derive_seed(config.seed, "dropout"))
        step = int(checkpoint.metrics.get("step", 0))
        return cls(config, generator, discriminator, opt_g, opt_d, rng, checkpoint.epoch, step)

    def checkpoint(self, metrics: dict | None = None) -> Checkpoint:
        def snapshot(module):
            return OrderedDict((k, v.detach().clone()) for k, v in module.state_dict().items())

        return Checkpoint(
            epoch=self.epoch,
            generator_spec=self.generator.spec,
            discriminator_spec=self.discriminator.spec,
            generator=snapshot(self.generator),
            discriminator=snapshot(self.discriminator),
            optimizer={
                "generator": copy.deepcopy(self.opt_g.state_dict()),
                "discriminator": copy.deepcopy(self.opt_d.state_dict()),
            },
            rng_state=self.rng.get_state().clone(),
            config=self.config.to_json(),
            metrics={"step": self.step, **(metrics or {})},
        )


def _optimizers(config, generator, discriminator):
    betas = (config.beta1, config.beta2)
    return (
        torch.optim.Adam(generator.parameters(), lr=config.lr, betas=betas),
        torch.optim.Adam(discriminator.parameters(), lr=config.lr, betas=betas),
    )


class StepMetrics(NamedTuple):
    L_D: float
    L_adv_G: float
    L_R: float
    L_total: float


def train_step(
    state: TrainState,
    images: torch.Tensor,
    masks: torch.Tensor,
    update_discriminator: bool = True,
    update_generator: bool = True,
) -> StepMetrics:
    """One D update on (real, detached fake) pairs, then one G update on the total loss.

    ``images`` are B x 3 x 256 x 256 in [0, 1]; ``masks`` are binary B x 1 x 256 x 256.
    """
    cfg = state.config.loss
    G, D = state.generator, state.discriminator
    eps = cfg.eps_for(images)

    if update_generator:
        fake = generator_forward(G, images, mode="train", rng=state.rng)
    else:
        with torch.no_grad():
            fake = generator_forward(G, images, mode="train", rng=state.rng)

    real_scores = discriminator_forward(D, images, masks)
    fake_scores = discriminator_forward(D, images, fake.detach())
    loss_d = adversarial_loss_D(real_scores, fake_scores, eps)
    _check_finite(state, L_D=loss_d)
    if update_discriminator:
        state.opt_d.zero_grad(set_to_none=True)
        loss_d.backward()
        state.opt_d.step()

    D.requires_grad_(False)
    try:
        g_loss = total_generator_loss(discriminator_forward(D, images, fake), fake, masks, cfg)
        _check_finite(state, L_adv_G=g_loss.adversarial, L_R=g_loss.reconstruction)
        if update_generator:
            state.opt_g.zero_grad(set_to_none=True)
            g_loss.total.backward()
            state.opt_g.step()
    finally:
        D.requires_grad_(True)

    state.step += 1
    return StepMetrics(*(float(v.detach()) for v in (loss_d, g_loss.adversarial, g_loss.reconstruction, g_loss.total)))


def _check_finite(state: TrainState, **terms: torch.Tensor) -> None:
    values = {k: float(v.detach()) for k, v in terms.items()}
    if not all(math.isfinite(v) for v in values.values()):
        raise NonFiniteLoss(f"non-finite loss at step {state.step + 1} (epoch {state.epoch}): {values}")


def select_best(checkpoints: Sequence[Checkpoint], metrics: Sequence[float] | None = None) -> Checkpoint:
    """Highest validation metric; the earliest checkpoint wins ties."""
    if not checkpoints:
        raise EmptyList("no checkpoints to select from")
    if metrics is None:
        metrics = [c.val_metric for c in checkpoints]
    if len(metrics) != len(checkpoints):
        raise ValueError("one metric per checkpoint is required")
    best = 0
    for i, value in enumerate(metrics):
        if value is not None and (metrics[best] is None or value > metrics[best]):
            best = i
    return checkpoints[best]


# ------------------------------------------------------------------- data


@dataclass
class TensorSplit:
    ids: list[str]
    images: torch.Tensor
    masks: torch.Tensor

    def __len__(self) -> int:
        return len(self.ids)


def pairs_to_tensors(pairs: Sequence[ImageMaskPair]) -> TensorSplit:
    if not pairs:
        return TensorSplit([], torch.empty(0, 3, 256, 256), torch.empty(0, 1, 256, 256))
    return TensorSplit(
        [p.id for p in pairs],
        torch.cat([image_to_network(p.image) for p in pairs]),
        torch.cat([mask_to_network(p.mask) for p in pairs]),
    )


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, 0xE90C, epoch]).permutation(n)


# -------------------------------------------------------------------- logs


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def metrics_header(recon_mode: str) -> list[str]:
    return ["epoch", "step", "L_D", "L_adv_G", f"L_R[{recon_mode}]", "L_total", "val_metric"]


def losses_header(recon_mode: str) -> list[str]:
    return [f"L_R[{recon_mode}]" if h == "L_R" else h for h in LOSS_CSV_HEADER]


class _CsvLog:
    """Append-only CSV that flushes every row; on resume keeps rows up to ``keep_upto``."""

    def __init__(self, path: Path | None, header: list[str], key_column: int, keep_upto: int | None):
        self.rows: list[list[str]] = []
        self._fh = None
        if path is None:
            return
        kept: list[list[str]] = []
        if keep_upto is not None and path.exists():
            with open(path, newline="") as fh:
                old = list(csv.reader(fh))
            kept = [row for row in old[1:] if row and int(row[key_column]) <= keep_upto]
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(header)
        for row in kept:
            self._writer.writerow(row)
        self.rows.extend(kept)
        self._fh.flush()

    def write(self, row: list[str]) -> None:
        self.rows.append(row)
        if self._fh is not None:
            self._writer.writerow(row)
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


# ------------------------------------------------------------------ train


@dataclass
class TrainResult:
    checkpoints: list[Checkpoint]
    best: Checkpoint
    log: list[list[str]]  # metrics.csv rows without header

    @property
    def val_metrics(self) -> list[float | None]:
        return [None if row[6] == "" else float(row[6]) for row in self.log]


def _validation_metric(state: TrainState, val_pairs: Sequence[ImageMaskPair]) -> float | None:
    if not val_pairs:
        return None
    if state.config.validation_metric == "recon_loss":
        data = pairs_to_tensors(val_pairs)
        loss = state.config.loss
        with torch.no_grad():
            est = torch.cat([generator_forward(state.generator, data.images[i : i + 8]) for i in range(0, len(data), 8)])
        return -float(reconstruction_loss(est, data.masks, loss.recon_mode, loss.eps_for(est)))
    estimates = estimate_masks(state.generator, [p.image for p in val_pairs])
    predictions = [Prediction(p.id, p.size_class, p.mask, e) for p, e in zip(val_pairs, estimates)]
    return pixel_auc(predictions)


def _load_split(manifest, split: str) -> list[ImageMaskPair]:
    return [manifest.load_pair(r) for r in manifest.split(split)]


def train(
    config: TrainConfig,
    manifest,
    out_dir: str | Path | None = None,
    resume: Checkpoint | None = None,
) -> TrainResult:
    """Train on the manifest's train split, scoring the validation split after every epoch.

    With ``out_dir`` set, writes ``metrics.csv`` (one row per epoch),
    ``losses.csv`` (one row per step), scheduled checkpoints under
    ``checkpoints/``, and ``best.spgc`` + ``best.json`` for the best-so-far model.
    """
    torch.use_deterministic_algorithms(True)
    if resume is not None:
        state = TrainState.from_checkpoint(resume, config)
    else:
        state = TrainState.initialize(config)
    train_pairs = _load_split(manifest, "train")
    if not train_pairs and config.epochs > state.epoch:
        raise ConfigError("manifest has no train split; run build_splits first")
    data = pairs_to_tensors(train_pairs)
    del train_pairs
    val_pairs = _load_split(manifest, "validation")

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    mode = config.loss.recon_mode
    keep_epoch = state.epoch if resume is not None else None
    keep_step = state.step if resume is not None else None
    metrics_log = _CsvLog(out / "metrics.csv" if out else None, metrics_header(mode), 0, keep_epoch)
    losses_log = _CsvLog(out / "losses.csv" if out else None, losses_header(mode), 0, keep_step)

    checkpoints: list[Checkpoint] = []
    best: Checkpoint | None = None
    best_value = resume.metrics.get("best_val_metric") if resume is not None else None
    best_epoch = resume.metrics.get("best_epoch") if resume is not None else None

    def end_of_epoch(val: float | None, scheduled: bool) -> None:
        nonlocal best, best_value, best_epoch
        improved = val is not None and (best_value is None or val > best_value)
        if improved:
            best_value, best_epoch = val, state.epoch
        if not (scheduled or improved):
            return
        ckpt = state.checkpoint({"val_metric": val, "best_val_metric": best_value, "best_epoch": best_epoch})
        if scheduled:
            checkpoints.append(ckpt)
            if out is not None:
                ckpt.save(out / "checkpoints" / f"epoch_{ckpt.epoch:04d}.spgc")
        if improved:
            best = ckpt
            if out is not None:
                ckpt.save(out / "best.spgc")
                marker = {"epoch": ckpt.epoch, "val_metric": val, "path": "best.spgc"}
                (out / "best.json").write_text(json.dumps(marker, indent=2) + "\n")

    try:
        if resume is None:
            val = _validation_metric(state, val_pairs)
            metrics_log.write(["0", "0", "", "", "", "", _fmt(val)])
            end_of_epoch(val, scheduled=True)
        for epoch in range(state.epoch + 1, config.epochs + 1):
            state.epoch = epoch
            sums = np.zeros(4)
            n_steps = 0
            order = epoch_order(config.seed, epoch, len(data))
            for start in range(0, len(order), config.batch_size):
                idx = torch.from_numpy(order[start : start + config.batch_size])
                m = train_step(state, data.images[idx], data.masks[idx])
                losses_log.write([str(state.step), _fmt(m.L_adv_G), _fmt(m.L_R), _fmt(m.L_total), _fmt(m.L_D)])
                sums += m
                n_steps += 1
            means = sums / max(n_steps, 1)
            val = _validation_metric(state, val_pairs)
            metrics_log.write([str(epoch), str(state.step), *(_fmt(v) for v in means), _fmt(val)])
            log.info("epoch %d step %d L_D %.4f L_R %.4f val %s", epoch, state.step, means[0], means[2], val)
            end_of_epoch(val, scheduled=epoch % config.checkpoint_every == 0 or epoch == config.epochs)
    finally:
        metrics_log.close()
        losses_log.close()

    if best is None and out is not None and (out / "best.spgc").exists():
        best = Checkpoint.load(out / "best.spgc")
    if best is None:
        best = checkpoints[-1] if checkpoints else resume or state.checkpoint()
    return TrainResult(checkpoints, best, metrics_log.rows)


# ---------------------------------------------------------------- overfit


@dataclass
class OverfitResult:
    state: TrainState
    steps: list[StepMetrics]
    agreement: float  # pixel agreement with ground truth at tau = 0.5, source resolution

    @property
    def final_recon(self) -> float:
        return self.steps[-1].L_R


def pixel_agreement(model, pairs: Sequence[ImageMaskPair], pixel_threshold: float = 0.5) -> float:
    estimates = estimate_masks(model, [p.image for p in pairs])
    hits = sum(int(np.count_nonzero(localize(e, pixel_threshold).data == p.mask.data)) for p, e in zip(pairs, estimates))
    return hits / sum(p.mask.data.size for p in pairs)


def overfit(
    pairs: Sequence[ImageMaskPair],
    steps: int = 200,
    config: TrainConfig | None = None,
    losses_csv: str | Path | None = None,
) -> OverfitResult:
    """Repeatedly fit one batch made of ``pairs``: the sanity harness for the whole loop."""
    config = config or TrainConfig(preset="tiny", loss=LossConfig("bce", 100.0))
    torch.use_deterministic_algorithms(True)
    state = TrainState.initialize(config)
    batch = pairs_to_tensors(pairs)
    mode = config.loss.recon_mode
    log_ = _CsvLog(Path(losses_csv) if losses_csv else None, losses_header(mode), 0, None)
    history = []
    try:
        for _ in range(steps):
            m = train_step(state, batch.images, batch.masks)
            history.append(m)
            log_.write([str(state.step), _fmt(m.L_adv_G), _fmt(m.L_R), _fmt(m.L_total), _fmt(m.L_D)])
    finally:
        log_.close()
    return OverfitResult(state, history, pixel_agreement(state.generator, pairs))
