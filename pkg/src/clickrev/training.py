"""Online interactive training: samples are built on the fly by degrading the
ground truth into an initial mask, simulating boundary clicks against the
model's own predictions, and supervising the final forward pass with the
ground-truth mask.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from scipy.ndimage import binary_dilation, binary_erosion

from .checkpoint import save_checkpoint
from .clicks import Click, ClickProbability, click_distribution, sample_training_click
from .data import DatasetManifest
from .geometry import (
    PIXEL_UNITS,
    as_mask,
    distance_field,
    extract_contour,
)
from .clicks import EmptyGroundTruth, encode_clicks
from .losses import balanced_total, dice_loss, hd_loss
from .network import NetworkConfig, RevisionInput, RevisionUNet, to_mask


class OutOfRange(ValueError):
    """Iteration index outside the configured training budget."""


class NonFiniteLoss(RuntimeError):
    """Training hit a NaN/inf loss; diagnostics were dumped next to the log."""


@dataclass(frozen=True)
class OptimizerSchedule:
    """Adam hyperparameters and the stepped learning-rate plan."""

    beta1: float = 0.9
    beta2: float = 0.999
    total_iterations: int = 100_000
    lr_steps: tuple[tuple[int, float], ...] = ((0, 1e-4), (50_000, 1e-5), (75_000, 1e-6))
    batch_size: int = 1

    def __post_init__(self) -> None:
        steps = tuple((int(i), float(lr)) for i, lr in self.lr_steps)
        object.__setattr__(self, "lr_steps", steps)
        if not steps or steps[0][0] != 0:
            raise ValueError("lr_steps must start at iteration 0")
        iters = [i for i, _ in steps]
        if iters != sorted(set(iters)):
            raise ValueError("lr_steps iterations must be strictly increasing")
        if any(lr <= 0 for _, lr in steps):
            raise ValueError("learning rates must be positive")
        if self.total_iterations < 1 or self.batch_size != 1:
            raise ValueError("need total_iterations >= 1 and batch_size == 1")

    def lr_at(self, iteration: int) -> float:
        """Learning rate in effect at a 0-based iteration index."""
        if not 0 <= iteration < self.total_iterations:
            raise OutOfRange(f"iteration {iteration} outside [0, {self.total_iterations})")
        rate = self.lr_steps[0][1]
        for start, lr in self.lr_steps:
            if iteration >= start:
                rate = lr
        return rate

    def to_json(self) -> dict:
        return {
            "beta1": self.beta1,
            "beta2": self.beta2,
            "total_iterations": self.total_iterations,
            "lr_steps": [[i, lr] for i, lr in self.lr_steps],
            "batch_size": self.batch_size,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "OptimizerSchedule":
        payload = dict(payload)
        if "lr_steps" in payload:
            payload["lr_steps"] = tuple((int(i), float(lr)) for i, lr in payload["lr_steps"])
        return cls(**payload)


@dataclass(frozen=True)
class DegradeParams:
    """Magnitudes for the initial-mask degrader; zeros make it the identity."""

    max_shift_px: int = 5
    max_morph_px: int = 3
    max_notches: int = 3
    notch_radius_px: tuple[int, int] = (5, 12)

    def to_json(self) -> dict:
        return {
            "max_shift_px": self.max_shift_px,
            "max_morph_px": self.max_morph_px,
            "max_notches": self.max_notches,
            "notch_radius_px": list(self.notch_radius_px),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "DegradeParams":
        payload = dict(payload)
        if "notch_radius_px" in payload:
            payload["notch_radius_px"] = tuple(payload["notch_radius_px"])
        return cls(**payload)


@dataclass(frozen=True)
class RolloutConfig:
    """Policy for building online samples: how many self-revision rounds
    precede the supervised step, and how clicks combine."""

    max_prior_rounds: int = 2
    clicks_accumulate: bool = True
    click_temperature: float = 1.0
    degrade: DegradeParams = DegradeParams()

    def __post_init__(self) -> None:
        if not 0 <= self.max_prior_rounds <= 5:
            raise ValueError("max_prior_rounds must be in [0, 5]")
        if self.click_temperature <= 0:
            raise ValueError("click_temperature must be positive")

    def to_json(self) -> dict:
        return {
            "max_prior_rounds": self.max_prior_rounds,
            "clicks_accumulate": self.clicks_accumulate,
            "click_temperature": self.click_temperature,
            "degrade": self.degrade.to_json(),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "RolloutConfig":
        payload = dict(payload)
        if "degrade" in payload:
            payload["degrade"] = DegradeParams.from_json(payload["degrade"])
        return cls(**payload)


@dataclass(frozen=True)
class TrainingSample:
    """One training slice: image, nonempty ground truth, and an initial mask."""

    image: np.ndarray
    gt_mask: np.ndarray
    organ_id: str
    initial_mask: np.ndarray

    def __post_init__(self) -> None:
        gt = as_mask(self.gt_mask)
        if not gt.any():
            raise EmptyGroundTruth("training samples require a nonempty ground-truth mask")
        if not (self.image.shape == gt.shape == self.initial_mask.shape):
            raise ValueError("image, gt_mask and initial_mask must share one shape")


@dataclass(frozen=True)
class TrainingConfig:
    network: NetworkConfig = NetworkConfig()
    schedule: OptimizerSchedule = OptimizerSchedule()
    rollout: RolloutConfig = RolloutConfig()
    checkpoint_every: int = 5000

    def to_json(self) -> dict:
        return {
            "network": self.network.to_json(),
            "schedule": self.schedule.to_json(),
            "rollout": self.rollout.to_json(),
            "checkpoint_every": self.checkpoint_every,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "TrainingConfig":
        return cls(
            network=NetworkConfig.from_json(payload.get("network", {})),
            schedule=OptimizerSchedule.from_json(payload.get("schedule", {})),
            rollout=RolloutConfig.from_json(payload.get("rollout", {})),
            checkpoint_every=int(payload.get("checkpoint_every", 5000)),
        )

    @classmethod
    def desk_scale(cls, iterations: int = 3000) -> "TrainingConfig":
        """CPU-friendly setup: slim widths and a schedule compressed to a few
        thousand iterations, stepping down at 50% and 80% of the budget."""
        return cls(
            network=NetworkConfig.compact(),
            schedule=OptimizerSchedule(
                total_iterations=iterations,
                lr_steps=(
                    (0, 1e-3),
                    (iterations // 2, 3e-4),
                    (iterations * 4 // 5, 1e-4),
                ),
            ),
            rollout=RolloutConfig(),
            checkpoint_every=0,
        )

    def to_file(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def from_file(cls, path) -> "TrainingConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _shift_mask(mask: np.ndarray, dr: int, dc: int) -> np.ndarray:
    """Translate with zero fill (no wraparound)."""
    out = np.zeros_like(mask)
    h, w = mask.shape
    src_r0, src_r1 = max(0, -dr), min(h, h - dr)
    src_c0, src_c1 = max(0, -dc), min(w, w - dc)
    if src_r0 >= src_r1 or src_c0 >= src_c1:
        return out
    out[src_r0 + dr : src_r1 + dr, src_c0 + dc : src_c1 + dc] = mask[src_r0:src_r1, src_c0:src_c1]
    return out


_MORPH_STRUCTURE = np.ones((3, 3), dtype=bool)


def degrade_mask(gt, rng: np.random.Generator, params: DegradeParams = DegradeParams()) -> np.ndarray:
    """Make a plausible imperfect initial mask out of the ground truth.

    Applies, in order: a random shift, a random erosion or dilation, and
    random boundary notches.  All draws come from ``rng``, so a fixed seed
    reproduces the same degradation; the result may legitimately be empty.
    """
    mask = as_mask(gt).copy()
    s = params.max_shift_px
    dr, dc = (int(v) for v in rng.integers(-s, s + 1, size=2))
    if dr or dc:
        mask = _shift_mask(mask, dr, dc)
    m = int(rng.integers(-params.max_morph_px, params.max_morph_px + 1))
    if m > 0:
        mask = binary_dilation(mask, structure=_MORPH_STRUCTURE, iterations=m).astype(np.uint8)
    elif m < 0:
        mask = binary_erosion(mask, structure=_MORPH_STRUCTURE, iterations=-m).astype(np.uint8)
    n_notches = int(rng.integers(0, params.max_notches + 1))
    for _ in range(n_notches):
        contour = extract_contour(mask)
        if contour.is_empty:
            break
        r, c = contour.points[int(rng.integers(len(contour)))]
        radius = int(rng.integers(params.notch_radius_px[0], params.notch_radius_px[1] + 1))
        rows = np.arange(mask.shape[0])[:, None] - r
        cols = np.arange(mask.shape[1])[None, :] - c
        mask[rows ** 2 + cols ** 2 <= radius ** 2] = 0
    return mask


def _uniform_click_distribution(points: np.ndarray) -> ClickProbability:
    n = len(points)
    return ClickProbability(points=points, probabilities=np.full(n, 1.0 / n))


def build_online_sample(
    sample: TrainingSample,
    model: RevisionUNet,
    rollout: RolloutConfig,
    rng: np.random.Generator,
) -> tuple[RevisionInput, np.ndarray]:
    """Construct one click-conditioned input and its supervision mask.

    Draws r uniform in {0..max_prior_rounds} and plays r+1 click rounds: each
    round samples a boundary click from the softmax over ground-truth-contour
    errors against the current mask, then (except in the last round) lets the
    model revise the mask without gradient tracking.  All clicks are encoded
    into one joint click image; the supervision is always the untouched
    ground truth.  When the current mask has no contour the click falls back
    to a uniform draw over the ground-truth contour.
    """
    gt_contour = extract_contour(sample.gt_mask)
    if gt_contour.is_empty:
        raise EmptyGroundTruth("cannot simulate clicks without a ground-truth contour")
    shape = sample.gt_mask.shape
    current = as_mask(sample.initial_mask).copy()
    clicks: list[Click] = []
    rounds = int(rng.integers(0, rollout.max_prior_rounds + 1)) + 1
    for k in range(rounds):
        pred_contour = extract_contour(current)
        if pred_contour.is_empty:
            dist = _uniform_click_distribution(gt_contour.points)
        else:
            field = distance_field(gt_contour, pred_contour, PIXEL_UNITS, units="px")
            dist = click_distribution(field, temperature=rollout.click_temperature)
        click = sample_training_click(dist, rng, ordinal=k + 1)
        if rollout.clicks_accumulate:
            clicks.append(click)
        else:
            clicks = [click]
        if k + 1 < rounds:
            rev = RevisionInput(sample.image, current, encode_clicks(clicks, shape))
            with torch.no_grad():
                prob = model(rev.to_tensor())
            current = to_mask(prob)
    return RevisionInput(sample.image, current, encode_clicks(clicks, shape)), sample.gt_mask


def train(
    manifest: DatasetManifest,
    config: TrainingConfig,
    out_dir,
    seed: int = 0,
    log_every: int = 1,
) -> Path:
    """Run the full online training loop; returns the final checkpoint path.

    Writes ``train_log.jsonl`` (one JSON object per logged iteration) and
    periodic checkpoints under ``out_dir``.  Fully reproducible for a given
    seed on a fixed platform.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_entries = manifest.split("train")
    if not train_entries:
        raise ValueError("manifest has no train entries")
    schedule = config.schedule
    rng = np.random.default_rng(seed)
    model = RevisionUNet(config.network, seed=seed)
    model.train()
    optimizer = torch.optim.Adam(
        model.parameters(), lr=schedule.lr_steps[0][1], betas=(schedule.beta1, schedule.beta2)
    )
    log_path = out_dir / "train_log.jsonl"
    started = time.time()
    with open(log_path, "w", encoding="utf-8") as log:
        for iteration in range(schedule.total_iterations):
            lr = schedule.lr_at(iteration)
            for group in optimizer.param_groups:
                group["lr"] = lr
            entry = train_entries[int(rng.integers(len(train_entries)))]
            image, gt = manifest.load_entry(entry)
            initial = degrade_mask(gt, rng, config.rollout.degrade)
            sample = TrainingSample(
                image=image, gt_mask=gt, organ_id=entry.organ_id, initial_mask=initial
            )
            rev_input, supervision = build_online_sample(sample, model, config.rollout, rng)
            pred = model(rev_input.to_tensor()).squeeze(0).squeeze(0)
            target = torch.from_numpy(supervision.astype(np.float32))
            breakdown = balanced_total(dice_loss(pred, target), hd_loss(pred, target))
            total = breakdown.total
            if not bool(torch.isfinite(total)):
                dump = out_dir / f"nonfinite_iter{iteration:06d}.npz"
                np.savez_compressed(
                    dump,
                    image=rev_input.image,
                    current_mask=rev_input.current_mask,
                    click_map=rev_input.click_map,
                    supervision=supervision,
                )
                raise NonFiniteLoss(f"non-finite loss at iteration {iteration}; inputs in {dump}")
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            done = iteration + 1
            if done % log_every == 0 or done == schedule.total_iterations:
                record = {"iteration": done, "lr": lr}
                record.update(breakdown.as_floats())
                log.write(json.dumps(record) + "\n")
            if config.checkpoint_every and done % config.checkpoint_every == 0:
                save_checkpoint(
                    out_dir / f"checkpoint_{done:06d}.pt",
                    model,
                    iteration=done,
                    optimizer=optimizer,
                    seed=seed,
                    numpy_rng=rng,
                )
    final = save_checkpoint(
        out_dir / "checkpoint_final.pt",
        model,
        iteration=schedule.total_iterations,
        optimizer=optimizer,
        seed=seed,
        numpy_rng=rng,
    )
    elapsed = time.time() - started
    (out_dir / "train_summary.json").write_text(
        json.dumps(
            {
                "iterations": schedule.total_iterations,
                "seed": seed,
                "elapsed_s": round(elapsed, 3),
                "final_checkpoint": final.name,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return final
