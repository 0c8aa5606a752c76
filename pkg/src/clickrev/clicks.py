"""Click encoding and simulated-clinician click selection.

A click marks a point on the desired contour.  For the network it becomes a
truncated Gaussian bump in a dedicated input channel; during training clicks
are sampled from a softmax over boundary-error distances, and during testing
an oracle picks the worst-error boundary point outright.

All functions are pure; randomness comes only through an injected
``numpy.random.Generator``, which the caller owns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    PIXEL_UNITS,
    ContourPointSet,
    DistanceField,
    EmptyContour,
    PixelSpacing,
    largest_error_point,
)

#: Hard truncation radius of each click's Gaussian bump, in pixels.
CLICK_RADIUS_PX = 10.0
#: Gaussian width; radius/3 puts the truncation at three standard deviations.
CLICK_SIGMA_PX = CLICK_RADIUS_PX / 3.0


class OutOfBounds(ValueError):
    """A click lies outside the image grid."""


class EmptyGroundTruth(ValueError):
    """The ground-truth contour is empty, so no click target exists."""


@dataclass(frozen=True)
class Click:
    """One boundary click: pixel position plus 1-based session ordinal."""

    row: int
    col: int
    ordinal: int

    def to_json(self) -> dict:
        return {"row": int(self.row), "col": int(self.col), "ordinal": int(self.ordinal)}

    @classmethod
    def from_json(cls, payload: dict) -> "Click":
        return cls(row=int(payload["row"]), col=int(payload["col"]), ordinal=int(payload["ordinal"]))


@dataclass(frozen=True)
class ClickProbability:
    """Sampling distribution over ground-truth contour points."""

    points: np.ndarray         # (N, 2), row-major order
    probabilities: np.ndarray  # (N,), nonnegative, sums to 1


def encode_clicks(
    clicks: list[Click] | tuple[Click, ...],
    shape: tuple[int, int],
    radius: float = CLICK_RADIUS_PX,
) -> np.ndarray:
    """Render clicks into a joint click image.

    Each click contributes exp(-d^2 / (2 sigma^2)) with sigma = radius/3 out
    to distance ``radius`` and exactly 0 beyond it; overlapping bumps combine
    by per-pixel maximum, keeping the channel in [0, 1] with value 1.0 at
    every click center.  An empty click list yields an all-zero map.
    """
    h, w = int(shape[0]), int(shape[1])
    grid = np.zeros((h, w), dtype=np.float64)
    sigma2 = (radius / 3.0) ** 2
    reach = int(math.ceil(radius))
    for click in clicks:
        r, c = int(click.row), int(click.col)
        if not (0 <= r < h and 0 <= c < w):
            raise OutOfBounds(f"click ({r}, {c}) outside image of shape {(h, w)}")
        r0, r1 = max(0, r - reach), min(h, r + reach + 1)
        c0, c1 = max(0, c - reach), min(w, c + reach + 1)
        dr = np.arange(r0, r1, dtype=np.float64) - r
        dc = np.arange(c0, c1, dtype=np.float64) - c
        d2 = dr[:, None] ** 2 + dc[None, :] ** 2
        bump = np.exp(-d2 / (2.0 * sigma2))
        bump[d2 > radius * radius] = 0.0
        np.maximum(grid[r0:r1, c0:c1], bump, out=grid[r0:r1, c0:c1])
    return grid


def click_distribution(
    field: DistanceField,
    temperature: float = 1.0,
    favor_large_errors: bool = True,
) -> ClickProbability:
    """Softmax click probabilities over the ground-truth contour.

    With ``favor_large_errors`` (the default) the probability grows with the
    boundary error: P(y) ∝ exp(+D(y)/temperature).  Passing False flips the
    sign.  Distances must be in pixel units.
    """
    if len(field.points) == 0:
        raise EmptyContour("click_distribution requires a nonempty distance field")
    if field.units != "px":
        raise ValueError(f"click sampling operates on pixel distances, got units={field.units!r}")
    if temperature <= 0:
        raise ValueError("temperature must be strictly positive")
    z = field.distances / temperature
    if not favor_large_errors:
        z = -z
    z = z - z.max()
    p = np.exp(z)
    p /= p.sum()
    return ClickProbability(points=field.points, probabilities=p)


def sample_training_click(
    dist: ClickProbability, rng: np.random.Generator, ordinal: int = 1
) -> Click:
    """Draw one click from the distribution; deterministic given the rng state."""
    idx = int(rng.choice(len(dist.probabilities), p=dist.probabilities))
    r, c = dist.points[idx]
    return Click(row=int(r), col=int(c), ordinal=ordinal)


def oracle_click(
    gt: ContourPointSet,
    pred: ContourPointSet,
    spacing: PixelSpacing = PIXEL_UNITS,
    rng: np.random.Generator | None = None,
    ordinal: int = 1,
) -> Click:
    """Simulated clinician's click: the worst-error ground-truth boundary point.

    When the predicted contour is empty the error field is undefined, so the
    click falls back to a uniform draw over the ground-truth contour; the
    caller must supply a seeded rng for that case.
    """
    if gt.is_empty:
        raise EmptyGroundTruth("oracle_click requires a nonempty ground-truth contour")
    if pred.is_empty:
        if rng is None:
            raise ValueError("rng is required for the empty-prediction fallback")
        idx = int(rng.integers(len(gt)))
        r, c = gt.points[idx]
        return Click(row=int(r), col=int(c), ordinal=ordinal)
    r, c = largest_error_point(gt, pred, spacing)
    return Click(row=r, col=c, ordinal=ordinal)
