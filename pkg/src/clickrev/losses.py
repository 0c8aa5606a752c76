"""Training losses: smoothed Dice, boundary-distance-weighted squared error,
and the per-sample balancing rule that equalizes the two terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy.ndimage import distance_transform_edt

from .geometry import ShapeMismatch, as_mask, extract_contour
from .network import to_mask

DICE_SMOOTH = 1.0
HD_ALPHA = 2.0
BALANCE_GUARD = 1e-8


def _pair_2d(pred, target) -> tuple[torch.Tensor, torch.Tensor]:
    p = pred if isinstance(pred, torch.Tensor) else torch.as_tensor(pred)
    t = target if isinstance(target, torch.Tensor) else torch.as_tensor(target)
    p = p.squeeze()
    t = t.squeeze().to(p.dtype)
    if p.ndim != 2 or p.shape != t.shape:
        raise ShapeMismatch(f"prediction/target shapes differ: {tuple(p.shape)} vs {tuple(t.shape)}")
    return p, t


def dice_loss(pred, target, smooth: float = DICE_SMOOTH) -> torch.Tensor:
    """1 - (2 Σ p·g + smooth) / (Σ p + Σ g + smooth), differentiable in pred."""
    p, t = _pair_2d(pred, target)
    inter = (p * t).sum()
    return 1.0 - (2.0 * inter + smooth) / (p.sum() + t.sum() + smooth)


def boundary_distance_map(mask) -> np.ndarray:
    """Unsigned Euclidean distance of every pixel to the mask's inner boundary.

    A mask with no boundary pixels (i.e. an empty mask) maps to all zeros so
    it contributes no distance weight.
    """
    m = as_mask(mask)
    contour = extract_contour(m)
    if contour.is_empty:
        return np.zeros(m.shape, dtype=np.float64)
    boundary = np.zeros(m.shape, dtype=bool)
    boundary[contour.points[:, 0], contour.points[:, 1]] = True
    return distance_transform_edt(~boundary)


def hd_loss(pred, target, alpha: float = HD_ALPHA, threshold: float = 0.5) -> torch.Tensor:
    """Boundary-distance-weighted squared error.

    mean over pixels of (p - g)^2 * (dt_g^alpha + dt_p^alpha), where dt_g and
    dt_p are the unsigned distance transforms of the target boundary and of
    the thresholded prediction's boundary.  Both transforms are recomputed
    from the current prediction each call and treated as constants, so
    gradients flow only through the (p - g)^2 factor.
    """
    p, t = _pair_2d(pred, target)
    with torch.no_grad():
        target_np = t.detach().cpu().numpy()
        dt_target = boundary_distance_map(np.rint(target_np).astype(np.uint8))
        dt_pred = boundary_distance_map(to_mask(p, threshold))
        weight = torch.from_numpy(dt_target ** alpha + dt_pred ** alpha).to(p.dtype)
    return ((p - t) ** 2 * weight).mean()


@dataclass(frozen=True)
class LossBreakdown:
    """The two loss terms, the balancing weight, and their weighted sum.

    ``total == dice_loss + balance_weight * hd_loss`` by construction.  Fields
    hold torch scalars during training and plain floats otherwise, matching
    whatever :func:`balanced_total` was given.
    """

    dice_loss: object
    hd_loss: object
    balance_weight: object
    total: object

    def as_floats(self) -> dict:
        def value(x) -> float:
            return float(x.detach()) if isinstance(x, torch.Tensor) else float(x)

        return {
            "dice_loss": value(self.dice_loss),
            "hd_loss": value(self.hd_loss),
            "balance_weight": value(self.balance_weight),
            "total": value(self.total),
        }


def balanced_total(dice_term, hd_term, guard: float = BALANCE_GUARD) -> LossBreakdown:
    """Weight the boundary term so its contribution matches the Dice term.

    The weight w = dice / (hd + guard) is recomputed per sample and detached
    from the graph, so gradients never flow through the balancing itself.
    """
    w = dice_term / (hd_term + guard)
    if isinstance(w, torch.Tensor):
        w = w.detach()
    total = dice_term + w * hd_term
    return LossBreakdown(dice_loss=dice_term, hd_loss=hd_term, balance_weight=w, total=total)
