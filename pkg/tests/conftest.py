import math

import numpy as np
import pytest

from clickrev.geometry import PixelSpacing


def random_blob_mask(rng: np.random.Generator, size: int, p_empty: float = 0.0) -> np.ndarray:
    """Random connected-ish blob via thresholded smoothed noise; may be empty."""
    from scipy.ndimage import gaussian_filter

    if p_empty and rng.random() < p_empty:
        return np.zeros((size, size), np.uint8)
    noise = gaussian_filter(rng.normal(size=(size, size)), sigma=rng.uniform(1.0, 3.0))
    threshold = np.quantile(noise, rng.uniform(0.6, 0.9))
    mask = (noise > threshold).astype(np.uint8)
    if not mask.any():
        mask[rng.integers(size), rng.integers(size)] = 1
    return mask


def brute_contour(mask: np.ndarray) -> set[tuple[int, int]]:
    """Reference boundary definition: per-pixel 4-neighbor scan."""
    h, w = mask.shape
    points = set()
    for r in range(h):
        for c in range(w):
            if not mask[r, c]:
                continue
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nr, nc = r + dr, c + dc
                if not (0 <= nr < h and 0 <= nc < w) or mask[nr, nc] == 0:
                    points.add((r, c))
                    break
    return points


def brute_min_distances(
    target: list[tuple[int, int]], reference: list[tuple[int, int]], spacing: PixelSpacing
) -> list[float]:
    """All-pairs minimum distances, in target order."""
    out = []
    for tr, tc in target:
        out.append(
            min(
                math.hypot((tr - rr) * spacing.row_mm, (tc - rc) * spacing.col_mm)
                for rr, rc in reference
            )
        )
    return out


def brute_hd95(
    a: list[tuple[int, int]], b: list[tuple[int, int]], spacing: PixelSpacing
) -> float:
    d_ab = brute_min_distances(a, b, spacing)
    d_ba = brute_min_distances(b, a, spacing)
    return max(float(np.percentile(d_ab, 95)), float(np.percentile(d_ba, 95)))


def row_major(points) -> list[tuple[int, int]]:
    return sorted((int(r), int(c)) for r, c in points)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
