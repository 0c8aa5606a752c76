"""Binary masks, contour point sets, distance fields, and segmentation metrics.

Everything here is a pure function of its inputs and safe to call from any
number of threads.  Coordinates are (row, col) pixel indices throughout; any
set of contour points is kept in canonical row-major order so that argmax
tie-breaking and entry ordering are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.spatial import cKDTree


class ShapeMismatch(ValueError):
    """Two grids that must share a shape do not."""


class EmptyContour(ValueError):
    """A distance computation received an empty contour point set."""


@dataclass(frozen=True)
class PixelSpacing:
    """Physical pixel size in millimeters along rows and columns."""

    row_mm: float
    col_mm: float

    def __post_init__(self) -> None:
        if not (self.row_mm > 0 and self.col_mm > 0):
            raise ValueError(f"pixel spacing must be strictly positive, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.row_mm, self.col_mm], dtype=np.float64)


#: Unit spacing; distances computed with it come out in pixels.  Click
#: selection uses pixel units, metric reporting uses real spacing in mm.
PIXEL_UNITS = PixelSpacing(1.0, 1.0)


def as_mask(grid) -> np.ndarray:
    """Validate a binary mask and return it as a 2D uint8 array of {0, 1}."""
    arr = np.asarray(grid)
    if arr.ndim != 2:
        raise ShapeMismatch(f"mask must be 2D, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr.astype(np.uint8)
    if not bool(((arr == 0) | (arr == 1)).all()):
        raise ValueError("mask cells must be exactly 0 or 1")
    return arr.astype(np.uint8)


@dataclass(frozen=True)
class ContourPointSet:
    """Boundary pixels of a mask, stored in canonical row-major order.

    A boundary pixel is a foreground pixel with at least one 4-connected
    background neighbor; the image border counts as background.
    """

    points: np.ndarray  # (N, 2) int64 rows of (row, col)
    source_shape: tuple[int, int]

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        if len(pts):
            order = np.lexsort((pts[:, 1], pts[:, 0]))
            pts = pts[order]
            keep = np.ones(len(pts), dtype=bool)
            keep[1:] = np.any(np.diff(pts, axis=0) != 0, axis=1)
            pts = pts[keep]
            h, w = self.source_shape
            if pts.min() < 0 or pts[:, 0].max() >= h or pts[:, 1].max() >= w:
                raise ValueError("contour points must lie inside source_shape")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "source_shape", (int(self.source_shape[0]), int(self.source_shape[1])))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def is_empty(self) -> bool:
        return len(self.points) == 0

    def as_set(self) -> set[tuple[int, int]]:
        return {(int(r), int(c)) for r, c in self.points}

    def to_mask(self) -> np.ndarray:
        """Rasterize the point set back onto its source grid."""
        grid = np.zeros(self.source_shape, dtype=np.uint8)
        if len(self.points):
            grid[self.points[:, 0], self.points[:, 1]] = 1
        return grid


@dataclass(frozen=True)
class DistanceField:
    """Distance from every target contour point to its nearest reference point.

    Entries follow the target's canonical row-major order.  ``units`` records
    whether the distances are millimeters or pixels; the choice is made at
    each call site.
    """

    points: np.ndarray     # (N, 2) target points
    distances: np.ndarray  # (N,) nonnegative
    units: str = "mm"


@dataclass(frozen=True)
class MetricReport:
    """Contour-pair agreement: Dice overlap plus boundary distances in mm.

    ``max_error_mm`` is the one-sided worst distance from the ground-truth
    contour to the prediction, i.e. the simulated clinician's click target.
    """

    dsc: float
    hd95_mm: float
    max_error_mm: float


def extract_contour(mask) -> ContourPointSet:
    """Inner boundary of a mask under 4-connectivity.

    Returns exactly the foreground pixels that touch background through a
    4-neighbor, treating pixels beyond the image border as background.  An
    empty mask yields an empty point set.
    """
    m = as_mask(mask).astype(bool)
    padded = np.pad(m, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    boundary = m & ~interior
    return ContourPointSet(np.argwhere(boundary), m.shape)


def distance_field(
    target: ContourPointSet,
    reference: ContourPointSet,
    spacing: PixelSpacing,
    units: str = "mm",
) -> DistanceField:
    """Minimum scaled Euclidean distance from each target point to the reference set."""
    if target.is_empty or reference.is_empty:
        raise EmptyContour("distance_field requires nonempty target and reference contours")
    scale = spacing.as_array()
    tree = cKDTree(reference.points * scale)
    dist, _ = tree.query(target.points * scale, k=1)
    return DistanceField(points=target.points, distances=np.asarray(dist, dtype=np.float64), units=units)


def dice(a, b) -> float:
    """Dice overlap 2|A∩B| / (|A|+|B|); two empty masks count as perfect (1.0)."""
    ma, mb = as_mask(a), as_mask(b)
    if ma.shape != mb.shape:
        raise ShapeMismatch(f"mask shapes differ: {ma.shape} vs {mb.shape}")
    total = int(ma.sum()) + int(mb.sum())
    if total == 0:
        return 1.0
    inter = int(np.logical_and(ma, mb).sum())
    return 2.0 * inter / total


def hd95(a: ContourPointSet, b: ContourPointSet, spacing: PixelSpacing) -> float:
    """Robust Hausdorff distance: max of the two directed 95th percentiles.

    Percentiles use linear interpolation on the sorted directed-distance
    lists, so the result is symmetric in (a, b) and scales linearly with
    spacing.
    """
    d_ab = distance_field(a, b, spacing).distances
    d_ba = distance_field(b, a, spacing).distances
    return float(max(np.percentile(d_ab, 95.0), np.percentile(d_ba, 95.0)))


def largest_error_point(
    gt: ContourPointSet, pred: ContourPointSet, spacing: PixelSpacing
) -> tuple[int, int]:
    """Ground-truth contour point farthest from the predicted contour.

    Ties resolve to the first point in canonical row-major order.
    """
    field = distance_field(gt, pred, spacing)
    idx = int(np.argmax(field.distances))
    r, c = field.points[idx]
    return int(r), int(c)


def worst_case_distance_mm(shape: tuple[int, int], spacing: PixelSpacing) -> float:
    """Image diagonal in mm: the largest distance two in-image points can have."""
    h, w = shape
    return float(np.hypot((h - 1) * spacing.row_mm, (w - 1) * spacing.col_mm))


_MOORE_STEPS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


def _moore_trace(component: np.ndarray, start: tuple[int, int]) -> list[tuple[int, int]]:
    """Walk the outer boundary of one connected component, clockwise-ish."""
    h, w = component.shape
    path = []
    current = start
    backtrack = 0  # index into _MOORE_STEPS of the direction we came from
    while True:
        path.append(current)
        found = False
        for i in range(8):
            idx = (backtrack + i) % 8
            dr, dc = _MOORE_STEPS[idx]
            nr, nc = current[0] + dr, current[1] + dc
            if 0 <= nr < h and 0 <= nc < w and component[nr, nc]:
                current = (nr, nc)
                backtrack = (idx + 5) % 8
                found = True
                break
        if not found:  # isolated pixel
            break
        if current == start and len(path) > 1:
            break
    return path


def contour_polygons(mask) -> list[list[tuple[int, int]]]:
    """Ordered outer-boundary walks of each connected component.

    Every returned point is a member of :func:`extract_contour`'s point set;
    pixels that touch background only diagonally are dropped from the walk
    (they are not boundary under 4-connectivity).  Hole rings are not traced;
    the full boundary, holes included, is available via extract_contour.
    """
    from scipy.ndimage import label

    m = as_mask(mask).astype(bool)
    contour_set = extract_contour(m).as_set()
    labels, count = label(m, structure=np.ones((3, 3), dtype=int))
    polygons = []
    for comp_id in range(1, count + 1):
        component = labels == comp_id
        start_r, start_c = np.argwhere(component)[0]
        walk = _moore_trace(component, (int(start_r), int(start_c)))
        polygon = [p for p in walk if p in contour_set]
        if polygon:
            polygons.append(polygon)
    return polygons


# --- mask serialization -----------------------------------------------------

def mask_to_rle(mask) -> dict:
    """Run-length encode a mask row-major: alternating 0-run/1-run lengths.

    The first count is always a zero-run (possibly of length 0), so the
    encoding is unambiguous without a start-value field.
    """
    m = as_mask(mask)
    flat = m.ravel()
    change = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], change])
    lengths = np.diff(np.concatenate([starts, [flat.size]]))
    counts = [int(c) for c in lengths]
    if flat.size and flat[0] == 1:
        counts = [0] + counts
    return {"v": 1, "shape": [int(m.shape[0]), int(m.shape[1])], "counts": counts}


def rle_to_mask(rle: dict) -> np.ndarray:
    """Invert :func:`mask_to_rle`."""
    h, w = (int(x) for x in rle["shape"])
    counts = rle["counts"]
    if sum(counts) != h * w:
        raise ValueError(f"RLE counts sum to {sum(counts)}, expected {h * w}")
    flat = np.zeros(h * w, dtype=np.uint8)
    pos = 0
    value = 0
    for count in counts:
        if value:
            flat[pos : pos + count] = 1
        pos += count
        value ^= 1
    return flat.reshape(h, w)


def save_mask_png(mask, path) -> None:
    """Write a mask as an 8-bit PNG with foreground at 255."""
    m = as_mask(mask)
    Image.fromarray(m * np.uint8(255), mode="L").save(path)


def load_mask_png(path) -> np.ndarray:
    img = Image.open(Path(path)).convert("L")
    return (np.asarray(img) > 127).astype(np.uint8)
