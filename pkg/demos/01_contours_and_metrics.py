"""Contours and metrics: how masks, boundary point sets, distance fields, and
the DSC / HD95 / worst-error metrics fit together.

Run:  python demos/01_contours_and_metrics.py
"""

import numpy as np

from clickrev import (
    PIXEL_UNITS,
    PixelSpacing,
    dice,
    distance_field,
    extract_contour,
    hd95,
    largest_error_point,
)

# Two masks: a square "ground truth" and a shifted, clipped "prediction".
gt = np.zeros((24, 24), np.uint8)
gt[6:18, 6:18] = 1

pred = np.zeros_like(gt)
pred[8:20, 9:21] = 1  # shifted down-right

gt_contour = extract_contour(gt)
pred_contour = extract_contour(pred)
print(f"ground truth: {int(gt.sum())} px, contour {len(gt_contour)} points")
print(f"prediction:   {int(pred.sum())} px, contour {len(pred_contour)} points")

# Overlap
print(f"\nDSC = {dice(gt, pred):.4f}")

# Boundary distances: per ground-truth contour point, the distance to the
# nearest predicted contour point.  Units follow the spacing you pass in.
spacing = PixelSpacing(row_mm=0.98, col_mm=0.98)
field = distance_field(gt_contour, pred_contour, spacing)
print(f"\ndistance field over C_g ({field.units}):")
print(f"  min={field.distances.min():.2f}  mean={field.distances.mean():.2f}  "
      f"max={field.distances.max():.2f}")

print(f"HD95 = {hd95(gt_contour, pred_contour, spacing):.3f} mm")

# The simulated clinician clicks where the contour is worst: the argmax of
# the distance field (row-major tie-break).  Click selection uses pixel units.
worst = largest_error_point(gt_contour, pred_contour, PIXEL_UNITS)
print(f"worst boundary point of the prediction (in px units): {worst}")

# Distances scale linearly with spacing; DSC does not depend on it.
double = PixelSpacing(2 * 0.98, 2 * 0.98)
assert hd95(gt_contour, pred_contour, double) == 2 * hd95(gt_contour, pred_contour, spacing)
print("\nscaling check: doubling the pixel spacing doubles HD95, DSC unchanged")
