"""Click encoding and simulated clicks: the Gaussian click image the network
sees, the softmax click distribution used in training, and the argmax oracle
used in evaluation.

Run:  python demos/02_click_encoding.py
"""

import numpy as np

from clickrev import (
    CLICK_RADIUS_PX,
    Click,
    PIXEL_UNITS,
    click_distribution,
    distance_field,
    encode_clicks,
    extract_contour,
    oracle_click,
    sample_training_click,
)

# A click becomes a truncated Gaussian bump: 1.0 at the center, zero beyond
# 10 px; several clicks combine by per-pixel maximum into one joint image.
clicks = [Click(row=32, col=32, ordinal=1), Click(row=36, col=60, ordinal=2)]
click_map = encode_clicks(clicks, (96, 96))
print(f"click map: shape {click_map.shape}, max {click_map.max():.1f}, "
      f"nonzero {int((click_map > 0).sum())} px (radius {CLICK_RADIUS_PX:.0f})")
print(f"value at the first center: {click_map[32, 32]:.3f}")
print(f"value 4 px to the right:   {click_map[32, 36]:.4f}")
print(f"value 11 px to the right:  {click_map[32, 43]:.1f} (beyond the radius)")

# Training clicks are sampled: the farther a ground-truth boundary point is
# from the current contour, the (much) likelier it is to be clicked.
gt = np.zeros((48, 48), np.uint8)
gt[10:38, 10:38] = 1
pred = np.zeros_like(gt)
pred[10:38, 10:30] = 1  # right quarter missing

field = distance_field(extract_contour(gt), extract_contour(pred), PIXEL_UNITS, units="px")
dist = click_distribution(field, temperature=1.0)
print(f"\nclick distribution over {len(dist.probabilities)} boundary points, "
      f"sum = {dist.probabilities.sum():.9f}")
top = np.argsort(dist.probabilities)[-3:][::-1]
for idx in top:
    r, c = dist.points[idx]
    print(f"  p={dist.probabilities[idx]:.3f} at ({r}, {c}), error {field.distances[idx]:.1f} px")

rng = np.random.default_rng(0)
sampled = [sample_training_click(dist, rng, ordinal=i + 1) for i in range(5)]
print("sampled training clicks:", [(c.row, c.col) for c in sampled])

# The evaluation oracle skips the sampling and clicks the worst point outright.
best = oracle_click(extract_contour(gt), extract_contour(pred), PIXEL_UNITS)
print(f"oracle click: ({best.row}, {best.col})")
