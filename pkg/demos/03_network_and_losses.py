"""The revision network and its losses: input/output contract, encoder shape,
and the balanced Dice + boundary-distance loss.

Run:  python demos/03_network_and_losses.py
"""

import numpy as np
import torch

from clickrev import (
    Click,
    NetworkConfig,
    RevisionInput,
    RevisionUNet,
    balanced_total,
    count_parameters,
    dice_loss,
    encode_clicks,
    hd_loss,
    to_mask,
)

# Full-scale configuration: 8 stride-2 stages collapse 256x256 to a 1x1
# bottleneck; widths double from 64 and saturate at 512.
config = NetworkConfig()
print("encoder widths:", config.encoder_widths())

# The compact variant keeps the same shape contract at a CPU-friendly size.
compact = NetworkConfig.compact()
model = RevisionUNet(compact, seed=0)
print(f"compact model: widths {compact.encoder_widths()}, "
      f"{count_parameters(model):,} parameters")

# Input = three aligned channels: image, current mask, click image.
rng = np.random.default_rng(1)
image = rng.uniform(size=(256, 256))
mask = np.zeros((256, 256), np.uint8)
mask[100:160, 100:160] = 1
click_map = encode_clicks([Click(130, 165, 1)], (256, 256))
rev = RevisionInput(image, mask, click_map)

prob = model.predict(rev)
print(f"forward: {rev.to_tensor().shape} -> probability map {prob.shape}, "
      f"range ({prob.min():.3f}, {prob.max():.3f})")
updated = to_mask(prob)
print(f"thresholded mask (p >= 0.5): {int(updated.sum())} px foreground")

# Losses: Dice overlap plus a boundary-distance-weighted squared error whose
# weight is rebalanced per sample so both terms contribute equally.
gt = torch.from_numpy(mask.astype(np.float32))
pred = torch.from_numpy(prob)
d = dice_loss(pred, gt)
h = hd_loss(pred, gt)
breakdown = balanced_total(d, h)
values = breakdown.as_floats()
print(f"\ndice_loss = {values['dice_loss']:.4f}")
print(f"hd_loss   = {values['hd_loss']:.4f}")
print(f"weight    = {values['balance_weight']:.4f}  "
      f"(weighted boundary term == dice term)")
print(f"total     = {values['total']:.4f}")
