"""Click-conditioned segmentation-revision network.

A plain encoder/decoder: the encoder halves resolution with stride-2 3x3
convolutions until the bottleneck is 1x1, doubling feature width from
``base_features`` until it saturates at ``max_features``; the decoder
upsamples and fuses the matching encoder feature by concatenation.  Input is
three stacked channels (image, current mask, click image), output a sigmoid
probability map.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .geometry import ShapeMismatch


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture parameters; the defaults are the full-scale model."""

    in_channels: int = 3
    out_channels: int = 1
    base_features: int = 64
    max_features: int = 512
    depth: int = 8
    kernel_size: int = 3
    normalization: str = "instance"
    activation: str = "relu"
    input_size: int = 256

    def __post_init__(self) -> None:
        if self.input_size != 2 ** self.depth:
            raise ValueError(
                f"input_size ({self.input_size}) must equal 2**depth ({2 ** self.depth}) "
                "so the bottleneck collapses to 1x1"
            )
        if self.base_features < 1 or self.max_features < self.base_features:
            raise ValueError("need 1 <= base_features <= max_features")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd")
        if self.normalization not in ("instance", "none"):
            raise ValueError(f"unsupported normalization {self.normalization!r}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    def encoder_widths(self) -> list[int]:
        """Feature width of each downsampling stage: doubles, then saturates."""
        widths = []
        w = self.base_features
        for _ in range(self.depth):
            widths.append(min(w, self.max_features))
            w *= 2
        return widths

    @classmethod
    def compact(cls) -> "NetworkConfig":
        """Slim widths for CPU-scale experiments; same shape contract as the default."""
        return cls(base_features=16, max_features=64)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, payload: dict) -> "NetworkConfig":
        return cls(**payload)


@dataclass(frozen=True)
class RevisionInput:
    """Three aligned grids: normalized image, current mask, click image."""

    image: np.ndarray         # float in [0, 1]
    current_mask: np.ndarray  # {0, 1}
    click_map: np.ndarray     # float in [0, 1]

    def __post_init__(self) -> None:
        img = np.asarray(self.image, dtype=np.float64)
        mask = np.asarray(self.current_mask)
        clicks = np.asarray(self.click_map, dtype=np.float64)
        if not (img.ndim == 2 and img.shape == mask.shape == clicks.shape):
            raise ShapeMismatch(
                f"channels must be equal 2D shapes, got {img.shape}, {mask.shape}, {clicks.shape}"
            )
        if img.min() < 0.0 or img.max() > 1.0:
            raise ValueError("image channel must lie in [0, 1]")
        if not bool(((mask == 0) | (mask == 1)).all()):
            raise ValueError("mask channel must be binary")
        if clicks.min() < 0.0 or clicks.max() > 1.0:
            raise ValueError("click channel must lie in [0, 1]")

    def to_tensor(self) -> torch.Tensor:
        """Stack to a (1, 3, H, W) float32 batch."""
        stacked = np.stack(
            [
                np.asarray(self.image, dtype=np.float32),
                np.asarray(self.current_mask, dtype=np.float32),
                np.asarray(self.click_map, dtype=np.float32),
            ]
        )
        return torch.from_numpy(stacked).unsqueeze(0)


def _conv_block(in_ch: int, out_ch: int, kernel: int, stride: int, normalize: bool) -> nn.Sequential:
    layers: list[nn.Module] = [
        nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2)
    ]
    if normalize:
        layers.append(nn.InstanceNorm2d(out_ch))
    layers.append(nn.ReLU(inplace=True))
    return nn.Sequential(*layers)


class RevisionUNet(nn.Module):
    """Encoder/decoder revision model; see the module docstring for the layout.

    Instance normalization is skipped at any stage whose spatial size is 1x1
    (a single element has no variance to normalize).  With ``seed`` the
    default fan-in-scaled initialization is drawn from a forked, seeded rng
    stream, leaving the global torch rng untouched.
    """

    def __init__(self, config: NetworkConfig | None = None, seed: int | None = None):
        super().__init__()
        self.config = config or NetworkConfig()
        cfg = self.config
        widths = cfg.encoder_widths()
        use_norm = cfg.normalization == "instance"

        with torch.random.fork_rng(enabled=seed is not None):
            if seed is not None:
                torch.manual_seed(seed)

            encoder = []
            in_ch = cfg.in_channels
            size = cfg.input_size
            for w in widths:
                size //= 2
                encoder.append(_conv_block(in_ch, w, cfg.kernel_size, 2, use_norm and size > 1))
                in_ch = w
            self.encoder = nn.ModuleList(encoder)

            decoder = []
            ch = widths[-1]
            for level in range(cfg.depth - 2, -1, -1):
                decoder.append(_conv_block(ch + widths[level], widths[level], cfg.kernel_size, 1, use_norm))
                ch = widths[level]
            self.decoder = nn.ModuleList(decoder)

            self.fuse_input = _conv_block(ch + cfg.in_channels, widths[0], cfg.kernel_size, 1, use_norm)
            self.head = nn.Conv2d(widths[0], cfg.out_channels, kernel_size=1)

        self.upsample = nn.Upsample(scale_factor=2, mode="nearest")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != cfg.in_channels or x.shape[2:] != (cfg.input_size, cfg.input_size):
            raise ShapeMismatch(
                f"expected (B, {cfg.in_channels}, {cfg.input_size}, {cfg.input_size}), got {tuple(x.shape)}"
            )
        feats = []
        h = x
        for stage in self.encoder:
            h = stage(h)
            feats.append(h)
        h = feats[-1]
        for i, stage in enumerate(self.decoder):
            skip = feats[len(self.encoder) - 2 - i]
            h = stage(torch.cat([self.upsample(h), skip], dim=1))
        h = self.fuse_input(torch.cat([self.upsample(h), x], dim=1))
        return torch.sigmoid(self.head(h))

    def bottleneck_size(self) -> tuple[int, int]:
        """Spatial size of the deepest encoder feature map."""
        s = self.config.input_size >> self.config.depth
        return (s, s)

    @torch.no_grad()
    def predict(self, rev_input: RevisionInput) -> np.ndarray:
        """Inference convenience: probability map as a 2D float array."""
        was_training = self.training
        self.eval()
        try:
            out = self.forward(rev_input.to_tensor())
        finally:
            self.train(was_training)
        return out.squeeze(0).squeeze(0).cpu().numpy()


def to_mask(prob, threshold: float = 0.5) -> np.ndarray:
    """Binarize a probability map; the threshold is inclusive (p >= t -> 1)."""
    if isinstance(prob, torch.Tensor):
        arr = prob.detach().cpu().numpy()
    else:
        arr = np.asarray(prob)
    arr = np.squeeze(arr)
    if arr.ndim != 2:
        raise ShapeMismatch(f"probability map must squeeze to 2D, got shape {arr.shape}")
    return (arr >= threshold).astype(np.uint8)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
