"""Dataset plumbing: CT volume ingestion, axial crop extraction, the synthetic
desk-scale dataset, and the line-delimited JSON slice manifest.

On-disk layout under a dataset root::

    images/<slice>.png          16-bit grayscale, normalized intensity * 65535
    masks/<slice>_<organ>.png   8-bit binary PNG
    manifest.jsonl              one entry per (slice, organ), with split tag
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import center_of_mass, gaussian_filter

from .geometry import PixelSpacing, ShapeMismatch, as_mask, load_mask_png, save_mask_png
from .nifti import CorruptHeader, UnsupportedFormat, read_nifti

CROP_SIZE = 256
HU_CLIP = (-1000.0, 1000.0)
BODY_THRESHOLD_HU = -300.0


class TooSmall(ValueError):
    """The volume's in-plane size is below the crop size."""


@dataclass(frozen=True)
class Provenance:
    """Where a slice came from: enough to map crop pixels back to the volume."""

    volume_id: str
    slice_index: int
    crop_offset: tuple[int, int]  # (row, col) of the crop origin in the source slice

    def to_json(self) -> dict:
        return {
            "volume_id": self.volume_id,
            "slice_index": int(self.slice_index),
            "crop_offset": [int(self.crop_offset[0]), int(self.crop_offset[1])],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "Provenance":
        return cls(
            volume_id=str(payload["volume_id"]),
            slice_index=int(payload["slice_index"]),
            crop_offset=(int(payload["crop_offset"][0]), int(payload["crop_offset"][1])),
        )

    def to_volume_coords(self, row: int, col: int) -> tuple[int, int, int]:
        """Map an in-crop pixel back to (slice, row, col) of the source volume."""
        return (self.slice_index, row + self.crop_offset[0], col + self.crop_offset[1])


@dataclass(frozen=True)
class VolumeRecord:
    """A CT volume in HU with per-organ 3D masks, all sharing one voxel grid."""

    volume_id: str
    voxels: np.ndarray                 # (slices, H, W) integer HU
    spacing: tuple[float, float, float]  # (row_mm, col_mm, slice_mm)
    organ_masks: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        if self.voxels.ndim != 3:
            raise ShapeMismatch(f"voxels must be 3D, got {self.voxels.shape}")
        for organ, mask in self.organ_masks.items():
            if mask.shape != self.voxels.shape:
                raise ShapeMismatch(
                    f"mask for {organ!r} has shape {mask.shape}, volume is {self.voxels.shape}"
                )
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")


@dataclass(frozen=True)
class SliceRecord:
    """One 256x256 axial crop: normalized image plus nonempty organ masks."""

    image: np.ndarray  # float in [0, 1]
    gt_masks: dict[str, np.ndarray]
    spacing: PixelSpacing
    provenance: Provenance


def ingest_volume(path) -> VolumeRecord:
    """Load a case directory: ``image.nii[.gz]`` plus ``mask_<organ>.nii[.gz]``.

    Voxels are kept in HU as read; masks are binarized at > 0.
    """
    path = Path(path)
    if not path.is_dir():
        raise UnsupportedFormat(f"{path} is not a case directory")
    image_candidates = [p for p in (path / "image.nii.gz", path / "image.nii") if p.exists()]
    if not image_candidates:
        raise UnsupportedFormat(f"{path} has no image.nii or image.nii.gz")
    voxels, spacing = read_nifti(image_candidates[0])
    voxels = np.rint(np.asarray(voxels)).astype(np.int32)
    organ_masks: dict[str, np.ndarray] = {}
    for mask_path in sorted(path.glob("mask_*.nii")) + sorted(path.glob("mask_*.nii.gz")):
        organ = mask_path.name[len("mask_") :].split(".nii")[0]
        mask, _ = read_nifti(mask_path)
        mask = (np.asarray(mask) > 0).astype(np.uint8)
        if mask.shape != voxels.shape:
            raise ShapeMismatch(
                f"mask {mask_path.name} shape {mask.shape} != image shape {voxels.shape}"
            )
        organ_masks[organ] = mask
    return VolumeRecord(
        volume_id=path.name, voxels=voxels, spacing=spacing, organ_masks=organ_masks
    )


def normalize_hu(hu: np.ndarray, clip: tuple[float, float] = HU_CLIP) -> np.ndarray:
    """Clip HU to ``clip`` and rescale linearly to [0, 1]."""
    lo, hi = clip
    return (np.clip(hu.astype(np.float64), lo, hi) - lo) / (hi - lo)


def _crop_origin(body: np.ndarray, crop: int) -> tuple[int, int]:
    h, w = body.shape
    if body.any():
        com_r, com_c = center_of_mass(body)
    else:
        com_r, com_c = (h - 1) / 2.0, (w - 1) / 2.0
    r0 = int(np.clip(round(com_r - crop / 2), 0, h - crop))
    c0 = int(np.clip(round(com_c - crop / 2), 0, w - crop))
    return r0, c0


def crop_axial(volume: VolumeRecord, crop: int = CROP_SIZE) -> list[SliceRecord]:
    """Extract body-centered square crops, one record per (slice, organ).

    The crop window is centered on the body's center of mass (voxels above
    -300 HU), clamped to the volume bounds; slices where an organ's cropped
    mask is empty emit nothing for that organ.
    """
    _, h, w = volume.voxels.shape
    if h < crop or w < crop:
        raise TooSmall(f"in-plane size {(h, w)} is below the {crop} crop")
    spacing = PixelSpacing(volume.spacing[0], volume.spacing[1])
    records = []
    for index in range(volume.voxels.shape[0]):
        hu = volume.voxels[index]
        r0, c0 = _crop_origin(hu > BODY_THRESHOLD_HU, crop)
        image = normalize_hu(hu[r0 : r0 + crop, c0 : c0 + crop])
        provenance = Provenance(volume.volume_id, index, (r0, c0))
        for organ, mask3d in volume.organ_masks.items():
            cropped = mask3d[index, r0 : r0 + crop, c0 : c0 + crop]
            if cropped.any():
                records.append(
                    SliceRecord(
                        image=image,
                        gt_masks={organ: cropped.astype(np.uint8)},
                        spacing=spacing,
                        provenance=provenance,
                    )
                )
    return records


# --- manifest ---------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    """One (slice, organ) pair; paths are relative to the manifest's directory."""

    image_path: str
    mask_path: str
    organ_id: str
    spacing: PixelSpacing
    split: str
    provenance: Provenance

    def to_json(self) -> dict:
        return {
            "v": 1,
            "image": self.image_path,
            "mask": self.mask_path,
            "organ": self.organ_id,
            "spacing": [self.spacing.row_mm, self.spacing.col_mm],
            "split": self.split,
            "provenance": self.provenance.to_json(),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "ManifestEntry":
        return cls(
            image_path=payload["image"],
            mask_path=payload["mask"],
            organ_id=payload["organ"],
            spacing=PixelSpacing(*payload["spacing"]),
            split=payload["split"],
            provenance=Provenance.from_json(payload["provenance"]),
        )


@dataclass
class DatasetManifest:
    """All slice references of a dataset, with their train/validation/test tags."""

    root: Path
    entries: list[ManifestEntry] = field(default_factory=list)

    @property
    def organs(self) -> list[str]:
        return sorted({e.organ_id for e in self.entries})

    def split(self, tag: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == tag]

    def load_entry(self, entry: ManifestEntry) -> tuple[np.ndarray, np.ndarray]:
        """Load (image, mask) for an entry; the mask must be nonempty."""
        image = load_image_png16(self.root / entry.image_path)
        mask = load_mask_png(self.root / entry.mask_path)
        if image.shape != mask.shape:
            raise ShapeMismatch(f"{entry.image_path}: image {image.shape} vs mask {mask.shape}")
        if not mask.any():
            raise ValueError(f"{entry.mask_path} is empty but listed for organ {entry.organ_id}")
        return image, mask

    def to_record(self, entry: ManifestEntry) -> SliceRecord:
        image, mask = self.load_entry(entry)
        return SliceRecord(
            image=image,
            gt_masks={entry.organ_id: mask},
            spacing=entry.spacing,
            provenance=entry.provenance,
        )

    def save(self, path=None) -> Path:
        path = Path(path) if path is not None else self.root / "manifest.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry.to_json()) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.jsonl"
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    entries.append(ManifestEntry.from_json(json.loads(line)))
        return cls(root=path.parent, entries=entries)


def save_image_png16(image: np.ndarray, path) -> None:
    """Store a [0, 1] float image as 16-bit grayscale PNG."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image must lie in [0, 1]")
    quantized = np.rint(arr * 65535.0).astype(np.uint16)
    Image.fromarray(quantized).save(path)


def load_image_png16(path) -> np.ndarray:
    arr = np.asarray(Image.open(Path(path))).astype(np.float64)
    return arr / 65535.0


def write_slices(
    records: list[SliceRecord], out_dir, splits: list[str] | None = None, prefix: str = "slice"
) -> DatasetManifest:
    """Write slice records and their manifest; one manifest entry per organ.

    ``splits`` gives a tag per record (default: everything "train").  Images
    shared by several organ entries of one record are stored once.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    entries = []
    for idx, record in enumerate(records):
        split = splits[idx] if splits is not None else "train"
        stem = f"{prefix}_{idx:05d}"
        image_rel = f"images/{stem}.png"
        save_image_png16(record.image, out_dir / image_rel)
        for organ, mask in sorted(record.gt_masks.items()):
            if not mask.any():
                continue
            mask_rel = f"masks/{stem}_{organ}.png"
            save_mask_png(mask, out_dir / mask_rel)
            entries.append(
                ManifestEntry(
                    image_path=image_rel,
                    mask_path=mask_rel,
                    organ_id=organ,
                    spacing=record.spacing,
                    split=split,
                    provenance=record.provenance,
                )
            )
    manifest = DatasetManifest(root=out_dir, entries=entries)
    manifest.save()
    return manifest


# --- synthetic desk-scale dataset -------------------------------------------

SYNTH_AREA_BOUNDS = (600, 10_000)  # pixels; generator contract for gt blob size


def _star_blob(rng: np.random.Generator, shape: tuple[int, int], lobed: bool) -> np.ndarray:
    """Random smooth star-convex blob: ellipse-ish radius with low harmonics."""
    h, w = shape
    scale = min(h, w) / CROP_SIZE
    margin = 72.0 * scale
    cr = rng.uniform(margin, h - margin)
    cc = rng.uniform(margin, w - margin)
    r0 = rng.uniform(22.0, 52.0) * scale
    strength = 0.16 if lobed else 0.05
    rows = np.arange(h, dtype=np.float64)[:, None] - cr
    cols = np.arange(w, dtype=np.float64)[None, :] - cc
    theta = np.arctan2(rows, cols)
    wobble = np.zeros_like(theta)
    for k in range(2, 6):
        amp = rng.normal(0.0, strength / (k - 1))
        phase = rng.uniform(0.0, 2.0 * np.pi)
        wobble += amp * np.cos(k * theta + phase)
    radius = r0 * (1.0 + np.clip(wobble, -0.45, 0.45))
    dist = np.hypot(rows, cols)
    return (dist <= radius).astype(np.uint8)


def _textured_background(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    coarse = gaussian_filter(rng.normal(0.0, 1.0, shape), 18.0)
    coarse /= max(np.abs(coarse).max(), 1e-9)
    fine = gaussian_filter(rng.normal(0.0, 1.0, shape), 2.0)
    fine /= max(np.abs(fine).max(), 1e-9)
    gr, gc = rng.uniform(-1.0, 1.0, 2)
    ramp = (gr * np.arange(h)[:, None] + gc * np.arange(w)[None, :]) / max(h, w)
    return 0.45 + 0.08 * coarse + 0.03 * fine + 0.05 * ramp


def synth_slice(rng: np.random.Generator, shape: tuple[int, int] = (CROP_SIZE, CROP_SIZE)) -> tuple[np.ndarray, np.ndarray, str]:
    """One synthetic slice: (image, gt mask, organ family).

    The target blob sits on a textured background along with distractor blobs
    of the same appearance, so the current-mask channel, not the image alone,
    identifies the target.
    """
    lobed = bool(rng.integers(0, 2))
    organ = "lobed" if lobed else "round"
    area_scale = (min(shape) / CROP_SIZE) ** 2
    lo, hi = SYNTH_AREA_BOUNDS[0] * area_scale, SYNTH_AREA_BOUNDS[1] * area_scale
    while True:
        gt = _star_blob(rng, shape, lobed)
        area = int(gt.sum())
        if lo <= area <= hi:
            break
    image = _textured_background(rng, shape)
    contrast = rng.choice([-1.0, 1.0]) * rng.uniform(0.10, 0.16)
    soft_gt = gaussian_filter(gt.astype(np.float64), 1.5)
    image = image + contrast * soft_gt
    gt_center = np.argwhere(gt).mean(axis=0)
    min_separation = 95.0 * min(shape) / CROP_SIZE
    for _ in range(int(rng.integers(1, 3))):
        for _attempt in range(8):
            blob = _star_blob(rng, shape, bool(rng.integers(0, 2)))
            center = np.argwhere(blob).mean(axis=0)
            if np.hypot(*(center - gt_center)) > min_separation:
                soft = gaussian_filter(blob.astype(np.float64), 1.5)
                image = image + rng.choice([-1.0, 1.0]) * rng.uniform(0.10, 0.16) * soft
                break
    image = image + rng.normal(0.0, 0.02, shape)
    return np.clip(image, 0.0, 1.0), gt, organ


def synth_dataset(
    n: int,
    rng: np.random.Generator | int,
    out_dir,
    spacing: PixelSpacing = PixelSpacing(1.0, 1.0),
) -> DatasetManifest:
    """Generate a deterministic synthetic dataset split 80/10/10.

    ``rng`` may be a Generator or a plain seed.  Slices are written to
    ``out_dir`` in the standard dataset layout.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    records = []
    for i in range(n):
        image, gt, organ = synth_slice(rng)
        records.append(
            SliceRecord(
                image=image,
                gt_masks={organ: gt},
                spacing=spacing,
                provenance=Provenance(volume_id="synth", slice_index=i, crop_offset=(0, 0)),
            )
        )
    order = rng.permutation(n)
    n_train = int(round(n * 0.8))
    n_val = int(round(n * 0.1))
    splits = [""] * n
    for rank, idx in enumerate(order):
        if rank < n_train:
            splits[idx] = "train"
        elif rank < n_train + n_val:
            splits[idx] = "validation"
        else:
            splits[idx] = "test"
    return write_slices(records, out_dir, splits=splits)
