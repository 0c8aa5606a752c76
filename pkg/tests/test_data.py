import gzip

import numpy as np
import pytest
from scipy.ndimage import binary_fill_holes, label

from clickrev.data import (
    CROP_SIZE,
    DatasetManifest,
    Provenance,
    SYNTH_AREA_BOUNDS,
    VolumeRecord,
    crop_axial,
    ingest_volume,
    load_image_png16,
    save_image_png16,
    synth_dataset,
    synth_slice,
    write_slices,
    TooSmall,
)
from clickrev.geometry import PixelSpacing, ShapeMismatch
from clickrev.nifti import CorruptHeader, UnsupportedFormat, read_nifti, write_nifti


def make_volume(rng, slices=4, size=300, organs=("brainstem", "cord")) -> VolumeRecord:
    voxels = rng.integers(-1000, -200, size=(slices, size, size)).astype(np.int32)
    # a bright body ellipse, offset from center
    rr = np.arange(size)[:, None] - size * 0.55
    cc = np.arange(size)[None, :] - size * 0.45
    body = (rr / (size * 0.3)) ** 2 + (cc / (size * 0.35)) ** 2 <= 1.0
    for s in range(slices):
        voxels[s][body] = rng.integers(-100, 200, size=int(body.sum()))
    masks = {}
    for i, organ in enumerate(organs):
        m = np.zeros_like(voxels, dtype=np.uint8)
        r0 = int(size * 0.5) + 12 * i
        m[:, r0 : r0 + 14, r0 : r0 + 10] = 1
        masks[organ] = m
    return VolumeRecord(volume_id="case0", voxels=voxels, spacing=(0.98, 0.98, 3.0), organ_masks=masks)


class TestNifti:
    def test_round_trip_plain_and_gzip(self, tmp_path, rng):
        vol = rng.integers(-1000, 1000, size=(5, 30, 20)).astype(np.int16)
        for name in ("v.nii", "v.nii.gz"):
            path = write_nifti(tmp_path / name, vol, (0.98, 1.18, 3.0))
            back, spacing = read_nifti(path)
            np.testing.assert_array_equal(back, vol)
            assert spacing == pytest.approx((0.98, 1.18, 3.0), abs=1e-6)

    def test_float_dtype_round_trip(self, tmp_path, rng):
        vol = rng.normal(size=(2, 8, 8)).astype(np.float32)
        back, _ = read_nifti(write_nifti(tmp_path / "f.nii", vol, (1, 1, 1)))
        np.testing.assert_array_equal(back, vol)

    def test_rejects_wrong_extension(self, tmp_path):
        p = tmp_path / "volume.mha"
        p.write_bytes(b"x" * 400)
        with pytest.raises(UnsupportedFormat):
            read_nifti(p)

    def test_rejects_truncated_header(self, tmp_path):
        p = tmp_path / "short.nii"
        p.write_bytes(b"x" * 100)
        with pytest.raises(CorruptHeader):
            read_nifti(p)

    def test_rejects_bad_magic(self, tmp_path, rng):
        path = write_nifti(tmp_path / "v.nii", np.zeros((1, 4, 4), np.int16), (1, 1, 1))
        raw = bytearray(path.read_bytes())
        raw[344:348] = b"zzzz"
        path.write_bytes(bytes(raw))
        with pytest.raises(CorruptHeader):
            read_nifti(path)

    def test_rejects_truncated_data(self, tmp_path):
        path = write_nifti(tmp_path / "v.nii", np.zeros((2, 8, 8), np.int16), (1, 1, 1))
        raw = path.read_bytes()
        (tmp_path / "cut.nii").write_bytes(raw[:-16])
        with pytest.raises(CorruptHeader):
            read_nifti(tmp_path / "cut.nii")


class TestIngest:
    def test_happy_path_two_organs(self, tmp_path, rng):
        vol = make_volume(rng)
        case = tmp_path / "case0"
        case.mkdir()
        write_nifti(case / "image.nii.gz", vol.voxels.astype(np.int16), vol.spacing)
        for organ, mask in vol.organ_masks.items():
            write_nifti(case / f"mask_{organ}.nii.gz", mask, vol.spacing)
        record = ingest_volume(case)
        assert sorted(record.organ_masks) == ["brainstem", "cord"]
        assert record.spacing == pytest.approx((0.98, 0.98, 3.0), abs=1e-6)
        np.testing.assert_array_equal(record.voxels, vol.voxels)

    def test_mask_shape_mismatch(self, tmp_path, rng):
        case = tmp_path / "case1"
        case.mkdir()
        write_nifti(case / "image.nii", np.zeros((3, 40, 40), np.int16), (1, 1, 1))
        write_nifti(case / "mask_a.nii", np.zeros((3, 40, 39), np.uint8), (1, 1, 1))
        with pytest.raises(ShapeMismatch):
            ingest_volume(case)

    def test_missing_image_unsupported(self, tmp_path):
        case = tmp_path / "empty"
        case.mkdir()
        with pytest.raises(UnsupportedFormat):
            ingest_volume(case)

    def test_ingest_idempotent(self, tmp_path, rng):
        vol = make_volume(rng, slices=2)
        case = tmp_path / "case2"
        case.mkdir()
        write_nifti(case / "image.nii", vol.voxels.astype(np.int16), vol.spacing)
        write_nifti(case / "mask_brainstem.nii", vol.organ_masks["brainstem"], vol.spacing)
        a = ingest_volume(case)
        b = ingest_volume(case)
        np.testing.assert_array_equal(a.voxels, b.voxels)
        np.testing.assert_array_equal(a.organ_masks["brainstem"], b.organ_masks["brainstem"])


class TestCropAxial:
    def test_crop_size_and_offset_recorded(self, rng):
        vol = make_volume(rng)
        records = crop_axial(vol)
        assert records, "organs intersect the crop, records expected"
        for rec in records:
            assert rec.image.shape == (CROP_SIZE, CROP_SIZE)
            r0, c0 = rec.provenance.crop_offset
            assert 0 <= r0 <= vol.voxels.shape[1] - CROP_SIZE
            assert 0 <= c0 <= vol.voxels.shape[2] - CROP_SIZE

    def test_center_of_mass_oracle(self, rng):
        vol = make_volume(rng, slices=1)
        records = crop_axial(vol)
        body = vol.voxels[0] > -300.0
        rows, cols = np.nonzero(body)
        com_r, com_c = rows.mean(), cols.mean()  # independent first-moment oracle
        h, w = vol.voxels.shape[1:]
        expected = (
            int(np.clip(round(com_r - CROP_SIZE / 2), 0, h - CROP_SIZE)),
            int(np.clip(round(com_c - CROP_SIZE / 2), 0, w - CROP_SIZE)),
        )
        assert records[0].provenance.crop_offset == expected

    def test_organ_absent_on_slice_emits_nothing(self, rng):
        vol = make_volume(rng, slices=2)
        vol.organ_masks["brainstem"][1] = 0
        records = crop_axial(vol)
        slots = {(r.provenance.slice_index, organ) for r in records for organ in r.gt_masks}
        assert (0, "brainstem") in slots
        assert (1, "brainstem") not in slots

    def test_normalized_range(self, rng):
        vol = make_volume(rng, slices=1)
        rec = crop_axial(vol)[0]
        assert rec.image.min() >= 0.0 and rec.image.max() <= 1.0

    def test_too_small_raises(self, rng):
        small = VolumeRecord(
            volume_id="s",
            voxels=np.zeros((1, 128, 128), np.int32),
            spacing=(1, 1, 1),
            organ_masks={},
        )
        with pytest.raises(TooSmall):
            crop_axial(small)

    def test_coordinate_round_trip(self, rng):
        vol = make_volume(rng, slices=1)
        rec = crop_axial(vol)[0]
        organ, mask = next(iter(rec.gt_masks.items()))
        r, c = map(int, np.argwhere(mask)[0])
        s, vr, vc = rec.provenance.to_volume_coords(r, c)
        assert vol.organ_masks[organ][s, vr, vc] == 1


class TestSynthDataset:
    def test_deterministic_per_seed(self, tmp_path, rng):
        m1 = synth_dataset(8, 21, tmp_path / "a")
        m2 = synth_dataset(8, 21, tmp_path / "b")
        assert [e.to_json() | {"root": None} for e in m1.entries] == [
            e.to_json() | {"root": None} for e in m2.entries
        ]
        for e1, e2 in zip(m1.entries, m2.entries):
            i1, k1 = m1.load_entry(e1)
            i2, k2 = m2.load_entry(e2)
            np.testing.assert_array_equal(i1, i2)
            np.testing.assert_array_equal(k1, k2)

    def test_masks_nonempty_simply_connected_and_area_bounded(self, tmp_path):
        manifest = synth_dataset(12, 3, tmp_path)
        for entry in manifest.entries:
            _, mask = manifest.load_entry(entry)
            area = int(mask.sum())
            assert SYNTH_AREA_BOUNDS[0] <= area <= SYNTH_AREA_BOUNDS[1]
            _, n_components = label(mask)
            assert n_components == 1
            np.testing.assert_array_equal(binary_fill_holes(mask), mask.astype(bool))

    def test_split_fractions(self, tmp_path):
        manifest = synth_dataset(40, 1, tmp_path)
        assert len(manifest.split("train")) == 32
        assert len(manifest.split("validation")) == 4
        assert len(manifest.split("test")) == 4

    def test_image_range_and_organ_vocabulary(self, tmp_path):
        manifest = synth_dataset(6, 2, tmp_path)
        assert set(manifest.organs) <= {"round", "lobed"}
        for entry in manifest.entries:
            image, _ = manifest.load_entry(entry)
            assert image.min() >= 0.0 and image.max() <= 1.0


class TestManifest:
    def test_round_trip_and_integrity(self, tmp_path):
        manifest = synth_dataset(5, 9, tmp_path)
        loaded = DatasetManifest.load(tmp_path / "manifest.jsonl")
        assert [e.to_json() for e in loaded.entries] == [e.to_json() for e in manifest.entries]
        for entry in loaded.entries:
            image, mask = loaded.load_entry(entry)
            assert mask.any()
            assert image.shape == mask.shape

    def test_image_png16_round_trip(self, tmp_path, rng):
        image = rng.uniform(size=(32, 32))
        save_image_png16(image, tmp_path / "i.png")
        back = load_image_png16(tmp_path / "i.png")
        np.testing.assert_allclose(back, image, atol=0.5 / 65535)

    def test_write_slices_dedupes_images_per_record(self, tmp_path, rng):
        image, gt, organ = synth_slice(rng)
        from clickrev.data import SliceRecord

        record = SliceRecord(
            image=image,
            gt_masks={"a": gt, "b": gt},
            spacing=PixelSpacing(1, 1),
            provenance=Provenance("v", 0, (0, 0)),
        )
        manifest = write_slices([record], tmp_path)
        assert len(manifest.entries) == 2
        assert len(list((tmp_path / "images").glob("*.png"))) == 1
