import numpy as np
import pytest

from clickrev.data import Provenance, SliceRecord, synth_slice
from clickrev.evaluate import (
    BenchmarkReport,
    MetricCurve,
    MixedBudget,
    RevisionTrace,
    aggregate,
    compute_metrics,
    emit_report,
    parse_report_csv,
    read_traces,
    render_table,
    simulate_revision,
    write_traces,
)
from clickrev.geometry import PIXEL_UNITS, PixelSpacing, extract_contour, rle_to_mask
from clickrev.network import NetworkConfig, RevisionUNet
from clickrev.training import degrade_mask

from conftest import brute_min_distances

NET = NetworkConfig(input_size=64, depth=6, base_features=4, max_features=8)


@pytest.fixture(scope="module")
def model() -> RevisionUNet:
    return RevisionUNet(NET, seed=1)


def make_record(rng, organ="round") -> SliceRecord:
    image, gt, _ = synth_slice(rng, (64, 64))
    return SliceRecord(
        image=image,
        gt_masks={organ: gt},
        spacing=PixelSpacing(0.9, 1.1),
        provenance=Provenance("synth", 0, (0, 0)),
    )


class TestComputeMetrics:
    def test_perfect_pair(self, rng):
        _, gt, _ = synth_slice(rng, (64, 64))
        m = compute_metrics(gt, gt, PixelSpacing(1, 1))
        assert m.dsc == 1.0 and m.hd95_mm == 0.0 and m.max_error_mm == 0.0

    def test_both_empty(self):
        z = np.zeros((8, 8), np.uint8)
        m = compute_metrics(z, z, PixelSpacing(1, 1))
        assert m.dsc == 1.0 and m.hd95_mm == 0.0

    def test_one_empty_uses_image_diagonal(self):
        gt = np.zeros((8, 8), np.uint8)
        gt[2:4, 2:4] = 1
        m = compute_metrics(gt, np.zeros_like(gt), PixelSpacing(1, 1))
        assert m.dsc == 0.0
        assert m.hd95_mm == pytest.approx(np.hypot(7, 7))
        assert m.max_error_mm == m.hd95_mm

    def test_units_follow_spacing(self, rng):
        _, gt, _ = synth_slice(rng, (64, 64))
        pred = degrade_mask(gt, np.random.default_rng(4))
        m1 = compute_metrics(gt, pred, PixelSpacing(1, 1))
        m2 = compute_metrics(gt, pred, PixelSpacing(2, 2))
        assert m2.hd95_mm == pytest.approx(2 * m1.hd95_mm)
        assert m2.dsc == m1.dsc


class TestSimulateRevision:
    def test_bookkeeping_three_clicks(self, model, rng):
        record = make_record(rng)
        gt = record.gt_masks["round"]
        initial = degrade_mask(gt, rng)
        trace = simulate_revision(model, record, "round", initial, max_clicks=3,
                                  rng=np.random.default_rng(0))
        assert len(trace.metrics) == 4
        assert len(trace.clicks) == 3
        assert len(trace.latencies_ms) == 3
        assert [c.ordinal for c in trace.clicks] == [1, 2, 3]
        assert all(ms > 0 for ms in trace.latencies_ms)

    def test_perfect_initial_metrics(self, model, rng):
        record = make_record(rng)
        gt = record.gt_masks["round"]
        trace = simulate_revision(model, record, "round", gt, max_clicks=1,
                                  rng=np.random.default_rng(0))
        assert trace.metrics[0].dsc == 1.0
        assert trace.metrics[0].hd95_mm == 0.0

    def test_clicks_are_stepwise_brute_force_argmax(self, model, rng):
        record = make_record(rng)
        gt = record.gt_masks["round"]
        initial = degrade_mask(gt, rng)
        trace = simulate_revision(model, record, "round", initial, max_clicks=3,
                                  rng=np.random.default_rng(0))
        gt_points = [tuple(p) for p in extract_contour(gt).points]
        for i, click in enumerate(trace.clicks):
            prev_mask = trace.mask_at(i)
            pred_points = [tuple(p) for p in extract_contour(prev_mask).points]
            if not pred_points:
                continue
            dists = brute_min_distances(gt_points, pred_points, PIXEL_UNITS)
            assert (click.row, click.col) == gt_points[int(np.argmax(dists))]

    def test_metrics_recomputable_from_stored_masks(self, model, rng):
        record = make_record(rng)
        gt = record.gt_masks["round"]
        initial = degrade_mask(gt, rng)
        trace = simulate_revision(model, record, "round", initial, max_clicks=2,
                                  rng=np.random.default_rng(0))
        for i, metric in enumerate(trace.metrics):
            again = compute_metrics(gt, trace.mask_at(i), record.spacing)
            assert again == metric

    def test_empty_initial_mask_ok(self, model, rng):
        record = make_record(rng)
        trace = simulate_revision(model, record, "round", np.zeros((64, 64), np.uint8),
                                  max_clicks=1, rng=np.random.default_rng(0))
        assert trace.metrics[0].dsc == 0.0


def curve(dsc, hd, n=1) -> MetricCurve:
    return MetricCurve(mean_dsc=tuple(dsc), mean_hd95_mm=tuple(hd), n_traces=n)


def toy_trace(organ, dscs, rng, size=16) -> RevisionTrace:
    from clickrev.clicks import Click
    from clickrev.geometry import MetricReport, mask_to_rle

    k = len(dscs) - 1
    mask = np.zeros((size, size), np.uint8)
    mask[4:8, 4:8] = 1
    return RevisionTrace(
        provenance=Provenance("t", 0, (0, 0)),
        organ_id=organ,
        spacing=PixelSpacing(1, 1),
        metrics=[MetricReport(d, 10.0 - 2 * i, 12.0 - 2 * i) for i, d in enumerate(dscs)],
        clicks=[Click(1, 1, i + 1) for i in range(k)],
        latencies_ms=[5.0] * k,
        masks_rle=[mask_to_rle(mask)] * (k + 1),
    )


class TestAggregate:
    def test_single_trace_equals_its_metrics(self, rng):
        t = toy_trace("round", [0.5, 0.6, 0.7, 0.8], rng)
        report = aggregate([t])
        assert report.overall.mean_dsc == (0.5, 0.6, 0.7, 0.8)
        assert report.organs["round"].mean_dsc == (0.5, 0.6, 0.7, 0.8)

    def test_two_trace_mean(self, rng):
        a = toy_trace("round", [0.8, 0.8], rng)
        b = toy_trace("round", [0.9, 1.0], rng)
        report = aggregate([a, b])
        assert report.overall.mean_dsc[0] == pytest.approx(0.85)
        assert report.overall.mean_dsc[1] == pytest.approx(0.9)

    def test_overall_recomputable_from_traces(self, rng):
        traces = [
            toy_trace("round", [0.5, 0.6], rng),
            toy_trace("lobed", [0.7, 0.9], rng),
            toy_trace("lobed", [0.6, 0.8], rng),
        ]
        report = aggregate(traces)
        for i in range(2):
            expected = np.mean([t.metrics[i].dsc for t in traces])
            assert report.overall.mean_dsc[i] == pytest.approx(expected, abs=1e-15)

    def test_mixed_budget_rejected(self, rng):
        with pytest.raises(MixedBudget):
            aggregate([toy_trace("a", [0.5, 0.6], rng), toy_trace("a", [0.5, 0.6, 0.7], rng)])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([])


class TestReports:
    def make_report(self) -> BenchmarkReport:
        return BenchmarkReport(
            max_clicks=3,
            overall=curve([0.82, 0.87, 0.89, 0.91], [4.3, 3.0, 2.4, 2.1], n=6),
            organs={
                "round": curve([0.80, 0.86, 0.88, 0.90], [4.5, 3.1, 2.5, 2.2], n=3),
                "lobed": curve([0.84, 0.88, 0.90, 0.92], [4.1, 2.9, 2.3, 2.0], n=3),
            },
            dataset="validation",
            checkpoint_id="ck@100",
        )

    def test_csv_row_count_and_round_trip(self, tmp_path):
        report = self.make_report()
        paths = emit_report(report, tmp_path)
        lines = paths["csv"].read_text().splitlines()
        # comment + header + (organs + ALL) * (clicks + 1)
        assert len(lines) == 2 + (len(report.organs) + 1) * (report.max_clicks + 1)
        assert parse_report_csv(paths["csv"]) == report

    def test_table_cells_are_dsc_slash_hd95(self, tmp_path):
        report = self.make_report()
        table = render_table(report)
        assert "DSC/HD95(mm)" in table
        assert "0.82/4.3" in table
        assert table.splitlines()[1].startswith("Initial")
        assert table.splitlines()[-1].startswith("Click 3")

    def test_json_round_trip(self):
        report = self.make_report()
        assert BenchmarkReport.from_json(report.to_json()) == report

    def test_plot_files_written(self, tmp_path):
        paths = emit_report(self.make_report(), tmp_path, plots=True)
        assert paths["dsc"].exists() and paths["hd95"].exists()

    def test_trace_file_round_trip(self, tmp_path, rng):
        traces = [toy_trace("round", [0.5, 0.6], rng), toy_trace("lobed", [0.7, 0.8], rng)]
        write_traces(traces, tmp_path / "traces.jsonl")
        back = read_traces(tmp_path / "traces.jsonl")
        assert [t.to_json() for t in back] == [t.to_json() for t in traces]


class TestDeterminism:
    def test_same_seed_same_report(self, model, rng):
        records = [make_record(rng, organ) for organ in ("round", "round", "lobed")]
        from clickrev.evaluate import aggregate as agg

        def run(seed):
            eval_rng = np.random.default_rng(seed)
            traces = []
            for record in records:
                organ = next(iter(record.gt_masks))
                gt = record.gt_masks[organ]
                initial = degrade_mask(gt, eval_rng)
                traces.append(
                    simulate_revision(model, record, organ, initial, 2, rng=eval_rng)
                )
            return agg(traces, dataset="d", checkpoint_id="c")

        r1, r2 = run(7), run(7)
        # latencies differ run to run; the metric content must not
        assert r1 == r2
