"""Campaign, ablation, corpus, and transfer harness tests.

Everything runs against synthetic oracles and tiny generated datasets so
the suite stays fast and fully deterministic.
"""
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from advcf.film import FilmParams, composite
from advcf.ga import GaConfig
from advcf.harness import (
    AblationTable,
    CorpusManifest,
    DatasetError,
    ImageDataset,
    TransferMatrix,
    build_film_corpus,
    color_ablation,
    derive_image_seed,
    emit_report,
    intensity_ablation,
    run_campaign,
    transfer_eval,
)
from advcf.images import save_png
from advcf.oracle import (
    ConnectionFailure,
    Oracle,
    Prediction,
    ProtocolError,
    SyntheticOracle,
    make_synthetic_oracle,
)


def write_dataset(root: Path, values, labels, name="manifest.jsonl") -> Path:
    """Constant-valued RGB images plus a JSONL manifest listing them."""
    root.mkdir(parents=True, exist_ok=True)
    manifest = root / name
    with open(manifest, "w", encoding="utf-8") as fh:
        for i, (value, label) in enumerate(zip(values, labels)):
            img = np.full((12, 12, 3), value, np.uint8)
            save_png(img, root / f"img_{i}.png")
            fh.write(json.dumps({"path": f"img_{i}.png", "label": label}) + "\n")
    return manifest


def thresh_oracle(cutoff: float = 110.0) -> SyntheticOracle:
    """Brighter than the cutoff reads as class 1, darker as class 0."""

    def fn(img):
        m = float(np.mean(img, dtype=np.float64))
        s = min(max((m - cutoff) / 255.0 + 0.5, 0.0), 1.0)
        return (1.0 - s, s)

    return SyntheticOracle(fn, "thresh")


class DeadOracle(Oracle):
    def classify(self, image) -> Prediction:
        raise ConnectionFailure("endpoint unreachable")


class FlakyOracle(Oracle):
    """Errors out on one poisoned pixel value, otherwise a threshold model."""

    def __init__(self, poison: int):
        self.poison = poison
        self.inner = thresh_oracle()

    def classify(self, image) -> Prediction:
        if int(image[0, 0, 0]) == self.poison:
            raise ProtocolError("malformed response")
        return self.inner.classify(image)


SMALL_GA = GaConfig(seed_count=12, step_count=6, rng_seed=0)


class TestImageDataset:
    def test_load_and_resolve(self, tmp_path):
        manifest = write_dataset(tmp_path, [100, 100, 100], [0, 0, 1])
        ds = ImageDataset.load(manifest)
        assert len(ds) == 3
        assert ds.name == "manifest"
        assert ds.class_count == 2
        assert ds.entries[2].label == 1
        img = ds.load_image(0)
        assert img.shape == (12, 12, 3) and img[0, 0, 0] == 100

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError):
            ImageDataset.load(tmp_path / "nope.jsonl")

    def test_bad_json_line(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        manifest.write_text('{"path": "a.png"\n', encoding="utf-8")
        with pytest.raises(DatasetError):
            ImageDataset.load(manifest)

    def test_missing_image(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        manifest.write_text('{"path": "gone.png", "label": 0}\n', encoding="utf-8")
        with pytest.raises(DatasetError):
            ImageDataset.load(manifest)

    def test_negative_label(self, tmp_path):
        manifest = write_dataset(tmp_path, [10], [-1])
        with pytest.raises(DatasetError):
            ImageDataset.load(manifest)

    def test_label_outside_given_class_count(self, tmp_path):
        manifest = write_dataset(tmp_path, [10, 10], [0, 5])
        with pytest.raises(DatasetError):
            ImageDataset.load(manifest, class_count=3)

    def test_blank_lines_skipped(self, tmp_path):
        manifest = write_dataset(tmp_path, [10], [0])
        manifest.write_text(manifest.read_text() + "\n\n", encoding="utf-8")
        assert len(ImageDataset.load(manifest)) == 1

    def test_empty_manifest(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        manifest.write_text("", encoding="utf-8")
        ds = ImageDataset.load(manifest)
        assert len(ds) == 0 and ds.class_count == 0


class TestDeriveImageSeed:
    def test_stable_and_distinct(self):
        a = derive_image_seed(7, 0)
        assert a == derive_image_seed(7, 0)
        seeds = {derive_image_seed(7, i) for i in range(100)}
        assert len(seeds) == 100
        assert derive_image_seed(8, 0) != a


class TestRunCampaign:
    def test_accounting_invariant(self, tmp_path):
        manifest = write_dataset(tmp_path, [100, 100, 200, 100], [0, 0, 0, 0])
        ds = ImageDataset.load(manifest)
        report = run_campaign(ds, thresh_oracle(), SMALL_GA)
        # the 200-valued image is already class 1: not a clean sample
        assert report.successes + report.failures + len(report.skipped) == len(ds)
        assert report.attempted == 3
        assert len(report.skipped) == 1
        assert "not a clean sample" in report.skipped[0]["reason"]
        assert report.asr == report.successes / 3
        assert not report.partial

    def test_all_images_unclean(self, tmp_path):
        manifest = write_dataset(tmp_path, [200, 220], [0, 0])
        ds = ImageDataset.load(manifest)
        report = run_campaign(ds, thresh_oracle(), SMALL_GA)
        assert report.attempted == 0
        assert report.asr is None
        assert report.no_eligible_images

    def test_empty_dataset(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        manifest.write_text("", encoding="utf-8")
        ds = ImageDataset.load(manifest)
        report = run_campaign(ds, thresh_oracle(), SMALL_GA)
        assert report.dataset_size == 0 and report.asr is None

    def test_successful_attacks_write_artifacts(self, tmp_path):
        manifest = write_dataset(tmp_path, [100, 100], [0, 0])
        ds = ImageDataset.load(manifest)
        out = tmp_path / "out"
        report = run_campaign(ds, thresh_oracle(), SMALL_GA, out_dir=out)
        assert report.asr == 1.0
        assert (out / "report.json").is_file()
        assert (out / "report.csv").is_file()
        for row in report.results:
            assert row["adversarial_png"] is not None
            png = out / row["adversarial_png"]
            assert png.is_file()
            # the saved sample really is adversarial for the oracle
            from advcf.images import load_image

            pred = thresh_oracle().classify(load_image(png))
            assert pred.label != row["label"]

    def test_queries_exclude_clean_check(self, tmp_path):
        manifest = write_dataset(tmp_path, [100], [0])
        ds = ImageDataset.load(manifest)
        report = run_campaign(ds, thresh_oracle(), SMALL_GA)
        assert report.total_clean_check_queries == 1
        assert report.total_queries <= SMALL_GA.query_budget

    def test_jobs_parallel_report_identical(self, tmp_path):
        manifest = write_dataset(tmp_path, [100, 104, 96, 100, 102], [0] * 5)
        ds = ImageDataset.load(manifest)
        outs = []
        for jobs, sub in ((1, "a"), (4, "b")):
            out = tmp_path / sub
            run_campaign(ds, thresh_oracle(), SMALL_GA, out_dir=out, jobs=jobs)
            outs.append(out)
        a, b = outs
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        assert (a / "report.csv").read_bytes() == (b / "report.csv").read_bytes()
        pngs_a = sorted(p.relative_to(a) for p in a.rglob("*.png"))
        pngs_b = sorted(p.relative_to(b) for p in b.rglob("*.png"))
        assert pngs_a == pngs_b
        for rel in pngs_a:
            assert (a / rel).read_bytes() == (b / rel).read_bytes()

    def test_dead_oracle_aborts_partial(self, tmp_path):
        manifest = write_dataset(tmp_path, [100, 100, 100], [0, 0, 0])
        ds = ImageDataset.load(manifest)
        report = run_campaign(ds, DeadOracle(), SMALL_GA)
        assert report.partial
        assert report.attempted == 0
        assert len(report.skipped) == 3
        reasons = [s["reason"] for s in report.skipped]
        assert any("oracle failure" in r for r in reasons)
        assert any("not processed" in r for r in reasons)

    def test_per_image_error_does_not_abort(self, tmp_path):
        manifest = write_dataset(tmp_path, [100, 42, 100], [0, 0, 0])
        ds = ImageDataset.load(manifest)
        report = run_campaign(ds, FlakyOracle(poison=42), SMALL_GA)
        assert not report.partial
        assert report.attempted == 2
        assert len(report.skipped) == 1
        assert report.skipped[0]["index"] == 1
        assert report.skipped[0]["reason"].startswith("error:")

    def test_progress_events(self, tmp_path):
        manifest = write_dataset(tmp_path, [100, 200], [0, 0])
        ds = ImageDataset.load(manifest)
        events = []
        run_campaign(ds, thresh_oracle(), SMALL_GA, progress=events.append)
        assert len(events) == 2
        assert {e["index"] for e in events} == {0, 1}
        statuses = {e["index"]: e["status"] for e in events}
        assert statuses[1] == "skipped"

    def test_timestamps_default_null(self, tmp_path):
        manifest = write_dataset(tmp_path, [100], [0])
        ds = ImageDataset.load(manifest)
        report = run_campaign(ds, thresh_oracle(), SMALL_GA)
        assert report.timestamps == {"started": None, "finished": None}
        stamped = run_campaign(
            ds, thresh_oracle(), SMALL_GA, record_timestamps=True
        )
        assert stamped.timestamps["started"] is not None


class TestIntensityAblation:
    def test_zero_level_is_clean_baseline(self, tmp_path):
        manifest = write_dataset(tmp_path, [100, 100], [0, 0])
        ds = ImageDataset.load(manifest)
        table = intensity_ablation(
            ds, thresh_oracle(), levels=(0.0, 0.6), colors_per_image=5
        )
        assert table.axis == "intensity"
        assert table.columns == ("intensity", "asr", "mean_confidence", "samples")
        zero = table.rows[0]
        assert zero[0] == 0.0
        assert zero[1] == 0.0
        clean_conf = thresh_oracle().classify(ds.load_image(0)).scores[0]
        assert zero[2] == pytest.approx(clean_conf)
        assert zero[3] == 2 * 5

    def test_deterministic(self, tmp_path):
        manifest = write_dataset(tmp_path, [100, 90], [0, 0])
        ds = ImageDataset.load(manifest)
        a = intensity_ablation(ds, thresh_oracle(), colors_per_image=4, rng_seed=3)
        b = intensity_ablation(ds, thresh_oracle(), colors_per_image=4, rng_seed=3)
        assert a == b

    def test_misclassified_images_skipped(self, tmp_path):
        manifest = write_dataset(tmp_path, [100, 250], [0, 0])
        ds = ImageDataset.load(manifest)
        table = intensity_ablation(
            ds, thresh_oracle(), levels=(0.3,), colors_per_image=3
        )
        assert table.meta["eligible_images"] == 1
        assert table.meta["skipped_images"] == 1
        assert table.rows[0][3] == 3

    def test_unsorted_levels_rejected(self, tmp_path):
        manifest = write_dataset(tmp_path, [100], [0])
        ds = ImageDataset.load(manifest)
        with pytest.raises(ValueError):
            intensity_ablation(ds, thresh_oracle(), levels=(0.5, 0.3))
        with pytest.raises(ValueError):
            intensity_ablation(ds, thresh_oracle(), levels=(0.3, 1.2))
        with pytest.raises(ValueError):
            intensity_ablation(ds, thresh_oracle(), colors_per_image=0)

    def test_no_eligible_images_rows_null(self, tmp_path):
        manifest = write_dataset(tmp_path, [250], [0])
        ds = ImageDataset.load(manifest)
        table = intensity_ablation(ds, thresh_oracle(), levels=(0.4,))
        assert table.rows[0][1] is None and table.rows[0][2] is None


class TestBuildFilmCorpus:
    def test_counts_and_manifest(self, tmp_path):
        manifest = write_dataset(tmp_path, [100, 60], [0, 1])
        ds = ImageDataset.load(manifest)
        out = tmp_path / "corpus"
        corpus = build_film_corpus(ds, out)
        assert len(corpus.entries) == 2 * 27
        pngs = list((out / "images").glob("*.png"))
        assert len(pngs) == 54
        reloaded = CorpusManifest.load(out / "corpus_manifest.jsonl")
        assert reloaded.entries == corpus.entries
        for e in reloaded.entries[:5]:
            assert reloaded.resolve(e).is_file()

    def test_filename_pattern(self, tmp_path):
        manifest = write_dataset(tmp_path, [100], [0])
        ds = ImageDataset.load(manifest)
        corpus = build_film_corpus(
            ds, tmp_path / "c", colors=[(0, 128, 255)], intensity=0.4
        )
        assert corpus.entries[0].output == "images/img_0__c000_128_255__i040.png"

    def test_pixel_spot_check(self, tmp_path):
        from advcf.images import load_image

        root = tmp_path
        img = np.zeros((8, 8, 3), np.uint8)
        img[:] = (100, 200, 50)
        save_png(img, root / "img_0.png")
        (root / "m.jsonl").write_text(
            '{"path": "img_0.png", "label": 0}\n', encoding="utf-8"
        )
        ds = ImageDataset.load(root / "m.jsonl")
        corpus = build_film_corpus(
            ds, root / "c", colors=[(0, 0, 0)], intensity=0.4
        )
        out = load_image(corpus.resolve(corpus.entries[0]))
        assert tuple(out[3, 3]) == (60, 120, 30)

    def test_rerun_byte_identical(self, tmp_path):
        manifest = write_dataset(tmp_path, [100, 60], [0, 0])
        ds = ImageDataset.load(manifest)

        def digest(root: Path) -> dict:
            return {
                str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
                for p in sorted(root.rglob("*"))
                if p.is_file()
            }

        build_film_corpus(ds, tmp_path / "c1", colors=[(0, 0, 0), (255, 0, 128)])
        build_film_corpus(ds, tmp_path / "c2", colors=[(0, 0, 0), (255, 0, 128)])
        assert digest(tmp_path / "c1") == digest(tmp_path / "c2")

    def test_duplicate_colors_rejected(self, tmp_path):
        manifest = write_dataset(tmp_path, [100], [0])
        ds = ImageDataset.load(manifest)
        with pytest.raises(ValueError):
            build_film_corpus(ds, tmp_path / "c", colors=[(1, 2, 3), (1, 2, 3)])


class TestColorAblation:
    def test_threshold_oracle_separates_colors(self, tmp_path):
        manifest = write_dataset(tmp_path, [100, 100], [0, 0])
        ds = ImageDataset.load(manifest)
        corpus = build_film_corpus(
            ds, tmp_path / "c",
            colors=[(0, 0, 0), (255, 255, 255)], intensity=0.6,
        )
        table = color_ablation(corpus, thresh_oracle())
        assert table.meta["baseline_accuracy"] == 1.0
        acc = dict(zip(map(tuple, table.column("color")), table.column("accuracy")))
        # dark film keeps the mean low (correct), white film flips it
        assert acc[(0, 0, 0)] == 1.0
        assert acc[(255, 255, 255)] == 0.0
        assert table.meta["most_adversarial"] == {
            "color": [255, 255, 255], "accuracy": 0.0,
        }

    def test_tie_prefers_smallest_color(self, tmp_path):
        manifest = write_dataset(tmp_path, [100], [0])
        ds = ImageDataset.load(manifest)
        corpus = build_film_corpus(
            ds, tmp_path / "c", colors=[(5, 5, 5), (0, 0, 0)], intensity=0.3
        )
        table = color_ablation(corpus, make_synthetic_oracle("constant"))
        assert table.meta["most_adversarial"]["color"] == [0, 0, 0]

    def test_rows_sorted_by_color(self, tmp_path):
        manifest = write_dataset(tmp_path, [100], [0])
        ds = ImageDataset.load(manifest)
        corpus = build_film_corpus(
            ds, tmp_path / "c",
            colors=[(255, 0, 0), (0, 0, 0), (0, 255, 0)], intensity=0.3,
        )
        table = color_ablation(corpus, make_synthetic_oracle("constant"))
        colors = [tuple(c) for c in table.column("color")]
        assert colors == sorted(colors)


class TestTransferEval:
    def _campaign_dir(self, tmp_path, sub, values):
        manifest = write_dataset(tmp_path / sub, values, [0] * len(values))
        ds = ImageDataset.load(manifest)
        out = tmp_path / sub / "out"
        run_campaign(ds, thresh_oracle(), SMALL_GA, out_dir=out)
        return out

    def test_matrix_values(self, tmp_path):
        src_a = self._campaign_dir(tmp_path, "a", [100, 100])
        src_b = self._campaign_dir(tmp_path, "b", [96, 100])
        victims = {
            "same": thresh_oracle(),
            "always_right": make_synthetic_oracle("constant"),
            "dead": DeadOracle(),
        }
        matrix = transfer_eval({"a": src_a, "b": src_b}, victims)
        assert matrix.sources == ("a", "b")
        assert matrix.victims == ("same", "always_right", "dead")
        assert matrix.sample_counts == (2, 2)
        for src in ("a", "b"):
            assert matrix.cell(src, "same") == 1.0
            assert matrix.cell(src, "always_right") == 0.0
            assert matrix.cell(src, "dead") is None

    def test_source_without_successes(self, tmp_path):
        # every image already misclassified: campaign has zero successes
        manifest = write_dataset(tmp_path, [250, 250], [0, 0])
        ds = ImageDataset.load(manifest)
        out = tmp_path / "out"
        run_campaign(ds, thresh_oracle(), SMALL_GA, out_dir=out)
        matrix = transfer_eval({"src": out}, {"v": thresh_oracle()})
        assert matrix.sample_counts == (0,)
        assert matrix.cell("src", "v") is None


class TestEmitReport:
    def _report(self, tmp_path):
        manifest = write_dataset(tmp_path, [100, 200], [0, 0])
        ds = ImageDataset.load(manifest)
        return run_campaign(ds, thresh_oracle(), SMALL_GA)

    def test_campaign_roundtrip(self, tmp_path):
        report = self._report(tmp_path)
        out = tmp_path / "r"
        paths = emit_report(report, out)
        names = {p.name for p in paths}
        assert names == {"report.json", "report.csv"}
        loaded = json.loads((out / "report.json").read_text())
        assert loaded == report.as_json()
        csv_lines = (out / "report.csv").read_text().splitlines()
        assert len(csv_lines) == 1 + len(report.results) + len(report.skipped)

    def test_campaign_svg_traces(self, tmp_path):
        report = self._report(tmp_path)
        out = tmp_path / "r"
        paths = emit_report(report, out, svg=True)
        svg_path = out / "report_traces.svg"
        assert svg_path in paths
        text = svg_path.read_text()
        polylines = text.count("<polyline")
        assert polylines == min(len(report.results), 6)
        first_trace = report.results[0]["best_so_far_trace"]
        pts_attr = text.split('points="')[1].split('"')[0]
        assert len(pts_attr.split()) == len(first_trace)

    def test_ablation_emit_with_bars(self, tmp_path):
        table = AblationTable(
            axis="intensity",
            columns=("intensity", "asr", "mean_confidence", "samples"),
            rows=((0.1, 0.0, 0.9, 10), (0.4, 0.5, 0.6, 10), (0.7, 1.0, 0.2, 10)),
            meta={},
        )
        paths = emit_report(table, tmp_path, svg=True)
        names = {p.name for p in paths}
        assert names == {
            "ablation_intensity.json",
            "ablation_intensity.csv",
            "ablation_intensity.svg",
        }
        text = (tmp_path / "ablation_intensity.svg").read_text()
        # one bar per row, plus the full-canvas background rect
        assert text.count("<rect") == 1 + 3
        loaded = json.loads((tmp_path / "ablation_intensity.json").read_text())
        assert loaded == table.as_json()

    def test_transfer_emit(self, tmp_path):
        matrix = TransferMatrix(
            sources=("a",), victims=("v1", "v2"),
            cells=((1.0, None),), sample_counts=(4,),
        )
        emit_report(matrix, tmp_path)
        lines = (tmp_path / "transfer.csv").read_text().splitlines()
        assert lines[0] == "source,samples,v1,v2"
        assert lines[1] == "a,4,1.0,"

    def test_emit_deterministic(self, tmp_path):
        report = self._report(tmp_path)
        emit_report(report, tmp_path / "x")
        emit_report(report, tmp_path / "y")
        assert (tmp_path / "x/report.json").read_bytes() == (
            tmp_path / "y/report.json"
        ).read_bytes()

    def test_unknown_type_rejected(self, tmp_path):
        with pytest.raises(TypeError):
            emit_report({"not": "a report"}, tmp_path)
