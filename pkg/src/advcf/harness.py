"""Digital experiment suite: attack campaigns over image sets, intensity and
color ablations, film-corpus generation, and cross-model transfer scoring.

Everything here is deterministic under a fixed seed and fixed fixtures:
per-image work derives its own rng stream from (campaign seed, image index),
results merge in dataset order, and reports carry no timestamps unless asked.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from itertools import product
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .film import FilmParams, composite
from .ga import AttackResult, GaConfig, run_attack
from .images import load_image, save_png
from .oracle import (
    ConnectionFailure,
    ModelLoadError,
    NotCleanSampleError,
    Oracle,
    OracleError,
    TimeoutFailure,
)
from .reports import svg_bar_chart, svg_line_chart, write_csv, write_json

DEFAULT_CORPUS_COLORS: tuple[tuple[int, int, int], ...] = tuple(
    product((0, 128, 255), repeat=3)
)
DEFAULT_ABLATION_LEVELS: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)

ProgressFn = Callable[[dict], None]

# oracle failures that mean the backend is gone, not that one image is odd
_FATAL_ORACLE_ERRORS = (ConnectionFailure, TimeoutFailure, ModelLoadError)


@dataclass(frozen=True)
class DatasetEntry:
    path: str
    label: int


class DatasetError(ValueError):
    """Dataset manifest missing, malformed, or referencing bad files."""


@dataclass(frozen=True)
class ImageDataset:
    """Ordered image set with ground-truth labels.

    Loaded from a JSON-lines manifest, one {"path": str, "label": int} per
    line; relative paths resolve against the manifest's directory. Every
    path is checked readable at load time.
    """

    entries: tuple[DatasetEntry, ...]
    name: str
    class_count: int
    root: Path

    @classmethod
    def load(
        cls, manifest_path: str | Path, name: str | None = None, class_count: int | None = None
    ) -> "ImageDataset":
        manifest_path = Path(manifest_path)
        try:
            lines = manifest_path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise DatasetError(f"cannot read dataset manifest {manifest_path}: {e}") from e
        root = manifest_path.parent
        entries: list[DatasetEntry] = []
        for ln, line in enumerate(lines, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                path, label = str(obj["path"]), int(obj["label"])
            except (ValueError, KeyError, TypeError) as e:
                raise DatasetError(f"{manifest_path}:{ln}: bad manifest line: {e}") from e
            resolved = root / path
            if not resolved.is_file():
                raise DatasetError(f"{manifest_path}:{ln}: image not readable: {resolved}")
            if label < 0:
                raise DatasetError(f"{manifest_path}:{ln}: negative label {label}")
            entries.append(DatasetEntry(path, label))
        if class_count is None:
            class_count = max((e.label for e in entries), default=-1) + 1
        for e in entries:
            if e.label >= class_count:
                raise DatasetError(
                    f"label {e.label} outside class range [0, {class_count})"
                )
        return cls(tuple(entries), name or manifest_path.stem, class_count, root)

    def __len__(self) -> int:
        return len(self.entries)

    def resolve(self, i: int) -> Path:
        return self.root / self.entries[i].path

    def load_image(self, i: int) -> np.ndarray:
        return load_image(self.resolve(i))


def derive_image_seed(campaign_seed: int, image_index: int) -> int:
    """Stable per-image rng seed: same value regardless of scheduling."""
    ss = np.random.SeedSequence([campaign_seed, image_index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class CampaignReport:
    dataset_name: str
    dataset_size: int
    attempted: int
    successes: int
    failures: int
    asr: float | None
    results: tuple[dict, ...]
    skipped: tuple[dict, ...]
    total_queries: int
    total_clean_check_queries: int
    mean_generations: float | None
    config: dict
    partial: bool
    timestamps: dict

    @property
    def no_eligible_images(self) -> bool:
        return self.attempted == 0

    def as_json(self) -> dict:
        return {
            "dataset_name": self.dataset_name,
            "dataset_size": self.dataset_size,
            "attempted": self.attempted,
            "successes": self.successes,
            "failures": self.failures,
            "asr": self.asr,
            "no_eligible_images": self.no_eligible_images,
            "results": list(self.results),
            "skipped": list(self.skipped),
            "total_queries": self.total_queries,
            "total_clean_check_queries": self.total_clean_check_queries,
            "mean_generations": self.mean_generations,
            "config": self.config,
            "partial": self.partial,
            "timestamps": self.timestamps,
        }


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def _attack_entry(
    dataset: ImageDataset, index: int, oracle: Oracle, cfg: GaConfig
) -> AttackResult:
    x = dataset.load_image(index)
    cfg_i = replace(cfg, rng_seed=derive_image_seed(cfg.rng_seed, index))
    return run_attack(x, dataset.entries[index].label, oracle, cfg_i)


def run_campaign(
    dataset: ImageDataset,
    oracle: Oracle,
    cfg: GaConfig,
    out_dir: str | Path | None = None,
    jobs: int = 1,
    record_timestamps: bool = False,
    progress: ProgressFn | None = None,
) -> CampaignReport:
    """Attack every eligible image; aggregate the success rate.

    Images the oracle already misclassifies are skipped (they cannot be
    "made" misclassified). Per-image trouble (unreadable file, bad label)
    is recorded and the campaign continues; a dead oracle aborts, flagging
    the report partial and listing unprocessed images as skipped.
    """
    started = _now_iso() if record_timestamps else None
    n = len(dataset)
    outcomes: dict[int, tuple[str, object]] = {}
    abort = False

    def handle(i: int, fn) -> bool:
        """Run one image's attack; returns True when the oracle died."""
        try:
            outcomes[i] = ("result", fn())
        except NotCleanSampleError as e:
            outcomes[i] = ("skipped", f"not a clean sample: {e}")
        except _FATAL_ORACLE_ERRORS as e:
            outcomes[i] = ("skipped", f"oracle failure: {e}")
            return True
        except (OracleError, OSError, ValueError) as e:
            outcomes[i] = ("skipped", f"error: {e}")
        return False

    if jobs <= 1:
        for i in range(n):
            abort = handle(i, lambda i=i: _attack_entry(dataset, i, oracle, cfg))
            if progress and i in outcomes:
                progress(_progress_event(dataset, i, outcomes[i]))
            if abort:
                break
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {
                pool.submit(_attack_entry, dataset, i, oracle, cfg): i for i in range(n)
            }
            pending = set(futures)
            while pending:
                done, pending = wait(pending, return_when=FIRST_EXCEPTION)
                for fut in done:
                    i = futures[fut]
                    abort = handle(i, fut.result) or abort
                    if progress:
                        progress(_progress_event(dataset, i, outcomes[i]))
                if abort:
                    for fut in pending:
                        fut.cancel()
                    break

    for i in range(n):
        outcomes.setdefault(i, ("skipped", "not processed: campaign aborted"))

    out_root = Path(out_dir) if out_dir is not None else None
    results: list[dict] = []
    skipped: list[dict] = []
    successes = failures = total_queries = total_clean = 0
    generations: list[int] = []
    for i in range(n):
        entry = dataset.entries[i]
        kind, payload = outcomes[i]
        if kind == "skipped":
            skipped.append({"index": i, "path": entry.path, "reason": payload})
            continue
        result: AttackResult = payload
        total_queries += result.queries_used
        total_clean += result.clean_check_queries
        generations.append(result.generations_run)
        adv_rel = None
        if result.success:
            successes += 1
            if out_root is not None:
                adv_rel = f"adversarial/{i:04d}_{Path(entry.path).stem}.png"
                x = dataset.load_image(i)
                save_png(composite(x, result.best_params), out_root / adv_rel)
        else:
            failures += 1
        row = result.as_json()
        row.update({"index": i, "path": entry.path, "label": entry.label,
                    "adversarial_png": adv_rel})
        results.append(row)

    attempted = successes + failures
    report = CampaignReport(
        dataset_name=dataset.name,
        dataset_size=n,
        attempted=attempted,
        successes=successes,
        failures=failures,
        asr=(successes / attempted) if attempted else None,
        results=tuple(results),
        skipped=tuple(skipped),
        total_queries=total_queries,
        total_clean_check_queries=total_clean,
        mean_generations=(sum(generations) / len(generations)) if generations else None,
        config=cfg.as_json(),
        partial=abort,
        timestamps={"started": started, "finished": _now_iso() if record_timestamps else None},
    )
    if out_root is not None:
        emit_report(report, out_root)
    return report


def _progress_event(dataset: ImageDataset, i: int, outcome: tuple[str, object]) -> dict:
    kind, payload = outcome
    event = {"index": i, "path": dataset.entries[i].path}
    if kind == "result":
        event.update(
            {
                "status": "success" if payload.success else "failure",
                "queries_used": payload.queries_used,
                "generations_run": payload.generations_run,
            }
        )
    else:
        event.update({"status": "skipped", "reason": payload})
    return event


@dataclass(frozen=True)
class AblationTable:
    """One row per axis value; named metric columns aligned with rows."""

    axis: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    meta: dict

    def __post_init__(self) -> None:
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("row width does not match columns")

    def column(self, name: str) -> list:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]

    def as_json(self) -> dict:
        return {
            "axis": self.axis,
            "columns": list(self.columns),
            "rows": [list(r) for r in self.rows],
            "meta": self.meta,
        }


def intensity_ablation(
    dataset: ImageDataset,
    oracle: Oracle,
    levels: Sequence[float] = DEFAULT_ABLATION_LEVELS,
    colors_per_image: int = 30,
    rng_seed: int = 0,
    progress: ProgressFn | None = None,
) -> AblationTable:
    """Fixed-intensity attack sweep.

    Each eligible image gets the same sample of random film colors at every
    level, so rows differ only in intensity. Per level: the fraction of
    images misclassified by at least one film (asr) and the mean ground-truth
    confidence over all films.
    """
    levels = tuple(float(v) for v in levels)
    if list(levels) != sorted(levels):
        raise ValueError("intensity levels must be sorted ascending")
    for v in levels:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"intensity level {v} outside [0, 1]")
    if colors_per_image < 1:
        raise ValueError("colors_per_image must be >= 1")

    hits = {v: 0 for v in levels}
    conf_sum = {v: 0.0 for v in levels}
    eligible = 0
    skipped = 0
    for i in range(len(dataset)):
        entry = dataset.entries[i]
        x = dataset.load_image(i)
        clean = oracle.classify(x)
        if clean.label != entry.label:
            skipped += 1
            if progress:
                progress({"index": i, "path": entry.path, "status": "skipped"})
            continue
        eligible += 1
        rng = np.random.default_rng(np.random.SeedSequence([rng_seed, i]))
        colors = rng.integers(0, 256, size=(colors_per_image, 3))
        for level in levels:
            hit = False
            for color in colors:
                p = FilmParams(tuple(int(c) for c in color), level)
                pred = oracle.classify(composite(x, p))
                conf_sum[level] += float(pred.scores[entry.label])
                if pred.label != entry.label:
                    hit = True
            if hit:
                hits[level] += 1
        if progress:
            progress({"index": i, "path": entry.path, "status": "done"})

    rows = tuple(
        (
            level,
            (hits[level] / eligible) if eligible else None,
            (conf_sum[level] / (eligible * colors_per_image)) if eligible else None,
            eligible * colors_per_image,
        )
        for level in levels
    )
    return AblationTable(
        axis="intensity",
        columns=("intensity", "asr", "mean_confidence", "samples"),
        rows=rows,
        meta={
            "dataset_name": dataset.name,
            "eligible_images": eligible,
            "skipped_images": skipped,
            "colors_per_image": colors_per_image,
            "rng_seed": rng_seed,
        },
    )


@dataclass(frozen=True)
class CorpusEntry:
    source: str
    color: tuple[int, int, int]
    intensity: float
    output: str
    label: int

    def as_json(self) -> dict:
        return {
            "source": self.source,
            "color": list(self.color),
            "intensity": self.intensity,
            "output": self.output,
            "label": self.label,
        }


@dataclass(frozen=True)
class CorpusManifest:
    entries: tuple[CorpusEntry, ...]
    root: Path
    manifest_path: Path

    @classmethod
    def load(cls, manifest_path: str | Path) -> "CorpusManifest":
        manifest_path = Path(manifest_path)
        entries = []
        for line in manifest_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            entries.append(
                CorpusEntry(
                    source=obj["source"],
                    color=tuple(int(c) for c in obj["color"]),
                    intensity=float(obj["intensity"]),
                    output=obj["output"],
                    label=int(obj["label"]),
                )
            )
        return cls(tuple(entries), manifest_path.parent, manifest_path)

    def resolve(self, entry: CorpusEntry) -> Path:
        return self.root / entry.output


def _corpus_filename(source: str, color: tuple[int, int, int], intensity: float) -> str:
    stem = Path(source).stem
    r, g, b = color
    return f"images/{stem}__c{r:03d}_{g:03d}_{b:03d}__i{round(intensity * 100):03d}.png"


def build_film_corpus(
    dataset: ImageDataset,
    out_dir: str | Path,
    colors: Sequence[tuple[int, int, int]] = DEFAULT_CORPUS_COLORS,
    intensity: float = 0.4,
    progress: ProgressFn | None = None,
) -> CorpusManifest:
    """Overlay every color at the fixed intensity onto every image.

    Emits |dataset| x |colors| PNGs under out_dir plus a JSON-lines manifest
    appended entry by entry, so an interrupted run leaves a valid prefix.
    Reruns are byte-identical.
    """
    colors = [tuple(int(c) for c in col) for col in colors]
    if len(set(colors)) != len(colors):
        raise ValueError("corpus colors must be distinct")
    stems = [Path(e.path).stem for e in dataset.entries]
    if len(set(stems)) != len(stems):
        raise ValueError("dataset image stems must be distinct for corpus naming")
    out_root = Path(out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    manifest_path = out_root / "corpus_manifest.jsonl"
    entries: list[CorpusEntry] = []
    with open(manifest_path, "w", encoding="utf-8") as mf:
        for i in range(len(dataset)):
            entry = dataset.entries[i]
            # source recorded relative to the corpus root so the manifest
            # stays resolvable without absolute paths
            src = os.path.relpath(dataset.resolve(i).resolve(), out_root.resolve())
            x = dataset.load_image(i)
            for color in colors:
                rel = _corpus_filename(entry.path, color, intensity)
                save_png(composite(x, FilmParams(color, intensity)), out_root / rel)
                ce = CorpusEntry(src, color, intensity, rel, entry.label)
                entries.append(ce)
                mf.write(json.dumps(ce.as_json(), sort_keys=True) + "\n")
                mf.flush()
            if progress:
                progress({"index": i, "path": entry.path, "status": "done",
                          "files": len(colors)})
    return CorpusManifest(tuple(entries), out_root, manifest_path)


def color_ablation(
    corpus: CorpusManifest,
    oracle: Oracle,
    progress: ProgressFn | None = None,
) -> AblationTable:
    """Per-film-color classification accuracy over the corpus, with the
    clean-source baseline. The most adversarial color is the accuracy
    minimum (ties: lexicographically smallest color).
    """
    sources: dict[str, int] = {}
    for e in corpus.entries:
        sources.setdefault(e.source, e.label)
    baseline_correct = 0
    for src, label in sources.items():
        pred = oracle.classify(load_image(corpus.root / src))
        baseline_correct += int(pred.label == label)
        if progress:
            progress({"path": src, "status": "baseline"})
    baseline = baseline_correct / len(sources) if sources else None

    by_color: dict[tuple[int, int, int], list[CorpusEntry]] = {}
    for e in corpus.entries:
        by_color.setdefault(e.color, []).append(e)
    rows = []
    for color in sorted(by_color):
        group = by_color[color]
        correct = 0
        for e in group:
            pred = oracle.classify(load_image(corpus.resolve(e)))
            correct += int(pred.label == e.label)
        rows.append((list(color), correct / len(group), len(group)))
        if progress:
            progress({"color": list(color), "status": "done",
                      "accuracy": correct / len(group)})

    most_adversarial = None
    if rows:
        best = min(rows, key=lambda r: (r[1], tuple(r[0])))
        most_adversarial = {"color": best[0], "accuracy": best[1]}
    return AblationTable(
        axis="color",
        columns=("color", "accuracy", "samples"),
        rows=tuple(rows),
        meta={
            "baseline_accuracy": baseline,
            "baseline_samples": len(sources),
            "most_adversarial": most_adversarial,
        },
    )


@dataclass(frozen=True)
class TransferMatrix:
    """Rows: campaigns whose successful adversarial samples were re-scored.
    Columns: victim oracles. Cells: fraction misclassified, None when the
    victim was unreachable or the source had no samples.
    """

    sources: tuple[str, ...]
    victims: tuple[str, ...]
    cells: tuple[tuple[float | None, ...], ...]
    sample_counts: tuple[int, ...]

    def cell(self, source: str, victim: str) -> float | None:
        return self.cells[self.sources.index(source)][self.victims.index(victim)]

    def as_json(self) -> dict:
        return {
            "sources": list(self.sources),
            "victims": list(self.victims),
            "cells": [list(row) for row in self.cells],
            "sample_counts": list(self.sample_counts),
        }


def _load_campaign_samples(campaign_dir: str | Path) -> list[tuple[Path, int]]:
    root = Path(campaign_dir)
    report = json.loads((root / "report.json").read_text(encoding="utf-8"))
    samples = []
    for row in report["results"]:
        if row.get("success") and row.get("adversarial_png"):
            samples.append((root / row["adversarial_png"], int(row["label"])))
    return samples


def transfer_eval(
    sources: Mapping[str, str | Path],
    victims: Mapping[str, Oracle],
    progress: ProgressFn | None = None,
) -> TransferMatrix:
    """Score each campaign's successful adversarial samples on each victim.

    A victim that dies mid-column gets None for that column; the matrix is
    still produced for the rest.
    """
    source_names = tuple(sources)
    victim_names = tuple(victims)
    cells: list[list[float | None]] = []
    counts: list[int] = []
    loaded: list[list[tuple[np.ndarray, int]]] = []
    for name in source_names:
        samples = _load_campaign_samples(sources[name])
        loaded.append([(load_image(p), label) for p, label in samples])
        counts.append(len(samples))
    dead: set[str] = set()
    for si, name in enumerate(source_names):
        row: list[float | None] = []
        for vname in victim_names:
            if vname in dead or not loaded[si]:
                row.append(None)
                continue
            oracle = victims[vname]
            miss = 0
            try:
                for img, label in loaded[si]:
                    if oracle.classify(img).label != label:
                        miss += 1
            except OracleError:
                dead.add(vname)
                row.append(None)
                continue
            row.append(miss / len(loaded[si]))
            if progress:
                progress({"source": name, "victim": vname, "asr": row[-1]})
        cells.append(row)
    return TransferMatrix(source_names, victim_names, tuple(tuple(r) for r in cells), tuple(counts))


def emit_report(
    obj: CampaignReport | AblationTable | TransferMatrix,
    out_dir: str | Path,
    basename: str | None = None,
    svg: bool = False,
) -> list[Path]:
    """Write an object's CSV and JSON forms (and optional SVG chart)."""
    out_root = Path(out_dir)
    written: list[Path] = []
    if isinstance(obj, CampaignReport):
        base = basename or "report"
        written.append(write_json(obj.as_json(), out_root / f"{base}.json"))
        header = (
            "index", "path", "label", "status", "adversarial_label",
            "best_color_r", "best_color_g", "best_color_b", "best_intensity",
            "best_confidence", "queries_used", "generations_run", "adversarial_png",
        )
        rows = []
        for r in obj.results:
            color = r["best_params"]["color"]
            rows.append(
                (
                    r["index"], r["path"], r["label"],
                    "success" if r["success"] else "failure",
                    r["adversarial_label"],
                    color[0], color[1], color[2],
                    r["best_params"]["intensity"],
                    r["best_confidence"], r["queries_used"],
                    r["generations_run"], r["adversarial_png"],
                )
            )
        for s in obj.skipped:
            rows.append(
                (s["index"], s["path"], None, "skipped", None, None, None, None,
                 None, None, None, None, None)
            )
        rows.sort(key=lambda row: row[0])
        written.append(write_csv(header, rows, out_root / f"{base}.csv"))
        if svg and obj.results:
            series = {
                f'#{r["index"]}': r["best_so_far_trace"]
                for r in obj.results[:6]
                if r["best_so_far_trace"]
            }
            if series:
                written.append(
                    svg_line_chart(
                        series, out_root / f"{base}_traces.svg",
                        title="best confidence so far", x_label="generation",
                        y_label="confidence",
                    )
                )
        return written
    if isinstance(obj, AblationTable):
        base = basename or f"ablation_{obj.axis}"
        payload = obj.as_json()
        written.append(write_json(payload, out_root / f"{base}.json"))
        csv_rows = []
        for row in obj.rows:
            csv_rows.append(
                tuple(",".join(str(x) for x in v) if isinstance(v, (list, tuple)) else v for v in row)
            )
        written.append(write_csv(obj.columns, csv_rows, out_root / f"{base}.csv"))
        if svg:
            metric = obj.columns[1]
            labels = [
                ",".join(str(x) for x in row[0]) if isinstance(row[0], (list, tuple)) else str(row[0])
                for row in obj.rows
            ]
            values = [row[1] if row[1] is not None else 0.0 for row in obj.rows]
            written.append(
                svg_bar_chart(labels, values, out_root / f"{base}.svg",
                              title=f"{metric} by {obj.axis}", y_label=metric)
            )
        return written
    if isinstance(obj, TransferMatrix):
        base = basename or "transfer"
        written.append(write_json(obj.as_json(), out_root / f"{base}.json"))
        header = ("source", "samples") + obj.victims
        rows = [
            (src, obj.sample_counts[i]) + obj.cells[i]
            for i, src in enumerate(obj.sources)
        ]
        written.append(write_csv(header, rows, out_root / f"{base}.csv"))
        return written
    raise TypeError(f"cannot emit report for {type(obj).__name__}")
