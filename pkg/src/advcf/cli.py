"""Command-line surface.

One binary, six subcommands: attack, campaign, ablate-intensity,
build-corpus, ablate-color, transfer. Parameters come from a JSON config
file; flags override config values. Exit codes: 0 success, 1 operational
error, 2 attack failed to find a misclassification.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfig
from .film import composite
from .ga import run_attack
from .harness import (
    CorpusManifest,
    DatasetError,
    ImageDataset,
    build_film_corpus,
    color_ablation,
    emit_report,
    intensity_ablation,
    run_campaign,
    transfer_eval,
)
from .images import load_image, save_png
from .oracle import NotCleanSampleError, OracleError, open_oracle
from .reports import write_json

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ATTACK_FAILED = 2


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_ERROR


def _progress(event: dict) -> None:
    print(json.dumps(event, sort_keys=True), file=sys.stderr, flush=True)


def _resolve_oracle_spec(spec: str) -> str:
    """Apply the model-cache fallback: a missing relative model path is
    retried under ADVCF_CACHE_DIR before being reported missing."""
    kind, sep, rest = spec.partition(":")
    cache = os.environ.get("ADVCF_CACHE_DIR")
    if kind == "onnx" and sep and cache and rest and not Path(rest).exists():
        candidate = Path(cache) / rest
        if candidate.exists():
            return f"onnx:{candidate}"
    return spec


def _load_merged_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig.from_dict({})
    raw = dict(cfg.raw)
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        raw["jobs"] = args.jobs
    if getattr(args, "out", None) is not None:
        raw["out_dir"] = args.out
    if getattr(args, "oracle", None) is not None:
        raw["oracle"] = args.oracle
    return RunConfig.from_dict(raw)


def _require(cfg: RunConfig, key: str) -> str:
    value = cfg.get(key)
    if not value:
        raise ConfigError(f'config key "{key}" is required (or pass the matching flag)')
    return value


def _open_oracle(cfg: RunConfig):
    return open_oracle(_resolve_oracle_spec(_require(cfg, "oracle")))


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(_require(cfg, "out_dir"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_attack(args: argparse.Namespace) -> int:
    try:
        cfg = _load_merged_config(args)
        section = cfg.section("attack")
        image_path = args.image or section.get("image")
        label = args.label if args.label is not None else section.get("label")
        if not image_path or label is None:
            return _fail("attack needs --image and --label (or an [attack] config section)")
        out = _out_dir(cfg)
        oracle = _open_oracle(cfg)
        ga_cfg = cfg.ga_config()
        x = load_image(image_path)
    except (ConfigError, OracleError, OSError, ValueError) as e:
        return _fail(str(e))

    try:
        result = run_attack(x, int(label), oracle, ga_cfg)
    except NotCleanSampleError as e:
        return _fail(str(e))
    except (OracleError, ValueError) as e:
        return _fail(str(e))

    payload = result.as_json()
    payload["image"] = str(image_path)
    payload["label"] = int(label)
    if result.success:
        save_png(composite(x, result.best_params), out / "adversarial.png")
        payload["adversarial_png"] = "adversarial.png"
    else:
        payload["adversarial_png"] = None
    write_json(payload, out / "attack_result.json")
    return EXIT_OK if result.success else EXIT_ATTACK_FAILED


def cmd_campaign(args: argparse.Namespace) -> int:
    try:
        cfg = _load_merged_config(args)
        out = _out_dir(cfg)
        dataset = ImageDataset.load(_require(cfg, "dataset"))
        oracle = _open_oracle(cfg)
        ga_cfg = cfg.ga_config()
    except (ConfigError, DatasetError, OracleError, OSError, ValueError) as e:
        return _fail(str(e))
    report = run_campaign(
        dataset,
        oracle,
        ga_cfg,
        out_dir=out,
        jobs=int(cfg.get("jobs", 1)),
        record_timestamps=bool(cfg.get("record_timestamps", False)),
        progress=_progress,
    )
    if cfg.get("svg"):
        emit_report(report, out, svg=True)
    return EXIT_ERROR if report.partial else EXIT_OK


def cmd_ablate_intensity(args: argparse.Namespace) -> int:
    try:
        cfg = _load_merged_config(args)
        out = _out_dir(cfg)
        dataset = ImageDataset.load(_require(cfg, "dataset"))
        oracle = _open_oracle(cfg)
        section = cfg.section("ablate_intensity")
        levels = args.levels or section.get("levels") or list((0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7))
        k = args.colors_per_image or section.get("colors_per_image", 30)
        table = intensity_ablation(
            dataset,
            oracle,
            levels=[float(v) for v in levels],
            colors_per_image=int(k),
            rng_seed=int(cfg.get("seed", 0)),
            progress=_progress,
        )
    except (ConfigError, DatasetError, OracleError, OSError, ValueError) as e:
        return _fail(str(e))
    emit_report(table, out, svg=bool(cfg.get("svg")))
    return EXIT_OK


def cmd_build_corpus(args: argparse.Namespace) -> int:
    try:
        cfg = _load_merged_config(args)
        out = _out_dir(cfg)
        dataset = ImageDataset.load(_require(cfg, "dataset"))
        section = cfg.section("build_corpus")
        kwargs = {}
        if section.get("colors"):
            kwargs["colors"] = [tuple(c) for c in section["colors"]]
        intensity = args.intensity if args.intensity is not None else section.get("intensity")
        if intensity is not None:
            kwargs["intensity"] = float(intensity)
        manifest = build_film_corpus(dataset, out, progress=_progress, **kwargs)
    except (ConfigError, DatasetError, OSError, ValueError) as e:
        return _fail(str(e))
    print(json.dumps({"files": len(manifest.entries), "manifest": str(manifest.manifest_path)}))
    return EXIT_OK


def cmd_ablate_color(args: argparse.Namespace) -> int:
    try:
        cfg = _load_merged_config(args)
        out = _out_dir(cfg)
        oracle = _open_oracle(cfg)
        manifest_path = args.corpus or cfg.section("ablate_color").get("corpus_manifest")
        if not manifest_path:
            return _fail("ablate-color needs --corpus (or ablate_color.corpus_manifest)")
        corpus = CorpusManifest.load(manifest_path)
        table = color_ablation(corpus, oracle, progress=_progress)
    except (ConfigError, OracleError, OSError, ValueError) as e:
        return _fail(str(e))
    emit_report(table, out, svg=bool(cfg.get("svg")))
    return EXIT_OK


def cmd_transfer(args: argparse.Namespace) -> int:
    try:
        cfg = _load_merged_config(args)
        out = _out_dir(cfg)
        section = cfg.section("transfer")
        if not section.get("sources") or not section.get("victims"):
            return _fail("transfer needs transfer.sources and transfer.victims in the config")
        victims = {
            name: open_oracle(_resolve_oracle_spec(spec))
            for name, spec in section["victims"].items()
        }
        matrix = transfer_eval(section["sources"], victims, progress=_progress)
    except (ConfigError, OracleError, OSError, ValueError) as e:
        return _fail(str(e))
    emit_report(matrix, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advcf",
        description="Color-film adversarial attack and evaluation harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="rng seed (overrides config)")
        p.add_argument("--jobs", type=int, help="parallel images (default 1)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument(
            "--oracle",
            help="oracle backend: onnx:PATH | http:URL | exec:CMD | synthetic:NAME",
        )

    p = sub.add_parser("attack", help="attack a single image")
    common(p)
    p.add_argument("--image", help="image file to attack")
    p.add_argument("--label", type=int, help="ground-truth class index")
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("campaign", help="attack every image in a dataset")
    common(p)
    p.set_defaults(fn=cmd_campaign)

    p = sub.add_parser("ablate-intensity", help="fixed-intensity sweep")
    common(p)
    p.add_argument("--levels", type=float, nargs="+", help="intensity levels, ascending")
    p.add_argument("--colors-per-image", type=int, help="random films per image")
    p.set_defaults(fn=cmd_ablate_intensity)

    p = sub.add_parser("build-corpus", help="overlay a color grid onto a dataset")
    common(p)
    p.add_argument("--intensity", type=float, help="film intensity (default 0.4)")
    p.set_defaults(fn=cmd_build_corpus)

    p = sub.add_parser("ablate-color", help="per-color accuracy over a corpus")
    common(p)
    p.add_argument("--corpus", help="corpus manifest (JSON lines)")
    p.set_defaults(fn=cmd_ablate_color)

    p = sub.add_parser("transfer", help="re-score adversarial samples on victims")
    common(p)
    p.set_defaults(fn=cmd_transfer)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_ERROR


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
