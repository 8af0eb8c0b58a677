"""Regenerates the committed test fixtures from scratch:

    tests/fixtures/models/toy_seed0    trained classifier bundle, seed 0
    tests/fixtures/models/toy_seed1    same recipe, seed 1
    tests/fixtures/dataset             20 clean images + manifest

Run from the repository root:

    python3 tools/make_fixtures.py

The dataset holds the first 20 test-split images (seed-0 split order)
that both bundles classify correctly, so campaigns, ablations, and the
transfer matrix all start from eligible clean samples.
"""
import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "tests" / "fixtures"
DATASET_SIZE = 20


def main() -> int:
    from advcf.images import save_png
    from advcf.onnx_model import open_model_oracle
    from model_prep import train_toy_classifier, validate_bundle
    from model_prep.data import load_dataset

    oracles = {}
    for seed in (0, 1):
        out = FIXTURES / "models" / f"toy_seed{seed}"
        bundle = train_toy_classifier(seed=seed, out_dir=out)
        report = validate_bundle(out)
        print(f"toy_seed{seed}: accuracy={bundle.metadata['accuracy']:.4f} "
              f"probe={report['probe_agreement']}/{report['probe_total']} ok={report['ok']}")
        if not report["ok"]:
            return 1
        oracles[seed] = open_model_oracle(out)

    _, _, test_x, test_y = load_dataset("digits", 0)
    ds_root = FIXTURES / "dataset"
    ds_root.mkdir(parents=True, exist_ok=True)
    chosen = []
    for i in range(len(test_x)):
        if len(chosen) == DATASET_SIZE:
            break
        if all(
            oracles[s].classify(test_x[i]).label == test_y[i] for s in (0, 1)
        ):
            chosen.append(i)
    if len(chosen) < DATASET_SIZE:
        print(f"only {len(chosen)} eligible images found", file=sys.stderr)
        return 1
    with open(ds_root / "manifest.jsonl", "w", encoding="utf-8") as fh:
        for j, i in enumerate(chosen):
            save_png(test_x[i], ds_root / f"digit_{j:02d}.png")
            fh.write(
                json.dumps({"path": f"digit_{j:02d}.png", "label": int(test_y[i])})
                + "\n"
            )
    print(f"dataset: {len(chosen)} images -> {ds_root}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
