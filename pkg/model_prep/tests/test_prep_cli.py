"""Command-line behavior, run in-process through main()."""
import contextlib
import io
import json

import pytest

from model_prep.cli import main


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "bundle"
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        rc = main(["train", "--out", str(out), "--seed", "0"])
    assert rc == 0
    payload = json.loads(buf.getvalue().strip().splitlines()[-1])
    return out, payload


class TestTrain:
    def test_emits_metadata_line(self, trained):
        out, payload = trained
        assert payload["bundle"] == str(out)
        assert payload["dataset"] == "digits"
        assert payload["seed"] == 0
        assert payload["accuracy"] >= 0.6

    def test_unknown_dataset_fails(self, tmp_path, capsys):
        rc = main(["train", "--out", str(tmp_path / "x"), "--dataset", "nope"])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestValidate:
    def test_trained_bundle_passes(self, trained, capsys):
        out, _ = trained
        assert main(["validate", "--bundle", str(out)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["ok"] is True
        assert report["probe_agreement"] == 50


class TestExportPretrained:
    def test_unknown_name_lists_supported(self, tmp_path, capsys):
        rc = main(["export-pretrained", "--name", "mystery", "--out", str(tmp_path)])
        assert rc == 1
        err = capsys.readouterr().err
        assert "resnet18" in err and "vgg19" in err


def test_missing_subcommand_exits_with_usage(capsys):
    with pytest.raises(SystemExit):
        main([])
    assert "usage" in capsys.readouterr().err
