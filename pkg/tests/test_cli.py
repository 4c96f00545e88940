"""End-to-end CLI behavior with a tiny on-disk dataset."""

import numpy as np
import pytest

from artbank.bank import StyleBank, create_entry, save_bank
from artbank.cli import parse_config_file, run, thread_cap
from artbank.data_io import (default_style_specs, gen_content_image,
                             gen_style_collection, read_ppm, write_ppm)
from artbank.errors import ConfigError


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """A small two-family dataset plus one content image."""
    root = tmp_path_factory.mktemp("data")
    specs = default_style_specs()
    for name in ("stripes", "checks"):
        sub = root / name
        sub.mkdir()
        for i, img in enumerate(gen_style_collection(specs[name], 6, 8, seed=3)):
            write_ppm(img, sub / f"img_{i:03d}.ppm")
    content = root / "content.ppm"
    write_ppm(gen_content_image("shapes", 8, seed=5), content)
    return root


def test_config_file_parsing(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("steps = 12\nlr = 0.01  # comment\n\n# full line comment\n"
                   "style_id = checks\n")
    values = parse_config_file(cfg)
    assert values == {"steps": "12", "lr": "0.01", "style_id": "checks"}


def test_config_file_rejects_garbage(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("this is not an assignment\n")
    with pytest.raises(ConfigError):
        parse_config_file(cfg)


def test_thread_cap(monkeypatch):
    monkeypatch.delenv("ARTBANK_THREADS", raising=False)
    assert thread_cap() == 1
    monkeypatch.setenv("ARTBANK_THREADS", "4")
    assert thread_cap() == 4
    monkeypatch.setenv("ARTBANK_THREADS", "zero")
    with pytest.raises(ConfigError):
        thread_cap()
    monkeypatch.setenv("ARTBANK_THREADS", "0")
    with pytest.raises(ConfigError):
        thread_cap()


def test_bank_inspect_empty_bank(tmp_path, capsys):
    path = tmp_path / "empty.ispb"
    save_bank(StyleBank(), path)
    code = run(["bank", "inspect", "--bank", str(path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "0 entries" in out


def test_bank_inspect_lists_entries(tmp_path, capsys):
    path = tmp_path / "two.ispb"
    bank = StyleBank()
    bank.add(create_entry("alpha", "Artist A", 6, 3, seed=1))
    bank.add(create_entry("beta", "Artist B", 6, 3, seed=2))
    save_bank(bank, path)
    code = run(["bank", "inspect", "--bank", str(path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "alpha" in out and "beta" in out and "C=6" in out


def test_unknown_flag_nonzero_exit(capsys):
    assert run(["stylize", "--frobnicate"]) != 0


def test_missing_file_nonzero_exit(tmp_path, capsys):
    code = run(["stylize", "--checkpoint", str(tmp_path / "nope.abdn"),
                "--bank", str(tmp_path / "nope.ispb"),
                "--style-id", "x", "--content", str(tmp_path / "c.ppm"),
                "--out", str(tmp_path / "o.ppm")])
    assert code != 0
    assert "not found" in capsys.readouterr().err


def test_runs_print_config_and_seed(tmp_path, capsys):
    path = tmp_path / "cfgbank.ispb"
    save_bank(StyleBank(), path)
    run(["bank", "inspect", "--bank", str(path), "--seed", "42"])
    out = capsys.readouterr().out
    assert "config:" in out and "seed=42" in out


class TestPipeline:
    def test_full_pipeline_and_determinism(self, dataset, tmp_path, capsys):
        ck = tmp_path / "backbone.abdn"
        bank_path = tmp_path / "styles.ispb"
        out_img = tmp_path / "styled.ppm"
        train_common = ["--seed", "7", "--channels", "12", "--timesteps", "20"]
        style_args = ["stylize", "--checkpoint", str(ck), "--bank",
                      str(bank_path), "--style-id", "checks", "--content",
                      str(dataset / "content.ppm"), "--out", str(out_img),
                      "--strength", "0.5", "--seed", "7",
                      "--timesteps", "20"]

        code = run(["pretrain", "--data", str(dataset), "--checkpoint",
                    str(ck), "--steps", "60", "--width", "8"] + train_common)
        assert code == 0
        assert ck.is_file()

        code = run(["train-bank", "--data", str(dataset), "--checkpoint",
                    str(ck), "--bank", str(bank_path), "--style-id", "checks",
                    "--steps", "40", "--positions", "4"] + train_common)
        assert code == 0
        assert bank_path.is_file()

        assert run(style_args) == 0
        first = out_img.read_bytes()
        img = read_ppm(out_img)
        assert img.width == 8 and img.height == 8

        # identical config + seed => byte-identical artifacts
        assert run(style_args) == 0
        assert out_img.read_bytes() == first
        capsys.readouterr()

    def test_duplicate_style_id_rejected(self, dataset, tmp_path, capsys):
        ck = tmp_path / "b.abdn"
        bank_path = tmp_path / "s.ispb"
        common = ["--seed", "7", "--channels", "12", "--timesteps", "10"]
        assert run(["pretrain", "--data", str(dataset), "--checkpoint",
                    str(ck), "--steps", "5", "--width", "8"] + common) == 0
        args = ["train-bank", "--data", str(dataset), "--checkpoint", str(ck),
                "--bank", str(bank_path), "--style-id", "stripes", "--steps",
                "2", "--positions", "4"] + common
        assert run(args) == 0
        assert run(args) != 0
        assert "already present" in capsys.readouterr().err

    def test_stylize_unknown_style_id(self, dataset, tmp_path, capsys):
        ck = tmp_path / "b2.abdn"
        bank_path = tmp_path / "s2.ispb"
        common = ["--seed", "7", "--channels", "12", "--timesteps", "10"]
        assert run(["pretrain", "--data", str(dataset), "--checkpoint",
                    str(ck), "--steps", "5", "--width", "8"] + common) == 0
        assert run(["train-bank", "--data", str(dataset), "--checkpoint",
                    str(ck), "--bank", str(bank_path), "--style-id", "checks",
                    "--steps", "2", "--positions", "4"] + common) == 0
        code = run(["stylize", "--checkpoint", str(ck), "--bank",
                    str(bank_path), "--style-id", "plaid", "--content",
                    str(dataset / "content.ppm"), "--out",
                    str(tmp_path / "x.ppm"), "--seed", "7",
                    "--timesteps", "10"])
        assert code != 0
        assert "plaid" in capsys.readouterr().err

    def test_dimension_mismatch_between_checkpoint_and_bank(self, dataset,
                                                            tmp_path, capsys):
        ck = tmp_path / "b3.abdn"
        common = ["--seed", "7", "--timesteps", "10"]
        assert run(["pretrain", "--data", str(dataset), "--checkpoint",
                    str(ck), "--steps", "5", "--width", "8", "--channels",
                    "12"] + common) == 0
        code = run(["train-bank", "--data", str(dataset), "--checkpoint",
                    str(ck), "--bank", str(tmp_path / "s3.ispb"),
                    "--style-id", "checks", "--steps", "2", "--channels",
                    "16", "--positions", "4"] + common)
        assert code != 0
        err = capsys.readouterr().err
        assert "12" in err and "16" in err

    def test_eval_subcommand(self, dataset, tmp_path, capsys):
        out_csv = tmp_path / "eval.csv"
        content = dataset / "content.ppm"
        code = run(["eval", "--content", str(content), "--stylized",
                    str(content), "--style-dir", str(dataset / "checks"),
                    "--out", str(out_csv)])
        assert code == 0
        text = out_csv.read_text()
        assert "ssim" in text.splitlines()[0]
        assert "1.0" in text  # self-similarity
        capsys.readouterr()

    def test_loss_csv_emitted(self, dataset, tmp_path, capsys):
        ck = tmp_path / "b4.abdn"
        loss_csv = tmp_path / "loss.csv"
        code = run(["pretrain", "--data", str(dataset), "--checkpoint",
                    str(ck), "--steps", "8", "--width", "8", "--channels",
                    "12", "--timesteps", "10", "--seed", "1",
                    "--loss-csv", str(loss_csv)])
        assert code == 0
        lines = loss_csv.read_text().splitlines()
        assert lines[0] == "step,loss"
        assert len(lines) == 9
        capsys.readouterr()
