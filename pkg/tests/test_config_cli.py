import json

import numpy as np
import pytest

from sgvae import config, dataset
from sgvae.cli import CHECKPOINT, DATASET, REPORT_DIR, REPORT_FILES, main
from sgvae.errors import ConfigError
from sgvae.stats import read_table

SMALL = """\
[run]
seed = 7

[synth]
Q_values = 1, 4, 8
shots_per_Q = 60

[train]
epochs = 2
batch = 32

[latent]
z_points = 3
samples_per_point = 20

[analyze]
null_draws = 5
bootstrap = 10

[report]
report_shots = 60
"""


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return p


def test_defaults_and_round_trip():
    cfg = config.RunConfig()
    assert cfg["train"]["beta"] == 3.0 and cfg["synth"]["lambda_T"] == 25.0
    assert config.parse(cfg.to_text()) == cfg
    parsed = config.parse(SMALL)
    assert parsed["synth"]["Q_values"] == (1.0, 4.0, 8.0)
    assert config.parse(parsed.to_text()) == parsed
    assert parsed.z_grid().tolist() == [-3.0, 0.0, 3.0]


def test_diagnostics_name_the_line():
    with pytest.raises(ConfigError, match=r"x.ini:4: \[train\] epochs"):
        config.parse("[run]\nseed = 1\n[train]\nepochs = many\n", source="x.ini")
    with pytest.raises(ConfigError, match="unknown key 'epoch'"):
        config.parse("[train]\nepoch = 3\n")
    with pytest.raises(ConfigError, match="unknown section"):
        config.parse("[nope]\na = 1\n")
    with pytest.raises(ConfigError):
        config.parse("[synth]\nQ_values = 1, -2\n")
    with pytest.raises(ConfigError):
        config.parse("[latent]\nz_min = 2\nz_max = 1\n")
    with pytest.raises(ConfigError):
        config.load("/nonexistent/run.ini")


def test_sub_seeds_are_stable_and_distinct():
    assert config.sub_seed(7, "train") == config.sub_seed(7, "train")
    assert len({config.sub_seed(7, k) for k in ("synth", "train", "generate", "analyze")}) == 4
    assert config.sub_seed(7, "train") != config.sub_seed(8, "train")


def test_exit_codes(small, tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[train]\nbatch = zero\n")
    assert main(["synth", "--config", str(bad), "--out", str(tmp_path / "a")]) == 2
    assert "bad.ini:2" in capsys.readouterr().err
    assert main(["synth", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path / "a")]) == 2
    assert main(["analyze", "--config", str(small), "--out", str(tmp_path / "empty")]) == 3
    with pytest.raises(SystemExit) as exc:
        main(["synth"])
    assert exc.value.code == 2


def test_numeric_abort_exit_code(tmp_path):
    ini = tmp_path / "hot.ini"
    ini.write_text(SMALL.replace("epochs = 2", "epochs = 3\nmax_lr = 1e12"))
    out = tmp_path / "hot"
    assert main(["synth", "--config", str(ini), "--out", str(out)]) == 0
    assert main(["train", "--config", str(ini), "--out", str(out)]) == 4


def test_synth_is_byte_identical_and_refuses_modified_data(small, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "--config", str(small), "--out", str(a)]) == 0
    assert main(["synth", "--config", str(small), "--out", str(b)]) == 0
    assert (a / DATASET).read_bytes() == (b / DATASET).read_bytes()
    ma, mb = (json.loads((d / "synth.manifest.json").read_text()) for d in (a, b))
    assert ma["manifest_hash"] == mb["manifest_hash"] and ma["outputs"] == mb["outputs"]
    assert main(["synth", "--config", str(small), "--seed", "8", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / DATASET).read_bytes() != (a / DATASET).read_bytes()

    blob = bytearray((a / DATASET).read_bytes())
    blob[-1] ^= 1
    (a / DATASET).write_bytes(bytes(blob))
    assert main(["analyze", "--config", str(small), "--out", str(a)]) == 3


def test_analyze_all_zero_dataset(small, tmp_path):
    zeros = tmp_path / "zeros.sgds"
    dataset.save(dataset.Dataset.from_phases(np.zeros((20, 35))), zeros)
    out = tmp_path / "z"
    assert main(["analyze", "--config", str(small), "--out", str(out), "--data", str(zeros)]) == 0
    meta, cols, rows = read_table((out / "coherence.csv").read_text())
    assert meta["estimator"] == "coherence"
    assert float(rows[0][cols.index("coherence")]) == 1.0


@pytest.mark.slow
def test_full_pipeline_writes_report_bundle(small, tmp_path):
    out = tmp_path / "run"
    for cmd in ("synth", "train", "encode", "analyze", "report"):
        assert main([cmd, "--config", str(small), "--out", str(out)]) == 0, cmd
    assert (out / CHECKPOINT).exists()
    assert sorted(p.name for p in (out / REPORT_DIR).iterdir()) == sorted(REPORT_FILES)
    summary = json.loads((out / REPORT_DIR / "summary.json").read_text())
    assert "neurons" in summary
    assert main(["generate", "--config", str(small), "--out", str(out), "--za", "0.5", "-n", "10"]) == 0


def test_readme_defaults_block_parses_to_defaults():
    from pathlib import Path

    text = (Path(__file__).resolve().parents[1] / "README.md").read_text()
    block = text.split("```ini\n", 1)[1].split("```", 1)[0]
    assert config.parse(block) == config.RunConfig()
