import csv
import os
import subprocess
import sys

import numpy as np
import pytest

from statdistort.cli import ConfigError, main, parse_config
from statdistort.core import load_dataset, save_dataset
from statdistort.distortion import statistical_distortion
from statdistort.experiment import extract_ideal
from statdistort.glitch import default_rules, fit_outlier_limits, glitch_percentages
from statdistort.synth import REFERENCE_SPEC


def write_config(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


SMALL_SYNTH = """
[synth]
n_i = 2
n_j = 3
n_k = 5
seed = 11
"""


def test_generate_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a" / "nested", tmp_path / "b"
    assert main(["generate", "--out", str(a)]) == 0
    assert main(["generate", "--out", str(b)]) == 0
    assert (a / "dataset.csv").read_bytes() == (b / "dataset.csv").read_bytes()
    ds = load_dataset(a / "dataset.csv")
    assert ds.n_series == 200
    assert str(a / "dataset.csv") in capsys.readouterr().out


def test_generate_seed_override(tmp_path):
    cfg = write_config(tmp_path / "c.toml", SMALL_SYNTH)
    main(["generate", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "x")])
    main(["generate", "--config", cfg, "--seed", "2", "--out", str(tmp_path / "y")])
    assert (tmp_path / "x/dataset.csv").read_bytes() != (tmp_path / "y/dataset.csv").read_bytes()
    assert load_dataset(tmp_path / "x/dataset.csv").n_series == 30


def test_audit_matches_library(tmp_path, reference):
    out = tmp_path / "audit"
    assert main(["audit", "--out", str(out)]) == 0
    with (out / "glitch_percentages.csv").open() as fh:
        got = [float(r["percent"]) for r in csv.DictReader(fh)]
    rules = default_rules()
    expected = glitch_percentages(reference, rules, fit_outlier_limits(extract_ideal(reference, rules)))
    assert got == list(expected)

    counts = np.loadtxt(out / "glitch_by_time.csv", delimiter=",", skiprows=1)
    cells = reference.values.size
    assert np.allclose(100 * counts[:, 1:].sum(axis=0) / cells, expected, rtol=0, atol=1e-12)


def test_run_small(tmp_path):
    cfg = write_config(tmp_path / "c.toml", SMALL_SYNTH + """
[experiment]
replications = 2
series_per_sample = 10
strategies = [3]
""")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--out", str(a)]) == 0
    assert main(["run", "--config", cfg, "--out", str(b)]) == 0
    for name in ("results.csv", "summary.csv", "failures.csv", "scatter_full.csv", "scatter_sweep.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    with (a / "results.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 4
    for r in rows:
        if float(r["fraction"]) == 0:
            assert float(r["glitch_improvement"]) == 0 and float(r["emd"]) == 0
    with (a / "scatter_full.csv").open() as fh:
        assert len(list(csv.DictReader(fh))) == 2


def test_run_seed_and_bins_change_output(tmp_path):
    cfg = write_config(tmp_path / "c.toml", SMALL_SYNTH + """
[experiment]
replications = 1
series_per_sample = 10
strategies = [1]
cost_fractions = [100]
""")
    main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["run", "--config", cfg, "--seed", "99", "--out", str(tmp_path / "b")])
    main(["run", "--config", cfg, "--bins", "4", "--out", str(tmp_path / "c")])
    a = (tmp_path / "a/results.csv").read_bytes()
    assert a != (tmp_path / "b/results.csv").read_bytes()
    assert a != (tmp_path / "c/results.csv").read_bytes()


def test_emd_subcommand(tmp_path, reference, capsys):
    sub = reference.take_series(np.arange(20))
    shifted = sub.with_values(sub.values + np.array([0.5, 3.0, 0.0]))
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    save_dataset(sub, pa)
    save_dataset(shifted, pb)
    assert main(["emd", str(pa), str(pa)]) == 0
    assert float(capsys.readouterr().out) == 0.0
    assert main(["emd", str(pa), str(pb), "--bins", "6"]) == 0
    got = float(capsys.readouterr().out)
    assert got == statistical_distortion(load_dataset(pa), load_dataset(pb), bins=6)
    assert got > 0


def test_emd_attribute_mismatch(tmp_path, reference, capsys):
    sub = reference.take_series([0, 1])
    pa = tmp_path / "a.csv"
    save_dataset(sub, pa)
    pb = tmp_path / "b.csv"
    pb.write_text("i,j,k,t,x\n0,0,0,0,1.0\n0,0,0,1,2.0\n")
    assert main(["emd", str(pa), str(pb)]) == 2
    assert "attribute counts differ" in capsys.readouterr().err


def test_config_defaults_and_errors(tmp_path):
    cfg = parse_config(None)
    assert cfg.synth == REFERENCE_SPEC and cfg.experiment.replications == 50
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "missing.toml")
    with pytest.raises(ConfigError, match="unknown config sections"):
        parse_config(write_config(tmp_path / "a.toml", "[plots]\nx = 1\n"))
    with pytest.raises(ConfigError, match="not both"):
        parse_config(write_config(tmp_path / "b.toml", '[data]\npath = "x.csv"\n[synth]\nseed = 1\n'))
    with pytest.raises(ConfigError, match="not found"):
        parse_config(write_config(tmp_path / "c.toml", '[data]\npath = "x.csv"\n'))
    with pytest.raises(ConfigError, match="unknown experiment keys"):
        parse_config(write_config(tmp_path / "d.toml", "[experiment]\nreps = 3\n"))
    with pytest.raises(ConfigError, match="missing"):
        parse_config(write_config(tmp_path / "e.toml", '[[rules]]\nkind = "lower-bound"\n'))
    with pytest.raises(ConfigError):
        parse_config(write_config(tmp_path / "f.toml", "[experiment\n"))


def test_config_data_and_rules(tmp_path, reference):
    save_dataset(reference.take_series([0, 1, 2]), tmp_path / "d.csv")
    cfg = parse_config(write_config(tmp_path / "c.toml", """
[data]
path = "d.csv"

[[rules]]
kind = "lower-bound"
attr = 0
lo = 0.0

[experiment]
log_attrs = [0]
limits = "global"

[output]
dir = "results"
"""))
    assert cfg.data_path == (tmp_path / "d.csv").resolve()
    assert len(cfg.experiment.rules) == 1
    assert cfg.log_attrs == (0,)
    assert cfg.experiment.limits == "global"
    assert cfg.out_dir == (tmp_path / "results").resolve()


def test_bad_seed_rejected(capsys):
    with pytest.raises(SystemExit):
        main(["run", "--seed", "-1"])


def test_module_entry_point(tmp_path):
    env = {**os.environ}
    proc = subprocess.run([sys.executable, "-m", "statdistort", "emd", "nope.csv", "nope.csv"],
                          capture_output=True, text=True, env=env, cwd=tmp_path)
    assert proc.returncode == 2
    assert proc.stderr.startswith("statdistort: error:")
