from __future__ import annotations

import json

import numpy as np
import pytest

from tumorflow import cli
from tumorflow.config import (
    DEFAULTS,
    IC_FAMILIES,
    ConfigError,
    config_from_dict,
    initial_condition,
    parse_config,
    serialize_config,
    smooth_step,
)
from tumorflow.core import GridSpec, field_from_fn, write_snapshot
from tumorflow.experiments import PRESETS
from tumorflow.greens import read_triplets
from tumorflow.simulator import read_diagnostics_csv

MINIMAL = dict(mu=1.0, a=1.0, gamma=2.0, theta=0.5, alpha=1.0, beta=1.0, nx=8, ny=8,
               ic="constant", ic_value=0.5, t_end=10)


def test_minimal_config_gets_defaults():
    cfg = parse_config(json.dumps(MINIMAL))
    assert cfg.cfl == 0.5
    assert cfg.tol == 1e-10
    assert cfg.sample_every == 10
    assert cfg.grid == GridSpec(8, 8, 1.0, 1.0)
    assert cfg.params.mu == 1.0
    assert cfg.snapshot_times == ()


def test_negative_mu_names_the_key():
    with pytest.raises(ConfigError, match="mu") as err:
        parse_config(json.dumps({**MINIMAL, "mu": -1.0}))
    assert err.value.key == "mu"


@pytest.mark.parametrize(
    "change, key",
    [
        ({"bogus": 1}, "bogus"),
        ({"cfl": 1.5}, "cfl"),
        ({"cfl": 0.0}, "cfl"),
        ({"nx": 0}, "nx"),
        ({"nx": 4.5}, "nx"),
        ({"t_end": -1}, "t_end"),
        ({"ic": "square"}, "ic"),
        ({"sample_every": 0}, "sample_every"),
        ({"snapshot_times": [20.0]}, "snapshot_times"),
        ({"tol": 0}, "tol"),
        ({"beta": True}, "beta"),
        ({"ic": "snapshot"}, "ic_path"),
        ({"lx": {"nested": 1}}, "lx"),
    ],
)
def test_invalid_values_name_their_key(change, key):
    with pytest.raises(ConfigError) as err:
        config_from_dict({**MINIMAL, **change})
    assert err.value.key == key
    assert key in str(err.value)


@pytest.mark.parametrize("key", ["mu", "nx", "ic", "t_end"])
def test_missing_required_key(key):
    d = dict(MINIMAL)
    del d[key]
    with pytest.raises(ConfigError, match="missing") as err:
        config_from_dict(d)
    assert err.value.key == key


def test_bad_json():
    with pytest.raises(ConfigError, match="JSON"):
        parse_config("{mu: 1")
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")


def test_round_trip():
    text = json.dumps({**MINIMAL, "ic": "random_smooth", "seed": 3, "snapshot_times": [5.0, 1.0],
                       "dt_max": 0.01, "lx": 2.0})
    cfg = parse_config(text)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)
    assert cfg.snapshot_times == (1.0, 5.0)


def test_every_default_key_is_serialised():
    d = json.loads(serialize_config(parse_config(json.dumps(MINIMAL))))
    assert set(DEFAULTS) <= set(d)


def test_smooth_step_limits():
    s = np.linspace(-1, 2, 301)
    v = smooth_step(s)
    assert np.all(v[s <= 0] == 0) and np.all(v[s >= 1] == 1)
    assert np.all(np.diff(v) >= 0)
    assert smooth_step(0.5) == pytest.approx(0.5)


def test_ic_constant_and_cosine():
    n = initial_condition(config_from_dict(MINIMAL))
    assert np.all(n.values == 0.5)
    cfg = config_from_dict({**MINIMAL, "ic": "cosine_bump", "ic_amplitude": 0.2})
    n = initial_condition(cfg)
    x, y = cfg.grid.mesh()
    assert np.allclose(n.values, 0.5 + 0.2 * np.cos(np.pi * x) * np.cos(np.pi * y))
    with pytest.raises(ConfigError, match="ic_amplitude"):
        initial_condition(config_from_dict({**MINIMAL, "ic": "cosine_bump", "ic_amplitude": 0.9}))


def test_ic_vacuum_disk():
    cfg = config_from_dict({**MINIMAL, "nx": 32, "ny": 32, "ic": "vacuum_disk", "ic_radius": 0.2,
                            "ic_width": 0.1, "ic_value": 0.7})
    n = initial_condition(cfg)
    x, y = cfg.grid.mesh()
    r = np.hypot(x - 0.5, y - 0.5)
    assert np.all(n.values[r <= 0.2] == 0)
    assert np.all(n.values[r >= 0.3] == 0.7)
    assert n.min() >= 0 and n.max() <= 0.7


def test_ic_random_smooth_seeded():
    base = {**MINIMAL, "nx": 16, "ny": 16, "ic": "random_smooth", "ic_amplitude": 0.3}
    a = initial_condition(config_from_dict({**base, "seed": 5}))
    b = initial_condition(config_from_dict({**base, "seed": 5}))
    c = initial_condition(config_from_dict({**base, "seed": 6}))
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert np.abs(a.values - 0.5).max() == pytest.approx(0.3)


def test_ic_snapshot(tmp_path):
    g = GridSpec(8, 8)
    fld = field_from_fn(g, lambda x, y: 0.1 + x * y)
    path = write_snapshot(tmp_path / "s.txt", fld, 0.0)
    n = initial_condition(config_from_dict({**MINIMAL, "ic": "snapshot", "ic_path": str(path)}))
    assert np.array_equal(n.values, fld.values)
    with pytest.raises(ConfigError, match="ic_path"):
        initial_condition(config_from_dict({**MINIMAL, "nx": 9, "ic": "snapshot", "ic_path": str(path)}))


def test_families_listed():
    assert set(IC_FAMILIES) >= {"constant", "cosine_bump", "vacuum_disk", "random_smooth"}


# --- command line --------------------------------------------------------------

@pytest.fixture
def outdir(tmp_path, monkeypatch):
    d = tmp_path / "out"
    monkeypatch.setenv("SIM_OUT_DIR", str(d))
    return d


def write_config(tmp_path, **kw):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({**MINIMAL, **kw}), encoding="utf-8")
    return path


def test_cli_run_writes_diagnostics(tmp_path, outdir, capsys):
    path = write_config(tmp_path, ic="cosine_bump", ic_amplitude=0.1, t_end=0.5, snapshot_times=[0.25])
    assert cli.main(["run", str(path)]) == 0
    rows = read_diagnostics_csv(outdir / "diagnostics.csv")
    assert rows[0].t == 0.0 and rows[-1].t == 0.5
    assert (outdir / "snapshot_0000.txt").exists()
    assert "termination=t_end" in capsys.readouterr().out


def test_cli_run_config_error_exit_code(tmp_path, outdir, capsys):
    path = write_config(tmp_path, mu=-2.0)
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", str(path)])
    assert exc.value.code == 2
    assert "mu" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", str(tmp_path / "missing.json")])
    assert exc.value.code == 2


def test_cli_unknown_preset_lists_presets(outdir, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["experiment", "no_such_preset"])
    assert exc.value.code == 2
    err = capsys.readouterr().err
    for name in PRESETS:
        assert name in err


@pytest.mark.parametrize("preset, code", [("constant_ode", "A2"), ("green_symmetry", "A10")])
def test_cli_experiment_passes(preset, code, outdir, capsys):
    assert cli.main(["experiment", preset]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.startswith(f"{code} PASS")
    assert (outdir / preset / "report.txt").read_text().startswith(f"{code} PASS")


def test_cli_experiment_failure_exit_code(outdir, monkeypatch, capsys):
    from tumorflow import experiments

    def broken():
        res = experiments.fundamental_normalization()
        bad = experiments.Criterion(res.criterion.code, res.criterion.title, (experiments.at_most("x", 1.0, 0.0),))
        return experiments.PresetResult(res.name, bad)

    monkeypatch.setitem(experiments.PRESETS, "fundamental_normalization", broken)
    assert cli.main(["experiment", "fundamental_normalization"]) == 1
    captured = capsys.readouterr()
    assert "A11 FAIL" in captured.out
    assert "A11" in captured.err


def test_cli_green(tmp_path, outdir):
    path = write_config(tmp_path, nx=6, ny=5, mu=0.2)
    assert cli.main(["green", str(path)]) == 0
    G = read_triplets(outdir / "green.txt", GridSpec(6, 5))
    assert np.allclose(G, G.T, rtol=0, atol=1e-9 * G.max())
    assert G.min() > 0
    path = write_config(tmp_path, nx=80, ny=80)
    assert cli.main(["green", str(path)]) == 2


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2


def test_repeated_runs_bit_identical(tmp_path, monkeypatch):
    path = write_config(tmp_path, nx=16, ny=16, ic="random_smooth", ic_amplitude=0.3, seed=11, t_end=1.0,
                        snapshot_times=[0.5, 1.0])
    outputs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        monkeypatch.setenv("SIM_OUT_DIR", str(d))
        assert cli.main(["run", str(path)]) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outputs[0].keys() == outputs[1].keys()
    assert len(outputs[0]) == 3
    assert outputs[0] == outputs[1]
