import numpy as np
import pytest

from difflow import store
from difflow.cli import ConfigError, main, parse_config
from difflow.grid import Grid, PeriodicField


def write_cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return str(p)


def test_parse_config_defaults_and_overrides(tmp_path):
    p = write_cfg(
        tmp_path,
        """
        # comment line
        grid.n = 32
        time.dt = 0.01   # trailing comment
        ic.kind = steady
        """,
    )
    cfg = parse_config(p)
    assert cfg["grid.n"] == 32
    assert cfg["time.dt"] == 0.01
    assert cfg["ic.kind"] == "steady"
    assert cfg["solver.remap_every"] == 10  # untouched default


def test_parse_config_rejects_unknown_key(tmp_path):
    p = write_cfg(tmp_path, "no.such.key = 1\n")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(p)


def test_parse_config_rejects_bad_syntax(tmp_path):
    with pytest.raises(ConfigError, match="key = value"):
        parse_config(write_cfg(tmp_path, "grid.n 32\n"))
    with pytest.raises(ConfigError, match="bad value"):
        parse_config(write_cfg(tmp_path, "grid.n = many\n"))


def test_missing_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_missing_config_file_returns_2(tmp_path, capsys):
    rc = main(["--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path), "generate"])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_generate_fit_rollout_diagnose(tmp_path, capsys):
    cfg = write_cfg(
        tmp_path,
        """
        grid.n = 32
        time.dt = 0.005
        time.T = 0.05
        solver.remap_every = 5
        ic.K = 3
        lifter.window = 1
        lifter.k_feat = 2
        diag.quad_n = 64
        """,
    )
    out = str(tmp_path / "out")
    assert main(["--config", cfg, "--out", out, "--seed", "1", "generate"]) == 0
    ref = tmp_path / "out" / "reference.dflo"
    assert ref.exists()
    assert (tmp_path / "out" / "generate.csv").exists()
    assert (tmp_path / "out" / "generate.png").exists()
    assert (tmp_path / "out" / "final_vorticity.png").exists()

    assert main(["--config", cfg, "--out", out, "fit", str(ref)]) == 0
    lifter = tmp_path / "out" / "lifter.dflo"
    assert lifter.exists()
    assert (tmp_path / "out" / "fit.csv").exists()

    # initial condition for the rollout: first reference frame
    traj = store.load_trajectory(ref)
    ic_path = tmp_path / "out" / "ic.dflo"
    store.save_field(traj.frames[0], ic_path)
    assert main(
        ["--config", cfg, "--out", out, "rollout", str(lifter), str(ic_path)]
    ) == 0
    assert (tmp_path / "out" / "rollout.dflo").exists()
    assert (tmp_path / "out" / "rollout_chain.dflo").exists()
    assert (tmp_path / "out" / "rollout.csv").exists()
    assert (tmp_path / "out" / "rollout.png").exists()

    assert main(
        [
            "--config",
            cfg,
            "--out",
            out,
            "diagnose",
            str(ref),
            str(tmp_path / "out" / "rollout_chain.dflo"),
        ]
    ) == 0
    assert (tmp_path / "out" / "diagnostics.csv").exists()
    text = (tmp_path / "out" / "diagnostics.csv").read_text()
    assert text.startswith("metric,t,value")
    assert "conservation_error" in text
    assert "bandwidth" in text
    capsys.readouterr()


def test_diagnose_nothing_usable(tmp_path, capsys):
    g = Grid(16, 16)
    p = tmp_path / "f.dflo"
    store.save_field(PeriodicField(g, np.zeros((16, 16))), p)
    rc = main(["--out", str(tmp_path / "o"), "diagnose", str(p)])
    assert rc == 2
    assert "no diagnosable" in capsys.readouterr().err


def test_experiment_smoke(tmp_path, capsys):
    cfg = write_cfg(
        tmp_path,
        """
        grid.n = 32
        time.dt = 0.005
        time.T = 0.03
        solver.remap_every = 3
        ic.K = 2
        lifter.window = 1
        lifter.k_feat = 2
        rollout.remap_every = 3
        """,
    )
    out = tmp_path / "exp"
    assert main(["--config", cfg, "--out", str(out), "experiment"]) == 0
    for name in (
        "reference.dflo",
        "lifter.dflo",
        "rollout.dflo",
        "rollout_chain.dflo",
        "experiment.csv",
        "experiment.png",
        "reference_final.png",
        "rollout_final.png",
    ):
        assert (out / name).exists(), name
    capsys.readouterr()
