"""CLI pipelines: exit codes, artifact determinism, manifest reruns.

Runs the entry point in process (main returns the exit code) except for one
console-script smoke test. Every pipeline writes into a pytest tmp_path, so
nothing leaks between tests.
"""

import json
import shutil
import subprocess

import pytest

import schrodloc as sl
from schrodloc.cli import main

BASE_CFG = {
    "field": {"kind": "iid", "d": 1, "inv_eps": 16},
    "subgrid": {"m": 4},
    "iteration": {"tol": 0.01, "steps": 4},
    "analysis": {"n_ev": 6, "k_max": 6, "k_gap_max": 4, "samples": 5},
    "seed": 3,
}

SUBCOMMANDS = (
    "gen",
    "geometry",
    "assemble",
    "oracle",
    "pinvit",
    "block",
    "green-decay",
    "eigen-decay",
    "gap-scan",
    "friedrichs",
    "spectra-compare",
)


def _write_cfg(tmp_path, cfg=BASE_CFG, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _manifest(outdir):
    with open(outdir / "manifest.json") as fh:
        return json.load(fh)


def test_every_subcommand_runs_and_lists_artifacts(tmp_path):
    cfg = _write_cfg(tmp_path)
    for sub in SUBCOMMANDS:
        out = tmp_path / sub
        assert main([sub, "--config", cfg, "--out", str(out)]) == 0, sub
        man = _manifest(out)
        assert man["subcommand"] == sub
        assert man["threads_effective"] == 1
        assert man["artifacts"], sub
        for name in man["artifacts"]:
            assert (out / name).is_file(), "%s missing %s" % (sub, name)


def test_fig_pipelines(tmp_path):
    out1, out2 = tmp_path / "f1", tmp_path / "f2"
    assert main(["fig1", "--out", str(out1)]) == 0
    assert main(["fig2", "--out", str(out2)]) == 0
    assert set(_manifest(out1)["artifacts"]) == {
        "decay.csv",
        "decay.json",
        "decay.svg",
        "potential.svg",
        "state.svg",
    }
    assert set(_manifest(out2)["artifacts"]) == {
        "gaps_random.json",
        "spectra.csv",
        "spectra.svg",
    }
    with open(out2 / "gaps_random.json") as fh:
        gaps = json.load(fh)
    assert gaps["met_target"] is True  # the disordered field has an early gap


def test_rerun_is_byte_identical(tmp_path):
    cfg = _write_cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["oracle", "--config", cfg, "--out", str(out)]) == 0
    for name in _manifest(a)["artifacts"]:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_manifest_rerun_reproduces_block(tmp_path):
    cfg = _write_cfg(tmp_path)
    first = tmp_path / "first"
    assert main(["block", "--config", cfg, "--out", str(first)]) == 0
    again = tmp_path / "again"
    assert main(["block", "--config", str(first / "manifest.json"), "--out", str(again)]) == 0
    for name in ("block.csv", "block.json"):
        assert (first / name).read_bytes() == (again / name).read_bytes()
    assert _manifest(first)["config_hash"] == _manifest(again)["config_hash"]
    with open(first / "block.json") as fh:
        rec = json.load(fh)
    assert rec["final_error"] <= 10 * BASE_CFG["iteration"]["tol"] * rec["err0"]


def test_gen_artifacts_load_back(tmp_path):
    cfg = _write_cfg(tmp_path)
    out = tmp_path / "gen"
    assert main(["gen", "--config", cfg, "--out", str(out)]) == 0
    field = sl.load_field(str(out / "field.json"))
    assert field.kind == "iid"
    assert field.grid.inv_eps == 16


def test_config_hash_stamped_everywhere(tmp_path):
    cfg = _write_cfg(tmp_path)
    out = tmp_path / "oracle"
    assert main(["oracle", "--config", cfg, "--out", str(out)]) == 0
    h = _manifest(out)["config_hash"]
    first = (out / "spectrum.csv").read_text().splitlines()[0]
    assert first == "# config_hash: %s" % h
    assert ("config_hash: %s" % h) in (out / "spectrum.svg").read_text()


def test_seed_flag_overrides_config(tmp_path):
    cfg = _write_cfg(tmp_path)
    cfg11 = _write_cfg(tmp_path, dict(BASE_CFG, seed=11), "cfg11.json")
    a, b, c = tmp_path / "s3", tmp_path / "s11flag", tmp_path / "s11cfg"
    assert main(["gen", "--config", cfg, "--out", str(a)]) == 0
    assert main(["gen", "--config", cfg, "--seed", "11", "--out", str(b)]) == 0
    assert main(["gen", "--config", cfg11, "--out", str(c)]) == 0
    assert (b / "field.json").read_bytes() == (c / "field.json").read_bytes()
    assert (b / "field.json").read_bytes() != (a / "field.json").read_bytes()
    assert _manifest(b)["config"]["seed"] == 11


def test_out_root_env(tmp_path, monkeypatch):
    cfg = _write_cfg(tmp_path)
    root = tmp_path / "root"
    monkeypatch.setenv("SCHRODLOC_OUT", str(root))
    assert main(["gen", "--config", cfg, "--out", "sub/dir"]) == 0
    assert (root / "sub" / "dir" / "field.json").is_file()
    assert main(["gen", "--config", cfg]) == 0
    assert (root / "runs" / "gen" / "field.json").is_file()


def test_config_errors_exit_2(tmp_path, capsys):
    runs = [
        ["gen", "--config", str(tmp_path / "missing.json")],
        ["gen", "--config", _write_cfg(tmp_path, name="bad.json")],
        ["gen", "--config", _write_cfg(tmp_path, {"bogus_section": 1}, "unk.json")],
        ["gen", "--config", _write_cfg(tmp_path, {"field": {"kind": "perlin"}}, "kind.json")],
        ["gen", "--config", _write_cfg(tmp_path, {"field": {"inv_eps": 1}}, "eps.json")],
        ["gen", "--config", _write_cfg(tmp_path, BASE_CFG, "ok.json"), "--seed", "-1"],
    ]
    (tmp_path / "bad.json").write_text("{not json")
    for argv in runs:
        argv += ["--out", str(tmp_path / "errout")]
        assert main(argv) == 2, argv
        assert "config error" in capsys.readouterr().err


def test_numerical_failure_exits_3(tmp_path, capsys):
    cfg = _write_cfg(
        tmp_path,
        {
            "field": {"kind": "periodic", "d": 1, "inv_eps": 16},
            "subgrid": {"m": 4},
            "iteration": {"tol": 1e-300},
            "analysis": {"k_gap_max": 2},
            "seed": 0,
        },
        "hopeless.json",
    )
    assert main(["block", "--config", cfg, "--out", str(tmp_path / "x")]) == 3
    assert "numerical failure" in capsys.readouterr().err


@pytest.mark.skipif(shutil.which("schrodloc") is None, reason="console script not installed")
def test_console_script(tmp_path):
    cfg = _write_cfg(tmp_path)
    out = tmp_path / "console"
    proc = subprocess.run(
        ["schrodloc", "gen", "--config", cfg, "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "gen: wrote" in proc.stdout
    assert (out / "manifest.json").is_file()
