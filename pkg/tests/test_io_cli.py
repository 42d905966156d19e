import json
import subprocess
import sys

import numpy as np
import pytest

from itelab.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, main
from itelab.config import ConfigError, load_config, validate_config
from itelab.errors import InvalidInput
from itelab.io import (
    Series,
    build_manifest,
    dump_hamiltonian,
    load_hamiltonian,
    read_csv,
    sha256_file,
    svg_plot,
    validate_manifest,
    write_csv,
)
from itelab.operators import EnsembleSpec, sample_rlh
from itelab.rng import SeedPath


def _cfg(tmp_path, command, body):
    p = tmp_path / f"{command}.json"
    p.write_text(json.dumps(dict(schema_version=1, **body)))
    return str(p)


def test_csv_round_trip_and_determinism(tmp_path):
    rows = [{"a": 1, "b": 0.1 + 0.2, "c": True}, {"a": 2, "b": 1e-300, "c": False}]
    write_csv(tmp_path / "x.csv", rows, ["a", "b", "c"], {"b": "s"})
    write_csv(tmp_path / "y.csv", rows, ["a", "b", "c"], {"b": "s"})
    assert (tmp_path / "x.csv").read_bytes() == (tmp_path / "y.csv").read_bytes()
    back = read_csv(tmp_path / "x.csv")
    assert float(back[0]["b"]) == 0.1 + 0.2 and back[1]["c"] == "false"


def test_svg_is_wellformed(tmp_path):
    import xml.etree.ElementTree as ET
    svg_plot(tmp_path / "p.svg", [Series([1, 10, 100], [1e-2, 1e-3, 1e-4], "a", yerr=[1e-3, 1e-4, 1e-5])],
             title="t<&>", logx=True, logy=True)
    root = ET.parse(tmp_path / "p.svg").getroot()
    assert root.tag.endswith("svg")


def test_manifest_digest_validation(tmp_path):
    f = tmp_path / "a.txt"
    f.write_text("hello")
    m = build_manifest("spread", {"x": 1}, 3, [f], tmp_path, start_time="s", end_time="e", wall_seconds=0.1)
    validate_manifest(m, tmp_path)
    assert m["outputs"][0]["sha256"] == sha256_file(f)
    f.write_text("changed")
    with pytest.raises(InvalidInput):
        validate_manifest(m, tmp_path)


def test_hamiltonian_round_trip(tmp_path):
    H = sample_rlh(EnsembleSpec("RLHChain", n=3), SeedPath(4))
    dump_hamiltonian(tmp_path / "h.bin", H)
    assert (tmp_path / "h.bin").stat().st_size == 16 * 64
    G = load_hamiltonian(tmp_path / "h.bin")
    assert np.array_equal(G.entries, H.entries)
    assert G.provenance["variant"] == "RLHChain"


def test_config_errors_have_paths():
    with pytest.raises(ConfigError) as e:
        validate_config("spread", {"schema_version": 1, "n_valuez": [3]})
    assert "$.n_valuez" in str(e.value)
    with pytest.raises(ConfigError) as e:
        validate_config("spread", {"schema_version": 1, "ensemble": {"variant": "Nope"}})
    assert "$.ensemble" in str(e.value)
    with pytest.raises(ConfigError):
        validate_config("spread", {"n_trials": 5})
    assert load_config("distinguish", None)["n_trials"] == 2000


def test_cli_unknown_key_exit_2(tmp_path, capsys):
    code = main(["spread", "--config", _cfg(tmp_path, "spread", {"n_tirals": 3}), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert "$.n_tirals" in capsys.readouterr().err


def test_cli_bad_ensemble_exit_2(tmp_path):
    cfg = _cfg(tmp_path, "spread", {"ensemble": {"variant": "RLHComplete", "n": 20}, "n_values": [20]})
    assert main(["spread", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


SMALL = {
    "spread": {"n_values": [3, 4, 5], "n_trials": 4, "n_grid": 41, "t_max": 6.0},
    "scaling": {"n_values": [3, 4, 5], "n_trials": 4, "eval_times": [5.0, 10.0]},
    "haar-verify": {"D_mc": [4], "n_samples": 400},
    "distinguish": {"M_exponents": [6, 8], "n_trials": 200, "n_points": 5},
    "dump-hamiltonian": {},
}


@pytest.mark.parametrize("command", sorted(SMALL))
def test_cli_commands_run_and_manifest(tmp_path, command):
    out = tmp_path / command
    code = main([command, "--config", _cfg(tmp_path, command, SMALL[command]), "--out", str(out), "--seed", "7"])
    assert code == EXIT_OK
    m = json.loads((out / "manifest.json").read_text())
    validate_manifest(m, out)
    assert m["master_seed"] == 7 and m["command"] == command and m["outputs"]


def test_cli_global_flags_before_subcommand(tmp_path):
    out = tmp_path / "o"
    code = main(["--seed", "5", "--out", str(out), "--no-plot", "haar-verify",
                 "--config", _cfg(tmp_path, "haar-verify", SMALL["haar-verify"])])
    assert code == EXIT_OK
    assert json.loads((out / "manifest.json").read_text())["master_seed"] == 5
    assert not list(out.glob("*.svg"))


def test_cli_csv_identical_across_threads(tmp_path):
    cfg = _cfg(tmp_path, "scaling", SMALL["scaling"])
    for th in ("1", "3"):
        assert main(["scaling", "--config", cfg, "--out", str(tmp_path / th), "--threads", th]) == EXIT_OK
    for name in ("scan.csv", "fits.csv", "scaling.svg"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "3" / name).read_bytes()


def test_cli_check_exit_4(tmp_path):
    cfg = _cfg(tmp_path, "spread", dict(SMALL["spread"], t_eq_max=0.01))
    assert main(["spread", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    assert main(["spread", "--config", cfg, "--out", str(tmp_path / "o"), "--check"]) == EXIT_CHECK


def test_console_entry_point_help():
    r = subprocess.run([sys.executable, "-m", "itelab.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "dump-hamiltonian" in r.stdout
