import json
import subprocess
import sys
from dataclasses import replace

import pytest

from rpna.cli import (
    EXIT_ERROR,
    EXIT_MISMATCH,
    EXIT_OK,
    analysis_report,
    default_seed,
    main,
    render,
    render_verification,
    verification_report,
)
from rpna.model import BUILTIN_NAMES, builtin
from rpna.recursion import RpnaOptions, run


def cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# ---- analyze

def test_analyze_puma_counts(capsys):
    code, out, _ = cli(capsys, "analyze", "builtin:puma560")
    assert code == EXIT_OK
    assert "base parameters: 36" in out
    dims = next(line for line in out.splitlines() if line.startswith("dim_T"))
    # gravity off first, the current analysis in parentheses
    assert dims.split()[1:] == ["9", "(9)", "5", "(3)", "3", "(3)", "3", "(3)", "3", "(3)", "3", "(3)"]


def test_analyze_puma_json(capsys):
    code, out, _ = cli(capsys, "analyze", "builtin:puma560", "--format", "json")
    report = json.loads(out)
    assert code == EXIT_OK and report["kind"] == "analysis"
    assert report["base_param_count"] == 36 and report["nullity"] == 24
    assert [b["dim_T"]["current"] for b in report["bodies"]] == [9, 3, 3, 3, 3, 3]
    assert [b["dim_T"]["off"] for b in report["bodies"]] == [9, 5, 3, 3, 3, 3]


def test_scara_gravity_flag_changes_first_velocity_dim(capsys):
    _, on, _ = cli(capsys, "analyze", "builtin:scara")
    _, off, _ = cli(capsys, "analyze", "builtin:scara", "--no-gravity")
    dim_v = [line for line in (on, off) for line in line.splitlines() if line.startswith("dim_V")]
    assert dim_v[0].split()[1:3] == ["1", "(2)"]
    assert dim_v[1].split()[1:3] == ["1", "(1)"]


def test_analyze_ascii_has_no_unicode(capsys):
    _, out, _ = cli(capsys, "analyze", "builtin:scara", "--ascii", "--rotors")
    assert out.isascii()
    _, out, _ = cli(capsys, "analyze", "builtin:scara", "--rotors")
    assert "★" in out and "✓" in out and "✗" in out


def test_analyze_rotor_row(capsys):
    _, out, _ = cli(capsys, "analyze", "builtin:puma560", "--rotors", "--ascii")
    jm = next(line for line in out.splitlines() if line.startswith("Jm"))
    assert jm.split()[1:] == ["Y", "Y", "Y", "Y"]
    assert "identifiable rotor inertias: link3, link4, link5, link6" in out


def test_json_round_trip_renders_identically(capsys, tmp_path):
    for args in (["analyze", "builtin:cheetah3_leg_floating", "--rotors"],
                 ["verify", "builtin:rr_parallel", "--samples", "300"],
                 ["identify", "builtin:cheetah3_leg_fixed", "--samples", "200"]):
        _, table, _ = cli(capsys, *args)
        _, js, _ = cli(capsys, *args, "--format", "json")
        path = tmp_path / "report.json"
        path.write_text(js, encoding="utf-8")
        code, rendered, _ = cli(capsys, "render", str(path))
        assert code == EXIT_OK and rendered == table
        assert render(json.loads(js)) == table


def test_static_without_gravity_is_an_error(capsys):
    code, _, err = cli(capsys, "analyze", "builtin:puma560", "--static", "--no-gravity")
    assert code == EXIT_ERROR and "rpna: error" in err


def test_missing_file_exits_2(capsys, tmp_path):
    code, _, err = cli(capsys, "analyze", str(tmp_path / "nope.json"))
    assert code == EXIT_ERROR and err


def test_bad_model_exits_2(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format": 1, "bodies": [{"name": "a", "parent": 3}]}')
    code, _, err = cli(capsys, "analyze", str(path))
    assert code == EXIT_ERROR and "rpna: error" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rpna", "analyze", "builtin:rr_parallel", "--ascii"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "base parameters: 4" in proc.stdout


# ---- verify

@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_verify_passes_on_builtins(capsys, name):
    code, out, _ = cli(capsys, "verify", f"builtin:{name}")
    assert code == EXIT_OK and out.rstrip().endswith("PASS")


@pytest.mark.parametrize("flags", [["--rotors"], ["--static"], ["--no-gravity"]])
def test_verify_passes_with_options(capsys, flags):
    code, _, _ = cli(capsys, "verify", "builtin:puma560", *flags)
    assert code == EXIT_OK


def test_verify_is_stable_across_seeds(capsys):
    results = {cli(capsys, "verify", "builtin:scara", "--seed", str(s), "--samples", "500")[0]
               for s in range(10)}
    assert results == {EXIT_OK}


def test_seed_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("RPNA_SEED", "7")
    assert default_seed() == 7
    _, out, _ = cli(capsys, "verify", "builtin:rr_parallel", "--samples", "300")
    assert "seed: 7" in out
    monkeypatch.delenv("RPNA_SEED")
    assert default_seed() == 42


def sabotaged(mech, opts):
    # drop one transfer direction from the last joint that has any
    analyses = run(mech, opts)
    k = max(j for j, a in enumerate(analyses) if a.transfer_basis.shape[1])
    analyses[k] = replace(analyses[k], transfer_basis=analyses[k].transfer_basis[:, 1:])
    return analyses


def test_sabotaged_analysis_fails_with_diagnostics():
    mech, opts = builtin("scara").without_rotors(), RpnaOptions()
    report = verification_report(mech, opts, 1000, 42, 1e-7, analyses=sabotaged(mech, opts))
    assert not report["passed"]
    assert report["structural_nullity"] == report["empirical_nullity"] - 1
    assert report["angle"] > 0 and report["missing_distance"] > 1e-3
    text = render_verification(report)
    assert "FAIL" in text and "null direction not covered" in text


def test_sabotage_maps_to_exit_code(capsys, monkeypatch):
    import rpna.cli as mod
    original = mod.verification_report

    def broken(mech, opts, *args, **kw):
        return original(mech, opts, *args, analyses=sabotaged(mech, opts), **kw)

    monkeypatch.setattr(mod, "verification_report", broken)
    code, out, _ = cli(capsys, "verify", "builtin:puma560", "--samples", "500")
    assert code == EXIT_MISMATCH and "FAIL" in out


# ---- identify

def test_identify_table(capsys):
    code, out, _ = cli(capsys, "identify", "builtin:cheetah3_leg_fixed", "--format", "json")
    report = json.loads(out)
    assert code == EXIT_OK
    cells = {(c["experiment"], c["validation"]): c for c in report["cells"]}
    assert len(cells) == 4
    cross = cells[("fixed", "floating")]["groups"]
    assert cross["leg_torques"][2] < 1e-8 and min(cross["leg_torques"][:2]) > 1e-6
    assert max(cells[("floating", "floating")]["groups"]["body_forces"]) < 1e-8
    assert cells[("fixed", "fixed")]["rank"] == 18 and cells[("floating", "fixed")]["rank"] == 34


def test_identify_single_cell(capsys):
    code, out, _ = cli(capsys, "identify", "builtin:cheetah3_leg_fixed", "--experiment", "floating",
                       "--validate", "fixed", "--samples", "300", "--format", "json")
    cells = json.loads(out)["cells"]
    assert code == EXIT_OK and len(cells) == 1 and cells[0]["experiment"] == "floating"


def test_identify_rejects_floating_model(capsys):
    code, _, err = cli(capsys, "identify", "builtin:cheetah3_leg_floating")
    assert code == EXIT_ERROR and "fixed-base" in err


# ---- report contents

def test_analysis_report_regroupings_are_numbered():
    report = analysis_report(builtin("rr_parallel"), RpnaOptions(gravity_enabled=False))
    text = render(report, ascii_only=True)
    assert "    1. " in text and len(report["regroupings"]) == report["base_param_count"]
    assert len(report["minimal_set"]) == report["base_param_count"]
