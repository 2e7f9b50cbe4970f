import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from santalo_lab import cli
from santalo_lab.cli import FamilySpec, SpecError, main
from santalo_lab.convex_core import ConvexGridFunction
from santalo_lab.inequalities import VerificationReport


def run(tmp_path, *args):
    code = main([*args, "--out", str(tmp_path)])
    files = sorted(tmp_path.glob("*.json"))
    return code, files


def load_single(files):
    assert len(files) == 1
    return json.loads(files[0].read_text())


def test_product_laplace(tmp_path, capsys):
    code, files = run(tmp_path, "product", "--family", "laplace")
    rep = load_single(files)
    assert code == 0
    assert rep["passed"] and rep["quantities"]["c"] == 4.0
    assert rep["quantities"]["product"] == pytest.approx(4.0, abs=1e-4)
    assert files[0].name.startswith("product-laplace-")
    assert "PASS santalo_product" in capsys.readouterr().out


def test_product_shifted_exponential(tmp_path):
    code, files = run(tmp_path, "product", "--family", "shifted_exponential")
    rep = load_single(files)
    assert code == 0
    assert rep["quantities"]["c"] == pytest.approx(math.e)
    assert rep["quantities"]["product"] == pytest.approx(math.e, abs=1e-4)


def test_et_laplace_against_trapezoid(tmp_path):
    code, files = run(tmp_path, "et", "--family", "laplace", "--family2", "trapezoid_profile", "--eps", "0.05", "--c", "4")
    rep = load_single(files)
    assert code == 0 and rep["passed"]
    # the pairing converges to equality like 2 eps
    assert 0 < rep["deficit"] <= 2 * 0.05 + 1e-4


def test_failing_constant_exits_one(tmp_path):
    code, files = run(tmp_path, "product", "--family", "laplace", "--c", "5")
    assert code == 1
    assert not load_single(files)["passed"]


@pytest.mark.parametrize(
    "argv",
    [
        ["product", "--family", "power", "--p", "0.5"],
        ["product", "--family", "laplace", "--grid", "-8,8,33"],
        ["product", "--family", "laplace", "--grid", "8,-8,65"],
        ["profile", "--family", "trapezoid_profile", "--eps", "0.7"],
        ["uncond", "--family", "unconditional_l1", "--n", "4"],
        ["product", "--family", "nope"],
        ["product"],
        ["product", "--family", "custom_csv", "--path", "/nonexistent.csv"],
        ["product", "--family", "laplace", "--c", "-1"],
        ["uncond", "--family", "gaussian"],
    ],
)
def test_invalid_specs_exit_two(tmp_path, capsys, argv):
    code, files = run(tmp_path, *argv)
    assert code == 2 and files == []
    assert "santalo-lab: error:" in capsys.readouterr().err


def test_nan_report_gives_exit_three():
    good = VerificationReport("a", {"x": 1.0}, 0.0, 1e-6)
    bad = VerificationReport("b", {"x": math.nan}, 0.0, 1e-6)
    assert cli.exit_code([good]) == 0
    assert cli.exit_code([good, bad]) == 3
    assert cli.exit_code([VerificationReport("c", {}, -1.0, 1e-6)]) == 1


def test_negative_grid_bounds_are_accepted(tmp_path):
    code, files = run(tmp_path, "transform", "--family", "gaussian", "--grid", "-8,8,65")
    assert code == 0
    assert load_single(files)["name"] == "biconjugation"
    conj = list(tmp_path.glob("*.conjugate.csv"))
    assert len(conj) == 1


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["profile", "--family", "random_profile", "--seed", "7", "--family2", "random_profile", "--out", str(d)]) == 0
    fa, fb = sorted(a.iterdir()), sorted(b.iterdir())
    assert [f.name for f in fa] == [f.name for f in fb]
    for x, y in zip(fa, fb):
        assert x.read_bytes() == y.read_bytes()


def test_hash_depends_on_options(tmp_path):
    main(["product", "--family", "laplace", "--out", str(tmp_path)])
    main(["product", "--family", "laplace", "--c", "3", "--out", str(tmp_path)])
    assert len(list(tmp_path.glob("product-laplace-*.json"))) == 2


def test_config_merge_flags_win(tmp_path):
    conf = tmp_path / "run.toml"
    conf.write_text('family = "laplace"\nc = "5"\n')
    out = tmp_path / "out"
    assert main(["product", "--config", str(conf), "--out", str(out)]) == 1
    assert main(["product", "--config", str(conf), "--c", "auto", "--out", str(out)]) == 0
    reps = [json.loads(p.read_text()) for p in out.glob("*.json")]
    assert {r["quantities"]["c"] for r in reps} == {4.0, 5.0}


def test_bad_config_is_invalid(tmp_path, capsys):
    conf = tmp_path / "bad.toml"
    conf.write_text("family = \n")
    assert main(["product", "--config", str(conf), "--out", str(tmp_path)]) == 2


def test_csv_summary(tmp_path):
    run(tmp_path, "weighted", "--family", "trapezoid_profile", "--eps", "0.2", "--family2", "linear_cap_profile")
    rows = list(csv.reader(next(tmp_path.glob("*.csv")).open()))
    assert rows[0] == ["name", "deficit", "passed"]
    assert rows[1][0] == "weighted_product" and rows[1][2] == "true"


def test_custom_csv_family(tmp_path):
    V = ConvexGridFunction.from_callable(np.abs, -30.0, 30.0, 4097)
    path = tmp_path / "v.csv"
    path.write_text(V.to_csv())
    code, files = run(tmp_path, "product", "--family", "custom_csv", "--path", str(path))
    assert code == 0
    assert load_single(files)["quantities"]["product"] == pytest.approx(4.0, abs=1e-4)


def test_uncond_command(tmp_path):
    code, files = run(tmp_path, "uncond", "--family", "unconditional_l1")
    rep = load_single(files)
    assert code == 0 and rep["quantities"]["product"] == pytest.approx(1.0, abs=1e-3)


def test_profile_of_a_potential_family(tmp_path):
    code, files = run(tmp_path, "profile", "--family", "gaussian", "--c", "4")
    assert code == 0
    assert load_single(files)["deficit"] == pytest.approx(math.log(math.pi / 2), abs=1e-4)


def test_family_spec_validation():
    assert FamilySpec("power", None, {"p": 1.0}).validate().category == "potential"
    assert FamilySpec("random_profile").validate().category == "profile"
    assert FamilySpec("unconditional_lp", None, {"p": 4.0}).validate().category == "orthant"
    with pytest.raises(SpecError):
        FamilySpec("power", None, {"p": 0.9}).validate()
    with pytest.raises(SpecError):
        FamilySpec("gaussian", (-1.0, 1.0, 64)).validate()


def test_threads_variable(monkeypatch):
    monkeypatch.setenv("SANTALO_LAB_THREADS", "3")
    assert cli._threads() == 3
    monkeypatch.setenv("SANTALO_LAB_THREADS", "zero")
    with pytest.raises(SpecError):
        cli._threads()
    monkeypatch.delenv("SANTALO_LAB_THREADS")
    assert cli._threads() >= 1


def test_suite_covers_every_verifier():
    names = [name for name, _ in cli.suite_tasks({})]
    prefixes = {n.split(":")[0] for n in names}
    assert {"transform", "product", "basic", "et", "profile", "correlation", "chebyshev", "weighted",
            "transport", "moreau", "uncond"} <= prefixes
    assert len(names) == len(set(names))


@pytest.fixture(scope="module")
def suite_runs(tmp_path_factory):
    out = {}
    mp = pytest.MonkeyPatch()
    for threads in ("1", "3"):
        mp.setenv("SANTALO_LAB_THREADS", threads)
        d = tmp_path_factory.mktemp(f"suite{threads}")
        code = main(["suite", "--seed", "11", "--out", str(d)])
        out[threads] = (code, sorted(d.glob("*.json")))
    mp.undo()
    return out


def test_suite_passes(suite_runs):
    code, files = suite_runs["1"]
    assert code == 0 and len(files) == 1
    reports = json.loads(files[0].read_text())
    assert isinstance(reports, list) and all(r["passed"] for r in reports)
    by_name = {r["name"]: r for r in reports}
    assert by_name["profile:symmetric"]["quantities"]["count"] == 1000
    assert by_name["transport:monotone"]["quantities"]["failures"] == 0


def test_suite_is_thread_count_independent(suite_runs):
    (_, one), (_, three) = suite_runs["1"], suite_runs["3"]
    assert [f.name for f in one] == [f.name for f in three]
    assert one[0].read_bytes() == three[0].read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "santalo_lab", "product", "--family", "uniform_indicator", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
        timeout=300,
    )
    assert proc.returncode == 0, proc.stderr
    assert "wrote" in proc.stdout
