import json
import math

import pandas as pd
import pytest

from comink.app.cli import main
from comink.app.functional import (
    BodyDocument,
    ConeDocument,
    MeasureDocument,
    SolutionDocument,
    get_config,
    read_document,
    write_document,
)
from comink.coconvex.cfull import build

SQRT2 = math.sqrt(2.0)


@pytest.fixture
def files(tmp_path, quadrant, two_atom_phi):
    paths = {
        "cone": tmp_path / "cone.json",
        "octant": tmp_path / "octant.json",
        "measure": tmp_path / "measure.json",
        "body": tmp_path / "body.json",
        "cut": tmp_path / "cut.json",
        "deeper": tmp_path / "deeper.json",
    }
    write_document(ConeDocument.from_cone(quadrant), paths["cone"])
    write_document(ConeDocument(dim=3, generators=[[1, 0, 0], [0, 1, 0], [0, 0, 1]]), paths["octant"])
    write_document(MeasureDocument.from_measure(two_atom_phi), paths["measure"])
    write_document(BodyDocument.from_cfull(build(quadrant, two_atom_phi.points, [-0.84, -0.84])), paths["body"])
    diagonal = [-1.0 / SQRT2, -1.0 / SQRT2]
    paths["cut"].write_text(json.dumps({"atoms": [{"u": diagonal, "h": -1.0}]}))
    paths["deeper"].write_text(json.dumps({"atoms": [{"u": diagonal, "h": -1.1}]}))
    return {key: str(value) for key, value in paths.items()}


def run(capsys, *argv):
    code = main(["--log-level", "WARNING", *argv])
    return code, capsys.readouterr().out


def test_solve_two_atoms(capsys, tmp_path, files):
    out = tmp_path / "solution.json"
    code, _ = run(capsys, "solve", "--cone", files["cone"], "--measure", files["measure"], "--out", str(out))
    assert code == 0
    solution = read_document(out, SolutionDocument)
    assert solution.converged
    assert [atom.h for atom in solution.atoms] == pytest.approx([-0.84, -0.84], abs=1e-8)
    for atom in solution.atoms:
        assert atom.achieved_mass == pytest.approx(atom.target_mass, abs=1e-9)
    assert solution.coconvex_volume == pytest.approx(0.84, abs=1e-8)


def test_solve_is_deterministic(capsys, tmp_path, files):
    outputs = []
    for name in ("first.json", "second.json"):
        out = tmp_path / name
        code, _ = run(
            capsys, "solve", "--cone", files["cone"], "--measure", files["measure"], "--out", str(out), "--seed", "7"
        )
        assert code == 0
        outputs.append(out.read_text())
    assert outputs[0] == outputs[1]


def test_solve_without_convergence(capsys, tmp_path, files):
    out = tmp_path / "solution.json"
    code, _ = run(
        capsys, "solve", "--cone", files["cone"], "--measure", files["measure"], "--out", str(out), "--max-iter", "0"
    )
    assert code == 3
    assert not read_document(out, SolutionDocument).converged


def test_atom_outside_omega(capsys, tmp_path, files):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"atoms": [{"u": [1.0, 0.0], "mass": 1.0}]}))
    code, _ = run(capsys, "solve", "--cone", files["cone"], "--measure", str(bad), "--out", str(tmp_path / "x.json"))
    assert code == 2


def test_invalid_documents(capsys, tmp_path, files):
    broken = tmp_path / "broken.json"
    broken.write_text('{"atoms": [{"u": [0.0, -1.0]}]}')
    code, _ = run(capsys, "lp-dist", str(broken), files["measure"])
    assert code == 2
    code, _ = run(capsys, "lp-dist", str(tmp_path / "missing.json"), files["measure"])
    assert code == 2


def test_sam(capsys, tmp_path, files):
    out = tmp_path / "sam.json"
    code, _ = run(capsys, "sam", "--cone", files["cone"], "--body", files["body"], "--out", str(out))
    assert code == 0
    masses = [atom.mass for atom in read_document(out, MeasureDocument).atoms]
    assert masses == pytest.approx([1.0, 1.0], abs=1e-12)


def test_lp_dist(capsys, tmp_path):
    first, second = tmp_path / "mu.json", tmp_path / "nu.json"
    angle = math.pi + 2.0 * math.asin(0.1)
    first.write_text(json.dumps({"atoms": [{"u": [-1.0, 0.0], "mass": 0.5}]}))
    second.write_text(json.dumps({"atoms": [{"u": [math.cos(angle), math.sin(angle)], "mass": 0.5}]}))
    code, out = run(capsys, "lp-dist", str(first), str(second))
    assert code == 0
    assert float(out.strip()) == pytest.approx(0.2, abs=1e-12)


def test_hausdorff(capsys, files):
    code, out = run(capsys, "hausdorff", "--cone", files["cone"], files["cut"], files["deeper"])
    assert code == 0
    assert float(out.strip()) == pytest.approx(0.1, abs=1e-12)


def test_hausdorff_cone_mismatch(capsys, files):
    code, _ = run(capsys, "hausdorff", "--cone", files["octant"], files["body"], files["body"])
    assert code == 2


def test_volume(capsys, files):
    code, out = run(capsys, "volume", "--cone", files["cone"], "--body", files["cut"], "--method", "both")
    assert code == 0
    lines = dict(line.split() for line in out.strip().splitlines())
    assert float(lines["integral"]) == pytest.approx(1.0, abs=1e-9)
    assert float(lines["direct"]) == pytest.approx(1.0, abs=1e-9)


def test_bounds(capsys, files):
    code, out = run(capsys, "bounds", "--cone", files["cone"], "--body", files["body"], "--bound", "2")
    assert code == 0
    report = json.loads(out)
    assert report["c1"] == pytest.approx(4.0 / math.pi, abs=1e-12)
    assert report["a"] == pytest.approx(0.6, abs=1e-12)
    assert report["all_checks_pass"] is True

    code, _ = run(capsys, "bounds", "--cone", files["cone"], "--body", files["body"], "--bound", "1")
    assert code == 2


def test_exhaust(capsys, tmp_path, files):
    out = tmp_path / "stages.csv"
    code, _ = run(
        capsys, "exhaust", "--cone", files["cone"], "--measure", files["measure"], "--margins", "0.7,0.5", "--out", str(out)
    )
    assert code == 0
    frame = pd.read_csv(out)
    assert frame["atoms"].tolist() == [0, 2]
    assert frame["volume_bound_ok"].all()

    code, _ = run(capsys, "exhaust", "--cone", files["cone"], "--measure", files["measure"], "--margins", "0.1,0.5")
    assert code == 2


def test_orthant_series(capsys):
    code, out = run(capsys, "orthant-series", "--n", "1")
    assert code == 0
    values = dict(line.split() for line in out.strip().splitlines())
    assert float(values["paper_series"]) == pytest.approx(0.88388, abs=1e-5)
    assert values["slantless_series"] == values["paper_series"]
    assert float(values["exact_series"]) == pytest.approx(1.25 / SQRT2 * math.sqrt(1.28125), abs=1e-9)
    assert float(values["exact_series"]) == pytest.approx(1.00050, abs=2e-5)
    assert float(values["discrepancy"]) == pytest.approx(1.00050 - 0.88388, abs=2e-5)


def test_blowup_and_profile(capsys, tmp_path, files):
    measure = tmp_path / "blowup.json"
    code, _ = run(capsys, "blowup", "--cone", files["cone"], "--count", "20", "--out", str(measure))
    assert code == 0
    assert len(read_document(measure, MeasureDocument).atoms) == 20

    code, out = run(capsys, "necessary-profile", "--cone", files["cone"], "--measure", str(measure), "--decades", "6")
    assert code == 0
    assert json.loads(out)["unbounded_suspect"] is True

    table = tmp_path / "profile.csv"
    code, out = run(
        capsys, "necessary-profile", "--cone", files["cone"], "--measure", files["measure"], "--out", str(table)
    )
    assert code == 0
    assert out.strip() == "unbounded_suspect False"
    assert list(pd.read_csv(table).columns) == ["delta", "value"]


def test_blowup_rejects_count(capsys, tmp_path, files):
    code, _ = run(capsys, "blowup", "--cone", files["cone"], "--count", "61", "--out", str(tmp_path / "x.json"))
    assert code == 2


def test_stability(capsys, tmp_path, files):
    out = tmp_path / "stability.csv"
    code, stdout = run(
        capsys,
        "stability",
        "--cone",
        files["cone"],
        "--measure",
        files["measure"],
        "--jitter",
        "0.01",
        "--trials",
        "10",
        "--rungs",
        "2",
        "--seed",
        "1",
        "--out",
        str(out),
    )
    assert code == 0
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["trial", "jitter", "lp", "dh", "ratio"]
    assert len(frame) == 20
    lines = stdout.strip().splitlines()
    assert lines[0].startswith("c_hat ")
    assert lines[1].startswith("slope ")


def test_config_errors(capsys, tmp_path, files):
    broken = tmp_path / "broken.yaml"
    broken.write_text("solver: [unclosed\n")
    code, _ = run(capsys, "--config", str(broken), "orthant-series", "--n", "1")
    assert code == 2
    code, _ = run(capsys, "--config", str(tmp_path / "missing.yaml"), "orthant-series", "--n", "1")
    assert code == 2


def test_config_overrides_solver(capsys, tmp_path, files):
    config = tmp_path / "comink.yaml"
    config.write_text("solver:\n  max_iter: 0\nlogging:\n  level: WARNING\n  logfile: False\n")
    assert get_config(config)["solver"]["max_iter"] == 0
    code, _ = run(
        capsys, "--config", str(config), "solve", "--cone", files["cone"], "--measure", files["measure"],
        "--out", str(tmp_path / "solution.json"),
    )
    assert code == 3


def test_default_config_loads():
    config = get_config()
    assert {"solver", "stability", "logging"} <= set(config)
