import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from plots import FigureSpec, SchemaError, from_json, render

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"

SPECS = {
    "theta_trace": dict(kind="theta_trace",
                        inputs=[str(DATA / "theta_run.csv"), str(DATA / "theta_aggregate.csv")],
                        theta_true=0.5),
    "area_overlay": dict(kind="area_overlay", inputs=[str(DATA / "area_processes.csv")],
                         reference_slope=-1.0),
    "lag_diag": dict(kind="lag_diag", inputs=[str(DATA / "lag_diagnostics.csv")]),
    "chaos_curve": dict(kind="chaos_curve", inputs=[str(DATA / "chaos.csv")]),
}


def image_diff(a_path, b_path):
    import matplotlib.image as mpimg
    a = mpimg.imread(a_path)
    b = mpimg.imread(b_path)
    if a.shape != b.shape:
        return 1.0
    return float(np.abs(a.astype(float) - b.astype(float)).mean())


@pytest.mark.parametrize("kind", sorted(SPECS))
def test_renders_without_error(kind, tmp_path):
    out = render(from_json(SPECS[kind]), tmp_path / f"{kind}.png")
    assert out.exists() and out.stat().st_size > 1000


@pytest.mark.parametrize("kind", sorted(SPECS))
def test_golden_image_diff(kind, tmp_path):
    golden = GOLDEN / f"{kind}.png"
    assert golden.exists(), "golden image missing; regenerate with tests/make_golden.py"
    fresh = render(from_json(SPECS[kind]), tmp_path / f"{kind}.png")
    # mean per-pixel gap in [0,1] units; generous enough for backend drift,
    # tight enough to catch layout or data changes
    assert image_diff(fresh, golden) < 0.01


def test_rendering_is_read_only(tmp_path):
    before = {p: p.read_bytes() for p in DATA.iterdir()}
    render(from_json(SPECS["lag_diag"]), tmp_path / "x.png")
    for p, blob in before.items():
        assert p.read_bytes() == blob


def test_schema_mismatch_names_columns(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(SchemaError, match="missing columns"):
        render(FigureSpec(kind="lag_diag", inputs=(str(bad),)), tmp_path / "x.png")


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="unknown figure kind"):
        FigureSpec(kind="pie", inputs=())


def test_missing_input_rejected():
    with pytest.raises(FileNotFoundError):
        FigureSpec(kind="lag_diag", inputs=("/nonexistent.csv",))


def test_cli_render(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(SPECS["theta_trace"]))
    out = tmp_path / "fig.png"
    code = subprocess.run([sys.executable, "-m", "plots.cli", "render",
                           "--spec", str(spec), "--out", str(out)]).returncode
    assert code == 0 and out.exists()


def test_cli_bad_spec_exit_code(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "nope", "inputs": []}))
    code = subprocess.run([sys.executable, "-m", "plots.cli", "render",
                           "--spec", str(spec), "--out", str(tmp_path / "f.png")]).returncode
    assert code == 2
