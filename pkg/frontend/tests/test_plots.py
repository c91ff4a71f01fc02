import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mracplots import PlotSpec, TraceError, read_trace, render
from mracplots.cli import main

MRACSIM = shutil.which("mracsim") is not None or True  # module invocation below


def _mracsim(*args):
    return subprocess.run(
        [sys.executable, "-m", "mracsim.cli", *args],
        capture_output=True, text=True,
    )


@pytest.fixture(scope="module")
def compare_dir(tmp_path_factory):
    """Real compare output produced through the primary CLI."""
    out = tmp_path_factory.mktemp("cmp")
    cfg = out / "scenario.toml"
    cfg.write_text("""
name = "plotdemo"
mode = "acc"
law.type = "rls"
law.gamma = [50.0, 30.0, 40.0]
law.beta = 0.95
law.p0 = 100.0
sim.dt = 1e-3
sim.t_final = 8.0
sim.noise_sigma = 0.05
vehicle.a = 0.01
vehicle.b = 1.5
refmodel.am = 2.0
refmodel.k = 0.5
lead.kind = "constant"
lead.value = 20.0
""")
    proc = _mracsim(
        "compare", "--config", str(cfg), "--laws", "gradient,rls",
        "--seeds", "1,2", "--out", str(out / "runs"),
    )
    assert proc.returncode == 0, proc.stderr
    return out / "runs"


@pytest.fixture(scope="module")
def analysis_trace(tmp_path_factory):
    out = tmp_path_factory.mktemp("lyap")
    proc = _mracsim(
        "run", "--config", "acc_lyapunov", "--out", str(out),
    )
    assert proc.returncode == 0, proc.stderr
    return out / "trace.csv"


def test_read_trace_metadata(compare_dir):
    tr = read_trace(compare_dir / "trace_rls_s1.csv")
    assert tr.metadata["law"] == "rls"
    assert tr.mode == "acc"
    assert "v_r" in tr.frame.columns


def test_two_law_overlay_two_panels(compare_dir, tmp_path):
    out = tmp_path / "overlay.png"
    spec = PlotSpec(
        [compare_dir / "trace_gradient_s1.csv", compare_dir / "trace_rls_s1.csv"],
        ["speed_tracking", "spacing_error"],
        out,
        title="gradient vs rls",
    )
    assert render(spec) == out
    assert out.stat().st_size > 10_000


def test_render_idempotent_bytes(compare_dir, tmp_path):
    args = ([compare_dir / "trace_rls_s1.csv"], ["speed_tracking"],)
    a = render(PlotSpec(*args, tmp_path / "a.png"))
    b = render(PlotSpec(*args, tmp_path / "b.png"))
    assert a.read_bytes() == b.read_bytes()


def test_lyapunov_panel_monotone(analysis_trace, tmp_path):
    tr = read_trace(analysis_trace)
    V = tr.frame["V"].to_numpy()
    assert np.isfinite(V).all()
    # visual monotonicity: the curve's maximum is its first sample
    assert np.max(V) <= V[0] + 1e-8 * max(1.0, V[0])
    out = render(PlotSpec([analysis_trace], ["lyapunov"], tmp_path / "v.png"))
    assert out.exists()


def test_lyapunov_panel_rejects_realizable_trace(compare_dir, tmp_path):
    with pytest.raises(TraceError, match="analysis-mode"):
        render(PlotSpec(
            [compare_dir / "trace_rls_s1.csv"], ["lyapunov"], tmp_path / "x.png"
        ))


def test_missing_column_named(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("# mode=acc\nt,v\n0.0,1.0\n1.0,2.0\n")
    with pytest.raises(TraceError, match="v_m"):
        render(PlotSpec([bad], ["speed_tracking"], tmp_path / "x.png"))


def test_empty_csv_rejected(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(TraceError):
        read_trace(empty)


def test_unknown_panel_rejected(tmp_path):
    with pytest.raises(TraceError, match="unknown panels"):
        PlotSpec(["x.csv"], ["speed_tracking", "bogus"], tmp_path / "x.png")


def test_cli_end_to_end(compare_dir, tmp_path):
    out = tmp_path / "fig.png"
    code = main([
        "--trace", str(compare_dir / "trace_gradient_s1.csv"),
        "--trace", str(compare_dir / "trace_rls_s1.csv"),
        "--panels", "speed_tracking,spacing_error,gains,covariance_diag",
        "--out", str(out),
    ])
    assert code == 0 and out.exists()


def test_cli_error_exit_code(tmp_path):
    code = main([
        "--trace", str(tmp_path / "missing.csv"),
        "--panels", "speed_tracking",
        "--out", str(tmp_path / "x.png"),
    ])
    assert code == 2


def test_generic_mode_panels(tmp_path):
    proc = _mracsim("run", "--config", "mrac_first_order_matched",
                    "--out", str(tmp_path))
    assert proc.returncode == 0, proc.stderr
    out = render(PlotSpec(
        [tmp_path / "trace.csv"],
        ["speed_tracking", "control_input", "gains", "covariance_diag"],
        tmp_path / "g.png",
    ))
    assert out.exists()
