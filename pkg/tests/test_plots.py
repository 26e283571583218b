"""Smoke tests for figure rendering: files exist, are PNGs, and rerender
byte-identically (the CLI promises reproducible artifacts)."""
import numpy as np
import pytest

from ringdid.data_model import first_differences
from ringdid.dgp import DgpSpec, LinearDecay, Uniform, generate, monte_carlo, ring_estimator
from ringdid.plots import curve_figure, mc_figure, rc_ring_figure, ring_figure
from ringdid.ring import RingSpec, ring_estimate_panel, ring_estimate_rc
from ringdid.curve import tau_curve_panel

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@pytest.fixture(scope="module")
def panel_pieces():
    spec = DgpSpec(
        n=400,
        distance_law=Uniform(0.0, 1.5),
        tau=LinearDecay(1.0, 0.75),
        noise_sd=0.5,
        seed=818,
    )
    diffs = first_differences(generate(spec))
    return spec, diffs


def test_curve_figure_renders(tmp_path, panel_pieces):
    _, diffs = panel_pieces
    curve = tau_curve_panel(diffs, 1.5, L=5)
    out = tmp_path / "curve.png"
    curve_figure(curve, out, title="effect by distance")
    assert out.read_bytes()[:8] == PNG_MAGIC


def test_ring_figure_renders(tmp_path, panel_pieces):
    _, diffs = panel_pieces
    rings = RingSpec(0.75, 1.5)
    est = ring_estimate_panel(diffs, rings)
    out = tmp_path / "ring.png"
    ring_figure(diffs, rings, est, out)
    assert out.read_bytes()[:8] == PNG_MAGIC


def test_rc_ring_figure_renders(tmp_path):
    spec = DgpSpec(
        n=600,
        distance_law=Uniform(0.0, 1.5),
        tau=LinearDecay(1.0, 0.75),
        design="rc",
        seed=4,
    )
    est = ring_estimate_rc(generate(spec), RingSpec(0.75, 1.5))
    out = tmp_path / "rc_ring.png"
    rc_ring_figure(est, out)
    assert out.read_bytes()[:8] == PNG_MAGIC


def test_mc_figure_renders(tmp_path, panel_pieces):
    spec, _ = panel_pieces
    report = monte_carlo(spec, ring_estimator(spec, RingSpec(0.75, 1.5)), reps=20)
    out = tmp_path / "mc.png"
    mc_figure(report, "beta1", out)
    assert out.read_bytes()[:8] == PNG_MAGIC


def test_figures_are_byte_stable(tmp_path, panel_pieces):
    _, diffs = panel_pieces
    curve = tau_curve_panel(diffs, 1.5, L=5)
    a = tmp_path / "a.png"
    b = tmp_path / "b.png"
    curve_figure(curve, a)
    curve_figure(curve, b)
    assert a.read_bytes() == b.read_bytes()
