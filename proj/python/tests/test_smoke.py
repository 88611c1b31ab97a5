import math

import numpy as np
import pytest

import gammalab as gl


def test_two_point_curvature_and_gamma():
    tp = gl.build_two_point(1.0)
    assert len(tp) == 2
    assert gl.curvature(tp)["global"] == pytest.approx(2.0, abs=1e-12)
    f = np.array([0.0, 1.0])
    assert gl.gamma(tp, f) == pytest.approx([0.5, 0.5])
    assert gl.cheeger_energy(tp, f) == pytest.approx(0.25)


def test_heat_kernel_matches_spectral_heat():
    ou = gl.build_ou_chain(60, 5.0)
    cache = gl.SpectralCache(ou)
    f = np.sin(np.linspace(-3, 3, 60))
    kernel = cache.heat_kernel(0.4)
    assert np.allclose(kernel @ f, cache.heat(f, 0.4), atol=1e-10)
    assert cache.spectral_gap > 0


def test_gaussian_oracle_and_profile():
    mass, per = gl.gaussian_interval_oracle("[-1,1]")
    assert mass == pytest.approx(math.erf(1 / math.sqrt(2)), abs=1e-14)
    assert per == pytest.approx(2 * math.exp(-0.5) / math.sqrt(2 * math.pi), abs=1e-14)
    assert gl.isoperimetric_profile(0.5) == pytest.approx(1 / math.sqrt(2 * math.pi))


def test_bobkov_global_two_point_is_nonpositive():
    tp = gl.build_two_point(1.0)
    report = gl.bobkov_global(tp, np.array([0.1, 0.9]), 2.0)
    assert report["worst_margin"] <= 1e-12
    assert gl.two_point_bobkov_margin(0.0, 1.0) < 0


def test_invalid_triple_raises():
    with pytest.raises(gl.Error):
        gl.MarkovTriple([0.5, 0.5], [gl.Edge(0, 1, -1.0, 1.0)])


def test_run_experiment_summary():
    config = "format 1\n[space]\nmodel two_point\nrho 1\n[check curvature]\nexpect 2\n"
    summary = gl.run_experiment(config, seed=3)
    assert summary["status"] == "pass"
    assert summary["seed"] == 3
    assert summary["checks"][0]["name"] == "curvature"


def test_parse_error_reports_location():
    with pytest.raises(gl.ParseError, match=r":3"):
        gl.run_experiment("format 1\n[space]\nbogus 1\n")
