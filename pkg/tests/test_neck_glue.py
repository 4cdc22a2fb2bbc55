import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from asdglue.cohom_one import wplus_reduced
from asdglue.errors import ComplementarityError, HypothesisError, UnmeasurableError, ValidationError
from asdglue.neck_glue import (
    alpha, attach_bodies, body_deformations, build_transversal, cutoff_metric, default_delta, eh_body,
    half_cylinder_body, kernel_bases, min_sv_probe, neck_h0, residual_report, residual_slopes, weight_profile,
)

from conftest import body_grid

SWEEP = [3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0]


# ---------------------------------------------------------------- cut-offs


def test_alpha_plateaus():
    assert_allclose(alpha(np.array([-3.0, -1e-9, 0.0])), 1.0)
    assert_allclose(alpha(np.array([1.0, 1.5, 7.0])), 0.0)
    assert_allclose(alpha(0.5), 0.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95))
def test_alpha_derivatives(s):
    h = 1e-5
    assert_allclose(alpha(s, 1), (alpha(s + h) - alpha(s - h)) / (2 * h), atol=1e-7)
    assert_allclose(alpha(s, 2), (alpha(s + h, 1) - alpha(s - h, 1)) / (2 * h), atol=1e-6)


def test_cutoff_metric_regions(eh):
    l = 5.0
    g = cutoff_metric(eh, l)
    t = g.t
    inner = t <= l - 1
    outer = t >= l
    assert_allclose(g.q[inner], eh.profile.q[inner], rtol=1e-14)
    assert_allclose(g.a[:, inner], eh.profile.a[:, inner], rtol=1e-14)
    assert_allclose(g.q[outer], 1.0, atol=1e-15)
    assert_allclose(g.a[:, outer], np.broadcast_to(eh.ce.limit_h0[:, None], g.a[:, outer].shape), atol=1e-15)


def test_cutoff_metric_validation(eh):
    with pytest.raises(ValidationError):
        cutoff_metric(eh, 1.5)
    with pytest.raises(ValidationError):
        cutoff_metric(eh, 40.0)


# ------------------------------------------------------------------ gluing


def test_complementarity_errors(eh, cyl1):
    with pytest.raises(ComplementarityError):
        attach_bodies(eh, cyl1, 5.0)
    # two Eguchi-Hanson ends cannot be matched inside the diagonal ansatz
    with pytest.raises(ComplementarityError):
        attach_bodies(eh, eh, 5.0)


def test_attach_validation(eh, cyl2):
    with pytest.raises(ValidationError):
        attach_bodies(eh, cyl2, 5.03)
    with pytest.raises(ValidationError):
        attach_bodies(eh, cyl2, 5.0, delta=-0.1)
    fine = half_cylinder_body(body_grid(0.05), 2)
    with pytest.raises(ValidationError):
        attach_bodies(eh, fine, 5.0)


def test_glued_grid_and_orientation(eh, cyl2):
    cfg = attach_bodies(eh, cyl2, 5.0)
    assert cfg.metric.n == 101
    assert_allclose(np.diff(cfg.t), 0.1, rtol=1e-12)
    assert_allclose(cfg.tau[[0, 50, -1]], [-5.0, 0.0, 5.0], atol=1e-12)
    assert cfg.metric.orientation == eh.profile.orientation == -1
    assert_allclose(cfg.delta, 2.0 / 3.0)


def test_symmetric_pair_is_symmetric(s4):
    g = attach_bodies(s4, s4, 5.0).metric
    assert_allclose(g.q, g.q[::-1], rtol=1e-13)
    assert_allclose(g.a, g.a[:, ::-1], rtol=1e-13)
    assert_allclose(g.da, -g.da[:, ::-1], atol=1e-13)


def test_default_delta():
    assert_allclose(default_delta(p=3.0), 2.0 / 3.0)
    assert_allclose(default_delta(p=2.5), 0.4)


def test_residual_supported_in_cutoff_region(eh, cyl2):
    l = 5.0
    cfg = attach_bodies(eh, cyl2, l)
    pt = np.abs(wplus_reduced(cfg.metric).W).max(axis=0)
    away = (cfg.t < l - 1 - 0.05) | (cfg.t > l + 0.05)
    assert pt[away].max() < 1e-9
    assert pt.max() > 1e-11


def test_weight_profile(eh, cyl2):
    cfg = attach_bodies(eh, cyl2, 6.0)
    wp = weight_profile(cfg)
    assert_allclose(wp.w[[0, -1]], 1.0, atol=1e-12)
    assert wp.max_relative_error < 1e-10
    assert_allclose(wp.peak, np.exp(cfg.delta * 6.0))
    assert np.all(wp.w >= 1.0 - 1e-12)


# --------------------------------------------------------------- residuals


def test_eh_cylinder_residual_slopes(eh, cyl2):
    for delta in (1 / 3, 2 / 3):
        un, we = residual_slopes(eh, cyl2, SWEEP, delta)
        assert abs(un + 4.0) < 0.1
        assert abs(we + (4.0 - delta)) < 0.1


def test_conformally_flat_pair_unmeasurable(s4):
    rep = residual_report(s4, s4, SWEEP, 2 / 3)
    assert not rep["measurable"]
    assert max(r["residual_unweighted"] for r in rep["rows"]) < 1e-12
    with pytest.raises(UnmeasurableError):
        residual_slopes(s4, s4, SWEEP, 2 / 3)


def test_residual_sweep_validation(eh, cyl2):
    with pytest.raises(ValidationError):
        residual_report(eh, cyl2, [3.0, 4.0, 5.0])
    with pytest.raises(ValidationError):
        residual_report(eh, cyl2, [3.0, 5.0, 4.0, 6.0])


# ----------------------------------------------------------- kernel bases


@pytest.mark.parametrize("name", ["eh", "cyl2", "s4"])
def test_body_deformations_unobstructed(name, request):
    b = request.getfixturevalue(name)
    r = body_deformations(b, 2.0 / 3.0, -1)
    assert (r.index, r.dim_ker, r.dim_coker) == (-1, 0, 1)
    assert (b.J, b.K) == (0, 1)


def test_neck_h0():
    H0 = neck_h0()
    assert H0.shape == (1, 3)
    assert_allclose(np.abs(H0[0]), 1.0 / np.sqrt(3.0), rtol=1e-10)


def test_obstructed_weight_raises():
    t = body_grid()
    e, c = eh_body(t), half_cylinder_body(t, 2)
    cfg = attach_bodies(e, c, 5.0, delta=2.5)
    with pytest.raises(HypothesisError):
        kernel_bases(cfg)
    assert e.J > 0


def test_transversal_validation(eh, cyl2):
    cfg = attach_bodies(eh, cyl2, 3.0)
    bases = kernel_bases(cfg)
    assert build_transversal(cfg, bases).kinds == ["H0"]
    with pytest.raises(ValidationError):
        build_transversal(cfg, bases, L=2.5)
    with pytest.raises(ValidationError):
        build_transversal(cfg, bases, eps=3.0)


def test_sigma_min_probe(eh, cyl2):
    rows = min_sv_probe(eh, cyl2, [4.0, 6.0, 8.0], 2 / 3)
    re = np.array([r["sigma_min_restricted"] for r in rows])
    un = np.array([r["sigma_min_unrestricted"] for r in rows])
    assert re.max() / re.min() < 1.2
    assert np.all(np.diff(un) < 0)
    assert un[0] / un[-1] > 10
    assert all(r["constraints"] == 1 for r in rows)
