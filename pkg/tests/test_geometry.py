import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from conftest import curvatures, fixed_vectors, t, vectors
from hypee.errors import ContractError, ManifoldError, TangentOverflowError
from hypee.geometry import (
    MAX_TANGENT_NORM,
    check_on_manifold,
    clamped_acos,
    clamped_asin,
    distance_to_origin,
    exp_map_origin,
    expmap0_space,
    geodesic_distance,
    lift,
    log_map_origin,
    lorentz_inner,
    manifold_residual,
    origin,
    scale_then_lift,
    spatial_norm,
    tangent,
)


# ------------------------------------------------------------ lorentz_inner


def test_inner_origin_is_minus_one():
    o = t([1.0, 0.0, 0.0])
    assert float(lorentz_inner(o, o)) == -1.0


def test_inner_hand_computed():
    x, y = t([math.sqrt(2), 1.0]), t([math.sqrt(2), -1.0])
    assert float(lorentz_inner(x, y)) == pytest.approx(-3.0, abs=1e-12)


def test_inner_quarter_curvature_origin():
    o = origin(1, 0.25)
    assert torch.allclose(o, t([2.0, 0.0]))
    assert float(lorentz_inner(o, o)) == pytest.approx(-4.0, abs=1e-12)


def test_inner_dimension_mismatch():
    with pytest.raises(ContractError):
        lorentz_inner(t([1.0, 0.0]), t([1.0, 0.0, 0.0]))


def test_inner_rejects_nan():
    with pytest.raises(ContractError):
        lorentz_inner(t([float("nan"), 0.0]), t([1.0, 0.0]))


@given(fixed_vectors(4), fixed_vectors(4))
def test_inner_symmetric(a, b):
    assert float(lorentz_inner(t(a), t(b))) == float(lorentz_inner(t(b), t(a)))


def test_inner_keepdim_and_batch():
    x = torch.randn(5, 3, 4, dtype=torch.float64)
    assert lorentz_inner(x, x).shape == (5, 3)
    assert lorentz_inner(x, x, keepdim=True).shape == (5, 3, 1)


# ------------------------------------------------------------ lift / origin


def test_lift_zero_is_origin():
    assert torch.equal(lift(torch.zeros(3, dtype=torch.float64)), t([1.0, 0, 0, 0]))


def test_lift_time_values():
    assert float(lift(t([3.0, 4.0]))[0]) == pytest.approx(math.sqrt(26.0), abs=1e-12)
    assert float(lift(t([1.0]), 4.0)[0]) == pytest.approx(math.sqrt(1.25), abs=1e-12)


def test_lift_rejects_non_finite():
    with pytest.raises(ContractError):
        lift(t([float("inf"), 0.0]))


def test_lift_rejects_bad_curvature():
    for c in (0.0, -1.0, float("nan"), float("inf")):
        with pytest.raises(ContractError):
            lift(t([1.0]), c)


@given(vectors(bound=100.0), curvatures)
def test_lift_on_manifold(space, c):
    x = lift(t(space), c)
    assert float(manifold_residual(x, c)) <= 1e-6 * max(1.0, float(x[0]) ** 2)
    check_on_manifold(x, c)
    assert float(x[0]) > 0


def test_check_on_manifold_rejects_off_points():
    with pytest.raises(ManifoldError):
        check_on_manifold(t([2.0, 0.0]))
    with pytest.raises(ManifoldError):
        check_on_manifold(t([-1.0, 0.0]))


# ------------------------------------------------------------ distance


def test_distance_to_self_is_zero():
    x = lift(t([0.3, -1.2, 2.0]))
    assert float(geodesic_distance(x, x)) == 0.0


def test_distance_exp_map_unit_speed():
    v = t([0.0, 0.7 / math.sqrt(2), 0.7 / math.sqrt(2)])
    assert float(geodesic_distance(origin(2), exp_map_origin(v))) == pytest.approx(0.7, abs=1e-12)


def test_distance_matches_acosh_form(rng):
    for c in (0.5, 1.0, 3.0):
        X = lift(t(rng.normal(size=(50, 3))), c)
        Y = lift(t(rng.normal(size=(50, 3))), c)
        ref = torch.acosh(torch.clamp(-c * lorentz_inner(X, Y), min=1.0)) / math.sqrt(c)
        assert torch.allclose(geodesic_distance(X, Y, c), ref, atol=1e-9)


def test_distance_symmetric_random_pairs(rng):
    X = lift(t(rng.normal(size=(100, 4))))
    Y = lift(t(rng.normal(size=(100, 4))))
    assert float((geodesic_distance(X, Y) - geodesic_distance(Y, X)).abs().max()) < 1e-9


def test_distance_rejects_off_manifold():
    with pytest.raises(ManifoldError):
        geodesic_distance(t([3.0, 0.0]), origin(1))


def test_clamp_guard_changes_little():
    # Nearly coincident points: the acosh argument sits just above 1.
    x = lift(t([0.5, 0.5]))
    y = lift(t([0.5, 0.5 + 1e-10]))
    d = float(geodesic_distance(x, y))
    assert 0 <= d < 1e-6


@given(fixed_vectors(3), fixed_vectors(3), fixed_vectors(3), curvatures)
def test_distance_triangle_inequality(a, b, c_, c):
    x, y, z = lift(t(a), c), lift(t(b), c), lift(t(c_), c)
    dxy, dyz, dxz = (float(geodesic_distance(p, q, c)) for p, q in ((x, y), (y, z), (x, z)))
    assert dxz <= dxy + dyz + 1e-8
    assert min(dxy, dyz, dxz) >= 0


def test_distance_to_origin_agrees(rng):
    X = lift(t(rng.normal(size=(20, 3)) * 2), 2.0)
    o = origin(3, 2.0)
    assert torch.allclose(distance_to_origin(X, 2.0), geodesic_distance(o.expand_as(X), X, 2.0), atol=1e-10)


# ------------------------------------------------------------ exp / log


def test_exp_zero_is_origin():
    assert torch.equal(exp_map_origin(torch.zeros(3, dtype=torch.float64)), origin(2))


def test_exp_closed_form():
    x = exp_map_origin(t([0.0, 1.0, 0.0]))
    assert torch.allclose(x, t([math.cosh(1), math.sinh(1), 0.0]), atol=1e-14)
    assert float(x[0] ** 2 - x[1] ** 2) == pytest.approx(1.0, abs=1e-12)


def test_log_closed_form():
    v = log_map_origin(t([math.cosh(2), math.sinh(2)]))
    assert torch.allclose(v, t([0.0, 2.0]), atol=1e-12)


def test_log_origin_is_zero():
    assert torch.equal(log_map_origin(origin(3)), torch.zeros(4, dtype=torch.float64))


def test_exp_requires_zero_time():
    with pytest.raises(ContractError):
        exp_map_origin(t([0.1, 1.0]))


def test_exp_overflow_guard():
    with pytest.raises(TangentOverflowError):
        expmap0_space(t([MAX_TANGENT_NORM + 0.5, 0.0]))
    # just inside the limit is fine
    x = expmap0_space(t([MAX_TANGENT_NORM - 0.5, 0.0]))
    assert bool(torch.isfinite(x).all())


@given(vectors(bound=5.0 / math.sqrt(6)), curvatures)
def test_log_exp_round_trip(space, c):
    v = tangent(t(space))
    back = log_map_origin(exp_map_origin(v, c), c)
    assert float((back - v).abs().max()) <= 1e-7


@given(vectors(bound=20.0), curvatures)
def test_exp_log_round_trip(space, c):
    x = lift(t(space), c)
    back = exp_map_origin(log_map_origin(x, c), c)
    assert float(((back - x).abs() / x.abs().clamp_min(1.0)).max()) <= 1e-7


@given(vectors(bound=2.0), curvatures)
def test_log_norm_is_distance(space, c):
    x = lift(t(space), c)
    v = log_map_origin(x, c)
    assert float(v[0]) == 0.0
    n = float(torch.linalg.vector_norm(v[1:]))
    assert n == pytest.approx(float(geodesic_distance(origin(len(space), c), x, c)), abs=1e-9)


@given(vectors(bound=3.0), curvatures)
def test_exp_unit_speed(space, c):
    v = tangent(t(space))
    d = float(geodesic_distance(origin(len(space), c), exp_map_origin(v, c), c))
    assert d == pytest.approx(float(torch.linalg.vector_norm(v)), abs=1e-9)


def test_spatial_norm_values_and_monotone():
    assert float(spatial_norm(origin(3))) == 0.0
    assert float(spatial_norm(t([math.sqrt(2), 1.0]))) == pytest.approx(1.0)
    u = t([0.6, 0.8])
    ray = torch.stack([expmap0_space(s * u) for s in torch.linspace(0, 6, 200, dtype=torch.float64)])
    norms = spatial_norm(ray)
    assert bool((norms[1:] > norms[:-1]).all())


# ------------------------------------------------------------ scale_then_lift


def test_scale_then_lift_identity_and_composition():
    z = t([0.3, -0.4])
    assert torch.equal(scale_then_lift(z, 1.0), exp_map_origin(tangent(z)))
    assert torch.allclose(scale_then_lift(t([2.0, 0.0]), 0.5), exp_map_origin(t([0.0, 1.0, 0.0])), atol=1e-15)


def test_scale_then_lift_rejects_nonpositive():
    for a in (0.0, -1.0):
        with pytest.raises(ContractError):
            scale_then_lift(t([1.0]), a)


def test_scale_then_lift_alpha_gradient(rng):
    z = t(rng.normal(size=3))
    for a0 in (0.3, 1.0, 1.7):
        alpha = torch.tensor(a0, dtype=torch.float64, requires_grad=True)
        w = t(rng.normal(size=4))
        f = lambda a: float((scale_then_lift(z, a) * w).sum())
        (scale_then_lift(z, alpha) * w).sum().backward()
        h = 1e-5
        fd = (f(torch.tensor(a0 + h, dtype=torch.float64)) - f(torch.tensor(a0 - h, dtype=torch.float64))) / (2 * h)
        g = float(alpha.grad)
        assert abs(g - fd) / max(abs(g), abs(fd), 1e-6) < 1e-4


@given(vectors(bound=3.0), st.floats(0.05, 4.0), curvatures)
def test_scale_then_lift_on_manifold(z, a, c):
    x = scale_then_lift(t(z), a, c)
    check_on_manifold(x, c)


# ------------------------------------------------------------ clamped trig


def test_clamped_trig_gradients_vanish_at_clamp():
    x = torch.tensor([-1.5, -1.0, 0.0, 1.0, 1.5], dtype=torch.float64, requires_grad=True)
    clamped_asin(x).sum().backward()
    assert x.grad.tolist() == [0.0, 0.0, 1.0, 0.0, 0.0]
    x.grad = None
    clamped_acos(x).sum().backward()
    assert x.grad.tolist() == [0.0, 0.0, -1.0, 0.0, 0.0]
    assert clamped_asin(torch.tensor(2.0, dtype=torch.float64)) == pytest.approx(math.pi / 2)
    assert clamped_acos(torch.tensor(-2.0, dtype=torch.float64)) == pytest.approx(math.pi)


def test_pure_and_deterministic(rng):
    X = t(rng.normal(size=(10, 3)))
    assert torch.equal(expmap0_space(X), expmap0_space(X.clone()))
    assert torch.equal(log_map_origin(lift(X)), log_map_origin(lift(X)))
