import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisovd.domain import Rect
from anisovd.metric import (
    Ellipse,
    EllipseSide,
    MetricField,
    OutOfDomainError,
    Spd2,
    anisotropy_bound,
    blend_to_identity,
    builtin_metric,
    distance,
    ellipse_contains,
    eval_metric,
    load_metric_file,
    save_metric_file,
    sqrt_pair,
)

UNIT = Rect(0, 0, 1, 1)


def random_field(seed, nx=5, ny=4, rect=UNIT) -> MetricField:
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(ny, nx, 2, 2))
    Q = A @ np.swapaxes(A, -1, -2) + 0.5 * np.eye(2)
    nodes = np.stack([Q[..., 0, 0], Q[..., 0, 1], Q[..., 1, 1]], axis=-1)
    return MetricField.from_nodes(rect, nodes)


def test_identity_everywhere():
    f = MetricField.identity()
    assert eval_metric(f, (123.0, -7.0)) == Spd2(1.0, 0.0, 1.0)


def test_linear_midpoint():
    nodes = np.array([[[1, 0, 1], [4, 0, 1]], [[1, 0, 1], [4, 0, 1]]], dtype=float)
    f = MetricField.from_nodes(UNIT, nodes)
    q = eval_metric(f, (0.5, 0.3))
    assert q.q11 == pytest.approx(2.5) and q.q12 == 0 and q.q22 == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(4))
def test_cell_center_is_mean_of_corners(seed):
    f = random_field(seed)
    nx, ny = f.shape
    for j in range(ny - 1):
        for i in range(nx - 1):
            p = ((i + 0.5) / (nx - 1), (j + 0.5) / (ny - 1))
            want = f.nodes[j:j + 2, i:i + 2].reshape(4, 3).mean(axis=0)
            np.testing.assert_allclose(np.array(f.eval_many(*p)).ravel(), want, rtol=1e-12)


def test_out_of_domain_and_extension():
    f = random_field(0)
    with pytest.raises(OutOfDomainError):
        eval_metric(f, (1.5, 0.5))
    ext = f.extended()
    assert eval_metric(ext, (1.5, 0.5)) == eval_metric(f, (1.0, 0.5))
    assert eval_metric(ext, (-3.0, 9.0)) == eval_metric(f, (0.0, 1.0))


def test_rejects_indefinite_nodes():
    nodes = np.ones((2, 2, 3))  # q11 q22 - q12^2 = 0
    with pytest.raises(ValueError):
        MetricField.from_nodes(UNIT, nodes)


@pytest.mark.parametrize(
    "field, v, p, d",
    [(MetricField.identity(), (0, 0), (3, 4), 5.0), (builtin_metric("diag:4,1", Rect(-1, -1, 2, 2)), (0, 0), (1, 0), 2.0)],
)
def test_distance_examples(field, v, p, d):
    assert distance(field, v, p) == pytest.approx(d)


@settings(max_examples=50)
@given(st.integers(0, 50), st.tuples(st.floats(0.05, 0.95), st.floats(0.05, 0.95)),
       st.tuples(st.floats(0.05, 0.95), st.floats(0.05, 0.95)))
def test_midpoint_is_equidistant(seed, v, w):
    f = random_field(seed)
    m = ((v[0] + w[0]) / 2, (v[1] + w[1]) / 2)
    assert distance(f, v, m) == pytest.approx(distance(f, w, m), rel=1e-12, abs=1e-15)


def test_sqrt_pair_examples():
    sp = sqrt_pair(Spd2(1, 0, 1))
    np.testing.assert_allclose(sp.M, np.eye(2))
    np.testing.assert_allclose(sp.Mprime, np.eye(2))
    sp = sqrt_pair(Spd2(4, 0, 1))
    np.testing.assert_allclose(sp.M, np.diag([2.0, 1.0]), atol=1e-15)
    np.testing.assert_allclose(sp.Mprime, np.diag([2.0, 1.0]), atol=1e-15)
    assert sp.lambda2 / sp.lambda1 == pytest.approx(4.0)


@given(st.integers(0, 10_000))
def test_sqrt_pair_multiplies_back(seed):
    A = np.random.default_rng(seed).normal(size=(2, 2))
    Q = A @ A.T + 1e-3 * np.eye(2)
    sp = sqrt_pair(Spd2.from_matrix(Q))
    assert np.abs(sp.M @ sp.M - Q).max() < 1e-12 * max(1.0, np.abs(Q).max())
    # Mprime is M scaled so that its smaller eigenvalue is 1
    np.testing.assert_allclose(sp.Mprime, sp.M / math.sqrt(sp.lambda1), rtol=1e-9, atol=1e-12)


def test_anisotropy_bound_constant_fields():
    assert anisotropy_bound(MetricField.identity()) == pytest.approx(1.0, rel=1e-6)
    assert anisotropy_bound(builtin_metric("diag:4,1", UNIT)) == pytest.approx(2.0, rel=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_anisotropy_bound_matches_node_scan(seed):
    f = random_field(seed)
    Q = np.stack([np.stack([f.nodes[..., 0], f.nodes[..., 1]], -1), np.stack([f.nodes[..., 1], f.nodes[..., 2]], -1)], -2)
    ev = np.linalg.eigvalsh(Q)
    want = math.sqrt((ev[..., 1] / ev[..., 0]).max())
    assert anisotropy_bound(f) == pytest.approx(want, rel=1e-6)
    assert anisotropy_bound(f) >= want


def test_blend_examples():
    rect = Rect(-3, -3, 3, 3)
    f = builtin_metric("diag:4,1", rect, 61, 61)
    g = blend_to_identity(f, 1.0, "unit")
    # beyond rho + 1 the field is the identity
    np.testing.assert_allclose(np.ravel(g.eval_many(2.5, 0.0)), (1.0, 0.0, 1.0), atol=1e-12)
    # ramp midpoint: r = 1.5 lies on a node (spacing 0.1)
    np.testing.assert_allclose(np.ravel(g.eval_many(1.5, 0.0)), (2.5, 0.0, 1.0), atol=1e-12)
    np.testing.assert_allclose(np.ravel(g.eval_many(0.5, 0.0)), (4.0, 0.0, 1.0), atol=1e-12)


def test_blend_identity_field_unchanged():
    f = MetricField.identity()
    assert blend_to_identity(f, 0.3) is f


@pytest.mark.parametrize("q, side", [((0.5, 0), EllipseSide.INSIDE), ((1, 0), EllipseSide.BOUNDARY),
                                     ((2, 0), EllipseSide.OUTSIDE)])
def test_ellipse_examples(q, side):
    assert ellipse_contains(Ellipse((0.0, 0.0), Spd2(1, 0, 1), 1.0), q) is side


@pytest.mark.parametrize("spec", ["identity", "diag:4,1", "swirl:0.5", "swirl:1,9", "sine:1,3", "pinch:0.5,0.5,0.3,0.1,0.2"])
def test_builtins_are_spd(spec):
    f = builtin_metric(spec, Rect(-1, -1, 2, 2), 33, 33)
    X, Y = np.meshgrid(np.linspace(-1, 2, 41), np.linspace(-1, 2, 41))
    q11, q12, q22 = f.eval_many(X, Y)
    assert np.all(q11 > 0) and np.all(q11 * q22 - q12 * q12 > 0)


def test_pinch_is_identity_outside_its_disc():
    f = builtin_metric("pinch:0.5,0.5,0,0.01,0.2", UNIT, 101, 101)
    np.testing.assert_allclose(np.ravel(f.eval_many(0.1, 0.1)), (1, 0, 1))
    q = np.ravel(f.eval_many(0.5, 0.5))
    np.testing.assert_allclose(q, (0.01, 0, 1), atol=1e-12)


def test_unknown_builtin():
    with pytest.raises(ValueError):
        builtin_metric("wobble:3", UNIT)


def test_metric_file_roundtrip(tmp_path):
    f = random_field(3, rect=Rect(-1, 0, 2, 1.5))
    save_metric_file(f, tmp_path / "m.txt")
    g = load_metric_file(tmp_path / "m.txt")
    assert g.rect == f.rect
    np.testing.assert_array_equal(g.nodes, f.nodes)
