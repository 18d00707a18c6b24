import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alasso.asymptotics import PhiVector, Regime, check_Vphi_kkt, minimize_Vphi
from alasso.errors import NotAMemberError, ValidationError, ZeroDirectionError
from alasso.extreal import INF
from alasso.mset import (Dilation, FullSpace, MSetSpec, boundary_ray, constraint_values,
                         construct_phi, contains, feasible_basis, ls_ellipse, project_cloud,
                         sample_boundary, scale_set, unit_directions)

C2 = np.array([[1.0, -0.7], [-0.7, 1.0]])
C3 = np.array([[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 1.0]])


def ray_radius(regime, d, scale=1.0):
    """Closed form along a ray: t^2 d_j (Cd)_j <= scale * lambda0_j for every j."""
    q = d * (regime.C @ d)
    ts = [math.sqrt(scale * regime.lambda0[j] / q[j]) for j in range(regime.p) if q[j] > 0]
    return min(ts)


def test_one_dimensional_set_is_unit_interval():
    spec = MSetSpec(Regime.uniform(np.array([[1.0]])))
    assert boundary_ray(spec, [1.0])[0] == pytest.approx(1.0, abs=1e-9)
    assert boundary_ray(spec, [-3.0])[0] == pytest.approx(-1.0, abs=1e-9)
    cloud = sample_boundary(spec, 10)
    np.testing.assert_allclose(np.sort(cloud.points[:, 0]), [-1.0, 1.0], atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(angle=st.floats(0, 2 * math.pi), lam2=st.floats(0.05, 1.0))
def test_boundary_ray_matches_closed_form(angle, lam2):
    reg = Regime(C2, np.array([1.0, lam2]), (0.0, 0.0))
    d = np.array([math.cos(angle), math.sin(angle)])
    m = boundary_ray(MSetSpec(reg), d)
    assert np.linalg.norm(m) == pytest.approx(ray_radius(reg, d), rel=1e-9, abs=1e-12)


def test_boundary_ray_grid_scan_2d():
    reg = Regime.uniform(C2)
    spec = MSetSpec(reg)
    ts = np.linspace(0, 3, 300_001)
    for angle in np.linspace(0, 2 * np.pi, 13)[:-1]:
        d = np.array([np.cos(angle), np.sin(angle)])
        pts = ts[:, None] * d
        Cm = pts @ C2
        inside = np.all(pts * Cm <= 1.0, axis=1)
        t_grid = ts[inside].max()
        assert np.linalg.norm(boundary_ray(spec, d)) == pytest.approx(t_grid, abs=2e-5)


@settings(max_examples=50, deadline=None)
@given(angle=st.floats(0, 2 * math.pi), d=st.floats(0.01, 4.0))
def test_scaling_identity(angle, d):
    spec = MSetSpec(Regime.uniform(C2))
    v = [math.cos(angle), math.sin(angle)]
    np.testing.assert_allclose(boundary_ray(scale_set(spec, d), v),
                               math.sqrt(d) * boundary_ray(spec, v), atol=1e-9)


def test_symmetry_and_star_shape():
    spec = MSetSpec(Regime.uniform(C3))
    for d in unit_directions(3, 40):
        m = boundary_ray(spec, d)
        np.testing.assert_allclose(boundary_ray(spec, -d), -m, atol=1e-10)
        for s in (0.0, 0.3, 0.999):
            assert contains(spec, s * m)
            assert contains(spec, -s * m)
        assert not contains(spec, 1.01 * m)


def test_unpenalized_coordinate_flattens_the_set():
    reg = Regime(C3, np.array([0.0, 1.0, 1.0]), (INF, 0.0, 0.0))
    spec = MSetSpec(reg)
    cloud = sample_boundary(spec, 60)
    assert np.abs((cloud.points @ C3)[:, 0]).max() <= 1e-9
    assert np.all(cloud.margin <= 1e-9)
    B = feasible_basis(reg)
    assert B.shape == (3, 2)
    with pytest.raises(ZeroDirectionError):
        boundary_ray(spec, [0.0, 0.0, 0.0])


def test_direction_orthogonal_to_feasible_subspace_is_rejected():
    reg = Regime(np.eye(2), np.array([0.0, 1.0]), (INF, 0.0))
    with pytest.raises(ZeroDirectionError):
        boundary_ray(MSetSpec(reg), [1.0, 0.0])


def test_cloud_description_and_csv():
    spec = MSetSpec(Regime.uniform(C2))
    cloud = sample_boundary(spec, 16)
    assert len(cloud) == 16
    assert np.all(np.abs(cloud.margin) <= 1e-9)
    np.testing.assert_allclose(cloud.color, 1.0, atol=1e-9)
    for m in cloud.points:
        assert contains(spec, m, cloud.tolerance)
        assert not contains(spec, (1 + 10 * cloud.tolerance) * m, cloud.tolerance)
    header = cloud.to_csv().split("\n")[0]
    assert header == "m_1,m_2,binding,margin,max_mCm"


@pytest.mark.parametrize("reg", [
    Regime.uniform(C2),
    Regime.uniform(C3),
    Regime(C3, np.array([0.0, 1.0, 1.0]), (INF, 0.0, 0.0)),
    Regime(C2, np.array([0.0, 1.0]), (1.0, 0.0)),
])
def test_construct_phi_round_trip(reg):
    spec = MSetSpec(reg)
    rng = np.random.default_rng(0)
    cloud = sample_boundary(spec, 30, seed=1)
    members = [s * m for m in cloud.points for s in (1.0, rng.uniform(0, 1))]
    for m in members:
        z = rng.standard_normal(reg.p)
        phi = construct_phi(spec, m, z)
        got = minimize_Vphi(reg, phi, z)
        np.testing.assert_allclose(got, m, atol=1e-7)
        assert check_Vphi_kkt(reg, phi, z, got)


def test_construct_phi_rejects_non_members_and_scaled_sets():
    spec = MSetSpec(Regime.uniform(C2))
    with pytest.raises(NotAMemberError):
        construct_phi(spec, [3.0, 3.0], [0.0, 0.0])
    with pytest.raises(ValidationError):
        construct_phi(scale_set(spec, 2.0), [0.1, 0.1], [0.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(phi=st.lists(st.one_of(st.just(0.0), st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3)),
                   min_size=2, max_size=2),
       z=st.lists(st.floats(-3, 3, allow_subnormal=False), min_size=2, max_size=2))
def test_minimizers_lie_in_the_set(phi, z):
    reg = Regime.uniform(C2)
    m = minimize_Vphi(reg, PhiVector(tuple(phi)), z)
    assert contains(MSetSpec(reg), m, 1e-8)


def test_ls_ellipse_constant_and_boundary():
    assert ls_ellipse(np.eye(1), 1.0, 0.05).k == pytest.approx(3.8415, abs=1e-4)
    ell = ls_ellipse(C2, 2.0, 0.05)
    assert ell.k == pytest.approx(4.0 * 5.991464547, rel=1e-8)
    pts = ell.boundary(50)
    np.testing.assert_allclose(np.einsum("ij,jk,ik->i", pts, C2, pts), ell.k, rtol=1e-10)
    assert ell.contains([0.0, 0.0]) and not ell.contains(1.01 * pts[0])
    with pytest.raises(ValidationError):
        ls_ellipse(C2, 1.0, 1.5)


def test_projection():
    cloud = sample_boundary(MSetSpec(Regime.uniform(C3)), 20)
    proj = project_cloud(cloud, 0)
    np.testing.assert_array_equal(proj, cloud.points[:, 1:])
    with pytest.raises(ValidationError):
        project_cloud(sample_boundary(MSetSpec(Regime.uniform(C2)), 8), 0)


def test_dilation_and_full_space():
    spec = MSetSpec(Regime.uniform(np.array([[1.0]])))
    dil = Dilation(spec, 0.1)
    assert dil.distance([1.5]) == pytest.approx(0.5, abs=1e-6)
    assert dil.contains([1.05]) and not dil.contains([1.2])
    assert FullSpace().contains([1e9])
    spec2 = MSetSpec(Regime.uniform(C2))
    m = boundary_ray(spec2, [1.0, 1.0])
    outward = m + 0.05 * m / np.linalg.norm(m)
    assert Dilation(spec2, 0.1).contains(outward)
    assert not Dilation(spec2, 0.01).contains(outward)


def test_constraint_values_and_json():
    spec = MSetSpec(Regime.uniform(C2), 0.81)
    Cm, q = constraint_values(spec, [1.0, 0.0])
    np.testing.assert_allclose(Cm, [1.0, -0.7])
    np.testing.assert_allclose(q, [1.0, 0.0])
    back = MSetSpec.from_json(spec.to_json())
    assert back.scale_d == 0.81
    np.testing.assert_array_equal(back.bounds(), [0.81, 0.81])


def test_unit_directions_are_unit():
    for k in (1, 2, 3, 5):
        u = unit_directions(k, 25, seed=3)
        np.testing.assert_allclose(np.linalg.norm(u, axis=1), 1.0)
