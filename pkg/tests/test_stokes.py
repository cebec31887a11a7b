# tests/test_stokes.py

import numpy as np
import pytest
from numpy.testing import assert_allclose

from backend.entity import HermitianTwo, PolarizationDescriptor, StokesSample
from backend.errors import InvalidAxisError, ZeroIntensityError
from backend.quaternion import I, Quaternion
from backend.stokes import (
    compose,
    degree_of_polarization,
    describe,
    eig2_hermitian,
    hermitian_to_quat,
    in_cone,
    in_cone_array,
    polarization_components,
    project_cone,
    project_cone_array,
    project_nonneg,
    quat_array_to_stokes,
    quat_to_hermitian,
    quaternion_to_stokes,
    reconstruct,
    stokes_array_to_quat,
    stokes_to_coherency,
    stokes_to_quaternion,
)


def _to_complex(h: HermitianTwo) -> np.ndarray:
    c = h.c_re + 1j * h.c_im
    return np.array([[h.a, c], [np.conj(c), h.b]])


def _vec(v: np.ndarray) -> np.ndarray:
    return v[:, 0] + 1j * v[:, 1]


def _dist(p: Quaternion, q: Quaternion) -> float:
    return (p - q).norm()


# --- 嵌入 ---

def test_embedding_component_order():
    q = stokes_to_quaternion(StokesSample(1.0, 0.2, 0.3, 0.4))
    assert q == Quaternion(1.0, 0.4, 0.2, 0.3)
    assert quaternion_to_stokes(q) == StokesSample(1.0, 0.2, 0.3, 0.4)


def test_array_embedding_matches_scalar(rng):
    stokes = rng.standard_normal((5, 4))
    quats = stokes_array_to_quat(stokes)
    for row_s, row_q in zip(stokes, quats):
        assert Quaternion.from_array(row_q) == stokes_to_quaternion(StokesSample(*row_s))
    assert_allclose(quat_array_to_stokes(quats), stokes)


def test_degree_of_polarization():
    assert degree_of_polarization(StokesSample(2.0, 0.0, 1.0, 0.0)) == pytest.approx(0.5)
    assert degree_of_polarization(StokesSample(1.0, 0.6, 0.0, 0.8)) == pytest.approx(1.0)
    with pytest.raises(ZeroIntensityError):
        degree_of_polarization(StokesSample(0.0))


def test_cone_membership():
    assert in_cone(Quaternion(1.0, 0.6, 0.0, 0.8))
    assert in_cone(Quaternion(1.0))
    assert in_cone(Quaternion())
    assert not in_cone(Quaternion(1.0, 0.8, 0.8, 0.0))
    assert not in_cone(Quaternion(-1.0))
    arr = np.array([[1.0, 0.6, 0.0, 0.8], [1.0, 0.8, 0.8, 0.0], [-1.0, 0.0, 0.0, 0.0]])
    assert in_cone_array(arr).tolist() == [True, False, False]


def test_admissible_stokes_are_cone_members(rng, make_cone):
    for row in make_cone(rng, (200,)):
        s = quaternion_to_stokes(Quaternion.from_array(row))
        assert s.is_admissible()
        assert in_cone(stokes_to_quaternion(s))


# --- 偏振描述 ---

def test_describe_compose_round_trip(rng, make_cone):
    for row in make_cone(rng, (50,)):
        q = Quaternion.from_array(row)
        desc = describe(q)
        assert 0.0 <= desc.dop <= 1.0 + 1e-12
        assert desc.axis.is_pure() and desc.axis.is_unit()
        assert compose(desc).isclose(q, tol=1e-12)


def test_describe_unpolarized_uses_i_axis():
    desc = describe(Quaternion(2.0))
    assert desc == PolarizationDescriptor(2.0, 0.0, I)
    with pytest.raises(ZeroIntensityError):
        describe(Quaternion(0.0, 0.1, 0.0, 0.0))


def test_compose_rejects_non_unit_axis():
    with pytest.raises(InvalidAxisError):
        compose(PolarizationDescriptor(1.0, 0.5, Quaternion.pure(2.0, 0.0, 0.0)))
    with pytest.raises(InvalidAxisError):
        compose(PolarizationDescriptor(1.0, 0.5, Quaternion(0.5, 0.5, 0.5, 0.5)))


def test_polarization_components_matches_describe(rng, make_cone):
    arr = make_cone(rng, (4, 3))
    intensity, dop, axis = polarization_components(arr)
    for m in range(4):
        for p in range(3):
            desc = describe(Quaternion.from_array(arr[m, p]))
            assert intensity[m, p] == pytest.approx(desc.intensity)
            assert dop[m, p] == pytest.approx(desc.dop)
            assert_allclose(axis[m, p], desc.axis.vector, atol=1e-12)


# --- Hermitian 映射 ---

def test_hermitian_map_is_bijective(rng):
    for _ in range(50):
        q = Quaternion.from_array(rng.standard_normal(4))
        assert hermitian_to_quat(quat_to_hermitian(q)).isclose(q, tol=1e-12)


def test_coherency_matches_hermitian_map(rng):
    for _ in range(20):
        s = StokesSample(*rng.standard_normal(4))
        direct = stokes_to_coherency(s)
        via_quat = quat_to_hermitian(stokes_to_quaternion(s))
        assert_allclose(
            [direct.a, direct.b, direct.c_re, direct.c_im],
            [via_quat.a, via_quat.b, via_quat.c_re, via_quat.c_im],
            atol=1e-15,
        )


def test_cone_membership_equals_psd(rng):
    for _ in range(500):
        q = Quaternion.from_array(rng.standard_normal(4))
        assert in_cone(q) == quat_to_hermitian(q).is_psd()


def test_eig2_matches_numpy(rng):
    for _ in range(100):
        h = quat_to_hermitian(Quaternion.from_array(rng.standard_normal(4)))
        eig = eig2_hermitian(h)
        expected = np.linalg.eigvalsh(_to_complex(h))
        assert eig.eta1 >= eig.eta2
        assert_allclose([eig.eta2, eig.eta1], expected, atol=1e-12)

        J = _to_complex(h)
        v1, v2 = _vec(eig.v1), _vec(eig.v2)
        assert_allclose(J @ v1, eig.eta1 * v1, atol=1e-12)
        assert_allclose(J @ v2, eig.eta2 * v2, atol=1e-12)
        assert abs(np.vdot(v1, v2)) < 1e-12
        assert np.linalg.norm(v1) == pytest.approx(1.0)


def test_eig2_degenerate_returns_standard_basis():
    eig = eig2_hermitian(HermitianTwo(0.7, 0.7))
    assert eig.eta1 == eig.eta2 == 0.7
    assert_allclose(_vec(eig.v1), [1.0, 0.0])
    assert_allclose(_vec(eig.v2), [0.0, 1.0])


def test_reconstruct_inverts_decomposition(rng):
    for _ in range(50):
        h = quat_to_hermitian(Quaternion.from_array(rng.standard_normal(4)))
        back = reconstruct(eig2_hermitian(h))
        assert_allclose([back.a, back.b, back.c_re, back.c_im], [h.a, h.b, h.c_re, h.c_im], atol=1e-12)


# --- 投影 ---

def test_projection_is_identity_on_cone(rng, make_cone):
    for row in make_cone(rng, (1000,)):
        q = Quaternion.from_array(row)
        assert project_cone(q) == q


def test_projection_lands_in_cone_and_is_idempotent(rng):
    for _ in range(500):
        q = Quaternion.from_array(rng.standard_normal(4) * 2.0)
        p = project_cone(q)
        assert in_cone(p)
        assert project_cone(p).isclose(p, tol=1e-9)


def test_projection_of_negative_cone_is_zero():
    assert project_cone(Quaternion(-1.0, 0.2, 0.0, 0.0)).isclose(Quaternion(), tol=1e-15)


def test_projection_is_nonexpansive(rng):
    for _ in range(1000):
        q1 = Quaternion.from_array(rng.standard_normal(4))
        q2 = Quaternion.from_array(rng.standard_normal(4))
        assert _dist(project_cone(q1), project_cone(q2)) <= _dist(q1, q2) + 1e-12


def test_projection_is_nearest_cone_point(rng, make_cone):
    samples = np.concatenate(
        [
            make_cone(rng, (5000,), intensity=(0.0, 3.0)),
            make_cone(rng, (5000,), dop=1.0, intensity=(0.0, 3.0)),
        ]
    )
    for _ in range(30):
        q = Quaternion.from_array(rng.standard_normal(4) * 1.5)
        p = project_cone(q)
        best = np.min(np.linalg.norm(samples - q.as_array(), axis=1))
        assert best >= _dist(p, q) - 1e-9


def test_cone_is_convex(rng, make_cone):
    a = make_cone(rng, (2000,), intensity=(0.0, 3.0))
    b = make_cone(rng, (2000,), dop=1.0, intensity=(0.0, 3.0))
    lam = rng.uniform(0.0, 1.0, size=(2000, 1))
    assert np.all(in_cone_array(lam * a + (1.0 - lam) * b))
    # 边界上的两点
    for q1, q2 in [(Quaternion(1.0, 1.0), Quaternion(2.0, 0.0, 0.0, -2.0)), (Quaternion(1.0, 0.0, 1.0), Quaternion())]:
        for t in (0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0):
            assert in_cone(t * q1 + (1.0 - t) * q2)


def test_vectorized_projection_matches_scalar(rng):
    arr = rng.standard_normal((40, 3, 4))
    projected = project_cone_array(arr)
    for m in range(40):
        for p in range(3):
            expected = project_cone(Quaternion.from_array(arr[m, p])).as_array()
            assert_allclose(projected[m, p], expected, atol=1e-12)


def test_project_nonneg():
    assert_allclose(project_nonneg(np.array([[-1.0, 0.5], [0.0, -0.0]])), [[0.0, 0.5], [0.0, 0.0]])
