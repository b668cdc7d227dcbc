import numpy as np
import pytest

from quadlin.detector import (
    TOL_MATCH,
    EigenmatrixError,
    column_check,
    detect,
    proportionality_check,
    quadratic_kernels,
    reconstruct_quadratic,
    run_detection,
    solve_subspace,
    verify_reduction,
)
from quadlin.model import QdeSystem, parse_system
from quadlin.spectral import CandidateEigenmatrix, CandidateSubspace, analyze
from quadlin.synth import synthesize

P11_2D = np.array([[4.0, -4.0], [-4.0, 4.0]])
P22_2D = np.array([[1.0, 2.0], [2.0, 4.0]])
P12_2D = np.array([[2.0, 1.0], [1.0, -4.0]])

P22_3D = np.diag([0.0, 1.0, 0.0])
P13_3D = np.array([[0, 0, 0.5], [0, 0, 0], [0.5, 0, 0]])


def _ratio(B, ref):
    """Scalar c with B = c * ref."""
    c = np.vdot(B, ref) / np.vdot(ref, ref)
    np.testing.assert_allclose(B, c * ref, atol=1e-12)
    return c


def test_kernel_map_matches_elementwise_definition():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((3, 3))
    B = B + B.T
    w = rng.standard_normal(3)
    Q = quadratic_kernels(B, w)
    for i in range(3):
        e = np.eye(3)[i]
        expected = w[i] * B - B @ np.outer(w, e) - np.outer(e, w) @ B
        np.testing.assert_allclose(Q[i], expected, atol=1e-14)


def test_proportionality_planar(planar):
    for B, w2 in [(P11_2D, 0.25), (P22_2D, 1.0), (P12_2D, 0.5)]:
        check = proportionality_check(planar, B)
        assert check.ok
        np.testing.assert_allclose(check.w, [0.0, w2], atol=1e-15)


def test_proportionality_canonical_b_rescales_w(planar):
    cand = [c for c in analyze(planar).candidates if c.label == "P_12"][0]
    c = _ratio(cand.P, P12_2D)
    check = proportionality_check(planar, cand.P)
    np.testing.assert_allclose(check.w * c, [0.0, 0.5], atol=1e-14)


def test_proportionality_cone_p11_fails(cone):
    check = proportionality_check(cone, np.diag([1.0, 0.0, 0.0]))
    assert not check.ok
    # deleted block of A_2 is [[0, 1], [1, 0]], not proportional to [[1, 0], [0, 0]]
    assert 1 in check.failures
    assert check.verdicts[1] == "not proportional"


def test_proportionality_zero_system():
    zero = QdeSystem(np.zeros((2, 2, 2)), np.eye(2))
    check = proportionality_check(zero, np.array([[1.0, 0.5], [0.5, 1.0]]))
    assert check.ok
    np.testing.assert_array_equal(check.w, [0.0, 0.0])


def test_proportionality_combination_and_vanishing_block(cone):
    check = proportionality_check(cone, P22_3D + P13_3D)
    np.testing.assert_allclose(check.w, [7.0, 2.0, -1.0])
    check = proportionality_check(cone, P13_3D)
    assert check.verdicts[0] == "deleted B block vanishes"


def test_column_check_planar_tables(planar):
    bad = column_check(planar, P11_2D, [0.0, 0.25])
    assert not bad.ok and bad.first_failure == 0
    np.testing.assert_allclose(bad.rhs[0], [2.0, -1.0])
    np.testing.assert_allclose(bad.rhs[1], [0.0, -1.0])
    bad = column_check(planar, P22_2D, [0.0, 1.0])
    np.testing.assert_allclose(bad.rhs, [[-4.0, -4.0], [0.0, -4.0]])
    good = column_check(planar, P12_2D, [0.0, 0.5])
    assert good.ok
    np.testing.assert_allclose(good.rhs, [[-1.0, 2.0], [0.0, 2.0]])


@pytest.mark.parametrize("a", [1.0, -0.5, 3.0])
def test_column_check_scalar_inversion(a):
    scalar = QdeSystem([[[a]]], [[0.7]])
    prop = proportionality_check(scalar, np.array([[1.0]]))
    assert prop.verdicts == ["undetermined"]
    col = column_check(scalar, np.array([[1.0]]), prop.w)
    assert col.ok
    assert col.w[0] == pytest.approx(-a)


def _subspaces(system):
    return analyze(system).subspaces


def test_degenerate_subspace_resolves_b(cone):
    sub = [s for s in _subspaces(cone) if s.dim == 2][0]
    reds = solve_subspace(cone, sub, seed=3)
    assert len(reds) == 1
    red = reds[0]
    (c22, c13), *_ = np.linalg.lstsq(np.array([P22_3D.ravel(), P13_3D.ravel()]).T, red.B.ravel(), rcond=None)
    assert c13 / c22 == pytest.approx(1.0, abs=1e-8)
    np.testing.assert_allclose(red.w * c22, [7.0, 2.0, -1.0], atol=1e-8)


def test_planar_singleton_subspace(planar):
    sub = [s for s in _subspaces(planar) if abs(s.lam + 1) < 1e-9][0]
    reds = solve_subspace(planar, sub)
    assert len(reds) == 1
    np.testing.assert_allclose(reds[0].M, [[0.0, 2.0], [1.0, 1.0]], atol=1e-12)


def test_failing_singleton_is_empty(cone):
    sub = [s for s in _subspaces(cone) if abs(s.lam + 2) < 1e-9][0]
    diagnostics = []
    assert solve_subspace(cone, sub, diagnostics=diagnostics) == []


def test_detect_planar(planar):
    (red,) = detect(planar)
    assert red.lam == pytest.approx(-1.0)
    np.testing.assert_allclose(red.M, [[0, 2], [1, 1]], atol=1e-12)
    c = _ratio(red.B, P12_2D)
    np.testing.assert_allclose(red.w * c, [0.0, 0.5], atol=1e-12)
    rebuilt = reconstruct_quadratic(red.B, red.lam, red.w, red.M)
    np.testing.assert_allclose(rebuilt.A, planar.A, atol=1e-12)
    np.testing.assert_allclose(rebuilt.V, planar.V, atol=1e-12)


def test_detect_cone(cone):
    (red,) = detect(cone)
    assert red.lam == pytest.approx(4.0)
    np.testing.assert_allclose(red.B, [[0, 0, 0.5], [0, 1, 0], [0.5, 0, 0]], atol=1e-12)
    np.testing.assert_allclose(red.w, [7, 2, -1], atol=1e-12)
    np.testing.assert_allclose(red.M, np.diag([1.0, -2.0, -5.0]), atol=1e-12)


def test_perturbed_planar_is_not_solvable(perturbed_planar):
    assert detect(perturbed_planar) == []
    # independent exhaustive check: the linear part is unchanged, so the only
    # eigenmatrices are the three hand-derived ones; none admits any w
    A = perturbed_planar.A
    for B in (P11_2D, P22_2D, P12_2D):
        G = np.array([quadratic_kernels(B, e).ravel() for e in np.eye(2)]).T
        w, *_ = np.linalg.lstsq(G, A.ravel(), rcond=None)
        assert np.linalg.norm(G @ w - A.ravel()) > 1e-3


def test_reconstruct_cone(cone):
    B = np.array([[0, 0, 0.5], [0, 1, 0], [0.5, 0, 0]])
    rebuilt = reconstruct_quadratic(B, 4.0, [7.0, 2.0, -1.0], np.diag([1.0, -2.0, -5.0]))
    np.testing.assert_array_equal(rebuilt.A, cone.A)
    np.testing.assert_array_equal(rebuilt.V, cone.V)


def test_reconstruct_zero_w_is_linear():
    B = np.array([[0, 0, 0.5], [0, 1, 0], [0.5, 0, 0]])
    rebuilt = reconstruct_quadratic(B, 4.0, np.zeros(3), np.diag([1.0, -2.0, -5.0]))
    assert rebuilt.is_linear


def test_reconstruct_rejects_non_eigenmatrix():
    with pytest.raises(EigenmatrixError):
        reconstruct_quadratic(np.eye(2), 1.0, [1.0, 0.0], np.array([[0.0, 1.0], [0.0, 0.0]]))


@pytest.mark.parametrize("seed", range(1, 31))
def test_round_trip_random(seed):
    dim = 1 + seed % 6
    system, truth = synthesize(seed, dim)
    reds = detect(system)
    assert reds
    for red in reds:
        rebuilt = reconstruct_quadratic(red.B, red.lam, red.w, red.M)
        scale = 1 + np.linalg.norm(system.A)
        assert np.linalg.norm(rebuilt.A - system.A) <= 1e-8 * scale
        assert np.linalg.norm(rebuilt.V - system.V) <= 1e-8 * (1 + np.linalg.norm(system.V))
    assert any(abs(r.lam - truth["lam"]) < 1e-8 * (1 + abs(truth["lam"])) for r in reds)


def test_scalar_synthesis_is_inversion():
    system, _ = synthesize(5, 1)
    (red,) = detect(system)
    np.testing.assert_allclose(red.B, [[1.0]])
    assert red.w[0] == pytest.approx(-system.A[0, 0, 0])


@pytest.mark.parametrize("c", [-3.0, 0.1, 7.5])
def test_scaled_candidates_give_same_reconstruction(planar, c):
    cand = [x for x in analyze(planar).candidates if x.label == "P_12"][0]
    scaled = CandidateSubspace(cand.lam, (CandidateEigenmatrix(c * cand.P, cand.lam, cand.source),))
    (ref,) = solve_subspace(planar, CandidateSubspace(cand.lam, (cand,)))
    (red,) = solve_subspace(planar, scaled)
    np.testing.assert_allclose(red.B, c * ref.B, atol=1e-12)
    a = reconstruct_quadratic(ref.B, ref.lam, ref.w, ref.M)
    b = reconstruct_quadratic(red.B, red.lam, red.w, red.M)
    np.testing.assert_allclose(a.A, b.A, atol=1e-12)


@pytest.mark.parametrize("seed", range(40))
def test_random_dense_systems_never_report_unverified(seed):
    rng = np.random.default_rng(seed)
    n = 2 + seed % 3
    system = QdeSystem.from_kernels(rng.standard_normal((n, n, n)), rng.standard_normal((n, n)))
    reds = detect(system)
    for red in reds:
        assert verify_reduction(system, red.B, red.lam, red.w) is not None
    assert reds == []


def test_complex_spectrum_round_trip():
    V = np.array([[1.0, 2.0, 0.0], [-2.0, 1.0, 0.0], [0.0, 0.0, -0.5]])
    vals, vecs = np.linalg.eig(V.T)
    k = int(np.argmax(vals.imag))
    r = vecs[:, k]
    B = np.real(0.5 * (np.outer(r, r.conj()) + np.outer(r.conj(), r)))
    lam = 2 * vals[k].real
    system = reconstruct_quadratic(B, lam, [0.5, -1.0, 2.0], V - lam * np.eye(3))
    reds = detect(system)
    assert len(reds) == 1 and reds[0].lam == pytest.approx(lam)
    rebuilt = reconstruct_quadratic(reds[0].B, reds[0].lam, reds[0].w, reds[0].M)
    np.testing.assert_allclose(rebuilt.A, system.A, atol=1e-10)


def test_defective_linear_part_uses_operator_route():
    V = np.array([[0.5, 1.0], [0.0, 0.5]])
    B = np.array([[0.0, 0.0], [0.0, 1.0]])
    system = reconstruct_quadratic(B, 1.0, [0.3, -1.2], V - np.eye(2))
    result = run_detection(system)
    assert result.analysis.route == "operator"
    (red,) = result.reductions
    np.testing.assert_allclose(red.B, B, atol=1e-10)
    np.testing.assert_allclose(red.w, [0.3, -1.2], atol=1e-10)


def test_detection_report_shape(cone):
    doc = run_detection(cone).to_dict()
    assert doc["solvable"] is True
    assert len(doc["reductions"]) == 1
    assert set(doc["reductions"][0]) == {"B", "lambda", "w", "M", "residuals"}
    stages = {c["label"]: c["stage"] for c in doc["candidates"]}
    for label in ("P_11", "P_33", "P_12", "P_23"):
        assert stages[label] == "proportionality"
    assert stages["span(P_22, P_13)"] == "accepted"


def test_detection_tolerance_is_relative(planar):
    red = detect(planar)[0]
    for value in red.residuals.values():
        assert value <= TOL_MATCH
