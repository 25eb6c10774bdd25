import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcflab import tensions
from mcflab.tensions import (
    SurfaceTensionMatrix,
    embed_l2,
    junction_frame,
    project_absent,
    projected_point,
    sector_angle,
    validate_admissible,
)

import oracles


def test_equal_tension_q_matrix():
    stm = SurfaceTensionMatrix.equal(3)
    Q = stm.q_matrix()
    assert np.array_equal(Q, [[2.0, 1.0], [1.0, 2.0]])
    # eigenvalues 1 and 3 (oracles.equal_tension_q_eigenvalues)
    eig = np.sort(np.linalg.eigvalsh(Q))
    assert np.allclose(eig, oracles.equal_tension_q_eigenvalues(), atol=1e-14)


def test_equal_tensions_admissible():
    for P in (2, 3, 4, 7):
        assert validate_admissible(SurfaceTensionMatrix.equal(P)).ok


def test_triangle_violation_names_witness():
    stm = SurfaceTensionMatrix.from_triple(2.0, 1.0, 1.0)
    report = validate_admissible(stm)
    assert not report.ok
    assert any("(1,2,3)" in v for v in report.violations)


def test_positivity_violation():
    report = validate_admissible([[0.0, 0.0], [0.0, 0.0]])
    assert not report.ok
    assert any("positivity" in v for v in report.violations)


def test_asymmetric_rejected():
    report = validate_admissible([[0.0, 1.0], [2.0, 0.0]])
    assert not report.ok
    assert any("symmetric" in v for v in report.violations)


def test_nonsquare_raises():
    with pytest.raises(ValueError):
        validate_admissible(np.ones((2, 3)))


def test_nonfinite_raises():
    with pytest.raises(ValueError):
        validate_admissible([[0.0, np.nan], [np.nan, 0.0]])


def test_embed_two_phases():
    emb = embed_l2([[0.0, 2.0], [2.0, 0.0]])
    assert emb.points.shape == (2, 1)
    assert abs(np.linalg.norm(emb.point(1) - emb.point(2)) - 2.0) < 1e-14


def test_embed_equilateral_triangle():
    emb = embed_l2(SurfaceTensionMatrix.equal(3))
    dm = emb.distance_matrix()
    off = dm[~np.eye(3, dtype=bool)]
    assert np.max(np.abs(off - 1.0)) < 1e-12
    assert np.allclose(emb.point(3), 0.0)


def test_embed_regular_tetrahedron():
    emb = embed_l2(SurfaceTensionMatrix.equal(4))
    dm = emb.distance_matrix()
    off = dm[~np.eye(4, dtype=bool)]
    assert np.max(np.abs(off - 1.0)) < 1e-12


def test_embed_rejects_inadmissible():
    with pytest.raises(ValueError, match="not admissible"):
        embed_l2(SurfaceTensionMatrix.from_triple(2.0, 1.0, 1.0))


def test_sector_angles_equal_tensions():
    stm = SurfaceTensionMatrix.equal(3)
    for (i, j, k) in [(1, 2, 3), (2, 3, 1), (3, 1, 2)]:
        assert abs(sector_angle(stm, i, j, k) - 2.0 * np.pi / 3.0) < 1e-14


def test_junction_frame_equal_tensions():
    stm = SurfaceTensionMatrix.equal(3)
    fr = junction_frame(stm, (1, 2, 3))
    assert abs(fr.tangent_angle(1, 2) - 0.0) < 1e-14
    assert abs(fr.tangent_angle(2, 3) - 2.0 * np.pi / 3.0) < 1e-14
    assert abs(fr.tangent_angle(3, 1) - 4.0 * np.pi / 3.0) < 1e-14
    # oracle closure_residual on the same angles gives ~4e-16
    assert fr.force_residual(stm) < 1e-12


def test_junction_frame_unequal_tensions_closes():
    stm = SurfaceTensionMatrix.from_triple(1.0, 1.0, 1.2)
    fr = junction_frame(stm, (1, 2, 3))
    assert abs(sum(fr.theta.values()) - 2.0 * np.pi) < 1e-12
    assert fr.force_residual(stm) <= 1e-12
    angles = {p: fr.tangent_angle(*p) for p in fr.cyclic_pairs()}
    assert oracles.closure_residual(stm.sigma, angles) <= 1e-12


def test_reversed_pair_tangent_is_opposite():
    fr = junction_frame(SurfaceTensionMatrix.equal(3), (1, 2, 3))
    assert np.allclose(fr.tangent(2, 1), -fr.tangent(1, 2), atol=1e-15)


def test_normal_is_left_of_tangent():
    fr = junction_frame(SurfaceTensionMatrix.equal(3), (1, 2, 3))
    t = fr.tangent(1, 2)
    n = fr.normal(1, 2)
    # cross product t x n = +1 for a left-pointing normal
    assert abs(t[0] * n[1] - t[1] * n[0] - 1.0) < 1e-14


def test_rotation_table_identities():
    stm = SurfaceTensionMatrix.from_triple(1.0, 1.1, 0.9)
    fr = junction_frame(stm, (1, 2, 3))
    for a in (1, 2, 3):
        assert np.allclose(fr.rotation(a, a), np.eye(2), atol=1e-14)
        for b in (1, 2, 3):
            assert np.allclose(fr.rotation(a, b) @ fr.rotation(b, a),
                               np.eye(2), atol=1e-14)
    prod = fr.rotation(1, 2) @ fr.rotation(2, 3) @ fr.rotation(3, 1)
    assert np.allclose(prod, np.eye(2), atol=1e-14)


def test_rotation_maps_frames():
    stm = SurfaceTensionMatrix.from_triple(1.0, 1.1, 0.9)
    fr = junction_frame(stm, (1, 2, 3))
    R = fr.rotation(1, 2)
    assert np.allclose(R @ fr.tangent(2, 3), fr.tangent(1, 2), atol=1e-14)
    assert np.allclose(R @ fr.normal(2, 3), fr.normal(1, 2), atol=1e-14)


def test_junction_frame_rejects_repeated_phase():
    with pytest.raises(ValueError):
        junction_frame(SurfaceTensionMatrix.equal(3), (1, 1, 2))


def test_project_absent_present_phase_is_identity():
    emb = embed_l2(SurfaceTensionMatrix.equal(4))
    assert project_absent(emb, (1, 2, 3), 2) == (0.0, 1.0, 0.0)


def test_project_absent_tetrahedron_centroid():
    # Regular unit tetrahedron: the orthogonal projection of the apex
    # onto a face is the face centroid, at distance 1/sqrt(3) from each
    # vertex (oracles.tetrahedron_face_distance).
    emb = embed_l2(SurfaceTensionMatrix.equal(4))
    lam = project_absent(emb, (1, 2, 3), 4)
    assert np.allclose(lam, (1.0 / 3.0,) * 3, atol=1e-12)
    q = projected_point(emb, (1, 2, 3), 4)
    for a in (1, 2, 3):
        d = np.linalg.norm(q - emb.point(a))
        assert abs(d - oracles.tetrahedron_face_distance()) < 1e-12
        # strictly shorter than the original interface distance 1
        assert d < 1.0
    # projection residual: q - point(4) is orthogonal to the face plane
    r = q - emb.point(4)
    for a, b in [(2, 1), (3, 1)]:
        e = emb.point(a) - emb.point(b)
        assert abs(np.dot(r, e)) <= 1e-12


def test_project_absent_degenerate_triple():
    # collinear "present" points
    emb = tensions.Embedding(np.array([
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [2.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
    ]))
    with pytest.raises(ValueError, match="degenerate"):
        project_absent(emb, (1, 2, 3), 4)


def test_embedding_csv_round_trip():
    emb = embed_l2(SurfaceTensionMatrix.equal(3))
    text = tensions.embedding_to_csv(emb)
    lines = text.strip().split("\n")
    assert lines[0] == "phase,x1,x2"
    pts = np.array([[float(v) for v in ln.split(",")[1:]] for ln in lines[1:]])
    assert np.array_equal(pts, emb.points)


@st.composite
def admissible_from_points(draw):
    """Random tension matrices built as distance matrices of points in
    general position, which are admissible by construction."""
    P = draw(st.integers(min_value=2, max_value=5))
    coords = draw(st.lists(
        st.lists(st.floats(min_value=-2.0, max_value=2.0,
                           allow_nan=False, allow_infinity=False),
                 min_size=P - 1, max_size=P - 1),
        min_size=P, max_size=P))
    pts = np.asarray(coords)
    d = pts[:, None, :] - pts[None, :, :]
    dm = np.sqrt(np.sum(d * d, axis=2))
    off = dm[~np.eye(P, dtype=bool)]
    # keep points in general position: well-separated, nondegenerate
    if off.size == 0 or np.min(off) < 0.3:
        return None
    if P >= 3:
        Q = (dm[P - 1, :P - 1, None] ** 2 + dm[P - 1, None, :P - 1] ** 2
             - dm[:P - 1, :P - 1] ** 2)
        if np.min(np.linalg.eigvalsh(Q)) < 1e-6:
            return None
    return dm


@given(admissible_from_points())
@settings(max_examples=60, deadline=None)
def test_point_distance_matrices_admissible_and_embeddable(dm):
    if dm is None:
        return
    report = validate_admissible(dm)
    assert report.ok, report.violations
    emb = embed_l2(dm)
    scale = max(np.max(dm), 1.0)
    assert np.max(np.abs(emb.distance_matrix() - dm)) <= 1e-10 * scale


@given(admissible_from_points(), st.randoms(use_true_random=False))
@settings(max_examples=40, deadline=None)
def test_admissibility_invariant_under_relabeling(dm, rng):
    if dm is None:
        return
    P = dm.shape[0]
    perm = list(range(P))
    rng.shuffle(perm)
    permuted = dm[np.ix_(perm, perm)]
    assert validate_admissible(permuted).ok == validate_admissible(dm).ok
