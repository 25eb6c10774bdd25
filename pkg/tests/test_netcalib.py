"""Global gluing: partition of unity, extended phase fields, blended
velocity, phase weights, and the advection/coercivity diagnostics."""

import csv

import numpy as np
import pytest

import oracles
from mcflab import scenes
from mcflab.localfields import b_twophase
from mcflab.netcalib import (PartitionRadiusError, blended_alpha,
                             build_calibration, build_partition,
                             build_weights, export_fields_csv,
                             interface_distance, measure_coercivity,
                             partition_advection_residual, theta_cutoff,
                             theta_wide, vartheta,
                             weights_advection_residual, zeta_junction,
                             zeta_twophase)
from mcflab.network import Network
from mcflab.strongflow import junction_velocity
from mcflab.tensions import SurfaceTensionMatrix
from mcflab.triodfields import TriodCalibration, solve_alpha

J = np.array([[0.0, -1.0], [1.0, 0.0]])


@pytest.fixture(scope="module")
def triod_setup():
    net = scenes.triod_scene(n=60)
    part = build_partition(net)
    return net, part, build_calibration(net, part)


@pytest.fixture(scope="module")
def lens_setup():
    net = scenes.lens_scene(d=1.0)
    part = build_partition(net)
    return net, part, build_calibration(net, part)


@pytest.fixture(scope="module")
def circle_flow():
    """Partitions of the exactly shrinking circle at three times, all
    on the supports of the middle one."""
    def circ(t):
        return scenes.circle_scene(radius=float(np.sqrt(1.0 - 2.0 * t)),
                                   n=192)
    dt = 1e-4
    net0 = circ(0.0)
    part0 = build_partition(net0)
    rt, c = part0.r_tilde_c, part0.c1
    before = build_partition(circ(-dt), r_tilde_c=rt, c1=c, c2=c)
    after = build_partition(circ(dt), r_tilde_c=rt, c1=c, c2=c)
    calib = build_calibration(net0, part0)
    return net0, part0, before, after, dt, calib, circ


# ------------------------------------------------------------------ cutoffs


def test_theta_cutoff_plateau_and_support():
    assert theta_cutoff(0.0) == 1.0
    assert theta_cutoff(0.5) == 1.0
    assert theta_cutoff(-0.5) == 1.0
    assert theta_cutoff(1.0) == 0.0
    assert theta_cutoff(-1.7) == 0.0
    r = np.linspace(0.5, 1.0, 200)
    v = theta_cutoff(r)
    assert np.all(np.diff(v) <= 1e-15)
    assert np.all((0.0 <= v) & (v <= 1.0))


def test_zeta_twophase_quadratic_core():
    r = np.linspace(-0.5, 0.5, 101)
    assert np.array_equal(zeta_twophase(r), 1.0 - r * r)
    assert zeta_twophase(1.0) == 0.0
    assert zeta_twophase(-1.2) == 0.0
    r = np.linspace(-1.2, 1.2, 301)
    assert np.all(zeta_twophase(r) <= 1.0)


def test_zeta_junction_one_sided():
    assert zeta_junction(0.0) == 1.0
    assert zeta_junction(3.0) == 1.0
    assert zeta_junction(-1.0) == 0.0
    assert zeta_junction(-0.3) == zeta_twophase(-0.3)


def test_theta_wide_plateau():
    assert theta_wide(1.0) == 1.0
    assert theta_wide(-1.0) == 1.0
    assert theta_wide(0.3) == 1.0
    assert theta_wide(2.0) == 0.0
    assert theta_wide(2.5) == 0.0
    assert 0.0 < theta_wide(1.5) < 1.0


def test_vartheta_profile():
    # linear core, quintic shoulder (exact dyadic value at 3/4), clamps
    assert vartheta(0.25) == 0.25
    assert vartheta(-0.5) == -0.5
    assert vartheta(0.75) == 0.828125
    assert vartheta(1.0) == 1.0
    assert vartheta(5.0) == 1.0
    assert vartheta(-2.0) == -1.0
    r = np.linspace(-1.5, 1.5, 400)
    assert np.all(np.diff(vartheta(r)) >= -1e-15)
    assert np.max(np.abs(vartheta(r) + vartheta(-r))) == 0.0


# ---------------------------------------------------------------- partition


def test_partition_triod_defaults(triod_setup):
    net, part, _ = triod_setup
    assert part.r_tilde_c == pytest.approx(net.r_c / 2.0)
    assert part.c1 == 0.5 and part.c2 == 0.5
    assert part.K == 4 and part.n_junctions == 1
    labels = part.labels()
    assert labels[0].startswith("junction")
    assert all(lb.startswith("curve") for lb in labels[1:])


def test_partition_lens_autoshrunk_width(lens_setup):
    net, part, _ = lens_setup
    assert part.c1 == 0.25 and part.c2 == 0.25
    assert part.K == 6 and part.n_junctions == 2


def test_partition_lens_rejects_wide_cutoff():
    net = scenes.lens_scene(d=1.0)
    with pytest.raises(PartitionRadiusError):
        build_partition(net, c1=0.5, c2=0.5)


def test_partition_rejects_oversized_radius():
    net = scenes.triod_scene(n=40)
    with pytest.raises(PartitionRadiusError):
        build_partition(net, r_tilde_c=10.0 * net.r_c)
    with pytest.raises(ValueError):
        build_partition(net, c1=0.5)


def test_eta_is_one_at_junction_point(triod_setup):
    _, part, _ = triod_setup
    vals = part.eta(np.zeros(2))
    assert np.array_equal(vals, np.array([1.0, 0.0, 0.0, 0.0]))


def test_partition_sums_to_one_on_spline_interfaces(triod_setup, lens_setup):
    for _, part, _ in (triod_setup, lens_setup):
        worst = 0.0
        for feat in part.features[part.n_junctions:]:
            spline = feat.dist_field._spline
            for t in np.linspace(0.0, feat.curve.length, 40):
                pt, _, _ = spline.eval(float(t))
                worst = max(worst, abs(float(np.sum(part.eta(pt))) - 1.0))
        assert worst <= 1e-12


def test_partition_sum_at_most_one_on_cloud(triod_setup):
    _, part, _ = triod_setup
    rng = np.random.default_rng(31)
    pts = rng.uniform(-0.8, 0.8, (500, 2))
    sums = np.array([np.sum(part.eta(x)) for x in pts])
    assert np.max(sums) <= 1.0 + 1e-12
    assert np.min(sums) >= 0.0


def test_partition_supports_localized(triod_setup):
    net, part, _ = triod_setup
    w = part.c1 * part.r_tilde_c
    # bulk points: farther than the tube width from every curve and
    # outside the junction ball
    rng = np.random.default_rng(5)
    count = 0
    for x in rng.uniform(-0.8, 0.8, (400, 2)):
        if np.linalg.norm(x) <= part.r_tilde_c:
            continue
        d = min(np.min(np.linalg.norm(c.nodes - x, axis=1))
                for c in net.curves)
        if d <= 1.1 * w:
            continue
        assert np.array_equal(part.eta(x), np.zeros(part.K))
        count += 1
    assert count > 100


def test_junction_supports_disjoint_on_lens(lens_setup):
    _, part, _ = lens_setup
    angles = np.linspace(0.0, 2.0 * np.pi, 48, endpoint=False)
    for a, b in ((0, 1), (1, 0)):
        p = part.features[a].p
        for rho in (0.2, 0.6, 0.99):
            for ang in angles:
                x = p + rho * part.r_tilde_c * np.array([np.cos(ang),
                                                         np.sin(ang)])
                assert part.eta(x)[b] == 0.0


def test_eta_continuous_across_sphere_and_wedges(lens_setup):
    _, part, calib = lens_setup
    eps = 1e-9
    worst_eta = worst_xi = 0.0
    for k in range(part.n_junctions):
        p = part.features[k].p
        for ang in np.linspace(0.0, 2.0 * np.pi, 60, endpoint=False):
            u = np.array([np.cos(ang), np.sin(ang)])
            for rho in (part.r_tilde_c, 0.5 * part.r_tilde_c):
                xin = p + (rho - eps) * u
                xout = p + (rho + eps) * u
                worst_eta = max(worst_eta, float(np.max(np.abs(
                    part.eta(xin) - part.eta(xout)))))
                worst_xi = max(worst_xi, float(np.linalg.norm(
                    calib.xi((1, 2), xin) - calib.xi((1, 2), xout))))
    assert worst_eta <= 1e-6
    assert worst_xi <= 1e-6


def test_circle_partition_quadratic_gap():
    net = scenes.circle_scene(radius=1.0, n=192)
    part = build_partition(net)
    w = part.c1 * part.r_tilde_c
    for off in (0.1, 0.25, 0.4):
        x = np.array([0.0, 1.0 + off * w])
        gap = 1.0 - float(np.sum(part.eta(x)))
        assert gap == pytest.approx(off ** 2, abs=1e-13)


def test_feature_distance(triod_setup):
    net, part, _ = triod_setup
    x = np.array([0.03, 0.4])
    d = part.feature_distance(x)
    assert d[0] == pytest.approx(np.linalg.norm(x))
    ref = part.features[1].dist_field.project(x).distance
    assert d[1] == pytest.approx(ref)
    far = np.array([5.0, 5.0])
    assert np.all(np.isinf(part.feature_distance(far)[1:]))


# ------------------------------------------------------------ glued fields


def test_global_xi_is_unit_normal_on_interfaces(triod_setup):
    net, part, calib = triod_setup
    worst = 0.0
    for curve in net.curves:
        pair = (curve.phase_left, curve.phase_right)
        tans = curve.tangents()
        for idx in range(0, curve.n_nodes, 5):
            n = tans[idx] @ J
            xi = calib.xi(pair, curve.nodes[idx])
            worst = max(worst, float(np.linalg.norm(xi - n)))
    assert worst <= 5e-15


def test_global_xi_on_curved_interfaces():
    net = scenes.curved_triod_scene(n=64)
    part = build_partition(net)
    calib = build_calibration(net, part)
    worst = 0.0
    for feat in part.features[part.n_junctions:]:
        curve = feat.curve
        pair = (curve.phase_left, curve.phase_right)
        spline = feat.dist_field._spline
        for t in np.linspace(0.02, curve.length - 0.02, 20):
            pt, d1, _ = spline.eval(float(t))
            n = (d1 / np.linalg.norm(d1)) @ J
            worst = max(worst, float(np.linalg.norm(calib.xi(pair, pt) - n)))
    assert worst <= 1e-13


def test_frame_identity_global(triod_setup, lens_setup):
    for net, _, calib in (triod_setup, lens_setup):
        rng = np.random.default_rng(17)
        worst = 0.0
        for _ in range(150):
            x = rng.uniform(-0.7, 0.7, 2)
            fields = {i: calib.xi_phase(i, x) for i in range(1, net.P + 1)}
            for i in range(1, net.P + 1):
                for j in range(1, net.P + 1):
                    if i == j:
                        continue
                    lhs = net.sigma.value(i, j) * calib.xi((i, j), x)
                    worst = max(worst, float(np.linalg.norm(
                        lhs - (fields[i] - fields[j]))))
        assert worst <= 1e-13


def test_pair_field_antisymmetry(triod_setup):
    _, _, calib = triod_setup
    rng = np.random.default_rng(23)
    for _ in range(50):
        x = rng.uniform(-0.6, 0.6, 2)
        a = calib.xi((1, 2), x)
        b = calib.xi((2, 1), x)
        assert np.max(np.abs(a + b)) <= 1e-15


def test_pair_validation(triod_setup):
    _, _, calib = triod_setup
    with pytest.raises(ValueError):
        calib.xi((1, 1), np.zeros(2))
    with pytest.raises(ValueError):
        calib.xi((0, 2), np.zeros(2))
    with pytest.raises(ValueError):
        calib.xi_phase(4, np.zeros(2))


def test_foreign_tube_pair_field_is_half(triod_setup):
    # equal tensions: on an interface absent from a pair, the pair
    # field has length (sigma_ri - sigma_li)/2 = 1/2
    net, part, calib = triod_setup
    curve = net.curves[1]
    x = curve.nodes[curve.n_nodes // 2]
    assert {curve.phase_left, curve.phase_right} == {2, 3}
    v = calib.xi((1, 2), x)
    assert np.linalg.norm(v) == pytest.approx(0.5, abs=1e-12)


def test_junction_member_recovers_glued_fields(triod_setup):
    # the tension-weighted thirds of the glued fields telescope, so the
    # junction member's pair fields equal the glued ones exactly
    net, part, calib = triod_setup
    triod = TriodCalibration(net, 0)
    rng = np.random.default_rng(3)
    for _ in range(60):
        a = rng.uniform(0.0, 2.0 * np.pi)
        rho = rng.uniform(0.05, 0.95) * part.r_tilde_c
        x = rho * np.array([np.cos(a), np.sin(a)])
        xi_pairs, B = triod.glue_and_normalize(x)
        for pr in triod.wedges.pairs:
            got = calib.fields[0].xi_pair(pr, x)
            assert np.linalg.norm(got - xi_pairs[pr]) <= 1e-14
        assert np.linalg.norm(calib.fields[0].b(x) - B) == 0.0
    # the support of the junction member stays inside the leg tubes
    x = 0.8 * part.r_tilde_c * np.array([np.cos(np.deg2rad(150.0)),
                                         np.sin(np.deg2rad(150.0))])
    assert np.array_equal(part.eta(x), np.zeros(part.K))


def test_absent_phase_extension():
    base = scenes.triod_scene(n=60)
    net = Network(4, base.curves, base.junctions,
                  SurfaceTensionMatrix.equal(4), r_c=base.r_c)
    part = build_partition(net)
    calib = build_calibration(net, part)
    p = np.zeros(2)
    assert np.linalg.norm(calib.xi_phase(4, p)) <= 1e-14
    expected = oracles.absent_phase_pair_length()
    for j in (1, 2, 3):
        assert np.linalg.norm(calib.xi((4, j), p)) == pytest.approx(
            expected, abs=1e-13)
    # frame identity holds for all twelve ordered pairs
    rng = np.random.default_rng(41)
    worst = 0.0
    for _ in range(80):
        x = rng.uniform(-0.5, 0.5, 2)
        fields = {i: calib.xi_phase(i, x) for i in range(1, 5)}
        for i in range(1, 5):
            for j in range(1, 5):
                if i != j:
                    lhs = net.sigma.value(i, j) * calib.xi((i, j), x)
                    worst = max(worst, float(np.linalg.norm(
                        lhs - (fields[i] - fields[j]))))
    assert worst <= 1e-13


def test_global_velocity_at_junctions(triod_setup, lens_setup):
    net, _, calib = triod_setup
    assert np.linalg.norm(calib.velocity(np.zeros(2))) <= 1e-12
    net, part, calib = lens_setup
    for k in range(part.n_junctions):
        p = part.features[k].p
        v, _ = junction_velocity(net, k)
        assert np.linalg.norm(calib.velocity(p) - v) <= 1e-10


# ------------------------------------------------- blended tangential term


def test_blended_alpha_plateau_and_decay():
    net = scenes.triod_scene(n=80)
    part = build_partition(net)
    v = np.array([0.3, 0.1])
    a = blended_alpha(net, 0, part.r_tilde_c, junction_velocities=[v])
    curve = net.curves[0]
    full = solve_alpha(curve, net.junctions[0], v)
    dist = np.linalg.norm(curve.nodes, axis=1)
    inside = dist <= part.r_tilde_c
    outside = dist >= 2.0 * part.r_tilde_c
    assert inside.sum() > 3 and outside.sum() > 3
    assert np.array_equal(a[inside], full[inside])
    assert np.all(a[outside] == 0.0)


def test_blended_alpha_zero_without_junctions():
    net = scenes.circle_scene(radius=1.0, n=64)
    a = blended_alpha(net, 0, 0.1)
    assert np.array_equal(a, np.zeros(net.curves[0].n_nodes))


def test_tube_velocity_matches_junction_ansatz_on_legs():
    # with the blended coefficient, the two-phase velocity agrees with
    # the glued junction velocity along the legs inside the ball
    v = np.array([0.25, -0.1])
    net = scenes.triod_scene(n=80)
    part = build_partition(net)
    calib = build_calibration(net, part, junction_velocities=[v])
    triod = TriodCalibration(net, 0, dp_dt=v)
    worst = 0.0
    checked = 0
    for ci, curve in enumerate(net.curves):
        for idx in range(1, curve.n_nodes):
            x = curve.nodes[idx]
            d = np.linalg.norm(x)
            if not 0.05 * part.r_tilde_c < d < 0.95 * part.r_tilde_c:
                continue
            _, B_junction = triod.glue_and_normalize(x)
            B_tube = b_twophase(calib.fields[1 + ci].field, x)
            worst = max(worst, float(np.linalg.norm(B_junction - B_tube)))
            worst = max(worst, float(np.linalg.norm(
                calib.velocity(x) - B_junction)))
            checked += 1
    assert checked >= 9
    assert worst <= 1e-12


# ------------------------------------------------------------- diagnostics


def test_partition_advection_residual(circle_flow):
    _, part0, before, after, dt, calib, _ = circle_flow
    w = part0.c1 * part0.r_tilde_c
    rng = np.random.default_rng(7)
    angs = rng.uniform(0.0, 2.0 * np.pi, 30)
    offs = rng.uniform(-0.9, 0.9, 30) * w
    pts = np.stack([(1.0 + offs) * np.cos(angs),
                    (1.0 + offs) * np.sin(angs)], axis=1)
    resid, dist = partition_advection_residual(part0, before, after, dt,
                                               calib.velocity, pts)
    ratio = resid / np.maximum(np.minimum(dist, 1.0) ** 2, 1e-30)
    assert ratio.max() <= 2.5e4
    # near the interface the defect shrinks quadratically, so the
    # normalized ratio is much smaller there
    near = []
    for a in np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False):
        u = np.array([np.cos(a), np.sin(a)])
        for off in (0.1 * w, 0.3 * w):
            near.append((1.0 + off) * u)
    resid, dist = partition_advection_residual(part0, before, after, dt,
                                               calib.velocity,
                                               np.array(near))
    ratio = resid / np.maximum(np.minimum(dist, 1.0) ** 2, 1e-30)
    assert ratio.max() <= 5e3


def test_weights_advection_residual(circle_flow):
    net0, part0, _, _, dt, calib, circ = circle_flow
    rt = part0.r_tilde_c
    w0 = build_weights(net0, rt)
    wm = build_weights(circ(-dt), rt)
    wp = build_weights(circ(dt), rt)
    rng = np.random.default_rng(9)
    angs = rng.uniform(0.0, 2.0 * np.pi, 25)
    offs = rng.uniform(-0.9, 0.9, 25) * part0.c1 * rt
    pts = np.stack([(1.0 + offs) * np.cos(angs),
                    (1.0 + offs) * np.sin(angs)], axis=1)
    resid, vals = weights_advection_residual(w0, wm, wp, dt, calib.velocity,
                                             pts)
    ratio = resid / np.maximum(np.abs(vals), 1e-12)
    assert ratio.max() <= 40.0
    # far from the interface the weights are the constants +-1
    far = np.array([[0.0, 0.2], [2.5, 0.0]])
    resid, vals = weights_advection_residual(w0, wm, wp, dt, calib.velocity,
                                             far)
    assert np.max(resid) <= 1e-10
    assert np.array_equal(np.abs(vals), np.ones_like(vals))


def test_weights_signs_and_interface_zero():
    net = scenes.triod_scene(n=60)
    w = build_weights(net)
    for x, inside in (((0.3, 0.4), 1), ((-0.3, 0.4), 2), ((0.0, -0.5), 3)):
        vals = w.values(np.array(x, dtype=float))
        assert vals[inside - 1] == -1.0
        others = np.delete(vals, inside - 1)
        assert np.all(others == 1.0)
    x_on = net.curves[0].nodes[20]
    vals = w.values(x_on)
    assert abs(vals[0]) <= 1e-12 and abs(vals[1]) <= 1e-12
    assert vals[2] == 1.0


def test_weights_linear_near_interface():
    net = scenes.triod_scene(n=60)
    w = build_weights(net)
    node = net.curves[0].nodes[20]
    tangent = net.curves[0].tangents()[20]
    n = tangent @ J  # points from phase 2 (left) into phase 1 (right)
    d = 0.3 * w.r_tilde_c
    x = node + d * n
    assert w.value(1, x) == pytest.approx(-0.3, abs=1e-3)
    assert w.value(2, x) == pytest.approx(0.3, abs=1e-3)


def test_measure_coercivity_positive(lens_setup):
    _, _, calib = lens_setup
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1.2, 1.2, (300, 2))
    for pair in ((1, 2), (1, 3), (2, 3)):
        c = measure_coercivity(calib, pair, pts)
        assert np.isfinite(c) and c >= 0.4


def test_interface_distance_picks_matching_curves(lens_setup):
    net, part, _ = lens_setup
    # point near one of the two rays separating phases 1 and 2
    ray = [f for f in part.features[part.n_junctions:]
           if set(f.pair) == {1, 2}][0]
    x = ray.curve.nodes[ray.curve.n_nodes // 2] + np.array([0.0, 0.01])
    d = interface_distance(part, (1, 2), x)
    assert d == pytest.approx(0.01, abs=1e-6)
    assert np.isinf(interface_distance(part, (1, 2),
                                       np.array([50.0, 0.0])))


def test_export_fields_csv(tmp_path, triod_setup):
    _, _, calib = triod_setup
    rng = np.random.default_rng(12)
    pts = rng.uniform(-0.4, 0.4, (8, 2))
    path = tmp_path / "fields.csv"
    export_fields_csv(path, calib, (1, 2), pts, t=0.125)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "y", "t", "pair", "xi_x", "xi_y", "xi_norm",
                       "B_x", "B_y", "dist"]
    assert len(rows) == 9
    for row, x in zip(rows[1:], pts):
        assert float(row[0]) == x[0] and float(row[1]) == x[1]
        assert float(row[2]) == 0.125
        assert row[3] == "1-2"
        assert float(row[6]) == pytest.approx(
            np.hypot(float(row[4]), float(row[5])))
        assert float(row[9]) >= 0.0
