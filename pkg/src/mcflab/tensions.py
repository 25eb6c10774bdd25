"""Surface-tension matrices and the junction geometry they induce.

A matrix of surface tensions is admissible when it is symmetric with
zero diagonal, strictly positive off the diagonal, satisfies the strict
triangle inequality, and the derived matrix

    Q[i][j] = sigma[P][i]^2 + sigma[P][j]^2 - sigma[i][j]^2

(1-based phases, i, j = 1..P-1) is positive definite.  Admissibility is
equivalent to the tensions being realizable as pairwise Euclidean
distances of P points, which this module computes explicitly.

Phases are labeled 1..P throughout the package.  The plane convention
is fixed here once: J denotes the counter-clockwise quarter rotation

    J = [[0, -1], [1, 0]],

tangents are tau = J^{-1} n for a normal n, and phases at a triple
junction are ordered counter-clockwise, so that walking CCW around a
junction one crosses the interface between phases i and i+1 and then
the sector of phase i+1.
"""

import numpy as np

J = np.array([[0.0, -1.0], [1.0, 0.0]])

_EIG_REL_TOL = 1e-12


class AdmissibilityReport:
    """Outcome of `validate_admissible`.

    Attributes
    ----------
    ok : bool
        True when every admissibility condition holds.
    violations : list of str
        Human-readable descriptions, first violation first.  Each entry
        names the failed condition and its witnesses (indices or the
        offending eigenvalue).
    """

    def __init__(self, ok, violations):
        self.ok = ok
        self.violations = violations

    def __bool__(self):
        return self.ok

    def __repr__(self):
        if self.ok:
            return "AdmissibilityReport(ok)"
        return "AdmissibilityReport(fail: %s)" % "; ".join(self.violations)


class SurfaceTensionMatrix:
    """P-phase matrix of dimensionless surface tensions.

    Parameters
    ----------
    sigma : (P, P) array_like
        Symmetric matrix with zero diagonal; entry [i-1, j-1] is the
        tension of the interface between phases i and j.
    """

    def __init__(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ValueError("surface tension matrix must be square")
        if not np.all(np.isfinite(sigma)):
            raise ValueError("surface tension matrix must be finite")
        self.sigma = sigma
        self.P = sigma.shape[0]

    @classmethod
    def equal(cls, P):
        """Equal unit tensions on all interfaces of a P-phase system."""
        s = np.ones((P, P)) - np.eye(P)
        return cls(s)

    @classmethod
    def from_triple(cls, s12, s13, s23):
        """Three-phase matrix from the tensions of the pairs (1,2), (1,3), (2,3)."""
        return cls([[0.0, s12, s13], [s12, 0.0, s23], [s13, s23, 0.0]])

    def value(self, i, j):
        """Tension between phases i and j (1-based)."""
        return self.sigma[i - 1, j - 1]

    def q_matrix(self):
        """The (P-1)x(P-1) matrix Q tested for positive definiteness."""
        s = self.sigma
        P = self.P
        last = s[P - 1, :P - 1]
        return last[:, None] ** 2 + last[None, :] ** 2 - s[:P - 1, :P - 1] ** 2

    def __repr__(self):
        return "SurfaceTensionMatrix(P=%d)" % self.P


def _as_matrix(sigma):
    if isinstance(sigma, SurfaceTensionMatrix):
        return sigma
    return SurfaceTensionMatrix(sigma)


def validate_admissible(sigma):
    """Check all admissibility conditions of a surface-tension matrix.

    Parameters
    ----------
    sigma : SurfaceTensionMatrix or (P, P) array_like

    Returns
    -------
    AdmissibilityReport
        `ok` is True iff symmetry/zero diagonal, strict positivity,
        the strict triangle inequality, and positive definiteness of Q
        all hold.  Violations are listed in that order.

    Raises
    ------
    ValueError
        If the input is not a finite square matrix.
    """
    stm = _as_matrix(sigma)
    s, P = stm.sigma, stm.P
    violations = []

    if not np.array_equal(s, s.T):
        violations.append("matrix is not symmetric")
    if np.any(np.diagonal(s) != 0.0):
        violations.append("diagonal is not zero")

    off = s[~np.eye(P, dtype=bool)]
    if off.size and np.min(off) <= 0.0:
        i, j = np.unravel_index(
            np.argmin(s + np.max(np.abs(s)) * 2 * np.eye(P)), s.shape)
        violations.append(
            "positivity fails at (%d,%d): sigma=%r" % (i + 1, j + 1, s[i, j]))

    tri_done = False
    for i in range(P):
        for j in range(P):
            if tri_done or i == j:
                continue
            for k in range(P):
                if k == i or k == j:
                    continue
                if s[i, j] >= s[i, k] + s[k, j]:
                    violations.append(
                        "triangle inequality fails at (%d,%d,%d)"
                        % (i + 1, j + 1, k + 1))
                    tri_done = True
                    break

    if P >= 2:
        Q = stm.q_matrix()
        eig = np.linalg.eigvalsh(Q)
        tol = _EIG_REL_TOL * max(np.linalg.norm(Q), 1.0)
        if eig.size and eig[0] <= tol:
            violations.append(
                "Q is not positive definite: min eigenvalue %r" % eig[0])

    return AdmissibilityReport(not violations, violations)


class Embedding:
    """P points in R^{P-1} whose pairwise distances realize the tensions.

    Attributes
    ----------
    points : (P, P-1) ndarray
        Row i-1 is the point of phase i; the last phase sits at the
        origin.
    """

    def __init__(self, points):
        self.points = np.asarray(points, dtype=float)

    def point(self, i):
        return self.points[i - 1]

    def distance_matrix(self):
        d = self.points[:, None, :] - self.points[None, :, :]
        return np.sqrt(np.sum(d * d, axis=2))


def embed_l2(sigma):
    """Realize an admissible tension matrix as point distances.

    The Gram matrix G = Q/2 of the points relative to the last phase is
    factored by a symmetric eigendecomposition; rank deficiency is
    allowed (the points may span a lower-dimensional subspace of
    R^{P-1}).

    Raises
    ------
    ValueError
        If the matrix is not admissible (reported with the violations),
        or the Gram matrix turns out numerically indefinite.
    """
    stm = _as_matrix(sigma)
    report = validate_admissible(stm)
    if not report.ok:
        raise ValueError("tensions not admissible: %s"
                         % "; ".join(report.violations))
    P = stm.P
    G = 0.5 * stm.q_matrix()
    w, V = np.linalg.eigh(G)
    if w.size and w[0] < -_EIG_REL_TOL * max(np.linalg.norm(G), 1.0):
        raise ValueError("Gram matrix numerically indefinite: %r" % w[0])
    w = np.clip(w, 0.0, None)
    X = V * np.sqrt(w)[None, :]
    points = np.zeros((P, P - 1))
    points[:P - 1] = X
    emb = Embedding(points)
    dm = emb.distance_matrix()
    scale = max(np.max(stm.sigma), 1.0)
    if np.max(np.abs(dm - stm.sigma)) > 1e-10 * scale:
        raise ValueError("embedding failed to reproduce the tensions")
    return emb


def rotation(angle):
    """2x2 counter-clockwise rotation matrix."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


class JunctionFrame:
    """Normals, tangents and rotation table at a triple junction.

    The triple (i, j, k) lists the phases counter-clockwise.  Tangent
    tau(i, j) of the interface between consecutive phases points away
    from the junction; the normal is n(i, j) = J tau(i, j) and points
    from phase i into phase j.  R(a, b) is the rotation taking the
    interface frame of the pair starting at b onto the one starting
    at a.
    """

    def __init__(self, triple, angles_by_pair, theta):
        self.triple = tuple(triple)
        self._angles = dict(angles_by_pair)   # cyclic pair -> tangent angle
        self.theta = dict(theta)              # phase -> sector opening angle
        self._cyclic = list(self._angles.keys())

    def cyclic_pairs(self):
        return list(self._cyclic)

    def tangent_angle(self, i, j):
        if (i, j) in self._angles:
            return self._angles[(i, j)]
        if (j, i) in self._angles:
            return self._angles[(j, i)] + np.pi
        raise KeyError((i, j))

    def tangent(self, i, j):
        a = self.tangent_angle(i, j)
        return np.array([np.cos(a), np.sin(a)])

    def normal(self, i, j):
        return J @ self.tangent(i, j)

    def rotation(self, a, b):
        """Rotation R(a, b) between the two cyclic interface frames."""
        if a == b:
            return np.eye(2)
        na = self._angles[self._pair_starting(a)]
        nb = self._angles[self._pair_starting(b)]
        return rotation(na - nb)

    def _pair_starting(self, a):
        for p in self._cyclic:
            if p[0] == a:
                return p
        raise KeyError(a)

    def force_residual(self, sigma):
        stm = _as_matrix(sigma)
        r = np.zeros(2)
        for (i, j) in self._cyclic:
            r += stm.value(i, j) * self.normal(i, j)
        return float(np.linalg.norm(r))


def sector_angle(sigma, i, j, k):
    """Opening angle of the sector of phase j between interfaces (i,j), (j,k).

    Law of cosines on the closed force triangle: the three vectors
    sigma_ij tau_ij, sigma_jk tau_jk, sigma_ki tau_ki sum to zero.
    """
    stm = _as_matrix(sigma)
    sij, sjk, ski = stm.value(i, j), stm.value(j, k), stm.value(k, i)
    c = (ski ** 2 - sij ** 2 - sjk ** 2) / (2.0 * sij * sjk)
    if not -1.0 <= c <= 1.0:
        raise ValueError("no force balance for tensions at (%d,%d,%d)" % (i, j, k))
    return float(np.arccos(c))


def junction_frame(sigma, triple, reference_direction=(1.0, 0.0)):
    """Build the force-balanced frame of a triple junction.

    Parameters
    ----------
    sigma : SurfaceTensionMatrix or array_like
        Admissible tensions.
    triple : (i, j, k)
        Pairwise distinct phases in counter-clockwise order.
    reference_direction : unit 2-vector
        Direction of the away-tangent of the first interface (i, j).

    Returns
    -------
    JunctionFrame
        With sector angles forced by the tensions and the rotation
        table between the three interface frames.
    """
    i, j, k = triple
    if len({i, j, k}) != 3:
        raise ValueError("phases of a triple must be pairwise distinct")
    stm = _as_matrix(sigma)
    report = validate_admissible(stm)
    if not report.ok:
        raise ValueError("tensions not admissible: %s"
                         % "; ".join(report.violations))

    ref = np.asarray(reference_direction, dtype=float)
    a0 = float(np.arctan2(ref[1], ref[0]))
    th_j = sector_angle(stm, i, j, k)
    th_k = sector_angle(stm, j, k, i)
    th_i = sector_angle(stm, k, i, j)
    if abs(th_i + th_j + th_k - 2.0 * np.pi) > 1e-12:
        raise ValueError("sector angles do not close up")

    angles = {
        (i, j): a0,
        (j, k): a0 + th_j,
        (k, i): a0 + th_j + th_k,
    }
    theta = {i: th_i, j: th_j, k: th_k}
    frame = JunctionFrame(triple, angles, theta)
    if frame.force_residual(stm) > 1e-12 * max(np.max(stm.sigma), 1.0):
        raise ValueError("force balance residual too large")
    return frame


def project_absent(embedding, present, absent):
    """Coefficients of the projected point of an absent phase.

    Projects the embedding point of phase `absent` orthogonally onto
    the plane through the points of the `present` triple (l, m, n) and
    expresses the projection in affine coordinates

        pi q = lam q_l + lam_p q_m + lam_pp q_n,  lam + lam_p + lam_pp = 1.

    Returns
    -------
    (lam, lam_p, lam_pp) : floats

    Raises
    ------
    ValueError
        If the present triple is degenerate (collinear points).
    """
    l, m, n = present
    if len({l, m, n}) != 3:
        raise ValueError("present phases must be pairwise distinct")
    if absent in (l, m, n):
        out = [0.0, 0.0, 0.0]
        out[(l, m, n).index(absent)] = 1.0
        return tuple(out)

    ql, qm, qn = (embedding.point(a) for a in (l, m, n))
    qi = embedding.point(absent)
    A = np.stack([qm - ql, qn - ql], axis=1)
    gram = A.T @ A
    if np.linalg.cond(gram) > 1e12:
        raise ValueError("present triple is degenerate")
    lam_p, lam_pp = np.linalg.solve(gram, A.T @ (qi - ql))
    return (float(1.0 - lam_p - lam_pp), float(lam_p), float(lam_pp))


def projected_point(embedding, present, absent):
    """The projected embedding point itself (see `project_absent`)."""
    lam, lam_p, lam_pp = project_absent(embedding, present, absent)
    l, m, n = present
    return (lam * embedding.point(l) + lam_p * embedding.point(m)
            + lam_pp * embedding.point(n))


def embedding_to_csv(embedding):
    """CSV dump of an embedding, one row per phase."""
    lines = []
    P = embedding.points.shape[0]
    header = ["phase"] + ["x%d" % (d + 1) for d in range(embedding.points.shape[1])]
    lines.append(",".join(header))
    for i in range(P):
        row = [str(i + 1)] + [repr(float(v)) for v in embedding.points[i]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
