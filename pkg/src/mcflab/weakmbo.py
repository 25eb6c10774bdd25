"""Grid-based weak solutions by multiphase threshold dynamics.

A phase partition lives on a uniform cell grid.  One evolution step
convolves every phase indicator with the heat kernel, forms the
tension-weighted comparison functions and reassigns each cell to the
phase with the smallest value (Merriman, Bence, Osher thresholding,
multiphase variant).  Interfaces are recovered from the grid by
marching squares on pairwise indicator differences, with normals from
a smoothed discrete gradient and velocities from nearest-interface
matching between consecutive times.
"""

import json
import struct

import numpy as np
from scipy.ndimage import binary_dilation, uniform_filter
from scipy.ndimage import convolve1d
from scipy.spatial import cKDTree


class GridError(RuntimeError):
    pass


class PhaseGrid:
    """Uniform-grid phase partition.

    Parameters
    ----------
    h : float
        Cell size.
    origin : 2-vector
        Position of the lower-left domain corner; the center of cell
        (ix, iy) is origin + h*(ix + 1/2, iy + 1/2).
    cells : (ny, nx) integer array
        Per-cell phase index in 1..P; rows run along y.
    P : int
        Number of phases.
    t : float
        Time stamp.
    """

    def __init__(self, h, origin, cells, P, t=0.0):
        self.h = float(h)
        if self.h <= 0.0:
            raise GridError("cell size must be positive")
        self.origin = np.asarray(origin, dtype=float)
        cells = np.asarray(cells)
        if cells.ndim != 2:
            raise GridError("cells must be a 2D array")
        self.cells = cells.astype(np.int32, copy=True)
        self.P = int(P)
        if self.cells.min() < 1 or self.cells.max() > self.P:
            raise GridError("cell phases must lie in 1..P")
        self.t = float(t)

    @property
    def ny(self):
        return self.cells.shape[0]

    @property
    def nx(self):
        return self.cells.shape[1]

    def copy(self):
        return PhaseGrid(self.h, self.origin, self.cells, self.P, self.t)

    def cell_centers(self):
        """Cell center coordinates as arrays x (nx,), y (ny,)."""
        x = self.origin[0] + self.h * (np.arange(self.nx) + 0.5)
        y = self.origin[1] + self.h * (np.arange(self.ny) + 0.5)
        return x, y

    def phase_area(self, i):
        """Area covered by phase i (cell count times cell area)."""
        return float(np.count_nonzero(self.cells == i)) * self.h ** 2

    def interface_mask(self):
        """Cells having at least one 4-neighbor of a different phase."""
        c = self.cells
        m = np.zeros_like(c, dtype=bool)
        m[:, :-1] |= c[:, :-1] != c[:, 1:]
        m[:, 1:] |= c[:, :-1] != c[:, 1:]
        m[:-1, :] |= c[:-1, :] != c[1:, :]
        m[1:, :] |= c[:-1, :] != c[1:, :]
        return m


def rasterize(network, h, nx, ny, origin=None, min_pad=None, t=0.0):
    """Sample a curve network onto a phase grid.

    Each cell takes the phase of the side of the nearest interface node
    its center falls on.  The grid must cover the network's bounding
    box with a margin of at least min_pad (default four cells) so later
    convolution steps do not see the boundary.
    """
    nodes = np.vstack([c.nodes for c in network.curves])
    lo = nodes.min(axis=0)
    hi = nodes.max(axis=0)
    if origin is None:
        center = 0.5 * (lo + hi)
        origin = center - 0.5 * h * np.array([nx, ny], dtype=float)
    origin = np.asarray(origin, dtype=float)
    if min_pad is None:
        min_pad = 4.0 * h
    extent = origin + h * np.array([nx, ny], dtype=float)
    if np.any(lo - min_pad < origin) or np.any(hi + min_pad > extent):
        raise GridError("grid does not cover the network with pad %g"
                        % min_pad)

    normals = []
    left = []
    right = []
    for c in network.curves:
        tans = c.tangents()
        normals.append(np.stack([tans[:, 1], -tans[:, 0]], axis=1))
        left.append(np.full(c.n_nodes, c.phase_left))
        right.append(np.full(c.n_nodes, c.phase_right))
    normals = np.vstack(normals)
    left = np.concatenate(left)
    right = np.concatenate(right)

    x, y = (origin[0] + h * (np.arange(nx) + 0.5),
            origin[1] + h * (np.arange(ny) + 0.5))
    xx, yy = np.meshgrid(x, y)
    centers = np.stack([xx.ravel(), yy.ravel()], axis=1)
    tree = cKDTree(nodes)
    _, idx = tree.query(centers)
    side = np.einsum("ij,ij->i", centers - nodes[idx], normals[idx])
    phases = np.where(side > 0.0, right[idx], left[idx])
    return PhaseGrid(h, origin, phases.reshape(ny, nx), network.P, t=t)


def _heat_kernel(dt, h):
    """Discrete 1D Gaussian of variance 2*dt, truncated at five
    standard deviations and normalized."""
    s = np.sqrt(2.0 * dt)
    rad = int(np.ceil(5.0 * s / h))
    offs = h * np.arange(-rad, rad + 1)
    k = np.exp(-offs ** 2 / (4.0 * dt))
    return k / k.sum()


def mbo_step(grid, dt, sigma, check_pad=True):
    """One thresholding step.

    The comparison function of phase i is the tension-weighted sum of
    the convolved indicators of the other phases; every cell moves to
    the phase minimizing it, ties broken toward the lowest index.
    Interfaces inside the truncated kernel's reach of the boundary see
    a zero-padding bias; pass check_pad=False to accept that (the bias
    cancels for a straight interface meeting the boundary at a right
    angle, so domain-spanning stripes are fine).
    """
    dt = float(dt)
    h = grid.h
    if dt < h * h:
        raise GridError("time step %g below the resolvability floor %g"
                        % (dt, h * h))
    if sigma.P < grid.P:
        raise GridError("tension matrix covers %d phases, grid has %d"
                        % (sigma.P, grid.P))
    kernel = _heat_kernel(dt, h)
    band = (kernel.size - 1) // 2
    mask = grid.interface_mask()
    if check_pad and band > 0:
        edge = np.zeros_like(mask)
        edge[:band, :] = True
        edge[-band:, :] = True
        edge[:, :band] = True
        edge[:, -band:] = True
        if np.any(mask & edge):
            raise GridError("insufficient pad: interfaces within %d cells "
                            "of the boundary" % band)

    conv = {}
    for j in np.unique(grid.cells):
        chi = (grid.cells == j).astype(float)
        half = convolve1d(chi, kernel, axis=0, mode="constant")
        conv[int(j)] = convolve1d(half, kernel, axis=1, mode="constant")
    phi = np.zeros((grid.P, grid.ny, grid.nx))
    for i in range(1, grid.P + 1):
        for j, cj in conv.items():
            if j != i:
                phi[i - 1] += sigma.value(i, j) * cj
    new_cells = 1 + np.argmin(phi, axis=0)
    return PhaseGrid(h, grid.origin, new_cells, grid.P, t=grid.t + dt)


class InterfaceSoup:
    """Recovered interface segments of one grid.

    Attributes (all index-aligned): endpoints (n, 2, 2), pairs (n, 2)
    with ordered labels i < j, normals (n, 2) pointing from phase i to
    phase j, midpoints (n, 2), lengths (n,), velocity (n,) in the
    normal direction (NaN until estimated).
    """

    def __init__(self, endpoints, pairs, normals, h, t):
        self.endpoints = np.asarray(endpoints, dtype=float).reshape(-1, 2, 2)
        self.pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
        self.normals = np.asarray(normals, dtype=float).reshape(-1, 2)
        self.midpoints = 0.5 * (self.endpoints[:, 0] + self.endpoints[:, 1])
        self.lengths = np.linalg.norm(
            self.endpoints[:, 1] - self.endpoints[:, 0], axis=1)
        self.velocity = np.full(len(self.pairs), np.nan)
        self.h = float(h)
        self.t = float(t)

    def __len__(self):
        return len(self.pairs)

    def pairs_present(self):
        return sorted({(int(i), int(j)) for i, j in self.pairs})

    def select(self, pair):
        """Indices of the segments labeled with the (unordered) pair."""
        i, j = min(pair), max(pair)
        return np.flatnonzero((self.pairs[:, 0] == i)
                              & (self.pairs[:, 1] == j))

    def total_length(self, pair=None):
        if pair is None:
            return float(np.sum(self.lengths))
        return float(np.sum(self.lengths[self.select(pair)]))

    def energy(self, sigma):
        """Tension-weighted total interface length."""
        e = 0.0
        for i, j in self.pairs_present():
            e += sigma.value(i, j) * self.total_length((i, j))
        return e

    def velocities(self, pair):
        """Normal velocities of the pair's segments; the sign flips
        with the pair order, matching the normal convention."""
        i, j = pair
        vals = self.velocity[self.select(pair)]
        return vals if i < j else -vals


# corner order within a marching block: c0=(0,0), c1=(1,0), c2=(1,1),
# c3=(0,1); edges join consecutive corners
_EDGES = ((0, 1), (1, 2), (2, 3), (3, 0))


def _relax_chains(raw, h, passes=2):
    """Smooth cell-scale jitter out of one pair's segment list.

    Segments are chained by shared endpoints; interior chain vertices
    get rounds of 1/4-1/2-1/4 averaging (endpoints of open chains stay
    put, loops wrap around).  Binary rasterization puts zero-mean
    noise of amplitude O(h) at wavelength O(h) on the crossing
    positions, which the averaging removes; without it the summed
    length carries a non-vanishing relative bias.  The number of
    rounds grows like the square root of the chain's vertex count
    (floor `passes`, cap 12): longer chains resolve their geometry on
    proportionally more cells, so the extra smoothing stays below the
    curvature scale while pushing the jitter floor down with h.
    Normals are rebuilt from the relaxed tangents and oriented by the
    original gradient normals.  Input and output records are
    (p0, p1, normal), index-aligned.
    """
    out = [None] * len(raw)
    scale = 1024.0 / h
    vid = {}
    pos = []

    def vert(p):
        k = (int(round(p[0] * scale)), int(round(p[1] * scale)))
        if k not in vid:
            vid[k] = len(pos)
            pos.append(np.asarray(p, dtype=float))
        return vid[k]

    edges = []
    adj = {}
    for r, (p0, p1, _) in enumerate(raw):
        a, b = vert(p0), vert(p1)
        if a == b:
            out[r] = raw[r]
            continue
        e = len(edges)
        edges.append((a, b, r))
        adj.setdefault(a, []).append(e)
        adj.setdefault(b, []).append(e)

    visited = [False] * len(edges)
    chains = []

    def walk(v, e):
        """Follow degree-2 vertices from v along e; returns the
        ordered vertex list and (record, forward) per edge."""
        vids, recs = [v], []
        while True:
            visited[e] = True
            a, b, r = edges[e]
            w = b if a == v else a
            recs.append((r, a == v))
            vids.append(w)
            v = w
            if len(adj[v]) != 2:
                return vids, recs
            e1, e2 = adj[v]
            e = e2 if e1 == e else e1
            if visited[e]:
                return vids, recs

    for v0, elist in adj.items():
        if len(elist) == 2:
            continue
        for e0 in elist:
            if not visited[e0]:
                vids, recs = walk(v0, e0)
                chains.append((vids, recs, False))
    for e0 in range(len(edges)):
        if not visited[e0]:
            vids, recs = walk(edges[e0][0], e0)
            closed = vids[0] == vids[-1]
            chains.append((vids[:-1] if closed else vids, recs, closed))

    for vids, recs, closed in chains:
        arr = np.array([pos[v] for v in vids])
        rounds = int(np.clip(np.sqrt(len(vids)) / 4.0, passes, 12))
        for _ in range(rounds):
            if closed:
                arr = 0.5 * arr + 0.25 * (np.roll(arr, 1, axis=0)
                                          + np.roll(arr, -1, axis=0))
            elif len(arr) > 2:
                arr = np.vstack([arr[:1],
                                 0.5 * arr[1:-1]
                                 + 0.25 * (arr[:-2] + arr[2:]),
                                 arr[-1:]])
        for k, (r, fwd) in enumerate(recs):
            q0 = arr[k]
            q1 = arr[(k + 1) % len(arr)] if closed else arr[k + 1]
            if not fwd:
                q0, q1 = q1, q0
            n_grad = raw[r][2]
            t = q1 - q0
            tn = np.hypot(t[0], t[1])
            if tn > 1e-12 * h:
                n = np.array([t[1], -t[0]]) / tn
                if float(n @ n_grad) < 0.0:
                    n = -n
            else:
                n = n_grad
            out[r] = (q0, q1, n)
    return out


def extract_interfaces(grid):
    """Marching squares on pairwise indicator differences.

    Blocks of four cells are claimed by a phase pair when all corners
    belong to it and both phases occur; blocks touching a third phase
    are skipped, which leaves small gaps around junctions.  Crossing
    positions interpolate the box-smoothed indicator difference, and
    saddles are resolved by the smoothed block-center value.  Each
    pair's chains are then relaxed to remove cell-scale jitter, and
    normals follow the relaxed tangents, oriented from phase i to j
    by the smoothed gradient.
    """
    cells = grid.cells
    h = grid.h
    segs = []
    pair_set = set()
    horiz = cells[:, :-1] != cells[:, 1:]
    for a, b in zip(cells[:, :-1][horiz], cells[:, 1:][horiz]):
        pair_set.add((min(a, b), max(a, b)))
    vert = cells[:-1, :] != cells[1:, :]
    for a, b in zip(cells[:-1, :][vert], cells[1:, :][vert]):
        pair_set.add((min(a, b), max(a, b)))

    for i, j in sorted(pair_set):
        i, j = int(i), int(j)
        pair_raw = []
        f = (cells == i).astype(float) - (cells == j).astype(float)
        fs = uniform_filter(f, size=3, mode="constant")
        in_pair = (cells == i) | (cells == j)
        is_i = cells == i
        valid = (in_pair[:-1, :-1] & in_pair[:-1, 1:]
                 & in_pair[1:, :-1] & in_pair[1:, 1:])
        s00 = is_i[:-1, :-1]
        s10 = is_i[:-1, 1:]
        s11 = is_i[1:, 1:]
        s01 = is_i[1:, :-1]
        mixed = valid & ~((s00 == s10) & (s00 == s11) & (s00 == s01))
        for iy, ix in zip(*np.nonzero(mixed)):
            corner_pos = [grid.origin + h * np.array([ix + a + 0.5,
                                                      iy + b + 0.5])
                          for a, b in ((0, 0), (1, 0), (1, 1), (0, 1))]
            raw = (s00[iy, ix], s10[iy, ix], s11[iy, ix], s01[iy, ix])
            vals = (fs[iy, ix], fs[iy, ix + 1],
                    fs[iy + 1, ix + 1], fs[iy + 1, ix])
            crossings = {}
            for e, (a, b) in enumerate(_EDGES):
                if raw[a] == raw[b]:
                    continue
                va, vb = vals[a], vals[b]
                tpos = 0.5 if va == vb else np.clip(va / (va - vb), 0.0, 1.0)
                crossings[e] = (1.0 - tpos) * corner_pos[a] \
                    + tpos * corner_pos[b]
            if len(crossings) == 2:
                links = [tuple(crossings)]
            else:
                # saddle: the smoothed center value decides which
                # diagonal is connected
                center = 0.25 * sum(vals)
                plus_corners = (0, 2) if raw[0] else (1, 3)
                if center >= 0.0:
                    # the i corners join through the center, so each j
                    # corner is cut off by its own segment
                    cut = (1, 3) if raw[0] else (0, 2)
                else:
                    cut = plus_corners
                links = []
                for corner in cut:
                    e_in = corner
                    e_out = (corner - 1) % 4
                    links.append((e_out, e_in))
            gx = ((vals[1] + vals[2]) - (vals[0] + vals[3])) / (2.0 * h)
            gy = ((vals[2] + vals[3]) - (vals[0] + vals[1])) / (2.0 * h)
            g = np.array([gx, gy])
            gn = np.linalg.norm(g)
            for ea, eb in links:
                p0, p1 = crossings[ea], crossings[eb]
                if gn > 0.0:
                    n = -g / gn
                else:
                    d = p1 - p0
                    n = np.array([-d[1], d[0]])
                    n /= np.linalg.norm(n)
                    bias = sum(corner_pos[c] for c in range(4)
                               if not raw[c]) / max(sum(
                                   1 for c in range(4) if not raw[c]), 1)
                    if float((bias - 0.5 * (p0 + p1)) @ n) < 0.0:
                        n = -n
                pair_raw.append((p0, p1, n))
        for p0, p1, n in _relax_chains(pair_raw, h):
            segs.append((p0, p1, i, j, n))

    if not segs:
        return InterfaceSoup(np.empty((0, 2, 2)), np.empty((0, 2)),
                             np.empty((0, 2)), h, grid.t)
    endpoints = np.array([(p0, p1) for p0, p1, _, _, _ in segs])
    pairs = np.array([(i, j) for _, _, i, j, _ in segs])
    normals = np.array([n for _, _, _, _, n in segs])
    return InterfaceSoup(endpoints, pairs, normals, h, grid.t)


def _point_segment_distance(p, a, b):
    d = b - a
    denom = float(d @ d)
    if denom == 0.0:
        c = a
    else:
        tpos = np.clip(float((p - a) @ d) / denom, 0.0, 1.0)
        c = a + tpos * d
    return float(np.linalg.norm(p - c)), c


def estimate_velocity(soup, soup_next, dt, search_radius=None):
    """Fill normal velocities by nearest-interface matching.

    The velocity at a segment midpoint is the signed distance to the
    closest next-time segment of the same pair, divided by dt, positive
    in the direction of the stored normal.  Segments with no same-pair
    interface within the search radius (default ten cells) keep NaN.
    Returns the soup with velocities filled.
    """
    if search_radius is None:
        search_radius = 10.0 * soup.h
    for pair in soup.pairs_present():
        rows = soup.select(pair)
        nxt = soup_next.select(pair)
        if nxt.size == 0:
            continue
        mids = soup_next.midpoints[nxt]
        tree = cKDTree(mids)
        k = min(6, len(nxt))
        for r in rows:
            p = soup.midpoints[r]
            _, cand = tree.query(p, k=k)
            cand = np.atleast_1d(cand)
            best = np.inf
            closest = None
            for c in cand:
                seg = soup_next.endpoints[nxt[c]]
                d, cp = _point_segment_distance(p, seg[0], seg[1])
                if d < best:
                    best, closest = d, cp
            if best > search_radius:
                continue
            sign = 1.0 if float((closest - p) @ soup.normals[r]) >= 0.0 \
                else -1.0
            soup.velocity[r] = sign * best / dt
    return soup


def perturb(grid, mode, amplitude, direction=(1.0, 0.0), band=None,
            seed=0, center=(0.0, 0.0), phase=None):
    """Perturbed copy of a grid.

    mode "shift": translate the phases by amplitude*direction, rounded
    to whole cells (edge rows replicate inward).  mode "noise": within
    a band (default three cells) around the interfaces, reassign each
    cell with probability `amplitude` to the phase of a random
    4-neighbor.  mode "seed": overwrite the disk of radius `amplitude`
    at `center` with the given phase.
    """
    out = grid.copy()
    if mode == "shift":
        delta = amplitude * np.asarray(direction, dtype=float)
        sx, sy = int(round(delta[0] / grid.h)), int(round(delta[1] / grid.h))
        src_x = np.clip(np.arange(grid.nx) - sx, 0, grid.nx - 1)
        src_y = np.clip(np.arange(grid.ny) - sy, 0, grid.ny - 1)
        out.cells = grid.cells[np.ix_(src_y, src_x)].copy()
        return out
    if mode == "noise":
        if band is None:
            band = 3.0 * grid.h
        rng = np.random.default_rng(seed)
        it = max(int(np.ceil(band / grid.h)), 1)
        zone = binary_dilation(grid.interface_mask(), iterations=it)
        flip = zone & (rng.random(grid.cells.shape) < amplitude)
        c = grid.cells
        neighbors = np.stack([
            np.vstack([c[:1, :], c[:-1, :]]),
            np.vstack([c[1:, :], c[-1:, :]]),
            np.hstack([c[:, :1], c[:, :-1]]),
            np.hstack([c[:, 1:], c[:, -1:]]),
        ])
        pick = rng.integers(0, 4, size=grid.cells.shape)
        repl = np.take_along_axis(neighbors, pick[None], axis=0)[0]
        out.cells = np.where(flip, repl, c).astype(np.int32)
        return out
    if mode == "seed":
        if phase is None:
            raise ValueError("seed mode needs a phase")
        if not 1 <= int(phase) <= grid.P:
            raise GridError("cell phases must lie in 1..P")
        x, y = grid.cell_centers()
        xx, yy = np.meshgrid(x, y)
        c = np.asarray(center, dtype=float)
        disk = (xx - c[0]) ** 2 + (yy - c[1]) ** 2 <= amplitude ** 2
        out.cells = np.where(disk, int(phase), grid.cells).astype(np.int32)
        return out
    raise ValueError("unknown perturbation mode %r" % (mode,))


def mbo_energy(grid, sigma):
    """Tension-weighted interface length of a grid."""
    return extract_interfaces(grid).energy(sigma)


_MAGIC = b"MCFG"


def save_grid(grid, path):
    """Binary dump: 16-byte header (magic, nx, ny, padding), row-major
    u8 phases; origin, cell size, time and phase count go to a JSON
    sidecar at path + ".json"."""
    if grid.P > 255:
        raise GridError("u8 storage limited to 255 phases")
    path = str(path)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII4x", _MAGIC, grid.nx, grid.ny))
        fh.write(grid.cells.astype(np.uint8).tobytes(order="C"))
    side = {"origin": [float(grid.origin[0]), float(grid.origin[1])],
            "h": grid.h, "t": grid.t, "P": grid.P}
    with open(path + ".json", "w") as fh:
        json.dump(side, fh)


def load_grid(path):
    path = str(path)
    with open(path, "rb") as fh:
        header = fh.read(16)
        magic, nx, ny = struct.unpack("<4sII4x", header)
        if magic != _MAGIC:
            raise GridError("not a phase grid file")
        data = np.frombuffer(fh.read(nx * ny), dtype=np.uint8)
    with open(path + ".json") as fh:
        side = json.load(fh)
    cells = data.reshape(ny, nx).astype(np.int32)
    return PhaseGrid(side["h"], side["origin"], cells, side["P"],
                     t=side["t"])
