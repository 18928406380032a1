"""Generate the coarse (level 1) meshes shipped in crates/core/data.

Point placement is a force-based relaxation (distmesh style) with a fixed
number of vertices; connectivity comes from scipy's Delaunay triangulation.
Run once; the output files are committed.

    python3 tools/gen_meshes.py crates/core/data
"""
import sys
import numpy as np
from scipy.spatial import Delaunay

BULGE = 1e-4


def edges_of(tri):
    e = np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


def triangulate(p, nfixed, outward, keep):
    """Delaunay of p, boundary points pushed slightly along `outward` so that
    collinear hull points are kept as vertices."""
    q = p.copy()
    q[:nfixed] += BULGE * outward
    tri = Delaunay(q, qhull_options="Qbb Qc Qz").simplices
    cent = p[tri].mean(axis=1)
    tri = tri[keep(cent)]
    # counterclockwise
    a = p[tri]
    area = (a[:, 1, 0] - a[:, 0, 0]) * (a[:, 2, 1] - a[:, 0, 1]) - (a[:, 2, 0] - a[:, 0, 0]) * (a[:, 1, 1] - a[:, 0, 1])
    flip = area < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return tri


def relax(p, nfixed, outward, keep, hfun, inside_project, iters=400, seed_dt=0.2):
    for it in range(iters):
        tri = triangulate(p, nfixed, outward, keep)
        bars = edges_of(tri)
        vec = p[bars[:, 0]] - p[bars[:, 1]]
        L = np.sqrt((vec ** 2).sum(axis=1))
        mid = 0.5 * (p[bars[:, 0]] + p[bars[:, 1]])
        hb = hfun(mid)
        L0 = hb * 1.2 * np.sqrt((L ** 2).sum() / (hb ** 2).sum())
        F = np.maximum(L0 - L, 0.0)
        Fv = (F / L)[:, None] * vec
        Ft = np.zeros_like(p)
        np.add.at(Ft, bars[:, 0], Fv)
        np.add.at(Ft, bars[:, 1], -Fv)
        Ft[:nfixed] = 0.0
        p = p + seed_dt * Ft
        p[nfixed:] = inside_project(p[nfixed:])
    return p


def fix_all_boundary_cells(p, tri, on_boundary):
    """Flip interior edges of cells whose three vertices are boundary vertices."""
    for _ in range(10):
        bad = [c for c in range(len(tri)) if all(on_boundary[tri[c]])]
        if not bad:
            return tri
        for c in bad:
            t = tri[c]
            # find the interior edge (shared with another cell)
            for k in range(3):
                a, b = t[k], t[(k + 1) % 3]
                other = [d for d in range(len(tri)) if d != c and a in tri[d] and b in tri[d]]
                if other:
                    d = other[0]
                    x = [v for v in tri[d] if v != a and v != b][0]
                    y = [v for v in t if v != a and v != b][0]
                    tri[c] = [y, a, x]
                    tri[d] = [y, x, b]
                    for e in (c, d):
                        q = p[tri[e]]
                        ar = (q[1, 0] - q[0, 0]) * (q[2, 1] - q[0, 1]) - (q[2, 0] - q[0, 0]) * (q[1, 1] - q[0, 1])
                        if ar < 0:
                            tri[e] = tri[e][[0, 2, 1]]
                    break
    return tri


def quality(p, tri):
    a = p[tri]
    e = np.stack([a[:, 1] - a[:, 0], a[:, 2] - a[:, 1], a[:, 0] - a[:, 2]], axis=1)
    L = np.sqrt((e ** 2).sum(axis=2))
    area = 0.5 * ((a[:, 1, 0] - a[:, 0, 0]) * (a[:, 2, 1] - a[:, 0, 1]) - (a[:, 2, 0] - a[:, 0, 0]) * (a[:, 1, 1] - a[:, 0, 1]))
    return L.max(), area.min(), (4 * np.sqrt(3) * area / (L ** 2).sum(axis=1)).min()


def boundary_edges(tri):
    e = np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    s = np.sort(e, axis=1)
    _, inv, cnt = np.unique(s, axis=0, return_inverse=True, return_counts=True)
    return e[cnt[inv.ravel()] == 1]


def write(path, p, tri, bedges, tagger):
    with open(path, "w") as f:
        f.write("ntri-mesh v1\n")
        f.write(f"vertices {len(p)}\n")
        for x, y in p:
            f.write(f"{float(x)!r} {float(y)!r}\n")
        f.write(f"cells {len(tri)}\n")
        for t in tri:
            f.write(f"{t[0]} {t[1]} {t[2]}\n")
        f.write(f"boundary {len(bedges)}\n")
        for a, b in bedges:
            f.write(f"{a} {b} {tagger(p[a], p[b])}\n")


def noflow(outdir):
    n_side = 12
    s = np.arange(n_side) / n_side
    bnd = np.vstack([
        np.c_[s, np.zeros(n_side)],
        np.c_[np.ones(n_side), s],
        np.c_[1 - s, np.ones(n_side)],
        np.c_[np.zeros(n_side), 1 - s],
    ])
    outward = np.zeros_like(bnd)
    for i, (x, y) in enumerate(bnd):
        c = np.array([x - 0.5, y - 0.5])
        outward[i] = c / np.linalg.norm(c) * (1 + 0 * x)
        # bulge profile vanishing at the corners
        if y == 0.0 or y == 1.0:
            outward[i] *= 4 * x * (1 - x)
        else:
            outward[i] *= 4 * y * (1 - y)
    nb = len(bnd)
    n_int = 233 - nb
    hfun = lambda x: np.ones(len(x))
    proj = lambda q: np.clip(q, 0.02, 0.98)
    keep = lambda c: np.ones(len(c), dtype=bool)
    best = None
    for seed in range(200):
        rng = np.random.default_rng(seed)
        p = np.vstack([bnd, rng.uniform(0.05, 0.95, size=(n_int, 2))])
        p = relax(p, nb, outward, keep, hfun, proj, iters=300)
        tri = triangulate(p, nb, outward, keep)
        onb = np.zeros(len(p), dtype=bool)
        onb[:nb] = True
        tri = fix_all_boundary_cells(p, tri, onb)
        h, amin, qmin = quality(p, tri)
        ok = len(tri) == 416 and amin > 0
        print(f"noflow seed {seed}: cells {len(tri)} h {h:.5f} min-area {amin:.2e} q {qmin:.3f}")
        if ok and 0.1052 <= h <= 0.1068 and qmin > 0.5:
            best = (p, tri)
            break
    p, tri = best

    def tag(a, b):
        return "dirichlet_all"

    write(f"{outdir}/noflow_l1.mesh", p, tri, boundary_edges(tri), tag)


def cylinder(outdir):
    cx, cy, r = 0.2, 0.2, 0.05
    W, H = 2.2, 0.41
    n_circ = 32

    def hfun(x):
        d = np.sqrt((x[:, 0] - cx) ** 2 + (x[:, 1] - cy) ** 2) - r
        return np.minimum(0.0105 + 0.22 * np.maximum(d, 0), 0.075)

    # boundary points along the rectangle distributed by the size function
    def side(a, b, n_target):
        t = np.linspace(0, 1, 4001)
        pts = a[None, :] + t[:, None] * (b - a)[None, :]
        dens = 1 / hfun(pts)
        cum = np.concatenate([[0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(t))])
        cum /= cum[-1]
        u = np.interp(np.arange(n_target) / n_target, cum, t)
        return a[None, :] + u[:, None] * (b - a)[None, :]

    corners = [np.array(c, dtype=float) for c in [(0, 0), (W, 0), (W, H), (0, H)]]
    # allocate 112 outer points: proportional to integrated density
    lens = []
    for k in range(4):
        a, b = corners[k], corners[(k + 1) % 4]
        t = np.linspace(0, 1, 2001)
        pts = a[None, :] + t[:, None] * (b - a)[None, :]
        lens.append(np.trapezoid(1 / hfun(pts), t) * np.linalg.norm(b - a))
    lens = np.array(lens)
    n_outer = 144 - n_circ
    alloc = np.floor(lens / lens.sum() * n_outer).astype(int)
    while alloc.sum() < n_outer:
        alloc[np.argmax(lens / lens.sum() * n_outer - alloc)] += 1
    outer = np.vstack([side(corners[k], corners[(k + 1) % 4], alloc[k]) for k in range(4)])
    ang = 2 * np.pi * np.arange(n_circ) / n_circ
    circ = np.c_[cx + r * np.cos(ang), cy + r * np.sin(ang)]
    bnd = np.vstack([outer, circ])
    nb = len(bnd)
    outward = np.zeros_like(bnd)
    for i, (x, y) in enumerate(outer):
        if y == 0.0:
            outward[i] = [0, -4 * (x / W) * (1 - x / W)]
        elif y == H:
            outward[i] = [0, 4 * (x / W) * (1 - x / W)]
        elif x == 0.0:
            outward[i] = [-4 * (y / H) * (1 - y / H), 0]
        else:
            outward[i] = [4 * (y / H) * (1 - y / H), 0]

    def keep(c):
        return (c[:, 0] - cx) ** 2 + (c[:, 1] - cy) ** 2 > r * r

    def proj(q):
        q = q.copy()
        m = 0.45 * hfun(q)
        q[:, 0] = np.clip(q[:, 0], m, W - m)
        q[:, 1] = np.clip(q[:, 1], m, H - m)
        d = np.sqrt((q[:, 0] - cx) ** 2 + (q[:, 1] - cy) ** 2)
        rr = r + 0.45 * 0.0105
        inside = d < rr
        q[inside, 0] = cx + (q[inside, 0] - cx) / d[inside] * rr
        q[inside, 1] = cy + (q[inside, 1] - cy) / d[inside] * rr
        return q

    n_int = 848 - nb
    for seed in range(50):
        rng = np.random.default_rng(seed)
        # rejection sampling with density ~ 1/h^2
        pts = []
        while len(pts) < n_int:
            c = rng.uniform([0, 0], [W, H], size=(4000, 2))
            c = c[keep(c)]
            w = (hfun(c).min() / hfun(c)) ** 2
            c = c[rng.uniform(size=len(c)) < w]
            pts.extend(c.tolist())
        p = np.vstack([bnd, proj(np.array(pts[:n_int]))])
        p = relax(p, nb, outward, keep, hfun, proj, iters=500)
        ow = outward
        tri = triangulate(p, nb, ow, keep)
        onb = np.zeros(len(p), dtype=bool)
        onb[:nb] = True
        tri = fix_all_boundary_cells(p, tri, onb)
        h, amin, qmin = quality(p, tri)
        be = boundary_edges(tri)
        print(f"cylinder seed {seed}: cells {len(tri)} bedges {len(be)} h {h:.5f} min-area {amin:.2e} q {qmin:.3f}")
        if len(tri) == 1552 and len(be) == 144 and amin > 0 and qmin > 0.5:
            break

    def tag(a, b):
        eps = 1e-12
        if abs(a[0]) < eps and abs(b[0]) < eps:
            return "inlet"
        if abs(a[0] - W) < eps and abs(b[0] - W) < eps:
            return "outlet"
        if (abs(a[1]) < eps and abs(b[1]) < eps) or (abs(a[1] - H) < eps and abs(b[1] - H) < eps):
            return "wall"
        return "cylinder"

    write(f"{outdir}/cylinder_l1.mesh", p, tri, be, tag)


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "crates/core/data"
    which = sys.argv[2:] or ["noflow", "cylinder"]
    if "noflow" in which:
        noflow(out)
    if "cylinder" in which:
        cylinder(out)
