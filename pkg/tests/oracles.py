"""Independent reference computations used as test oracles."""
import math

import numpy as np


def _dot(W, x):
    return [sum(W[r][c] * x[c] for c in range(len(x))) for r in range(len(W))]


def _relu(x):
    return [v if v > 0 else 0.0 for v in x]


def _affine(W, b, x):
    return [a + bb for a, bb in zip(_dot(W, x), b)]


def naive_gnn(weights, graph, layers=3, limit=3.0):
    """Graph network forward pass with plain nested loops over vertices and edges."""
    t = {k: v.tolist() for k, v in weights.tensors.items()}
    verts = list(graph.vertices)
    idx = {v.id: i for i, v in enumerate(verts)}
    h = [_relu(_affine(t["enc_v.W"], t["enc_v.b"], list(v.vector()))) for v in verts]
    directed = []
    for e in graph.edges:
        s, r = idx[e.source], idx[e.target]
        directed.append((s, r, _relu(_affine(t["enc_e.W"], t["enc_e.b"], list(e.features.vector())))))
        directed.append((r, s, _relu(_affine(t["enc_e.W"], t["enc_e.b"],
                                             list(e.features.vector(reverse=True))))))
    for k in range(layers):
        new = []
        for i in range(len(verts)):
            agg = [0.0] * len(h[i])
            for s, r, e in directed:
                if r != i:
                    continue
                m = _relu(_affine(t[f"mp{k}.msg.W"], t[f"mp{k}.msg.b"], h[s] + e))
                agg = [a + b for a, b in zip(agg, m)]
            new.append(_relu(_affine(t[f"mp{k}.upd.W"], t[f"mp{k}.upd.b"], h[i] + agg)))
        h = new
    out = []
    for i in range(len(verts)):
        z = _relu(_affine(t["dec.W1"], t["dec.b1"], h[i]))
        out.append(limit * math.tanh(_affine(t["dec.W2"], t["dec.b2"], z)[0]))
    return out


def quintic_closed_form(v0, d, v1, T, t):
    """Position and speed of the rest-to-rest style quintic with a0 = a1 = 0, via a linear solve."""
    A = np.array([[T ** 3, T ** 4, T ** 5],
                  [3 * T ** 2, 4 * T ** 3, 5 * T ** 4],
                  [6 * T, 12 * T ** 2, 20 * T ** 3]], dtype=float)
    rhs = np.array([d - v0 * T, v1 - v0, 0.0])
    c3, c4, c5 = np.linalg.solve(A, rhs)
    s = v0 * t + c3 * t ** 3 + c4 * t ** 4 + c5 * t ** 5
    v = v0 + 3 * c3 * t ** 2 + 4 * c4 * t ** 3 + 5 * c5 * t ** 4
    return s, v


def _inside_convex(poly, pts):
    signs = []
    for k in range(len(poly)):
        a, b = poly[k], poly[(k + 1) % len(poly)]
        signs.append((b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0]))
    signs = np.stack(signs)
    return np.all(signs >= 0, axis=0) | np.all(signs <= 0, axis=0)


def _sample_quad(c, n, rng):
    u, v = rng.random(n), rng.random(n)
    return c[0] + np.outer(u, c[1] - c[0]) + np.outer(v, c[3] - c[0])


def monte_carlo_overlap(ca, cb, n=20000, seed=0):
    """Whether two rectangles overlap, by sampling each and testing containment in the other."""
    rng = np.random.default_rng(seed)
    return bool(_inside_convex(cb, _sample_quad(ca, n, rng)).any()
                or _inside_convex(ca, _sample_quad(cb, n, rng)).any())


def fine_bicycle(x, y, heading, speed, steer_fn, duration, wheelbase, dt=1e-3):
    """Kinematic bicycle integrated at 1 kHz with a steering callback (x, y, heading, speed) -> delta."""
    n = int(round(duration / dt))
    for _ in range(n):
        delta = steer_fn(x, y, heading, speed)
        x += speed * math.cos(heading) * dt
        y += speed * math.sin(heading) * dt
        heading += speed / wheelbase * math.tan(delta) * dt
    return x, y, heading
