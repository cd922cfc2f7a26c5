"""Brute-force reference computations in plain Python.

These loop over explicit coordinate tuples and never call into the
package's vectorized paths, so they serve as independent checks.
"""

import math
from itertools import permutations


def euclid(a, b):
    acc = (b[0] - a[0]) * (b[0] - a[0])
    for k in range(1, len(a)):
        acc += (b[k] - a[k]) * (b[k] - a[k])
    return math.sqrt(acc)


def koranyi(p, q):
    # |q^{-1} p| by the group law, written out by hand
    x, y, t = p
    u, v, s = q
    a, b, c = x - u, y - v, t - s + (x * v - u * y) / 2
    return ((a * a + b * b) ** 2 + c * c) ** 0.25


def fiber_dist(dist, x, fiber):
    return min(dist(x, a) for a in fiber)


def graph_points(bases, heights):
    return [tuple(b) + (h,) if isinstance(b, tuple) else (b, h) for b, h in zip(bases, heights)]


def foliation_fibers(bases, fiber_grid):
    return [[(b, s) for s in fiber_grid] for b in bases]


def section_tables(dist, sec, fibers):
    n = len(sec)
    D = [[dist(sec[i], sec[j]) for j in range(n)] for i in range(n)]
    F = [[fiber_dist(dist, sec[i], fibers[j]) for j in range(n)] for i in range(n)]
    return D, F


def triples(D, F):
    out = []
    for y1, y2, y3 in permutations(range(len(D)), 3):
        out.append((y1, y2, y3, F[y2][y1] / F[y3][y1], D[y1][y2] / D[y1][y3]))
    return out


def envelope(records):
    peak = {}
    for *_, t, R in records:
        peak[t] = max(peak.get(t, -math.inf), R)
    ts = sorted(peak)
    vals, run = [], -math.inf
    for t in ts:
        run = max(run, peak[t])
        vals.append(run)
    return ts, vals


def lipschitz(D, F, alpha=1.0):
    n = len(D)
    return max(D[i][j] / F[i][j] ** alpha for i in range(n) for j in range(n) if i != j)


def min_gap(D):
    n = len(D)
    return min(D[i][j] for i in range(n) for j in range(n) if i != j)
