"""Brute-force reference implementations, used only by the test suite.

Nothing here imports the production algorithms it checks. Each oracle is a
direct transcription of the definition, written for obviousness rather than
speed.
"""

from __future__ import annotations

import math

CORE, BORDER, OUTLIER = "core", "border", "outlier"


def naive_zscore(points):
    n, d = len(points), len(points[0])
    cols = []
    for j in range(d):
        col = [p[j] for p in points]
        mu = math.fsum(col) / n
        sd = math.sqrt(math.fsum((v - mu) ** 2 for v in col) / n)
        if sd > 1e-12 * max(1.0, abs(mu)):
            cols.append([(v - mu) / sd for v in col])
    return [tuple(c[i] for c in cols) for i in range(n)]


def naive_dbscan(points, eps, min_pts, normalize=True):
    """Labels as (kind, cluster_id) with cluster_id None for outliers.

    1. Count neighbours pairwise (a point is its own neighbour, dist <= eps).
    2. Core components: each core starts with its own index as label, then
       every core repeatedly takes the minimum label of its core neighbours
       until nothing changes.
    3. Components are numbered by their lowest core index.
    4. Border attachment: for each cluster in id order, non-core points
       reachable from it through chains of non-core neighbours join it,
       unless an earlier cluster already claimed them.
    """
    pts = naive_zscore(points) if normalize else [tuple(map(float, p)) for p in points]
    n = len(pts)
    nbr = [[j for j in range(n) if math.dist(pts[i], pts[j]) <= eps] for i in range(n)]
    core = [len(nbr[i]) >= min_pts for i in range(n)]

    comp = [i if core[i] else None for i in range(n)]
    changed = True
    while changed:
        changed = False
        for i in range(n):
            if not core[i]:
                continue
            m = min(comp[j] for j in nbr[i] if core[j])
            if m < comp[i]:
                comp[i] = m
                changed = True
    roots = sorted({comp[i] for i in range(n) if core[i]})
    cid = {r: k for k, r in enumerate(roots)}
    cluster = [cid[comp[i]] if core[i] else None for i in range(n)]

    for k in range(len(roots)):
        members = {i for i in range(n) if core[i] and cluster[i] == k}
        reach = set()
        grew = True
        while grew:
            grew = False
            for i in range(n):
                if core[i] or i in reach:
                    continue
                if any(j in members or j in reach for j in nbr[i]):
                    reach.add(i)
                    grew = True
        for i in sorted(reach):
            if cluster[i] is None:
                cluster[i] = k

    out = []
    for i in range(n):
        if cluster[i] is None:
            out.append((OUTLIER, None))
        else:
            out.append((CORE if core[i] else BORDER, cluster[i]))
    return out


def naive_chpp(power, period_ms, threshold, min_duration_ms, t0=0):
    """CHPP intervals as (start_ms, end_ms) with end exclusive, by a per-sample scan."""
    periods = []
    start = None
    for i, p in enumerate(list(power) + [-math.inf]):
        if p > threshold:
            if start is None:
                start = i
        elif start is not None:
            if (i - start) * period_ms >= min_duration_ms:
                periods.append((t0 + start * period_ms, t0 + i * period_ms))
            start = None
    return periods


def naive_paths(succ, root, max_len):
    """Every simple path from ``root`` with at most ``max_len`` nodes, sorted lexicographically."""
    found = []

    def dfs(path):
        found.append(tuple(path))
        if len(path) == max_len:
            return
        for v in succ.get(path[-1], ()):
            if v not in path:
                dfs(path + [v])

    dfs([root])
    return sorted(found)
