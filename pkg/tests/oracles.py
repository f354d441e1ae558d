"""Brute-force references, kept independent of the fast paths under test."""

import numpy as np


def floyd_warshall(n, edges):
    """All-pairs shortest paths by triple loop over explicit edge tuples."""
    dist = [[float("inf")] * n for _ in range(n)]
    for i in range(n):
        dist[i][i] = 0.0
    for e in edges:
        u, v, w = int(e[0]), int(e[1]), float(e[-1])
        if w < dist[u][v]:
            dist[u][v] = w
    for k in range(n):
        dk = dist[k]
        for i in range(n):
            dik = dist[i][k]
            if dik == float("inf"):
                continue
            row = dist[i]
            for j in range(n):
                cand = dik + dk[j]
                if cand < row[j]:
                    row[j] = cand
    return np.array(dist)


def floyd_warshall_np(n, edges):
    """Row-vectorized all-pairs reference for larger instances."""
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for e in edges:
        u, v, w = int(e[0]), int(e[1]), float(e[-1])
        if w < dist[u, v]:
            dist[u, v] = w
    for k in range(n):
        np.minimum(dist, dist[:, k, None] + dist[None, k, :], out=dist)
    return dist


def min_return_cost_oracle(n, edges, dist=None):
    if dist is None:
        dist = floyd_warshall(n, edges)
    out = np.full(n, np.inf)
    for e in edges:
        u, v, w = int(e[0]), int(e[1]), float(e[-1])
        out[u] = min(out[u], w + dist[v, u])
    return out


def omega_oracle(n, edges, Y, eps, closed=False, dist=None):
    if dist is None:
        dist = floyd_warshall(n, edges)
    Y = set(int(y) for y in Y)
    first = np.full(n, np.inf)
    for e in edges:
        u, v, w = int(e[0]), int(e[1]), float(e[-1])
        if u in Y:
            first[v] = min(first[v], w)
    best = (first[:, None] + dist).min(axis=0)
    hit = best <= eps if closed else best < eps
    return np.nonzero(hit)[0]


def chain_enumeration_oracle(n, edges, Y, eps, max_steps):
    """Endpoints reachable by chains of at most max_steps jumps, cost < eps."""
    adj = {}
    for e in edges:
        u, v, w = int(e[0]), int(e[1]), float(e[-1])
        adj.setdefault(u, []).append((v, w))
    frontier = {}
    for y in Y:
        for v, w in adj.get(int(y), []):
            if w < eps and w < frontier.get(v, float("inf")):
                frontier[v] = w
    reached = dict(frontier)
    for _ in range(max_steps - 1):
        nxt = {}
        for u, cost in frontier.items():
            for v, w in adj.get(u, []):
                c = cost + w
                if c < eps and c < reached.get(v, float("inf")) and c < nxt.get(v, float("inf")):
                    nxt[v] = c
        for v, c in nxt.items():
            if c < reached.get(v, float("inf")):
                reached[v] = c
        frontier = nxt
        if not frontier:
            break
    return np.asarray(sorted(reached), dtype=np.int64)


def scc_oracle(n, edges):
    """Kosaraju strongly connected components, iterative DFS."""
    fwd = [[] for _ in range(n)]
    rev = [[] for _ in range(n)]
    for e in edges:
        u, v = int(e[0]), int(e[1])
        fwd[u].append(v)
        rev[v].append(u)
    order = []
    seen = [False] * n
    for s in range(n):
        if seen[s]:
            continue
        stack = [(s, iter(fwd[s]))]
        seen[s] = True
        while stack:
            node, it = stack[-1]
            advanced = False
            for nb in it:
                if not seen[nb]:
                    seen[nb] = True
                    stack.append((nb, iter(fwd[nb])))
                    advanced = True
                    break
            if not advanced:
                order.append(node)
                stack.pop()
    label = [-1] * n
    comp = 0
    for s in reversed(order):
        if label[s] != -1:
            continue
        stack = [s]
        label[s] = comp
        while stack:
            node = stack.pop()
            for nb in rev[node]:
                if label[nb] == -1:
                    label[nb] = comp
                    stack.append(nb)
        comp += 1
    return np.asarray(label)


def cr_oracle(n, edges, eps):
    """Chain recurrent nodes: in an SCC with an internal edge, per-jump budget."""
    kept = [(int(e[0]), int(e[1])) for e in edges if float(e[-1]) < eps]
    label = scc_oracle(n, kept)
    sizes = np.bincount(label, minlength=label.max() + 1 if n else 0)
    out = set(int(i) for i in range(n) if sizes[label[i]] >= 2)
    out.update(u for u, v in kept if u == v)
    return np.asarray(sorted(out), dtype=np.int64)


def max_projection_gap(space, samples):
    """Worst distance from sample coords to the nearest grid point."""
    worst = 0.0
    for lo in range(0, samples.shape[0], 2048):
        d = space.dist_coords_to_subset(samples[lo:lo + 2048], np.arange(space.n))
        worst = max(worst, float(d.max()))
    return worst


def random_digraph(rng, max_nodes=200):
    n = int(rng.integers(4, max_nodes + 1))
    n_edges = max(1, int(n * rng.uniform(1.0, 6.0)))
    u = rng.integers(0, n, n_edges)
    v = rng.integers(0, n, n_edges)
    w = rng.integers(1, 2 ** 20, n_edges) / 2.0 ** 20
    return n, list(zip(u.tolist(), v.tolist(), w.tolist()))
