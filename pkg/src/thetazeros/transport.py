"""Wasserstein-1 distance between measures binned on a coarse torus grid.

The ground metric is the shortest-path metric of the m x m torus grid graph
with 8-neighbour edges of their true lengths. W1 for a graph metric is a
min-cost flow along edges, solved as a sparse LP.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .torus import Torus

_STEPS = ((1, 0), (0, 1), (1, 1), (1, -1))


class TorusGraph:
    def __init__(self, torus: Torus, m: int):
        self.torus = torus
        self.m = m
        n = m * m
        i, j = np.divmod(np.arange(n), m)
        tails, heads, lens = [], [], []
        for da, db in _STEPS:
            nb = ((i + da) % m) * m + (j + db) % m
            L = abs(torus.from_lattice(da / m, db / m))
            for t, h in ((np.arange(n), nb), (nb, np.arange(n))):
                tails.append(t)
                heads.append(h)
                lens.append(np.full(n, L))
        self.tail = np.concatenate(tails)
        self.head = np.concatenate(heads)
        self.length = np.concatenate(lens)
        e = self.tail.size
        rows = np.concatenate([self.tail, self.head])
        cols = np.concatenate([np.arange(e), np.arange(e)])
        vals = np.concatenate([np.ones(e), -np.ones(e)])
        # drop one redundant conservation row
        keep = rows < n - 1
        self.incidence = coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n - 1, e)).tocsr()

    def bin_points(self, z, mass=None):
        """Histogram of points on the m x m cells, flattened, summing to 1."""
        a, b = self.torus.lattice_coords(self.torus.reduce(np.asarray(z, complex)))
        ia = np.minimum((a * self.m).astype(int), self.m - 1)
        ib = np.minimum((b * self.m).astype(int), self.m - 1)
        mass = np.full(ia.size, 1.0 / ia.size) if mass is None else np.asarray(mass, float)
        return np.bincount(ia * self.m + ib, weights=mass, minlength=self.m**2)

    def bin_grid(self, weights):
        """Coarsen an M x M weight array (M a multiple of m)."""
        M = weights.shape[0]
        if M % self.m:
            raise ValueError("fine grid size must be a multiple of the coarse size")
        r = M // self.m
        return weights.reshape(self.m, r, self.m, r).sum(axis=(1, 3)).ravel()

    def w1(self, p, q):
        """W1 between two histograms on the coarse cells."""
        d = np.asarray(p, float) - np.asarray(q, float)
        res = linprog(self.length, A_eq=self.incidence, b_eq=d[:-1], bounds=(0, None), method="highs")
        if res.status != 0:
            raise RuntimeError(f"transport LP failed: {res.message}")
        return float(res.fun)

    def path_metric(self):
        """All-pairs shortest path distances (oracle for small m)."""
        from scipy.sparse.csgraph import shortest_path

        n = self.m**2
        A = coo_matrix((self.length, (self.tail, self.head)), shape=(n, n)).tocsr()
        return shortest_path(A, directed=False)
