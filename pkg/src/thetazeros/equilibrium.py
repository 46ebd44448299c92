"""Green's equilibrium measure of a grid set K, its energy and capacity.

min over mu of I(mu) = -E(mu)/2 + sup_K U^mu equals the max over measures
lam on K of E(lam)/2, attained at mu = lam (minimax in the sup term). The
smooth concave problem is solved by away-step Frank-Wolfe, and the support
found that way is polished by an exact active-set solve of the optimality
system U = F on the support, U <= F on the rest of K.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, minres

from .potential import GridKernel, GridMeasure, rate_I
from .torus import Torus

_DENSE_MAX = 2500


class _KernelOnK:
    """Kernel restricted to the nodes of K, dense when small, FFT otherwise."""

    def __init__(self, kern: GridKernel, idx):
        self.kern = kern
        self.idx = idx
        self.M = kern.M
        self.dense = kern.submatrix(idx) if idx.size <= _DENSE_MAX else None
        self.diag = kern.kbar[0, 0]

    def mv(self, w, sub=None):
        """K w for weights w on ``sub`` (positions into idx), evaluated on all of K."""
        sub = np.arange(self.idx.size) if sub is None else sub
        if self.dense is not None:
            return self.dense[:, sub] @ w
        full = np.zeros(self.M * self.M)
        full[self.idx[sub]] = w
        return self.kern.apply(full.reshape(self.M, self.M)).ravel()[self.idx]

    def col(self, i):
        if self.dense is not None:
            return self.dense[:, i]
        a, b = divmod(int(self.idx[i]), self.M)
        return self.kern.column(a, b).ravel()[self.idx]


@dataclass
class EquilibriumResult:
    measure: GridMeasure
    E0: float
    energy: float
    rate_value: float
    certificate: dict
    converged: bool
    iterations: int
    history: list = field(default_factory=list)

    @property
    def capacity(self):
        return float(np.exp(2 * self.E0))

    def summary(self):
        return {
            "E0": self.E0,
            "capacity": self.capacity,
            "energy": self.energy,
            "minus_energy": -self.energy,
            "rate_at_minimizer": self.rate_value,
            "converged": self.converged,
            "iterations": self.iterations,
            **self.certificate,
        }


def _frank_wolfe(op: _KernelOnK, w, max_iter, gap_tol, history):
    """Away-step Frank-Wolfe for max w^T K w on the simplex."""
    U = op.mv(w)
    E = float(w @ U)
    it = 0
    for it in range(1, max_iter + 1):
        s = int(np.argmax(U))
        supp = np.nonzero(w > 0)[0]
        v = supp[int(np.argmin(U[supp]))]
        gap = U[s] - E
        history.append((E, 2 * gap))
        if 2 * gap < gap_tol:
            break
        away_gap = E - U[v]
        if gap >= away_gap:
            # toward vertex s
            Ks = op.col(s)
            dKd = Ks[s] - 2 * U[s] + E
            slope = 2 * (U[s] - E)
            gmax = 1.0
            dU = Ks - U
            d_sign = 1
        else:
            Kv = op.col(v)
            dKd = Kv[v] - 2 * U[v] + E
            slope = 2 * (E - U[v])
            gmax = w[v] / (1 - w[v]) if w[v] < 1 else np.inf
            dU = U - Kv
            d_sign = -1
        # maximise E + slope g + dKd g^2 with dKd <= 0
        g = gmax if dKd >= 0 else min(gmax, -slope / (2 * dKd))
        if d_sign > 0:
            w = (1 - g) * w
            w[s] += g
        else:
            w = (1 + g) * w
            w[v] -= g
            if g == gmax:
                w[v] = 0.0
        w = np.clip(w, 0, None)
        U = U + g * dU
        E = E + slope * g + dKd * g * g
    return w, U, E, it


def _bordered_solve(op: _KernelOnK, S):
    """Solve K_SS x = F 1, sum x = 1; returns (x, F)."""
    n = S.size
    if op.dense is not None:
        A = np.zeros((n + 1, n + 1))
        A[:n, :n] = op.dense[np.ix_(S, S)]
        A[:n, n] = -1.0
        A[n, :n] = 1.0
        rhs = np.zeros(n + 1)
        rhs[n] = 1.0
        sol = np.linalg.solve(A, rhs)
        return sol[:n], sol[n]

    def mv(y):
        out = np.empty(n + 1)
        out[:n] = op.mv(y[:n], S)[S] - y[n]
        out[n] = -y[:n].sum()
        return out

    # symmetric form: [K -1; -1^T 0] [x; F] = [0; -1]
    A = LinearOperator((n + 1, n + 1), matvec=mv, dtype=float)
    rhs = np.zeros(n + 1)
    rhs[n] = -1.0
    sol, info = minres(A, rhs, rtol=1e-14, maxiter=20 * n)
    return sol[:n], sol[n]


def _active_set(op: _KernelOnK, w, tol, max_rounds=200):
    S = np.nonzero(w > 0)[0]
    for _ in range(max_rounds):
        x, F = _bordered_solve(op, S)
        if np.any(x < 0):
            cur = w[S]
            neg = x < 0
            alpha = np.min(cur[neg] / (cur[neg] - x[neg]))
            new = cur + alpha * (x - cur)
            w = np.zeros_like(w)
            w[S] = np.clip(new, 0, None)
            S = S[new > 1e-15 * new.max()]
            continue
        w = np.zeros_like(w)
        w[S] = x
        U = op.mv(x, S)
        out = np.setdiff1d(np.arange(w.size), S)
        viol = out[U[out] > F + tol]
        if viol.size == 0:
            return w, U, F, True
        S = np.union1d(S, viol)
    return w, op.mv(w), float(w @ op.mv(w)), False


def solve_equilibrium(
    torus: Torus,
    mask,
    tol=1e-10,
    max_iter=5000,
    init="uniform",
    rng=None,
    polish=True,
):
    """Equilibrium measure of the node set ``mask`` (M x M booleans).

    ``init`` is "uniform", "random" (Dirichlet weights on K) or an array of
    starting weights. Returns an EquilibriumResult; ``converged`` is False
    when neither the Frank-Wolfe gap nor the polished certificate reached
    ``tol`` (the best iterate is still returned).
    """
    mask = np.asarray(mask, bool)
    M = mask.shape[0]
    idx = np.flatnonzero(mask)
    if idx.size < 2:
        raise ValueError("K must contain at least 2 grid cells")
    op = _KernelOnK(GridKernel.get(torus, M), idx)
    if isinstance(init, str):
        if init == "uniform":
            w = np.full(idx.size, 1.0 / idx.size)
        elif init == "random":
            rng = rng or np.random.default_rng()
            w = rng.dirichlet(np.ones(idx.size))
        else:
            raise ValueError(f"unknown init {init!r}")
    else:
        w = np.asarray(init, float).ravel()
        w = w[idx] if w.size == M * M else w
        w = w / w.sum()
    history = []
    w, U, E, it = _frank_wolfe(op, w, max_iter, tol, history)
    converged = history[-1][1] < tol
    if polish:
        wp, Up, F, ok = _active_set(op, w, tol)
        if ok and float(wp @ Up) >= E - 1e-14:
            w, U, E = wp, Up, float(wp @ Up)
            converged = True
    weights = np.zeros(M * M)
    weights[idx] = np.clip(w, 0, None)
    weights /= weights.sum()
    mu = GridMeasure(torus, weights.reshape(M, M), mask)
    cert = frostman_certificate(mu)
    return EquilibriumResult(
        measure=mu,
        E0=0.5 * cert["energy"],
        energy=cert["energy"],
        rate_value=rate_I(mu),
        certificate=cert,
        converged=converged,
        iterations=it,
        history=history,
    )


def frostman_certificate(mu: GridMeasure, rel=1e-12):
    """Spread of U on supp(mu) and excess of U over its support value on K."""
    U = mu.kernel.apply(mu.weights)
    w = mu.weights
    supp = w > rel * w.max()
    E = float(np.sum(w * U))
    on = U[supp]
    off = U[mu.mask & ~supp]
    return {
        "energy": E,
        "support_size": int(supp.sum()),
        "support_spread": float(on.max() - on.min()),
        "support_residual": float(np.max(np.abs(on - E))),
        "off_support_excess": float(max(0.0, (off.max() - E) if off.size else 0.0)),
    }


def capacity(torus: Torus, mask, **kw):
    """Green's capacity exp(2 E0) of the node set."""
    return solve_equilibrium(torus, mask, **kw).capacity


def total_variation(mu: GridMeasure, nu: GridMeasure):
    return 0.5 * float(np.abs(mu.weights - nu.weights).sum())
