"""Monte Carlo sweeps over N: ball probabilities, concentration, rate consistency.

Every sweep is reproducible from its seed: the samples for N are drawn in
fixed-size chunks, and chunk c uses the stream SeedSequence([seed, index of N]).spawn()[c],
so the thread count only changes how chunks are scheduled.
"""
from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.stats import binomtest

from .equilibrium import solve_equilibrium
from .jpc import jpc_density_g1_fsh, sample_fsh_zeros, sample_pl_zeros
from .measures import BaseMeasure
from .potential import GridKernel, GridMeasure, rate_IN
from .sections import SectionSpace, ThetaBasis
from .torus import Torus
from .transport import TorusGraph
from .zeros import Configuration

ENSEMBLES = ("fsh", "pl")


def make_torus(geometry: dict):
    tau = geometry.get("tau", [0.0, 1.0])
    tau = complex(*tau) if isinstance(tau, (list, tuple)) else complex(tau)
    return Torus(tau, geometry.get("precision", 1e-15))


@dataclass
class SweepConfig:
    """Inputs of a sweep.

    ``measure`` and ``target`` use the measure config format ({"kind": ...,
    parameters}); target kind "equilibrium" means the equilibrium measure of
    supp(nu). ``grid`` is the resolution of the equilibrium/rate grid,
    ``coarse`` the transport grid (must divide ``grid``), ``rate_grid`` the
    quadrature used for the discrete rate I_N.
    """

    N: list
    samples: int = 500
    ensemble: str = "fsh"
    geometry: dict = field(default_factory=lambda: {"tau": [0.0, 1.0]})
    measure: dict = field(default_factory=lambda: {"kind": "uniform-on-torus", "M": 128})
    target: dict = field(default_factory=lambda: {"kind": "equilibrium"})
    delta: float = 0.05
    seed: int = 0
    out_dir: str | None = None
    grid: int = 32
    coarse: int = 16
    rate_grid: int = 64
    chunk: int = 50
    threads: int = 1
    max_failure_rate: float = 0.01
    rate_stats: bool = True
    bracket: bool = True

    def __post_init__(self):
        self.N = [int(n) for n in np.atleast_1d(self.N)]
        if not self.N or min(self.N) < 1:
            raise ValueError("N list must hold positive degrees")
        if any(b <= a for a, b in zip(self.N, self.N[1:])):
            raise ValueError("N list must be strictly increasing")
        if self.samples < 100:
            raise ValueError("samples per N must be at least 100")
        if self.ensemble not in ENSEMBLES:
            raise ValueError(f"ensemble must be one of {ENSEMBLES}")
        if self.grid % self.coarse:
            raise ValueError("coarse grid must divide the equilibrium grid")
        if not self.delta > 0:
            raise ValueError("ball radius must be positive")

    @classmethod
    def from_dict(cls, d):
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown sweep config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self):
        return asdict(self)


@dataclass
class SweepResult:
    config: dict
    rows: list
    samples: dict
    bracket: dict | None
    equilibrium: dict

    def table(self, key):
        return np.array([r[key] for r in self.rows], float)

    def save(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "sweep.csv", self.rows)
        sample_rows = []
        for N, d in self.samples.items():
            for i in range(len(d["w1_target"])):
                sample_rows.append({"N": N, "sample": i, **{k: d[k][i] for k in d}})
        write_csv(out / "sweep_samples.csv", sample_rows)
        summary = {"config": self.config, "bracket": self.bracket, "equilibrium": self.equilibrium, "rows": self.rows}
        (out / "sweep_summary.json").write_text(json.dumps(summary, indent=2, default=_jsonable))
        return out

    @classmethod
    def load(cls, out_dir):
        out = Path(out_dir)
        summary = json.loads((out / "sweep_summary.json").read_text())
        samples = {}
        for r in read_csv(out / "sweep_samples.csv"):
            d = samples.setdefault(int(r.pop("N")), {})
            r.pop("sample")
            for k, v in r.items():
                d.setdefault(k, []).append(v)
        samples = {N: {k: np.array(v) for k, v in d.items()} for N, d in samples.items()}
        return cls(summary["config"], summary["rows"], samples, summary["bracket"], summary["equilibrium"])


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(type(x))


def write_csv(path, rows):
    rows = list(rows)
    keys = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: _jsonable(v) if isinstance(v, (np.generic, np.ndarray)) else v for k, v in r.items()})


def read_csv(path):
    """Rows of a CSV written by ``write_csv``, numbers parsed back to floats."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        d = {}
        for k, v in r.items():
            try:
                d[k] = float(v)
            except ValueError:
                d[k] = v
        out.append(d)
    return out


# ---------------------------------------------------------------- setup
@dataclass
class _Context:
    torus: Torus
    nu: BaseMeasure
    nu_rate: BaseMeasure
    eq: object
    target: GridMeasure
    graph: TorusGraph
    p_eq: np.ndarray
    p_target: np.ndarray


def _grid_measure(torus, mcfg, M):
    mcfg = dict(mcfg)
    mcfg["M"] = M
    return GridMeasure.from_base(BaseMeasure.from_config(torus, mcfg))


def build_context(cfg: SweepConfig):
    torus = make_torus(cfg.geometry)
    nu = BaseMeasure.from_config(torus, cfg.measure)
    nu_rate = BaseMeasure.from_config(torus, {**cfg.measure, "M": cfg.rate_grid})
    support = _grid_measure(torus, cfg.measure, cfg.grid)
    eq = solve_equilibrium(torus, support.mask)
    if cfg.target.get("kind") == "equilibrium":
        target = eq.measure
    else:
        target = _grid_measure(torus, cfg.target, cfg.grid)
    graph = TorusGraph(torus, cfg.coarse)
    return _Context(
        torus, nu, nu_rate, eq, target, graph,
        graph.bin_grid(eq.measure.weights), graph.bin_grid(target.weights),
    )


def _sampler(ensemble, large):
    if ensemble == "fsh":
        return lambda rng, k: sample_fsh_zeros(large, rng, k, on_fail="nan")

    def pl(rng, k):
        Z = sample_pl_zeros(large, rng, k, on_fail="nan")
        drop = rng.integers(0, Z.shape[1], k)
        keep = np.ones(Z.shape, bool)
        keep[np.arange(k), drop] = False
        return Z[keep].reshape(k, -1)

    return pl


def chunk_seeds(seed, index, n_chunks):
    return np.random.SeedSequence([seed, index]).spawn(n_chunks)


def _run_chunk(ctx: _Context, cfg: SweepConfig, draw, N, seq, k):
    rng = np.random.default_rng(seq)
    Z = draw(rng, k)
    out = {key: np.full(k, np.nan) for key in ("w1_target", "w1_eq", "I_N")}
    failed = ~np.all(np.isfinite(Z), axis=1)
    for i in np.nonzero(~failed)[0]:
        p = ctx.graph.bin_points(Z[i])
        out["w1_target"][i] = ctx.graph.w1(p, ctx.p_target)
        out["w1_eq"][i] = ctx.graph.w1(p, ctx.p_eq)
        if cfg.rate_stats:
            out["I_N"][i] = rate_IN(Configuration(Z[i], ctx.torus), ctx.nu_rate, N)
    out["failed"] = failed.astype(float)
    return out


def _sample_N(ctx, cfg, index, N, threads):
    large = SectionSpace(ThetaBasis(ctx.torus, N + 1, 0.0), ctx.nu)
    draw = _sampler(cfg.ensemble, large)
    sizes = [min(cfg.chunk, cfg.samples - s) for s in range(0, cfg.samples, cfg.chunk)]
    seqs = chunk_seeds(cfg.seed, index, len(sizes))
    job = lambda a: _run_chunk(ctx, cfg, draw, N, *a)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(job, zip(seqs, sizes)))
    else:
        parts = [job(a) for a in zip(seqs, sizes)]
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def probability_estimate(hits, n, confidence=0.95):
    """Point estimate and Wilson interval; zero (or full) hits give one-sided bounds."""
    ci = binomtest(int(hits), int(n)).proportion_ci(confidence, method="wilson")
    return {
        "hits": int(hits),
        "n": int(n),
        "p_hat": hits / n,
        "p_low": float(ci.low),
        "p_high": float(ci.high),
        "one_sided": bool(hits == 0 or hits == n),
    }


def _log_scaled(p, N):
    with np.errstate(divide="ignore"):
        return float(np.log(p) / N**2)


def ldp_sweep(cfg: SweepConfig, threads=None, ctx=None):
    """Ball probabilities Prob_N(W1(mu_zeta, sigma) <= delta) over the N list."""
    ctx = ctx or build_context(cfg)
    threads = cfg.threads if threads is None else threads
    bracket = ball_rate_bracket(ctx, cfg.delta) if cfg.bracket else None
    rows, samples = [], {}
    for index, N in enumerate(cfg.N):
        t0 = time.perf_counter()
        d = _sample_N(ctx, cfg, index, N, threads)
        n_fail = int(d["failed"].sum())
        if n_fail > cfg.max_failure_rate * cfg.samples:
            raise RuntimeError(f"N={N}: {n_fail} of {cfg.samples} zero computations failed")
        ok = d["failed"] == 0
        n = int(ok.sum())
        hits = int(np.sum(d["w1_target"][ok] <= cfg.delta))
        est = probability_estimate(hits, n)
        w1 = d["w1_eq"][ok]
        IN = d["I_N"][ok]
        rows.append({
            "N": N,
            **est,
            "log_p_scaled": _log_scaled(est["p_hat"], N),
            "log_p_scaled_low": _log_scaled(est["p_low"], N),
            "log_p_scaled_high": _log_scaled(est["p_high"], N),
            "mean_w1_eq": float(w1.mean()),
            "stderr_w1_eq": float(w1.std(ddof=1) / np.sqrt(n)),
            "mean_w1_target": float(d["w1_target"][ok].mean()),
            "mean_I_N": float(np.mean(IN)) if cfg.rate_stats else np.nan,
            "std_I_N": float(np.std(IN, ddof=1)) if cfg.rate_stats else np.nan,
            "failures": n_fail,
            "wall_time": time.perf_counter() - t0,
            "seed": cfg.seed,
            "stream": index,
        })
        samples[N] = d
    res = SweepResult(cfg.to_dict(), rows, samples, bracket, ctx.eq.summary())
    if cfg.out_dir:
        res.save(cfg.out_dir)
    return res


def concentration_curve(cfg: SweepConfig, result: SweepResult | None = None, ctx=None):
    """Mean W1 distance from mu_zeta to the equilibrium measure, per N."""
    if result is None:
        cfg = SweepConfig.from_dict({**cfg.to_dict(), "rate_stats": False, "bracket": False, "out_dir": None})
        result = ldp_sweep(cfg, ctx=ctx)
    return [
        {"N": r["N"], "mean": r["mean_w1_eq"], "stderr": r["stderr_w1_eq"], "n": r["n"]}
        for r in result.rows
    ]


def strictly_decreasing(values):
    v = np.asarray(values, float)
    return bool(np.all(np.diff(v) < 0))


# ---------------------------------------------------------------- rate bracket
def _binning_matrix(M, m):
    r = M // m
    i, j = np.divmod(np.arange(M * M), M)
    rows = (i // r) * m + j // r
    return coo_matrix((np.ones(M * M), (rows, np.arange(M * M))), shape=(m * m, M * M)).tocsr()


def ball_infimum(ctx: _Context, delta):
    """min of I~ over grid measures mu on K with W1(mu, sigma) <= delta (coarse metric).

    I~(mu) = -E(mu)/2 + max_K U^mu - E0 is convex (the cell-averaged kernel is
    negative semidefinite), so this is a second-order cone program.
    """
    import cvxpy as cp

    M = ctx.target.M
    kern = GridKernel.get(ctx.torus, M)
    Kb = kern.submatrix(np.arange(M * M))
    s, V = np.linalg.eigh(-0.5 * (Kb + Kb.T))
    pos = s > 1e-12 * s.max()
    R = V[:, pos] * np.sqrt(s[pos])
    mask = ctx.eq.measure.mask.ravel()
    g = ctx.graph
    B = _binning_matrix(M, g.m)
    w = cp.Variable(M * M, nonneg=True)
    f = cp.Variable(g.length.size, nonneg=True)
    t = cp.Variable()
    cons = [
        cp.sum(w) == 1,
        Kb[mask] @ w <= t,
        g.incidence @ f == (B @ w - ctx.p_target)[:-1],
        g.length @ f <= delta,
    ]
    if not mask.all():
        cons.append(w[~mask] == 0)
    prob = cp.Problem(cp.Minimize(0.5 * cp.sum_squares(R.T @ w) + t), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        return np.inf
    return float(prob.value - ctx.eq.E0)


def ball_rate_bracket(ctx: _Context, delta, shrink=1e-3):
    """The LDP range at finite resolution: -inf over the closed ball and over
    a slightly smaller ball standing in for the open one."""
    closed = ball_infimum(ctx, delta)
    inner = ball_infimum(ctx, delta * (1 - shrink))
    return {"delta": delta, "inf_closed": closed, "inf_open": inner, "upper": -closed, "lower": -inner}


# ---------------------------------------------------------------- rate consistency
def rate_deviation(za, zb, nu: BaseMeasure, torus: Torus, large: SectionSpace):
    """|-(1/N^2)(log K(za) - log K(zb)) - (I_N(za) - I_N(zb))| for FSH densities."""
    N = np.shape(za)[-1]
    lk = jpc_density_g1_fsh(np.stack([za, zb]), nu, torus, large=large)
    dens = -(lk[0] - lk[1]) / N**2
    dI = rate_IN(Configuration(za, torus), nu, N) - rate_IN(Configuration(zb, torus), nu, N)
    return abs(dens - dI), dens, dI


def rate_consistency(cfg: SweepConfig, pairs=40):
    """Max and mean deviation between density differences and I_N differences per N."""
    torus = make_torus(cfg.geometry)
    nu = BaseMeasure.from_config(torus, cfg.measure)
    rows = []
    for index, N in enumerate(cfg.N):
        large = SectionSpace(ThetaBasis(torus, N + 1, 0.0), nu)
        rng = np.random.default_rng(chunk_seeds(cfg.seed, index, 1)[0])
        Z = sample_fsh_zeros(large, rng, 2 * pairs)
        dev, dens, dI = zip(*(rate_deviation(Z[2 * k], Z[2 * k + 1], nu, torus, large) for k in range(pairs)))
        rows.append({
            "N": N,
            "pairs": pairs,
            "max_deviation": float(np.max(dev)),
            "mean_deviation": float(np.mean(dev)),
            "mean_abs_dI": float(np.mean(np.abs(dI))),
        })
    ratio = rows[-1]["max_deviation"] / rows[0]["max_deviation"] if len(rows) > 1 else np.nan
    report = {"rows": rows, "shrink_ratio": ratio}
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "rate_consistency.csv", rows)
        (out / "rate_consistency.json").write_text(json.dumps(report, indent=2, default=_jsonable))
    return report
