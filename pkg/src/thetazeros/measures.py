"""Base measures nu: quadrature nodes and weights on the torus or in the plane."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .torus import Torus


@dataclass(frozen=True)
class BaseMeasure:
    """Probability measure given by nodes and nonnegative weights.

    Grid-based kinds also keep the M x M lattice grid and the boolean mask of
    the nodes they use, so grid measures can share the geometry.
    """

    kind: str
    nodes: np.ndarray
    weights: np.ndarray
    params: dict = field(default_factory=dict)
    torus: Torus | None = None
    M: int | None = None
    mask: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size != np.asarray(self.nodes).size:
            raise ValueError("nodes and weights must be matching 1-d arrays")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-12):
            raise ValueError("weights must sum to 1")

    def __len__(self):
        return self.weights.size

    def integrate(self, values):
        return np.tensordot(self.weights, values, axes=(0, 0))

    def to_dict(self):
        d = {"kind": self.kind, **self.params}
        if self.M is not None:
            d["M"] = self.M
        return d

    # ----------------------------------------------------------- constructors
    @classmethod
    def _from_mask(cls, torus, M, mask, kind, params):
        nodes = torus.grid(M)[mask]
        if nodes.size < 2:
            raise ValueError(f"support {kind} holds {nodes.size} grid nodes; raise the resolution M")
        w = np.full(nodes.size, 1.0 / nodes.size)
        return cls(kind, nodes, w, params, torus, M, mask)

    @classmethod
    def uniform_torus(cls, torus, M=128):
        return cls._from_mask(torus, M, np.ones((M, M), bool), "uniform-on-torus", {})

    @classmethod
    def uniform_rect(cls, torus, a0, a1, b0, b1, M=128):
        """Lattice-coordinate rectangle [a0, a1) x [b0, b1)."""
        s = (np.arange(M) + 0.5) / M
        A, B = np.meshgrid(s, s, indexing="ij")
        mask = (A >= a0) & (A < a1) & (B >= b0) & (B < b1)
        params = {"a0": a0, "a1": a1, "b0": b0, "b1": b1}
        return cls._from_mask(torus, M, mask, "uniform-on-rect", params)

    @classmethod
    def uniform_disk(cls, torus, center, radius, M=128):
        mask = torus.dist(torus.grid(M), center) < radius
        params = {"center": [complex(center).real, complex(center).imag], "radius": radius}
        return cls._from_mask(torus, M, mask, "uniform-on-disk", params)

    @classmethod
    def uniform_circle(cls, center, radius, n=256, torus=None):
        th = 2 * np.pi * (np.arange(n) + 0.5) / n
        nodes = complex(center) + radius * np.exp(1j * th)
        params = {"center": [complex(center).real, complex(center).imag], "radius": radius, "n": n}
        return cls("uniform-on-circle", nodes, np.full(n, 1.0 / n), params, torus)

    @classmethod
    def from_config(cls, torus, cfg):
        cfg = dict(cfg)
        kind = cfg.pop("kind", "uniform-on-torus")
        M = cfg.pop("M", 128)
        if kind == "uniform-on-torus":
            return cls.uniform_torus(torus, M)
        if kind == "uniform-on-rect":
            return cls.uniform_rect(torus, cfg["a0"], cfg["a1"], cfg["b0"], cfg["b1"], M)
        if kind == "uniform-on-disk":
            return cls.uniform_disk(torus, complex(*cfg["center"]), cfg["radius"], M)
        if kind == "uniform-on-circle":
            return cls.uniform_circle(complex(*cfg["center"]), cfg["radius"], cfg.get("n", 256), torus)
        raise ValueError(f"unknown measure kind {kind!r}")
