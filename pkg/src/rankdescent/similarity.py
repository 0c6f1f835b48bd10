"""Concrete ranking systems and the simplex data generator.

The KL system ranks by divergence from the anchor, which is asymmetric and
breaks the triangle inequality, so it exercises the non-metric side of the
library.  The Euclidean system is the metric reference point.  Both order
by ``(score, id)`` so ties cannot occur.
"""

from __future__ import annotations

import struct
from typing import Callable, Sequence

import numpy as np

from .core import ItemId, ScoredRankingSystem


def _as_points(data) -> np.ndarray:
    pts = np.asarray(getattr(data, "items", data), dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError(f"expected a 2-d array of points, got shape {pts.shape}")
    return pts


def validate_simplex_points(points: np.ndarray, tol: float = 1e-12) -> None:
    """Require strictly positive coordinates and row sums within tol of 1."""
    pts = _as_points(points)
    if not (pts > 0.0).all():
        raise ValueError("simplex points must have strictly positive coordinates")
    err = np.abs(pts.sum(axis=1) - 1.0).max()
    if err > tol:
        raise ValueError(f"simplex rows must sum to 1 within {tol}, worst error {err:.3e}")


def kl_divergence(x: np.ndarray, y: np.ndarray) -> float:
    """Kullback-Leibler divergence of y from x, in nats: sum x_i log(x_i / y_i).

    Nonnegative, zero only at x == y, and asymmetric in (x, y).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not ((x > 0.0).all() and (y > 0.0).all()):
        raise ValueError("coordinates must be strictly positive")
    return float(np.sum(x * np.log(x / y)))


def sample_simplex_uniform(
    d: int,
    n: int,
    rng: np.random.Generator | int,
    concentration: float = 1.0,
) -> np.ndarray:
    """Sample n i.i.d. points from the interior of the simplex in R^d.

    With the default concentration of 1 this is the uniform (flat
    Dirichlet) distribution, drawn as normalized unit-rate exponentials;
    other concentrations use gamma draws.  Deterministic given the seed.
    """
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    if n < 1:
        raise ValueError(f"count must be >= 1, got {n}")
    gen = np.random.default_rng(rng) if isinstance(rng, int) else rng
    if concentration == 1.0:
        draws = gen.standard_exponential((n, d))
    else:
        draws = gen.standard_gamma(concentration, (n, d))
    # a zero draw would put the point on the boundary; redraw those entries
    while True:
        zero = draws <= 0.0
        if not zero.any():
            break
        draws[zero] = gen.standard_exponential(int(zero.sum()))
    return draws / draws.sum(axis=1, keepdims=True)


class KlRankingSystem(ScoredRankingSystem):
    """Ranks candidates by KL divergence from the anchor, ascending.

    Precomputes log-coordinates so scoring m candidates against one anchor
    is a single length-d matvec: D(x||y) = sum x log x - x . log y.
    """

    def __init__(self, points, validate: bool = True, memoize: bool = False):
        pts = _as_points(points)
        if validate:
            validate_simplex_points(pts)
        self.points = pts
        self._log = np.log(pts)
        self._xlogx = np.einsum("ij,ij->i", pts, self._log)
        # optional per-pair score cache; only the comparator path benefits
        self._memo: dict[tuple[int, int], float] | None = {} if memoize else None

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def batch_scores(self, x: ItemId, ids: np.ndarray | None = None) -> np.ndarray:
        logs = self._log if ids is None else self._log[ids]
        # einsum, not a BLAS matvec: per-candidate accumulation must not
        # depend on which other rows are in the batch, or subset and
        # full-dataset calls could disagree in the last ulp and flip an order
        return self._xlogx[x] - np.einsum("ij,j->i", logs, self.points[x])

    def score(self, x: ItemId, y: ItemId) -> float:
        if self._memo is None:
            return super().score(x, y)
        key = (x, y)
        hit = self._memo.get(key)
        if hit is None:
            hit = super().score(x, y)
            self._memo[key] = hit
        return hit


class EuclideanRankingSystem(ScoredRankingSystem):
    """Ranks candidates by squared Euclidean distance from the anchor.

    Squared distances are monotone in the true distances, so the induced
    order is the metric one without the square roots.
    """

    def __init__(self, vectors):
        vecs = _as_points(vectors)
        self.vectors = vecs
        self._sq = np.einsum("ij,ij->i", vecs, vecs)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    def batch_scores(self, x: ItemId, ids: np.ndarray | None = None) -> np.ndarray:
        vecs = self.vectors if ids is None else self.vectors[ids]
        sq = self._sq if ids is None else self._sq[ids]
        # same batch-independence constraint as the KL kernel
        d2 = self._sq[x] + sq - 2.0 * np.einsum("ij,j->i", vecs, self.vectors[x])
        return np.maximum(d2, 0.0)


def euclidean_ranking(vectors) -> EuclideanRankingSystem:
    """Metric ranking over real vectors: compare(x; y, z) = sign(|x-y|^2 - |x-z|^2)."""
    return EuclideanRankingSystem(vectors)


class MetricRankingSystem(ScoredRankingSystem):
    """Ranking induced by an arbitrary symmetric distance over item payloads.

    Generic and unvectorized: each score is one call to the distance
    function.  Use EuclideanRankingSystem for real vectors.
    """

    def __init__(self, items: Sequence, distance: Callable[[object, object], float]):
        self.items = items
        self.distance = distance

    @property
    def size(self) -> int:
        return len(self.items)

    def batch_scores(self, x: ItemId, ids: np.ndarray | None = None) -> np.ndarray:
        if ids is None:
            ids = np.arange(len(self.items))
        xv = self.items[x]
        return np.array([self.distance(xv, self.items[int(i)]) for i in ids], dtype=np.float64)


# ---------------------------------------------------------------------------
# dataset file formats

_F64_HEADER = struct.Struct("<II")  # (d, n), little endian, 8 bytes


def save_points_csv(path, points: np.ndarray) -> None:
    """One point per row, d comma-separated columns, full float64 precision."""
    np.savetxt(path, _as_points(points), delimiter=",", fmt="%.17g")


def load_points_csv(path) -> np.ndarray:
    pts = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    return pts


def save_points_f64(path, points: np.ndarray) -> None:
    """Binary format for large runs: 8-byte header (d, n), then row-major float64."""
    pts = np.ascontiguousarray(_as_points(points))
    n, d = pts.shape
    with open(path, "wb") as fh:
        fh.write(_F64_HEADER.pack(d, n))
        fh.write(pts.astype("<f8", copy=False).tobytes())


def load_points_f64(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_F64_HEADER.size)
        if len(header) != _F64_HEADER.size:
            raise ValueError(f"truncated header in {path}")
        d, n = _F64_HEADER.unpack(header)
        payload = fh.read()
    expected = n * d * 8
    if len(payload) != expected:
        raise ValueError(f"expected {expected} payload bytes in {path}, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f8").reshape(n, d).copy()
