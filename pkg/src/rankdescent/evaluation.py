"""Ground truth, recall measurement, and the metrizability checker.

The exact K-NN digraph is the brute-force oracle every approximate build is
judged against.  The ranking-digraph machinery tests whether a comparator
family could possibly come from a metric: orient the line graph of the
complete graph by the comparators and look for a directed cycle.  Acyclic
means metrizable; any cycle is a certificate that no metric reproduces the
rankings.
"""

from __future__ import annotations

import functools
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import ConfigError, Dataset, ItemId, RankingSystem, ScoredRankingSystem
from .descent import STREAM_RECALL, STREAM_WITNESS, derive_rng
from .similarity import KlRankingSystem, sample_simplex_uniform

Pair = tuple[int, int]

# headroom for exact score ties at the selection boundary before the
# partition-based top-K falls back to a full sort
_PARTITION_PAD = 16

DIGRAPH_GUARD = 64
ORACLE_GUARD = 100_000


@dataclass
class ExactKnnGraph:
    """True K nearest neighbors of every item, nearest first."""

    neighbors: np.ndarray  # (n, K) ids

    @property
    def n(self) -> int:
        return self.neighbors.shape[0]

    @property
    def k(self) -> int:
        return self.neighbors.shape[1]

    def of(self, x: ItemId) -> np.ndarray:
        return self.neighbors[x]


def _smallest_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest under (score, index), ascending.

    Uses a padded partition; if ties at the boundary could extend past the
    pad, falls back to a full sort so the result is exact in all cases.
    """
    n = scores.shape[0]
    m = k + _PARTITION_PAD
    if m >= n:
        return np.argsort(scores, kind="stable")[:k]
    part = np.argpartition(scores, m)[:m]
    part = part[np.lexsort((part, scores[part]))]
    boundary = scores[part[k - 1]]
    if boundary == scores[part[-1]]:
        # the tie group at the boundary may continue outside the partition
        return np.argsort(scores, kind="stable")[:k]
    return part[:k]


def exact_knn(dataset: Dataset, rs: RankingSystem, k: int, workers: int = 1) -> ExactKnnGraph:
    """Brute-force K-NN digraph: each row is the anchor's full ranking, truncated.

    O(n^2) score evaluations for scored systems, O(n^2 log n) comparator
    calls otherwise; anchors are independent, so rows may be computed on
    several workers.
    """
    n = len(dataset)
    if n <= k:
        raise ConfigError(f"need n > k, got n={n}, k={k}")
    out = np.empty((n, k), dtype=np.int64)

    if isinstance(rs, ScoredRankingSystem):

        def fill(lo: int, hi: int) -> None:
            for x in range(lo, hi):
                scores = rs.batch_scores(x).copy()
                scores[x] = np.inf  # the anchor never ranks
                out[x] = _smallest_k(scores, k)

    else:

        def fill(lo: int, hi: int) -> None:
            for x in range(lo, hi):
                cmp = rs.comparator_for(x)
                others = [y for y in range(n) if y != x]
                others.sort(key=functools.cmp_to_key(cmp))
                out[x] = others[:k]

    workers = max(1, min(workers, n))
    if workers == 1:
        fill(0, n)
    else:
        bounds = np.linspace(0, n, workers * 4 + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: fill(b[0], b[1]), zip(bounds[:-1], bounds[1:])))
    return ExactKnnGraph(out)


def recall(
    approx: np.ndarray | Mapping[int, Iterable[int]],
    exact: ExactKnnGraph,
    sample_ids: Sequence[int] | np.ndarray,
) -> float:
    """Mean fraction of true K nearest neighbors present in the approximate sets."""
    sample = np.asarray(sample_ids)
    if sample.size == 0:
        raise ValueError("sample_ids must be nonempty")
    if isinstance(approx, Mapping):
        rows = {x: np.fromiter(approx[int(x)], dtype=np.int64) for x in sample}
        widths = {r.size for r in rows.values()}
        if widths != {exact.k}:
            raise ValueError(f"approximate sets have sizes {sorted(widths)}, exact K is {exact.k}")
        get = rows.__getitem__
    else:
        approx = np.asarray(approx)
        if approx.shape[1] != exact.k:
            raise ValueError(f"K mismatch: approximate {approx.shape[1]} vs exact {exact.k}")
        get = approx.__getitem__
    hits = sum(np.intersect1d(get(x), exact.neighbors[x]).size for x in sample)
    return hits / (sample.size * exact.k)


def uniform_recall_sample(n: int, seed: int, size: int = 6) -> np.ndarray:
    """The default recall protocol's sample: size ids drawn uniformly without replacement."""
    return derive_rng(seed, STREAM_RECALL).choice(n, size=min(size, n), replace=False)


# ---------------------------------------------------------------------------
# ranking digraph and metrizability


@dataclass
class RankingDigraph:
    """Orientation of the line graph of K_n induced by a ranking system.

    Vertices are the unordered point pairs; the arc {x,y} -> {x,z} records
    that y ranks before z from x's viewpoint.  Two vertices are adjacent
    exactly when they share one point, so every adjacency carries exactly
    one arc.
    """

    n: int
    arcs: dict[Pair, tuple[Pair, ...]]

    @property
    def vertices(self) -> list[Pair]:
        return list(self.arcs.keys())

    @property
    def arc_count(self) -> int:
        return sum(len(v) for v in self.arcs.values())


def build_ranking_digraph(dataset: Dataset, rs: RankingSystem, guard: int = DIGRAPH_GUARD) -> RankingDigraph:
    """Materialize the full ranking digraph: C(n,2) vertices, n*C(n-1,2) arcs.

    Quadratic vertex count, so refuses n above the guard.
    """
    n = len(dataset)
    if n > guard:
        raise ConfigError(f"ranking digraph on n={n} points exceeds the guard of {guard}")
    arcs: dict[Pair, list[Pair]] = {pair: [] for pair in itertools.combinations(range(n), 2)}
    for x in range(n):
        others = [y for y in range(n) if y != x]
        for y, z in itertools.combinations(others, 2):
            tail = (min(x, y), max(x, y))
            head = (min(x, z), max(x, z))
            if rs.compare(x, y, z) >= 0:
                tail, head = head, tail
            arcs[tail].append(head)
    return RankingDigraph(n=n, arcs={v: tuple(sorted(out)) for v, out in arcs.items()})


_WHITE, _GRAY, _BLACK = 0, 1, 2


def find_cycle_witness(dg: RankingDigraph) -> list[Pair] | None:
    """First directed cycle found by three-color DFS, as [v0, ..., v0]; None if acyclic.

    None certifies the digraph is a DAG, which is the metrizable case.
    Iterative so deep paths cannot hit the recursion limit.
    """
    color = {v: _WHITE for v in dg.arcs}
    for start in dg.arcs:
        if color[start] != _WHITE:
            continue
        stack: list[tuple[Pair, Iterable[Pair]]] = [(start, iter(dg.arcs[start]))]
        path = [start]
        color[start] = _GRAY
        while stack:
            node, succs = stack[-1]
            advanced = False
            for succ in succs:
                if color[succ] == _GRAY:
                    return path[path.index(succ) :] + [succ]
                if color[succ] == _WHITE:
                    color[succ] = _GRAY
                    stack.append((succ, iter(dg.arcs[succ])))
                    path.append(succ)
                    advanced = True
                    break
            if not advanced:
                color[node] = _BLACK
                stack.pop()
                path.pop()
    return None


def format_cycle(cycle: Sequence[Pair]) -> str:
    """Render a cycle like "{1,2} -> {1,4} -> {2,4} -> {1,2}"."""
    return " -> ".join("{%d,%d}" % pair for pair in cycle)


def to_dot(dg: RankingDigraph, highlight: Sequence[Pair] | None = None) -> str:
    """DOT rendering for visual inspection; highlighted vertices are filled black."""
    marked = set(highlight or ())
    lines = ["digraph ranking {"]
    for v in dg.arcs:
        attrs = ' [style=filled, fillcolor=black, fontcolor=white]' if v in marked else ""
        lines.append('  "{%d,%d}"%s;' % (v[0], v[1], attrs))
    for tail, heads in dg.arcs.items():
        for head in heads:
            lines.append('  "{%d,%d}" -> "{%d,%d}";' % (tail[0], tail[1], head[0], head[1]))
    lines.append("}")
    return "\n".join(lines)


@dataclass
class NonMetricWitness:
    """A point set whose KL ranking digraph contains a cycle, plus the cycle."""

    points: np.ndarray
    cycle: list[Pair]
    trial: int

    def verify(self) -> bool:
        """Re-check every arc of the cycle directly against the divergence order."""
        from .similarity import kl_divergence

        for tail, head in zip(self.cycle, self.cycle[1:]):
            shared = set(tail) & set(head)
            if len(shared) != 1:
                return False
            x = shared.pop()
            (y,) = set(tail) - {x}
            (z,) = set(head) - {x}
            dy = kl_divergence(self.points[x], self.points[y])
            dz = kl_divergence(self.points[x], self.points[z])
            if not ((dy, y) < (dz, z)):
                return False
        return True


def search_non_metric_witness(
    d: int,
    trials: int,
    rng: np.random.Generator | int,
    n_points: int = 6,
) -> NonMetricWitness | None:
    """Hunt for a cycle in KL ranking digraphs of random simplex point sets.

    Draws n_points uniform simplex points per trial and returns the first
    cycle found, or None when the budget is exhausted.  A returned witness
    is a constructive proof that KL comparators are not metrizable.
    """
    if d < 3:
        raise ConfigError(f"the divergence counterexample needs d >= 3, got d={d}")
    gen = derive_rng(rng, STREAM_WITNESS) if isinstance(rng, int) else rng
    for trial in range(trials):
        points = sample_simplex_uniform(d, n_points, gen)
        dg = build_ranking_digraph(Dataset(points), KlRankingSystem(points, validate=False))
        cycle = find_cycle_witness(dg)
        if cycle is not None:
            return NonMetricWitness(points=points, cycle=cycle, trial=trial)
    return None
