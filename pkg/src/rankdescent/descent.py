"""K-NN descent over a ranking system, with a statistical stopping rule.

Each round replaces every item's friend set with the best K of its former
friends plus everything reachable through the friend-of-a-friend principle:
cofriends, friends of friends, and friends of cofriends.  All proposals in
a round read one immutable snapshot of the graph, so the result is a pure
function of the previous state no matter how many workers compute it.

Termination samples the *friend clustering rate*: the relative frequency
that two friends of a common item are themselves adjacent.  The rate starts
near zero on a random K-out graph, rises as neighborhoods become real, and
plateaus; the run stops the first time it fails to increase.
"""

from __future__ import annotations

import functools
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import BoundedNeighborSet, ConfigError, Dataset, ItemId, RankingSystem, ScoredRankingSystem

logger = logging.getLogger(__name__)

_SEED_MASK = 0xFFFFFFFFFFFFFFFF

# substream tags: every random draw in a run derives from (seed, tag, ...)
# so worker count and call order can never perturb the stream
STREAM_DATA = 1
STREAM_INIT = 2
STREAM_FCC = 3
STREAM_RECALL = 4
STREAM_WITNESS = 5


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for one purpose within a seeded run."""
    return np.random.default_rng(np.random.SeedSequence([seed & _SEED_MASK, *path]))


def round_budget(n: int, k: int) -> int:
    """Heuristic round budget 2 * ceil(log_k n).

    Twice the expected diameter of the undirected random K-out graph,
    enough for information to cross the graph and come back.
    """
    if n < 2 or k < 2:
        raise ConfigError(f"round budget needs n >= 2 and k >= 2, got n={n}, k={k}")
    # epsilon guards against ceil(2.0000000000000004) on exact powers
    return 2 * math.ceil(math.log(n) / math.log(k) - 1e-9)


@dataclass
class DescentConfig:
    """Run parameters.

    max_rounds of None resolves to round_budget(n, k) + 4 at run time, a
    hard cap slightly above the observed bound in case the sampled stopping
    statistic oscillates.  worker_count may be "auto" for one worker per
    CPU.
    """

    k: int
    fcc_sample_count: int = 1000
    max_rounds: int | None = None
    seed: int = 0
    worker_count: int | str = 1

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ConfigError(f"k must be >= 2 (the stopping sampler draws friend pairs), got {self.k}")
        if self.fcc_sample_count < 1:
            raise ConfigError(f"fcc_sample_count must be >= 1, got {self.fcc_sample_count}")
        if self.max_rounds is not None and self.max_rounds < 1:
            raise ConfigError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if isinstance(self.worker_count, str):
            if self.worker_count != "auto":
                raise ConfigError(f'worker_count must be a positive int or "auto", got {self.worker_count!r}')
        elif self.worker_count < 1:
            raise ConfigError(f"worker_count must be >= 1, got {self.worker_count}")

    def resolved_max_rounds(self, n: int) -> int:
        if self.max_rounds is not None:
            return self.max_rounds
        return round_budget(n, self.k) + 4

    def resolved_workers(self) -> int:
        if self.worker_count == "auto":
            return os.cpu_count() or 1
        return int(self.worker_count)


@dataclass
class RoundStats:
    """Per-round diagnostics; fcc drives termination, the rest is reporting."""

    round_index: int
    wall_clock_sec: float
    fcc: float
    comparisons: int
    changed_friend_sets: int


class KnnState:
    """Snapshot of the friends digraph plus its transpose.

    friends is an (n, K) id array whose rows are sorted ascending under the
    owning anchor's order; it is marked read-only so a round cannot mutate
    the snapshot it reads.  The transpose (cofriends) is stored in CSR form
    and rebuilt from scratch whenever the friends map changes.
    """

    def __init__(self, friends: np.ndarray, round_index: int = 0, fcc_history: Sequence[float] = ()):
        friends = np.array(friends, dtype=np.int64)  # private copy, then frozen
        if friends.ndim != 2:
            raise ValueError(f"friends must be an (n, K) array, got shape {friends.shape}")
        friends.flags.writeable = False
        self.friends = friends
        self.round = round_index
        self.fcc_history = tuple(fcc_history)
        self.cof_indptr, self.cof_indices = _transpose_csr(friends)

    @property
    def n(self) -> int:
        return self.friends.shape[0]

    @property
    def k(self) -> int:
        return self.friends.shape[1]

    def friends_of(self, x: ItemId) -> np.ndarray:
        return self.friends[x]

    def cofriends_of(self, x: ItemId) -> np.ndarray:
        return self.cof_indices[self.cof_indptr[x] : self.cof_indptr[x + 1]]

    def friends_dict(self) -> dict[int, set[int]]:
        return {x: set(map(int, row)) for x, row in enumerate(self.friends)}

    def cofriends_dict(self) -> dict[int, set[int]]:
        return {x: set(map(int, self.cofriends_of(x))) for x in range(self.n)}


def _transpose_csr(friends: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """CSR transpose of a K-out map: cofriends of x = sources[indptr[x]:indptr[x+1]]."""
    n, k = friends.shape
    targets = friends.ravel()
    order = np.argsort(targets, kind="stable")  # stable keeps sources ascending per target
    sources = np.repeat(np.arange(n, dtype=np.int64), k)[order]
    counts = np.bincount(targets, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, sources


def _sort_rows_by_anchor(rs: RankingSystem, rows: np.ndarray) -> np.ndarray:
    """Sort each row under its anchor's order (row index = anchor id)."""
    out = np.empty_like(rows)
    if isinstance(rs, ScoredRankingSystem):
        for x in range(rows.shape[0]):
            scores = rs.batch_scores(x, rows[x])
            out[x] = rows[x][np.argsort(scores, kind="stable")]
    else:
        for x in range(rows.shape[0]):
            cmp = rs.comparator_for(x)
            out[x] = sorted(map(int, rows[x]), key=functools.cmp_to_key(cmp))
    return out


def init_random_kout(
    dataset: Dataset,
    rs: RankingSystem,
    cfg: DescentConfig,
    rng: np.random.Generator,
) -> KnnState:
    """Random K-out initialization: K uniform distinct friends per item.

    Rows are ordered under the anchor's comparator on insertion.  With high
    probability the undirected version of this graph is an expander, which
    is what makes the log_K(n) round budget plausible.
    """
    n = len(dataset)
    k = cfg.k
    if n <= k:
        raise ConfigError(f"need n > k, got n={n}, k={k}")
    anchors = np.arange(n, dtype=np.int64)[:, None]
    if n - 1 > 2 * k * k:
        # rejection sampling: redraw rows that contain duplicates
        draws = rng.integers(0, n - 1, size=(n, k), dtype=np.int64)
        draws += draws >= anchors
        while True:
            srt = np.sort(draws, axis=1)
            bad = np.nonzero((srt[:, 1:] == srt[:, :-1]).any(axis=1))[0]
            if bad.size == 0:
                break
            redraw = rng.integers(0, n - 1, size=(bad.size, k), dtype=np.int64)
            redraw += redraw >= bad[:, None]
            draws[bad] = redraw
    else:
        # dense regime: a per-row permutation avoids rejection stalls
        draws = np.empty((n, k), dtype=np.int64)
        for x in range(n):
            row = rng.permutation(n - 1)[:k]
            row += row >= x
            draws[x] = row
    return KnnState(_sort_rows_by_anchor(rs, draws))


def candidate_set(x: ItemId, state: KnnState) -> np.ndarray:
    """New acquaintances of x: cofriends, friends of friends, friends of cofriends.

    Deduplicated, sorted by id, excluding x itself and x's current friends.
    At most K + 2K^2 ids before deduplication.
    """
    frs = state.friends[x]
    cof = state.cofriends_of(x)
    cand = np.unique(np.concatenate((cof, state.friends[frs].ravel(), state.friends[cof].ravel())))
    mask = cand != x
    mask &= ~np.isin(cand, frs)
    return cand[mask]


def _propose_scored(x: int, state: KnnState, rs: ScoredRankingSystem) -> tuple[np.ndarray, int]:
    friends = state.friends
    frs = friends[x]
    cof = state.cof_indices[state.cof_indptr[x] : state.cof_indptr[x + 1]]
    cand = np.concatenate((frs, cof, friends[frs].ravel(), friends[cof].ravel()))
    cand = np.unique(cand)
    pos = np.searchsorted(cand, x)
    if pos < cand.size and cand[pos] == x:
        cand = np.delete(cand, pos)
    scores = rs.batch_scores(x, cand)
    # cand is ascending, so a stable sort on scores breaks ties by id
    order = np.argsort(scores, kind="stable")
    return cand[order[: state.k]], cand.size


def _propose_comparator(x: int, state: KnnState, rs: RankingSystem) -> tuple[np.ndarray, int]:
    bns = BoundedNeighborSet.from_sorted(x, state.k, rs.comparator_for(x), map(int, state.friends[x]))
    for c in candidate_set(x, state):
        bns.insert(int(c))
    return np.array(bns.ids(), dtype=np.int64), bns.comparisons


def propose_new_friend_set(x: ItemId, state: KnnState, rs: RankingSystem) -> np.ndarray:
    """The K best of x's current friends and candidates, best first.

    Reads only the snapshot; never mutates it.
    """
    if isinstance(rs, ScoredRankingSystem):
        return _propose_scored(x, state, rs)[0]
    return _propose_comparator(x, state, rs)[0]


def _propose_block(
    lo: int,
    hi: int,
    state: KnnState,
    rs: RankingSystem,
    out: np.ndarray,
) -> tuple[int, int]:
    propose = _propose_scored if isinstance(rs, ScoredRankingSystem) else _propose_comparator
    friends = state.friends
    comparisons = 0
    changed = 0
    for x in range(lo, hi):
        row, ncomp = propose(x, state, rs)
        comparisons += ncomp
        if not np.array_equal(row, friends[x]):
            changed += 1
        out[x] = row
    return comparisons, changed


def run_round(state: KnnState, rs: RankingSystem, cfg: DescentConfig) -> tuple[KnnState, RoundStats]:
    """One friend-set update round against an immutable snapshot.

    Proposals for distinct anchors are independent and may run on any
    number of workers; the write phase assembles the new map afterwards, so
    the output is identical for every worker count and proposal order.
    """
    t0 = time.perf_counter()
    n = state.n
    new = np.empty((n, state.k), dtype=np.int64)
    workers = min(cfg.resolved_workers(), n)
    if workers == 1:
        comparisons, changed = _propose_block(0, n, state, rs, new)
    else:
        bounds = np.linspace(0, n, workers * 4 + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tallies = list(
                pool.map(lambda b: _propose_block(b[0], b[1], state, rs, new), zip(bounds[:-1], bounds[1:]))
            )
        comparisons = sum(t[0] for t in tallies)
        changed = sum(t[1] for t in tallies)
    round_index = state.round + 1
    next_state = KnnState(new, round_index, state.fcc_history)
    rate = friend_clustering_rate(next_state, cfg.fcc_sample_count, derive_rng(cfg.seed, STREAM_FCC, round_index))
    next_state.fcc_history = state.fcc_history + (rate,)
    stats = RoundStats(
        round_index=round_index,
        wall_clock_sec=time.perf_counter() - t0,
        fcc=rate,
        comparisons=comparisons,
        changed_friend_sets=changed,
    )
    return next_state, stats


def friend_clustering_rate(state: KnnState, sample_count: int, rng: np.random.Generator) -> float:
    """Sampled frequency that two friends of a common item are adjacent.

    Each sample draws x uniformly and an unordered pair {y, z} of distinct
    friends of x, then tests whether y is a friend or cofriend of z.
    Samples are drawn with replacement, so the estimator is i.i.d.
    """
    if state.k < 2:
        raise ConfigError(f"friend clustering rate needs k >= 2, got {state.k}")
    if sample_count < 1:
        raise ConfigError(f"sample_count must be >= 1, got {sample_count}")
    friends = state.friends
    n, k = friends.shape
    xs = rng.integers(0, n, size=sample_count)
    i = rng.integers(0, k, size=sample_count)
    j = rng.integers(0, k - 1, size=sample_count)
    j += j >= i
    y = friends[xs, i]
    z = friends[xs, j]
    # y adjacent to z  <=>  y in friends(z) or z in friends(y)
    adjacent = (friends[z] == y[:, None]).any(axis=1) | (friends[y] == z[:, None]).any(axis=1)
    return float(adjacent.mean())


def _run_rounds(
    dataset: Dataset,
    rs: RankingSystem,
    cfg: DescentConfig,
    max_rounds: int,
    stop_on_fixed_point: bool,
) -> tuple[np.ndarray, list[RoundStats]]:
    state = init_random_kout(dataset, rs, cfg, derive_rng(cfg.seed, STREAM_INIT))
    history: list[RoundStats] = []
    for _ in range(max_rounds):
        state, stats = run_round(state, rs, cfg)
        history.append(stats)
        logger.debug(
            "round %d: %.2fs fcc=%.4f comparisons=%d changed=%d",
            stats.round_index, stats.wall_clock_sec, stats.fcc, stats.comparisons, stats.changed_friend_sets,
        )
        if stop_on_fixed_point:
            if stats.changed_friend_sets == 0:
                break
        elif len(history) >= 2 and history[-1].fcc <= history[-2].fcc:
            break
    return state.friends, history


def run(dataset: Dataset, rs: RankingSystem, cfg: DescentConfig) -> tuple[np.ndarray, list[RoundStats]]:
    """Random K-out init, then update rounds until the clustering rate stalls.

    Stops at the first round whose rate does not exceed the previous
    round's, or at the resolved max_rounds cap.  Returns the final friends
    map, rows best-first under each anchor's order, and the full round
    history.
    """
    return _run_rounds(dataset, rs, cfg, cfg.resolved_max_rounds(len(dataset)), stop_on_fixed_point=False)


def run_to_fixed_point(
    dataset: Dataset,
    rs: RankingSystem,
    cfg: DescentConfig,
) -> tuple[np.ndarray, list[RoundStats]]:
    """Run rounds until no friend set changes (or max_rounds, default 8*budget+16).

    A round with changed_friend_sets == 0 is a true fixed point: every
    later round would reproduce it exactly.  Used for desk-scale ground
    truth comparisons rather than production builds.
    """
    if cfg.max_rounds is not None:
        cap = cfg.max_rounds
    else:
        cap = 8 * round_budget(len(dataset), cfg.k) + 16
    return _run_rounds(dataset, rs, cfg, cap, stop_on_fixed_point=True)
