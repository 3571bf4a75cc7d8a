"""Layered proximity graph for approximate nearest-neighbor search.

Cosine metric over unit-normalized vectors, so distance = 1 - dot. Vectors
live in one contiguous float32 matrix and all distance work is batched
through numpy; the graph itself is plain adjacency lists.

Node levels are not drawn from a mutable RNG: each node's level is a pure
function of (seed, key), which keeps builds reproducible and lets a
persisted graph continue growing after reload without RNG state.
"""

from __future__ import annotations

import hashlib
import heapq
import math

import numpy as np

DEFAULT_M = 16
DEFAULT_EF_CONSTRUCTION = 200
DEFAULT_EF_SEARCH = 64


def _level_for_key(seed: int, key: str, m: int) -> int:
    """Deterministic exponential level draw: floor(-ln(u) / ln(m))."""
    digest = hashlib.blake2b(
        key.encode(), key=str(seed).encode(), digest_size=8, person=b"hnswlvl"
    ).digest()
    u = (int.from_bytes(digest, "little") + 1) / float(1 << 64)  # in (0, 1]
    return int(-math.log(u) / math.log(m))


class HnswGraph:
    """Append-only HNSW graph; deletions are tombstones filtered at query time."""

    def __init__(
        self,
        dimension: int,
        m: int = DEFAULT_M,
        ef_construction: int = DEFAULT_EF_CONSTRUCTION,
        seed: int = 0,
    ):
        self.dimension = dimension
        self.m = m
        self.m0 = 2 * m
        self.ef_construction = ef_construction
        self.seed = seed
        self.entry_point: int | None = None
        self.max_level = -1
        self.levels: list[int] = []
        # neighbors[node][layer] -> list of node ordinals, 0 <= layer <= levels[node]
        self.neighbors: list[list[list[int]]] = []
        # reverse edges on the base layer; queries traverse layer 0 undirected,
        # which recovers nodes whose inbound edges were pruned away
        self.rev0: list[set[int]] = []
        self.alive: list[bool] = []
        self._capacity = 1024
        self._vectors = np.zeros((self._capacity, dimension), dtype=np.float32)
        self._count = 0

    def __len__(self) -> int:
        return self._count

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors[: self._count]

    def vector(self, ordinal: int) -> np.ndarray:
        return self._vectors[ordinal]

    def _grow(self, needed: int) -> None:
        if needed <= self._capacity:
            return
        new_capacity = max(needed, int(self._capacity * 1.5))
        grown = np.zeros((new_capacity, self.dimension), dtype=np.float32)
        grown[: self._count] = self._vectors[: self._count]
        self._vectors = grown
        self._capacity = new_capacity

    # -- distance helpers ---------------------------------------------------

    def _dist_many(self, query: np.ndarray, ordinals: list[int]) -> np.ndarray:
        return 1.0 - self._vectors[ordinals] @ query

    # -- construction -------------------------------------------------------

    def add(self, key: str, vector: np.ndarray) -> int:
        """Insert a unit vector; returns its ordinal. Level derives from (seed, key)."""
        level = _level_for_key(self.seed, key, self.m)
        ordinal = self._count
        self._grow(ordinal + 1)
        self._vectors[ordinal] = vector
        self._count += 1
        self.levels.append(level)
        self.alive.append(True)
        self.neighbors.append([[] for _ in range(level + 1)])
        self.rev0.append(set())

        if self.entry_point is None:
            self.entry_point = ordinal
            self.max_level = level
            return ordinal

        query = self._vectors[ordinal]
        current = self.entry_point

        # greedy descent through layers above the new node's level
        for layer in range(self.max_level, level, -1):
            current = self._greedy_step(query, current, layer)

        # connect at each layer from min(level, max_level) down to 0
        entry = [current]
        for layer in range(min(level, self.max_level), -1, -1):
            candidates = self._search_layer(query, entry, layer, self.ef_construction)
            # denser base layer: connect up to 2M links at layer 0, M above
            cap = self.m0 if layer == 0 else self.m
            selected = self._select_neighbors(candidates, cap)
            self.neighbors[ordinal][layer] = [o for _, o in selected]
            for dist, other in selected:
                if layer == 0:
                    self.rev0[other].add(ordinal)
                other_list = self.neighbors[other][layer]
                other_list.append(ordinal)
                if layer == 0:
                    self.rev0[ordinal].add(other)
                if len(other_list) > cap:
                    self._prune(other, layer, cap)
            entry = [o for _, o in candidates]

        if level > self.max_level:
            self.max_level = level
            self.entry_point = ordinal
        return ordinal

    def _greedy_step(self, query: np.ndarray, start: int, layer: int) -> int:
        """Descend to the local minimum of distance on one layer."""
        current = start
        current_dist = 1.0 - float(self._vectors[current] @ query)
        improved = True
        while improved:
            improved = False
            nbrs = self.neighbors[current][layer]
            if not nbrs:
                break
            dists = self._dist_many(query, nbrs)
            best = int(np.argmin(dists))
            if dists[best] < current_dist:
                current_dist = float(dists[best])
                current = nbrs[best]
                improved = True
        return current

    def _search_layer(
        self,
        query: np.ndarray,
        entry_points: list[int],
        layer: int,
        ef: int,
        undirected: bool = False,
    ) -> list[tuple[float, int]]:
        """Beam search on one layer; returns (distance, ordinal) ascending.

        With undirected=True the base layer is traversed along both outgoing
        and reverse edges, which reaches nodes whose inbound links were lost
        to pruning. Construction keeps the cheaper directed traversal.
        """
        visited = bytearray(self._count)
        for point in entry_points:
            visited[point] = 1
        dists = self._dist_many(query, entry_points)
        candidates: list[tuple[float, int]] = list(zip(dists.tolist(), entry_points))
        heapq.heapify(candidates)
        # farthest-first heap of the best ef found so far
        best: list[tuple[float, int]] = [(-d, o) for d, o in candidates]
        heapq.heapify(best)
        while len(best) > ef:
            heapq.heappop(best)

        while candidates:
            dist, node = heapq.heappop(candidates)
            if dist > -best[0][0] and len(best) >= ef:
                break
            unvisited = [o for o in self.neighbors[node][layer] if not visited[o]]
            for other in unvisited:
                visited[other] = 1
            if undirected and layer == 0:
                for other in self.rev0[node]:
                    if not visited[other]:
                        visited[other] = 1
                        unvisited.append(other)
            if not unvisited:
                continue
            dists = self._dist_many(query, unvisited)
            worst = -best[0][0]
            full = len(best) >= ef
            for other, d in zip(unvisited, dists.tolist()):
                if not full or d < worst:
                    heapq.heappush(candidates, (d, other))
                    heapq.heappush(best, (-d, other))
                    if len(best) > ef:
                        heapq.heappop(best)
                    worst = -best[0][0]
                    full = len(best) >= ef
        out = [(-d, o) for d, o in best]
        out.sort()
        return out

    def _select_neighbors(
        self, candidates: list[tuple[float, int]], m: int
    ) -> list[tuple[float, int]]:
        """Diversity-aware selection: keep a candidate only if it is closer to
        the query than to every neighbor already kept, then fill from the
        discarded ones. Works off one precomputed pairwise distance matrix."""
        if len(candidates) <= m:
            return list(candidates)
        ordinals = [o for _, o in candidates]
        sub = self._vectors[ordinals]
        pair = 1.0 - sub @ sub.T  # pairwise distances among candidates
        selected: list[int] = []  # positions into candidates
        discarded: list[int] = []
        for pos, (dist, _) in enumerate(candidates):
            if len(selected) >= m:
                break
            row = pair[pos]
            diverse = True
            for s in selected:
                if row[s] < dist:
                    diverse = False
                    break
            if diverse:
                selected.append(pos)
            else:
                discarded.append(pos)
        for pos in discarded:
            if len(selected) >= m:
                break
            selected.append(pos)
        return [candidates[pos] for pos in selected]

    def _prune(self, node: int, layer: int, cap: int) -> None:
        nbrs = self.neighbors[node][layer]
        dists = self._dist_many(self._vectors[node], nbrs)
        candidates = sorted(zip(dists.tolist(), nbrs))
        kept = [o for _, o in self._select_neighbors(candidates, cap)]
        if layer == 0:
            for dropped in set(nbrs) - set(kept):
                self.rev0[dropped].discard(node)
        self.neighbors[node][layer] = kept

    # -- queries ------------------------------------------------------------

    def search(self, query: np.ndarray, k: int, ef: int) -> list[tuple[float, int]]:
        """Approximate k nearest alive ordinals as (distance, ordinal), ascending."""
        if self.entry_point is None:
            return []
        ef = max(ef, k)
        current = self.entry_point
        for layer in range(self.max_level, 0, -1):
            current = self._greedy_step(query, current, layer)
        found = self._search_layer(query, [current], 0, ef, undirected=True)
        found = self._expand_one_hop(query, found)
        alive = [(d, o) for d, o in found if self.alive[o]]
        return alive[:k]

    def _expand_one_hop(
        self, query: np.ndarray, found: list[tuple[float, int]]
    ) -> list[tuple[float, int]]:
        """Rescore the beam results plus their base-layer neighbors.

        One batched distance pass over the 1-hop neighborhood of the beam;
        recovers near-misses that fell just outside the beam width.
        """
        seen = {o for _, o in found}
        extra: list[int] = []
        for _, o in found:
            for nbr in self.neighbors[o][0]:
                if nbr not in seen:
                    seen.add(nbr)
                    extra.append(nbr)
            for nbr in self.rev0[o]:
                if nbr not in seen:
                    seen.add(nbr)
                    extra.append(nbr)
        if extra:
            dists = self._dist_many(query, extra)
            found = found + list(zip(dists.tolist(), extra))
        found.sort()
        return found

    def mark_dead(self, ordinal: int) -> None:
        self.alive[ordinal] = False

    def revive(self, ordinal: int) -> None:
        self.alive[ordinal] = True

    # -- persistence --------------------------------------------------------

    def restore(
        self,
        vectors: np.ndarray,
        levels: list[int],
        neighbors: list[list[list[int]]],
        entry_point: int | None,
        max_level: int,
    ) -> None:
        """Replace all graph state with a previously built graph, all nodes alive."""
        count = len(levels)
        self._capacity = count
        self._vectors = np.asarray(vectors, dtype=np.float32).reshape(count, self.dimension).copy()
        self._count = count
        self.levels = list(levels)
        self.neighbors = [[list(layer) for layer in node] for node in neighbors]
        self.alive = [True] * count
        self.rev0 = [set() for _ in range(count)]
        for node in range(count):
            for other in self.neighbors[node][0]:
                self.rev0[other].add(node)
        self.entry_point = entry_point
        self.max_level = max_level
