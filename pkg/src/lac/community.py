"""Email friendship graph and Louvain community detection.

The friendship graph is undirected and weighted: every internal
sender/recipient pair of an email adds one unit of edge weight. Communities
are found by greedy modularity maximization in two repeated phases, local
node moving followed by graph aggregation, with a fixed node visiting order
so results are reproducible.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from lac.errors import DataError
from lac.logparse import EmailEdgeRecord

_BRUTE_FORCE_LIMIT = 10
_MAX_SWEEPS = 1000


@dataclass
class FriendshipGraph:
    """Symmetric weighted graph over employee ids, no self-loops."""

    nodes: tuple[str, ...]
    adjacency: dict[str, dict[str, float]]

    def __post_init__(self) -> None:
        self._degrees = {
            i: sum(self.adjacency[i][j] for j in sorted(self.adjacency[i]))
            for i in self.nodes
        }
        self._total_weight = 0.5 * sum(self._degrees[i] for i in self.nodes)

    @property
    def total_weight(self) -> float:
        """m, the sum of all edge weights."""
        return self._total_weight

    def degree(self, node: str) -> float:
        return self._degrees[node]

    def neighbors(self, node: str) -> dict[str, float]:
        return self.adjacency[node]

    def edge_count(self) -> int:
        return sum(len(v) for v in self.adjacency.values()) // 2


@dataclass
class Partition:
    """Total assignment of nodes to dense community indices 0..count-1."""

    assignment: dict[str, int]
    community_count: int

    def __post_init__(self) -> None:
        used = set(self.assignment.values())
        if self.community_count != len(used) or used != set(range(self.community_count)):
            raise DataError("community indices must be dense 0..count-1")

    @classmethod
    def from_assignment(cls, assignment: dict[str, int]) -> "Partition":
        remap: dict[int, int] = {}
        dense: dict[str, int] = {}
        for node in sorted(assignment):
            c = assignment[node]
            if c not in remap:
                remap[c] = len(remap)
            dense[node] = remap[c]
        return cls(dense, len(remap))

    def communities(self) -> list[list[str]]:
        groups: list[list[str]] = [[] for _ in range(self.community_count)]
        for node in sorted(self.assignment):
            groups[self.assignment[node]].append(node)
        return groups


def build_friendship_graph(
    email_edges: Iterable[EmailEdgeRecord], internal_ids: Iterable[str]
) -> FriendshipGraph:
    """Accumulate sender/recipient message counts into symmetric edge weights.

    Pairs involving an external address are dropped; self-mails are ignored.
    Internal ids with no email traffic stay in the graph as isolated nodes.
    """
    internal = set(internal_ids)
    adj: dict[str, dict[str, float]] = {i: {} for i in sorted(internal)}
    for rec in email_edges:
        if rec.sender not in internal:
            continue
        for recipient in rec.recipients:
            if recipient == rec.sender or recipient not in internal:
                continue
            adj[rec.sender][recipient] = adj[rec.sender].get(recipient, 0.0) + 1.0
            adj[recipient][rec.sender] = adj[recipient].get(rec.sender, 0.0) + 1.0
    return FriendshipGraph(tuple(sorted(internal)), adj)


def modularity(graph: FriendshipGraph, partition: Partition) -> float:
    """Classic weighted modularity Q of a partition.

    Q sums, over communities, the intra-community weight fraction minus the
    squared fraction of total degree, equivalently
    (1/2m) * sum_ij [A_ij - k_i*k_j/2m] * delta(C_i, C_j).
    """
    if graph.total_weight <= 0.0:
        raise DataError("modularity undefined on a graph with zero total weight")
    missing = [n for n in graph.nodes if n not in partition.assignment]
    if missing:
        raise DataError(f"partition missing nodes, e.g. {missing[0]!r}")
    two_m = 2.0 * graph.total_weight
    members: dict[int, list[str]] = {}
    for node in graph.nodes:
        members.setdefault(partition.assignment[node], []).append(node)
    q = 0.0
    for c in sorted(members):
        group = set(members[c])
        sigma_in = 0.0
        sigma_tot = 0.0
        for i in members[c]:
            nbrs = graph.neighbors(i)
            sigma_in += sum(nbrs[j] for j in sorted(nbrs) if j in group)
            sigma_tot += graph.degree(i)
        q += sigma_in / two_m - (sigma_tot / two_m) ** 2
    return q


@dataclass
class LouvainTrace:
    """Q bookkeeping per aggregation level and local-moving sweep."""

    sweep_q: list[list[float]] = field(default_factory=list)
    level_q: list[float] = field(default_factory=list)
    final_q: float = 0.0


class _LevelGraph:
    """Aggregated working graph: integer nodes, self weights allowed.

    self_weight[i] holds the ordered-pair internal weight of the super-node,
    so degrees and 2m stay invariant under aggregation.
    """

    def __init__(self, neighbor_lists: list[list[tuple[int, float]]], self_weight: list[float]):
        self.neighbors = neighbor_lists
        self.self_weight = self_weight
        self.degree = [
            sw + sum(w for _, w in nbrs) for sw, nbrs in zip(self_weight, neighbor_lists)
        ]
        self.n = len(neighbor_lists)


def _singleton_q(level: _LevelGraph, two_m: float) -> float:
    return sum(
        level.self_weight[i] / two_m - (level.degree[i] / two_m) ** 2
        for i in range(level.n)
    )


def _local_moving(level: _LevelGraph, two_m: float, trace_sweeps: list[float]) -> tuple[list[int], float, bool]:
    """One local-moving phase; returns (community per node, Q, any_move)."""
    comm = list(range(level.n))
    sigma_tot = list(level.degree)
    q = _singleton_q(level, two_m)
    moved_any = False
    for _ in range(_MAX_SWEEPS):
        moved_this_sweep = False
        for i in range(level.n):
            a = comm[i]
            k_i = level.degree[i]
            weights_to: dict[int, float] = {}
            for j, w in level.neighbors[i]:
                cj = comm[j]
                weights_to[cj] = weights_to.get(cj, 0.0) + w
            k_in_a = weights_to.get(a, 0.0)
            sigma_a_rest = sigma_tot[a] - k_i
            best_c = a
            best_gain = 0.0
            for b in sorted(weights_to):
                if b == a:
                    continue
                gain = (
                    2.0 * (weights_to[b] - k_in_a) / two_m
                    - 2.0 * k_i * (sigma_tot[b] - sigma_a_rest) / (two_m * two_m)
                )
                if gain > best_gain:
                    best_gain = gain
                    best_c = b
            if best_c != a:
                comm[i] = best_c
                sigma_tot[a] -= k_i
                sigma_tot[best_c] += k_i
                q += best_gain
                moved_this_sweep = True
                moved_any = True
        trace_sweeps.append(q)
        if not moved_this_sweep:
            break
    return comm, q, moved_any


def _aggregate(level: _LevelGraph, comm: list[int]) -> tuple[_LevelGraph, list[int]]:
    """Collapse communities into super-nodes; returns (new level, dense map)."""
    order: dict[int, int] = {}
    for i in range(level.n):  # dense ids by first appearance = min member index
        if comm[i] not in order:
            order[comm[i]] = len(order)
    dense = [order[c] for c in comm]
    n_new = len(order)
    self_w = [0.0] * n_new
    cross: list[dict[int, float]] = [{} for _ in range(n_new)]
    for i in range(level.n):
        ci = dense[i]
        self_w[ci] += level.self_weight[i]
        for j, w in level.neighbors[i]:
            cj = dense[j]
            if cj == ci:
                self_w[ci] += w  # ordered pairs: i->j and j->i both land here
            else:
                cross[ci][cj] = cross[ci].get(cj, 0.0) + w
    neighbor_lists = [sorted(d.items()) for d in cross]
    return _LevelGraph(neighbor_lists, self_w), dense


def louvain(graph: FriendshipGraph, trace: LouvainTrace | None = None) -> Partition:
    """Greedy two-phase modularity maximization.

    Nodes are visited in ascending id order; a move needs strictly positive
    modularity gain, ties going to the lowest community index. Aggregation
    repeats until a local-moving phase makes no move. Isolated nodes become
    singleton communities appended after the dense connected communities.
    """
    if graph.total_weight <= 0.0:
        raise DataError("louvain undefined on a graph with zero total weight")
    active = [n for n in graph.nodes if graph.degree(n) > 0.0]
    isolated = [n for n in graph.nodes if graph.degree(n) == 0.0]
    index = {n: i for i, n in enumerate(active)}
    neighbor_lists = [
        [(index[j], graph.neighbors(n)[j]) for j in sorted(graph.neighbors(n))]
        for n in active
    ]
    level = _LevelGraph(neighbor_lists, [0.0] * len(active))
    two_m = 2.0 * graph.total_weight

    node_to_super = list(range(len(active)))
    while True:
        sweeps: list[float] = []
        comm, q, moved = _local_moving(level, two_m, sweeps)
        if trace is not None:
            trace.sweep_q.append(sweeps)
            trace.level_q.append(q)
        if not moved:
            break
        level, dense = _aggregate(level, comm)
        node_to_super = [dense[comm[cur]] for cur in node_to_super]
        if level.n == 1:
            break
    if trace is not None:
        trace.final_q = trace.level_q[-1] if trace.level_q else 0.0

    assignment = {n: node_to_super[index[n]] for n in active}
    dense_partition = Partition.from_assignment(assignment) if active else None
    final: dict[str, int] = dict(dense_partition.assignment) if dense_partition else {}
    next_idx = dense_partition.community_count if dense_partition else 0
    for n in isolated:
        final[n] = next_idx
        next_idx += 1
    return Partition(final, next_idx)


def _set_partitions(items: Sequence[str]):
    """Enumerate all set partitions via restricted growth strings."""
    n = len(items)
    if n == 0:
        yield []
        return
    codes = [0] * n
    maxes = [0] * n
    while True:
        groups: dict[int, list[str]] = {}
        for item, c in zip(items, codes):
            groups.setdefault(c, []).append(item)
        yield [groups[c] for c in sorted(groups)]
        i = n - 1
        while i > 0 and codes[i] == maxes[i - 1] + 1:
            codes[i] = 0
            i -= 1
        if i == 0:
            return
        codes[i] += 1
        maxes[i] = max(maxes[i - 1], codes[i])
        for j in range(i + 1, n):
            maxes[j] = maxes[i]


def brute_force_best_partition(graph: FriendshipGraph) -> tuple[Partition, float]:
    """Exhaustive modularity maximum over all set partitions (test oracle).

    Only feasible for small graphs; rejects more than 10 nodes.
    """
    if len(graph.nodes) > _BRUTE_FORCE_LIMIT:
        raise DataError(
            f"brute force limited to {_BRUTE_FORCE_LIMIT} nodes, got {len(graph.nodes)}"
        )
    if graph.total_weight <= 0.0:
        raise DataError("modularity undefined on a graph with zero total weight")
    best_q = -math.inf
    best: Partition | None = None
    for groups in _set_partitions(graph.nodes):
        assignment = {n: c for c, group in enumerate(groups) for n in group}
        p = Partition(assignment, len(groups))
        q = modularity(graph, p)
        if q > best_q:
            best_q = q
            best = p
    assert best is not None
    return best, best_q


def normalized_mutual_information(p1: Partition, p2: Partition) -> float:
    """NMI between two partitions of the same node set, arithmetic-mean form."""
    nodes = sorted(p1.assignment)
    if sorted(p2.assignment) != nodes:
        raise DataError("partitions cover different node sets")
    n = len(nodes)
    if n == 0:
        raise DataError("NMI undefined for empty partitions")
    counts: dict[tuple[int, int], int] = {}
    row: dict[int, int] = {}
    col: dict[int, int] = {}
    for node in nodes:
        a, b = p1.assignment[node], p2.assignment[node]
        counts[(a, b)] = counts.get((a, b), 0) + 1
        row[a] = row.get(a, 0) + 1
        col[b] = col.get(b, 0) + 1
    h1 = -sum((c / n) * math.log(c / n) for c in row.values() if c)
    h2 = -sum((c / n) * math.log(c / n) for c in col.values() if c)
    if h1 == 0.0 and h2 == 0.0:
        return 1.0
    mi = 0.0
    for (a, b), c in counts.items():
        mi += (c / n) * math.log(n * c / (row[a] * col[b]))
    denom = 0.5 * (h1 + h2)
    if denom == 0.0:
        return 0.0
    return max(0.0, min(1.0, mi / denom))
