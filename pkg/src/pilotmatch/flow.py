"""Integer min-cost flow by successive shortest augmenting paths.

The solver kernel is the package's hot loop: every optimal matching is a
min-cost-flow instance with integer-scaled distances as arc costs. The
kernel is written as plain loops and compiled with numba's @njit; setting
the environment variable PILOTMATCH_NUMBA=0 selects the uncompiled Python
fallback (same function, same results, much slower). See
benchmarks/bench_flow.py for a comparison of the two paths.
"""

from __future__ import annotations

import os

import numpy as np

INF = np.int64(2**62)

_ENV_FLAG = "PILOTMATCH_NUMBA"


def numba_requested() -> bool:
    return os.environ.get(_ENV_FLAG, "1").strip().lower() not in ("0", "false", "no")


def _ssp_kernel(n_nodes, first_out, adj_arc, arc_to, arc_cap, arc_cost,
                potential, source, sink, flow_target):
    """Successive shortest paths with Johnson potentials.

    Arcs come in pairs: arc a and a^1 are each other's reverses. arc_cap
    is mutated in place (residual capacities). All costs must be
    nonnegative at entry. Returns (flow_sent, total_cost).
    """
    dist = np.empty(n_nodes, dtype=np.int64)
    parent = np.empty(n_nodes, dtype=np.int64)
    visited = np.empty(n_nodes, dtype=np.bool_)
    heap_key = np.empty(adj_arc.shape[0] + 1, dtype=np.int64)
    heap_node = np.empty(adj_arc.shape[0] + 1, dtype=np.int64)

    flow_sent = np.int64(0)
    total_cost = np.int64(0)

    while flow_sent < flow_target:
        for v in range(n_nodes):
            dist[v] = INF
            parent[v] = -1
            visited[v] = False
        dist[source] = 0
        heap_key[0] = 0
        heap_node[0] = source
        heap_size = 1

        sink_found = False
        while heap_size > 0:
            # pop min (key, node)
            top_key = heap_key[0]
            u = heap_node[0]
            heap_size -= 1
            heap_key[0] = heap_key[heap_size]
            heap_node[0] = heap_node[heap_size]
            i = 0
            while True:
                left = 2 * i + 1
                right = left + 1
                smallest = i
                if left < heap_size and (
                    heap_key[left] < heap_key[smallest]
                    or (heap_key[left] == heap_key[smallest]
                        and heap_node[left] < heap_node[smallest])
                ):
                    smallest = left
                if right < heap_size and (
                    heap_key[right] < heap_key[smallest]
                    or (heap_key[right] == heap_key[smallest]
                        and heap_node[right] < heap_node[smallest])
                ):
                    smallest = right
                if smallest == i:
                    break
                heap_key[i], heap_key[smallest] = heap_key[smallest], heap_key[i]
                heap_node[i], heap_node[smallest] = heap_node[smallest], heap_node[i]
                i = smallest

            if visited[u] or top_key > dist[u]:
                continue
            visited[u] = True
            if u == sink:
                sink_found = True
                break
            du = dist[u]
            pu = potential[u]
            for idx in range(first_out[u], first_out[u + 1]):
                a = adj_arc[idx]
                if arc_cap[a] <= 0:
                    continue
                v = arc_to[a]
                if visited[v]:
                    continue
                nd = du + arc_cost[a] + pu - potential[v]
                if nd < dist[v]:
                    dist[v] = nd
                    parent[v] = a
                    # push (nd, v)
                    j = heap_size
                    heap_key[j] = nd
                    heap_node[j] = v
                    heap_size += 1
                    while j > 0:
                        par = (j - 1) // 2
                        if heap_key[par] > heap_key[j] or (
                            heap_key[par] == heap_key[j]
                            and heap_node[par] > heap_node[j]
                        ):
                            heap_key[par], heap_key[j] = heap_key[j], heap_key[par]
                            heap_node[par], heap_node[j] = heap_node[j], heap_node[par]
                            j = par
                        else:
                            break

        if not sink_found:
            break

        d_sink = dist[sink]
        for v in range(n_nodes):
            if dist[v] < d_sink:
                potential[v] += dist[v]
            else:
                potential[v] += d_sink

        # bottleneck along the augmenting path
        delta = flow_target - flow_sent
        v = sink
        while v != source:
            a = parent[v]
            if arc_cap[a] < delta:
                delta = arc_cap[a]
            v = arc_to[a ^ 1]
        v = sink
        while v != source:
            a = parent[v]
            arc_cap[a] -= delta
            arc_cap[a ^ 1] += delta
            total_cost += delta * arc_cost[a]
            v = arc_to[a ^ 1]
        flow_sent += delta

    return flow_sent, total_cost


if numba_requested():
    try:
        from numba import njit

        _ssp = njit(cache=True, nogil=True)(_ssp_kernel)
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _ssp = _ssp_kernel
        BACKEND = "python"
else:
    _ssp = _ssp_kernel
    BACKEND = "python"


class MinCostFlow:
    """Arc builder plus solver front end for the SSP kernel."""

    def __init__(self, n_nodes: int):
        self.n_nodes = n_nodes
        self._chunks: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
        self._n_arcs = 0
        self._orig_cap: np.ndarray | None = None
        self._res_cap: np.ndarray | None = None

    def add_arcs(self, u, v, cap, cost) -> np.ndarray:
        """Add forward arcs (with paired reverses); returns forward arc ids."""
        u = np.asarray(u, dtype=np.int64).ravel()
        v = np.asarray(v, dtype=np.int64).ravel()
        cap = np.broadcast_to(np.asarray(cap, dtype=np.int64), u.shape).ravel()
        cost = np.broadcast_to(np.asarray(cost, dtype=np.int64), u.shape).ravel()
        if np.any(cost < 0):
            raise ValueError("arc costs must be nonnegative")
        if np.any(cap < 0):
            raise ValueError("arc capacities must be nonnegative")
        m = u.size
        tails = np.empty(2 * m, dtype=np.int64)
        heads = np.empty(2 * m, dtype=np.int64)
        caps = np.empty(2 * m, dtype=np.int64)
        costs = np.empty(2 * m, dtype=np.int64)
        tails[0::2], tails[1::2] = u, v
        heads[0::2], heads[1::2] = v, u
        caps[0::2], caps[1::2] = cap, 0
        costs[0::2], costs[1::2] = cost, -cost
        self._chunks.append((tails, heads, caps, costs))
        ids = self._n_arcs + 2 * np.arange(m, dtype=np.int64)
        self._n_arcs += 2 * m
        return ids

    def add_arc(self, u: int, v: int, cap: int, cost: int) -> int:
        return int(self.add_arcs([u], [v], [cap], [cost])[0])

    def solve(self, source: int, sink: int, flow_target: int) -> tuple[int, int]:
        """Send up to flow_target units; returns (flow_sent, total_cost)."""
        tail = np.concatenate([c[0] for c in self._chunks])
        arc_to = np.concatenate([c[1] for c in self._chunks])
        arc_cap = np.concatenate([c[2] for c in self._chunks])
        arc_cost = np.concatenate([c[3] for c in self._chunks])
        self._tail, self._head, self._cost_arr = tail, arc_to, arc_cost
        order = np.argsort(tail, kind="stable").astype(np.int64)
        counts = np.bincount(tail, minlength=self.n_nodes)
        first_out = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=first_out[1:])
        potential = np.zeros(self.n_nodes, dtype=np.int64)

        self._orig_cap = arc_cap.copy()
        flow_sent, total_cost = _ssp(
            np.int64(self.n_nodes), first_out, order, arc_to, arc_cap,
            arc_cost, potential, np.int64(source), np.int64(sink),
            np.int64(flow_target),
        )
        self._res_cap = arc_cap
        self._potential = potential
        return int(flow_sent), int(total_cost)

    def flows(self, arc_ids) -> np.ndarray:
        """Flow on forward arcs after solve()."""
        if self._res_cap is None:
            raise RuntimeError("solve() has not been called")
        ids = np.asarray(arc_ids, dtype=np.int64)
        return self._orig_cap[ids] - self._res_cap[ids]

    def flow(self, arc_id: int) -> int:
        return int(self.flows([arc_id])[0])

    def verify_optimality(self) -> bool:
        """Complementary-slackness check on the final residual network.

        Every residual arc must have nonnegative reduced cost, which rules
        out negative-cost residual cycles.
        """
        if self._res_cap is None:
            raise RuntimeError("solve() has not been called")
        tail, head, cost = self._tail, self._head, self._cost_arr
        pot = self._potential
        residual = self._res_cap > 0
        reduced = cost + pot[tail] - pot[head]
        return bool(np.all(reduced[residual] >= 0))
