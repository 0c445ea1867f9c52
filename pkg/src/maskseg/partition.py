"""Signed-graph partitioning and segmentation postprocessing.

Edge affinities are turned into signed weights w = mean - 0.5.  Two
partitioners are provided:

* Mutex Watershed: greedy pass over edges by decreasing |w|; attractive
  edges merge clusters unless a mutual-exclusion constraint connects them,
  repulsive edges record such a constraint.  Parameter-free apart from the
  long-range subsampling fraction.
* Average agglomeration: repeatedly merge the cluster pair with the highest
  evidence-weighted mean interaction while that interaction is positive.

Both consume the same deterministic edge subset: all valid short-range
edges plus a seeded pseudo-random fraction of the valid long-range edges,
selected by a splittable hash of (source voxel, offset index) so the subset
is stable across runs and machines.  All tie-breaking is by canonical edge
or cluster-pair order, so results are bitwise reproducible.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .core import LabelVolume, SignedGridGraph, source_slices
from .errors import ComputeError, ValidationError
from .hashing import hash_key, hash_uniform


@dataclass(frozen=True)
class PartitionConfig:
    """Knobs shared by the partitioners; weights are always mean - 0.5."""

    long_range_fraction: float = 0.10
    subsample_seed: int = 0
    min_segment_size: int = 200
    gasp_evidence_weighted: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.long_range_fraction <= 1.0:
            raise ValidationError("long_range_fraction must lie in [0, 1]")
        if self.min_segment_size < 0:
            raise ValidationError("min_segment_size must be >= 0")


def collect_edges(
    graph: SignedGridGraph, cfg: PartitionConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Valid, subsampled edges as (u_flat, v_flat, weight, evidence, order_key).

    order_key ranks edges canonically (enumeration order).  Short-range
    edges are always kept; long-range edges survive with probability
    ``long_range_fraction`` under the seeded hash of (u, k).
    """
    x_ext, y_ext, z_ext = graph.shape_xyz
    n_offsets = len(graph.neighborhood)
    state = hash_key(cfg.subsample_seed)

    us, vs, ws, evs, keys = [], [], [], [], []
    for k, off in enumerate(graph.neighborhood.offsets):
        sl = source_slices(graph.shape_xyz, off)
        if sl is None:
            continue
        valid = graph.valid[k][sl]
        if not valid.any():
            continue
        zz, yy, xx = np.meshgrid(
            np.arange(sl[0].start, sl[0].stop, dtype=np.int64),
            np.arange(sl[1].start, sl[1].stop, dtype=np.int64),
            np.arange(sl[2].start, sl[2].stop, dtype=np.int64),
            indexing="ij",
        )
        u_flat = ((zz * y_ext + yy) * x_ext + xx)[valid]
        v_flat = (((zz + off.z) * y_ext + (yy + off.y)) * x_ext + (xx + off.x))[valid]
        key = u_flat * n_offsets + k
        if graph.neighborhood.is_long_range(k):
            keep = hash_uniform(state, key.astype(np.uint64)) < cfg.long_range_fraction
            if not keep.any():
                continue
            u_flat, v_flat, key = u_flat[keep], v_flat[keep], key[keep]
            w = graph.mean[k][sl][valid][keep] - 0.5
            ev = graph.evidence[k][sl][valid][keep]
        else:
            w = graph.mean[k][sl][valid] - 0.5
            ev = graph.evidence[k][sl][valid]
        us.append(u_flat)
        vs.append(v_flat)
        ws.append(np.asarray(w, dtype=np.float64))
        evs.append(np.asarray(ev, dtype=np.float64))
        keys.append(key)
    if not us:
        raise ValidationError("graph has no valid edges")
    return (
        np.concatenate(us),
        np.concatenate(vs),
        np.concatenate(ws),
        np.concatenate(evs),
        np.concatenate(keys),
    )


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a: int) -> int:
        parent = self.parent
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(self, ra: int, rb: int) -> tuple[int, int]:
        """Merge roots; returns (survivor, absorbed)."""
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra, rb


def _labels_from_roots(uf: _UnionFind, zyx: tuple[int, int, int]) -> LabelVolume:
    n = zyx[0] * zyx[1] * zyx[2]
    roots = np.fromiter((uf.find(i) for i in range(n)), dtype=np.int64, count=n)
    _, inverse = np.unique(roots, return_inverse=True)
    labels = (inverse + 1).astype(np.uint32).reshape(zyx)
    return LabelVolume(labels)


def mutex_watershed(graph: SignedGridGraph, cfg: PartitionConfig | None = None) -> LabelVolume:
    """Greedy signed-graph partitioning with mutual-exclusion constraints.

    Edges are processed in strictly decreasing |w| with ties broken by
    enumeration order; w = 0 edges are skipped.  After the run every
    recorded constraint is verified to separate its endpoints, as a guard
    on the implementation.
    """
    cfg = cfg or PartitionConfig()
    u, v, w, _, key = collect_edges(graph, cfg)
    active = w != 0.0
    u, v, w, key = u[active], v[active], w[active], key[active]
    order = np.lexsort((key, -np.abs(w)))

    x_ext, y_ext, z_ext = graph.shape_xyz
    uf = _UnionFind(x_ext * y_ext * z_ext)
    mutex: dict[int, set[int]] = {}
    constraints: list[tuple[int, int]] = []

    u_l, v_l, w_l = u.tolist(), v.tolist(), w.tolist()
    for i in order.tolist():
        ru, rv = uf.find(u_l[i]), uf.find(v_l[i])
        if ru == rv:
            continue
        if w_l[i] > 0.0:
            if rv in mutex.get(ru, ()):
                continue
            keep, drop = uf.union(ru, rv)
            dropped = mutex.pop(drop, None)
            if dropped:
                kept = mutex.setdefault(keep, set())
                for partner in dropped:
                    pset = mutex[partner]
                    pset.discard(drop)
                    pset.add(keep)
                    kept.add(partner)
        else:
            mutex.setdefault(ru, set()).add(rv)
            mutex.setdefault(rv, set()).add(ru)
            constraints.append((u_l[i], v_l[i]))

    for a, b in constraints:
        if uf.find(a) == uf.find(b):
            raise ComputeError("mutex constraint violated by a later merge")

    return _labels_from_roots(uf, (z_ext, y_ext, x_ext))


def gasp_average(graph: SignedGridGraph, cfg: PartitionConfig | None = None) -> LabelVolume:
    """Agglomeration by highest average inter-cluster interaction.

    The interaction between two clusters is the evidence-weighted mean of
    the transformed weights of all edges between them (plain mean when
    ``gasp_evidence_weighted`` is off).  Merging continues while the best
    interaction is positive.
    """
    cfg = cfg or PartitionConfig()
    u, v, w, ev, _ = collect_edges(graph, cfg)
    if not cfg.gasp_evidence_weighted:
        ev = np.ones_like(ev)

    x_ext, y_ext, z_ext = graph.shape_xyz
    n = x_ext * y_ext * z_ext
    uf = _UnionFind(n)
    version = [0] * n
    # adjacency: root -> {other root: [sum of ev*w, sum of ev]}
    adj: dict[int, dict[int, list[float]]] = {}
    for a, b, wi, evi in zip(u.tolist(), v.tolist(), w.tolist(), ev.tolist()):
        if a == b:
            continue
        pair = adj.setdefault(a, {}).setdefault(b, [0.0, 0.0])
        pair[0] += evi * wi
        pair[1] += evi
        adj.setdefault(b, {})[a] = pair

    heap: list[tuple[float, int, int, int, int]] = []
    for a, nbrs in adj.items():
        for b, (sw, se) in nbrs.items():
            if a < b:
                heap.append((-sw / se, a, b, 0, 0))
    heapq.heapify(heap)

    while heap:
        neg, a, b, va, vb = heapq.heappop(heap)
        if version[a] != va or version[b] != vb:
            continue
        if -neg <= 0.0:
            break
        # survivor is the smaller root id, keeping pair keys canonical
        s, t = (a, b) if a < b else (b, a)
        uf.parent[t] = s
        uf.size[s] += uf.size[t]
        version[s] += 1
        version[t] += 1
        nbrs_s = adj.get(s, {})
        nbrs_t = adj.pop(t, {})
        nbrs_s.pop(t, None)
        nbrs_t.pop(s, None)
        for nb, (sw, se) in nbrs_t.items():
            adj[nb].pop(t, None)
            pair = nbrs_s.get(nb)
            if pair is None:
                pair = [sw, se]
                nbrs_s[nb] = pair
                adj[nb][s] = pair
            else:
                pair[0] += sw
                pair[1] += se
        adj[s] = nbrs_s
        for nb, (sw, se) in nbrs_s.items():
            lo, hi = (s, nb) if s < nb else (nb, s)
            heapq.heappush(heap, (-sw / se, lo, hi, version[lo], version[hi]))

    return _labels_from_roots(uf, (z_ext, y_ext, x_ext))


def remove_small_segments(
    seg: LabelVolume, graph: SignedGridGraph, min_size: int
) -> LabelVolume:
    """Delete segments below ``min_size`` voxels and regrow from the rest.

    Deleted voxels are absorbed by seeded region growing over
    short-range edges, always extending across the strongest affinity
    first (invalid edges count as affinity 0).  Surviving segments keep
    their ids and none of their voxels change.
    """
    if seg.shape_xyz != graph.shape_xyz:
        raise ValidationError(f"segmentation shape {seg.shape_xyz} != graph shape {graph.shape_xyz}")
    if min_size <= 1:
        return seg
    data = seg.data
    counts = np.bincount(data.ravel())
    ids = np.nonzero(counts)[0]
    ids = ids[ids > 0]
    small = ids[counts[ids] < min_size]
    if small.size == 0:
        return seg
    if small.size == ids.size:
        raise ComputeError("every segment is below the size threshold; nothing to seed from")

    zf, yf, xf = data.shape
    flat = data.ravel().astype(np.int64).copy()
    unassigned = np.isin(flat, small)
    flat[unassigned] = 0

    direct = graph.neighborhood.offsets[: graph.neighborhood.direct_count]
    if not direct:
        raise ComputeError("neighborhood has no short-range offsets to grow over")
    # neighbor steps: (flat index delta, offset index, source-is-self)
    steps = []
    for k, o in enumerate(direct):
        delta = (o.z * yf + o.y) * xf + o.x
        steps.append((k, o, delta))

    aff = np.zeros((len(direct), zf * yf * xf), dtype=np.float64)
    for k, o in enumerate(direct):
        vals = np.where(graph.valid[k], graph.mean[k], 0.0)
        aff[k] = vals.ravel()

    coords_z, coords_y, coords_x = np.unravel_index(np.arange(zf * yf * xf), (zf, yf, xf))

    def neighbors(p: int):
        pz, py, px = coords_z[p], coords_y[p], coords_x[p]
        for k, o, delta in steps:
            qz, qy, qx = pz + o.z, py + o.y, px + o.x
            if 0 <= qz < zf and 0 <= qy < yf and 0 <= qx < xf:
                yield p + delta, aff[k, p]
            qz, qy, qx = pz - o.z, py - o.y, px - o.x
            if 0 <= qz < zf and 0 <= qy < yf and 0 <= qx < xf:
                yield p - delta, aff[k, p - delta]

    heap: list[tuple[float, int, int]] = []
    for p in np.nonzero(unassigned)[0].tolist():
        for q, a in neighbors(p):
            if flat[q] > 0:
                heap.append((-a, p, int(flat[q])))
    heapq.heapify(heap)

    remaining = int(unassigned.sum())
    while heap and remaining:
        na, p, lab = heapq.heappop(heap)
        if flat[p] > 0:
            continue
        flat[p] = lab
        remaining -= 1
        for q, a in neighbors(p):
            if flat[q] == 0:
                heapq.heappush(heap, (-a, q, lab))
    if remaining:
        raise ComputeError("region growing could not reach every deleted voxel")

    return LabelVolume(flat.astype(data.dtype).reshape(data.shape), seg.resolution)
