"""Evidence-weighted aggregation of overlapping masks into edge affinities.

For every edge (u, v) of the grid graph, each mask (center c, scale s)
covering both endpoints contributes an affinity a_i = min(m_u, m_v)
(fuzzy AND: both entries active) with evidence weight w_i = max(m_u, m_v)
(fuzzy OR: at least one entry active), where m_u and m_v are the mask
entries for u and v.  The edge statistics are the w-weighted mean and
w-weighted population variance of the a_i, accumulated online with
Welford updates in a fixed order: scales in configuration order, mask
centers in lexicographic (z, y, x) order.  Edges no mask can speak about
(total weight 0) are marked invalid.

A voxel p is covered by mask (c, s) iff p - c is componentwise divisible
by s with quotient inside the window (strided coverage).

The per-edge accumulation is embarrassingly parallel across offsets; the
result is bitwise independent of the worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .core import AffinityNeighborhood, Coord3, MaskWindow, Scale, SignedGridGraph
from .errors import ValidationError
from .masks import MaskProvider


class WelfordAccumulator:
    """Scalar weighted mean/variance accumulator (population form)."""

    def __init__(self) -> None:
        self.weight = 0.0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, value: float, weight: float) -> None:
        if weight < 0:
            raise ValidationError("weights must be nonnegative")
        if weight == 0.0:
            return
        self.weight += weight
        delta = value - self.mean
        self.mean += (weight / self.weight) * delta
        self.m2 += weight * delta * (value - self.mean)

    @property
    def variance(self) -> float:
        return self.m2 / self.weight if self.weight > 0 else 0.0


def _window_entries_center_ascending(window: MaskWindow):
    """Window entries n ordered so that centers c = u - s*n ascend with u fixed."""
    h = window.half
    out = []
    for nz in range(h.z, -h.z - 1, -1):
        for ny in range(h.y, -h.y - 1, -1):
            for nx in range(h.x, -h.x - 1, -1):
                out.append(Coord3(nx, ny, nz))
    return out


def _passes_for_offset(offset: Coord3, window: MaskWindow, scales: Sequence[Scale]):
    """All (scale, n_u, n_v) triples contributing to edges of one offset."""
    passes = []
    for s in scales:
        if offset.x % s.sx or offset.y % s.sy or offset.z % s.sz:
            continue
        step = Coord3(offset.x // s.sx, offset.y // s.sy, offset.z // s.sz)
        for n_u in _window_entries_center_ascending(window):
            n_v = n_u + step
            if window.contains(n_v):
                passes.append((s, n_u, n_v))
    return passes


def _region(extents_zyx, offset: Coord3, scale: Scale, n_u: Coord3):
    """(z, y, x) slices of sources u with u, u+offset and the mask center
    u - scale*n_u all in bounds, or None if empty."""
    sl = []
    for extent, o, shift in (
        (extents_zyx[0], offset.z, scale.sz * n_u.z),
        (extents_zyx[1], offset.y, scale.sy * n_u.y),
        (extents_zyx[2], offset.x, scale.sx * n_u.x),
    ):
        lo = max(0, -o, shift)
        hi = min(extent, extent - o, extent + shift)
        if hi <= lo:
            return None
        sl.append((lo, hi, shift))
    return sl


def aggregate_affinities(
    provider: MaskProvider,
    shape_xyz: Sequence[int] | None = None,
    neighborhood: AffinityNeighborhood | None = None,
    window: MaskWindow | None = None,
    scales: Sequence[Scale] | None = None,
    threads: int = 1,
) -> SignedGridGraph:
    """Run the mask-aggregation algorithm over a whole volume.

    ``shape_xyz``, ``window`` and ``scales`` default to the provider's own;
    passing explicit values asserts they match.
    """
    if neighborhood is None:
        raise ValidationError("neighborhood is required")
    if shape_xyz is None:
        shape_xyz = provider.shape_xyz
    elif tuple(shape_xyz) != tuple(provider.shape_xyz):
        raise ValidationError(f"shape {tuple(shape_xyz)} != provider shape {provider.shape_xyz}")
    if window is None:
        window = provider.window
    elif MaskWindow(*window) != provider.window:
        raise ValidationError(f"window {tuple(window)} != provider window {tuple(provider.window)}")
    window.validate()
    if scales is None:
        scales = provider.scales
    scales = [Scale(*s).validate() for s in scales]
    if not scales:
        raise ValidationError("at least one scale is required")
    for s in scales:
        provider.require_scale(s)

    x_ext, y_ext, z_ext = (int(v) for v in shape_xyz)
    zyx = (z_ext, y_ext, x_ext)
    fields = {s: provider.mask_field(s) for s in dict.fromkeys(scales)}
    k_count = len(neighborhood)

    mean = np.zeros((k_count,) + zyx)
    m2 = np.zeros((k_count,) + zyx)
    weight = np.zeros((k_count,) + zyx)

    def run_offset(k: int) -> None:
        offset = neighborhood.offsets[k]
        for s, n_u, n_v in _passes_for_offset(offset, window, scales):
            region = _region(zyx, offset, s, n_u)
            if region is None:
                continue
            u_sl = tuple(slice(lo, hi) for lo, hi, _ in region)
            c_sl = tuple(slice(lo - shift, hi - shift) for lo, hi, shift in region)
            field = fields[s]
            m_u = field[c_sl + (window.flat_index(n_u),)].astype(np.float64)
            m_v = field[c_sl + (window.flat_index(n_v),)].astype(np.float64)
            a = np.minimum(m_u, m_v)
            w = np.maximum(m_u, m_v)

            w_acc = weight[k][u_sl]
            mean_acc = mean[k][u_sl]
            m2_acc = m2[k][u_sl]
            w_acc += w
            coef = np.where(w > 0, w / np.where(w_acc > 0, w_acc, 1.0), 0.0)
            delta = a - mean_acc
            mean_acc += coef * delta
            m2_acc += w * delta * (a - mean_acc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_offset, range(k_count)))
    else:
        for k in range(k_count):
            run_offset(k)

    return SignedGridGraph.from_accumulators(shape_xyz, neighborhood, mean, m2, weight)


def baseline_affinities(
    provider: MaskProvider,
    shape_xyz: Sequence[int] | None = None,
    neighborhood: AffinityNeighborhood | None = None,
    window: MaskWindow | None = None,
) -> SignedGridGraph:
    """Direct affinity readout from the mask centered at each edge source.

    Edge (u, u+o) takes the single value M_u(o) from the full-resolution
    mask at u; no averaging, unit evidence, zero variance.  Every offset
    must fit inside the window.
    """
    if neighborhood is None:
        raise ValidationError("neighborhood is required")
    if shape_xyz is None:
        shape_xyz = provider.shape_xyz
    elif tuple(shape_xyz) != tuple(provider.shape_xyz):
        raise ValidationError(f"shape {tuple(shape_xyz)} != provider shape {provider.shape_xyz}")
    if window is None:
        window = provider.window
    elif MaskWindow(*window) != provider.window:
        raise ValidationError(f"window {tuple(window)} != provider window {tuple(provider.window)}")
    h = window.half
    for o in neighborhood.offsets:
        if abs(o.x) > h.x or abs(o.y) > h.y or abs(o.z) > h.z:
            raise ValidationError(f"offset {tuple(o)} outside window {tuple(window)}")

    x_ext, y_ext, z_ext = (int(v) for v in shape_xyz)
    zyx = (z_ext, y_ext, x_ext)
    field = provider.mask_field(Scale(1, 1, 1))
    k_count = len(neighborhood)
    mean = np.zeros((k_count,) + zyx)
    weight = np.zeros((k_count,) + zyx)
    for k, o in enumerate(neighborhood.offsets):
        sl = []
        empty = False
        for extent, comp in ((z_ext, o.z), (y_ext, o.y), (x_ext, o.x)):
            lo, hi = max(0, -comp), min(extent, extent - comp)
            if hi <= lo:
                empty = True
                break
            sl.append(slice(lo, hi))
        if empty:
            continue
        sl = tuple(sl)
        mean[k][sl] = field[sl + (window.flat_index(o),)].astype(np.float64)
        weight[k][sl] = 1.0
    variance = np.zeros_like(mean)
    mean = np.clip(np.where(weight > 0, mean, 0.0), 0.0, 1.0)
    return SignedGridGraph(tuple(shape_xyz), neighborhood, mean, variance, weight)
