"""Core volumetric types: coordinates, windows, scales, neighborhoods,
label volumes and the signed grid graph.

Conventions used throughout the package:

* Public APIs talk about shapes and coordinates in (x, y, z) order, with z
  the anisotropic axis.
* Dense arrays are stored (Z, Y, X) in C order, so x is the fastest-moving
  index and the flat index of voxel (x, y, z) is ``(z * Y + y) * X + x``.
* Mask windows are stored (Kz, Ky, Kx) with the same fastest-x convention.

All types are immutable after construction and safe to share across
threads; the operations in this module are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import ValidationError

LABEL_DTYPES = ("u8", "u32", "u64")


class Coord3(NamedTuple):
    """Signed voxel coordinate; arithmetic is exact integer arithmetic."""

    x: int
    y: int
    z: int

    def __add__(self, other: "Coord3") -> "Coord3":  # type: ignore[override]
        return Coord3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Coord3") -> "Coord3":
        return Coord3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __neg__(self) -> "Coord3":
        return Coord3(-self.x, -self.y, -self.z)

    def scaled(self, s: "Scale") -> "Coord3":
        return Coord3(self.x * s.sx, self.y * s.sy, self.z * s.sz)


class Scale(NamedTuple):
    """Per-axis integer stride of a mask; (1, 1, 1) is full resolution."""

    sx: int
    sy: int
    sz: int

    def validate(self) -> "Scale":
        if min(self) < 1:
            raise ValidationError(f"scale strides must be >= 1, got {tuple(self)}")
        return self


SCALE_FULL = Scale(1, 1, 1)
SCALE_QUARTER = Scale(4, 4, 1)
SCALE_EIGHTH = Scale(8, 8, 1)
SCALE_PRESETS = (SCALE_FULL, SCALE_QUARTER, SCALE_EIGHTH)


class MaskWindow(NamedTuple):
    """Odd per-axis extents of a centered mask window."""

    kx: int
    ky: int
    kz: int

    def validate(self) -> "MaskWindow":
        if min(self) < 1 or any(k % 2 == 0 for k in self):
            raise ValidationError(f"window extents must be odd positive, got {tuple(self)}")
        return self

    @property
    def half(self) -> Coord3:
        return Coord3((self.kx - 1) // 2, (self.ky - 1) // 2, (self.kz - 1) // 2)

    @property
    def size(self) -> int:
        return self.kx * self.ky * self.kz

    @property
    def shape_zyx(self) -> tuple[int, int, int]:
        return (self.kz, self.ky, self.kx)

    def contains(self, n: Coord3) -> bool:
        h = self.half
        return abs(n.x) <= h.x and abs(n.y) <= h.y and abs(n.z) <= h.z

    def flat_index(self, n: Coord3) -> int:
        """Flat index of window entry n in (z, y, x) storage order."""
        h = self.half
        if not self.contains(n):
            raise ValidationError(f"window entry {tuple(n)} outside window {tuple(self)}")
        return ((n.z + h.z) * self.ky + (n.y + h.y)) * self.kx + (n.x + h.x)


DEFAULT_WINDOW = MaskWindow(7, 7, 5)


@dataclass(frozen=True)
class AffinityNeighborhood:
    """Ordered sparse offset structure of the pixel grid graph.

    The first ``direct_count`` offsets are treated as short-range
    (direct-neighbor) edges; the rest are long-range and subject to
    subsampling during partitioning.  Offsets point backwards: edge
    (u, k) connects u with u + offsets[k].
    """

    offsets: tuple[Coord3, ...]
    direct_count: int

    def __post_init__(self) -> None:
        offs = tuple(Coord3(*o) for o in self.offsets)
        object.__setattr__(self, "offsets", offs)
        if len(set(offs)) != len(offs):
            raise ValidationError("neighborhood offsets must be unique")
        if any(o == Coord3(0, 0, 0) for o in offs):
            raise ValidationError("neighborhood offsets must be nonzero")
        if not 0 <= self.direct_count <= len(offs):
            raise ValidationError("direct_count out of range")

    def __len__(self) -> int:
        return len(self.offsets)

    def is_long_range(self, k: int) -> bool:
        return k >= self.direct_count


# 16-offset anisotropic grid-graph structure; the three leading offsets are
# the direct 6-connectivity neighbors (backward directions only).
GRID_NEIGHBORHOOD = AffinityNeighborhood(
    offsets=(
        Coord3(0, 0, -1),
        Coord3(-1, 0, 0),
        Coord3(0, -1, 0),
        Coord3(-4, 0, 0),
        Coord3(0, -4, 0),
        Coord3(-4, -4, 0),
        Coord3(4, -4, 0),
        Coord3(-4, 0, -1),
        Coord3(0, -4, -1),
        Coord3(-4, -4, -1),
        Coord3(4, -4, -1),
        Coord3(0, 0, -2),
        Coord3(-8, -8, 0),
        Coord3(8, -8, 0),
        Coord3(-12, 0, 0),
        Coord3(0, -12, 0),
    ),
    direct_count=3,
)

# Short-reach alternative whose offsets all fit inside the default 7x7x5
# window at full resolution, so both the aggregated and the direct-readout
# affinity routes can realize every edge.  Used by the robustness benchmark.
SHORT_NEIGHBORHOOD = AffinityNeighborhood(
    offsets=(
        Coord3(0, 0, -1),
        Coord3(-1, 0, 0),
        Coord3(0, -1, 0),
        Coord3(-3, 0, 0),
        Coord3(0, -3, 0),
        Coord3(-3, -3, 0),
        Coord3(3, -3, 0),
        Coord3(0, 0, -2),
        Coord3(-2, 0, -1),
        Coord3(0, -2, -1),
    ),
    direct_count=3,
)

NEIGHBORHOOD_PRESETS = {
    "grid": GRID_NEIGHBORHOOD,
    "short": SHORT_NEIGHBORHOOD,
}


def _check_shape(shape_xyz: Sequence[int]) -> tuple[int, int, int]:
    shape = tuple(int(v) for v in shape_xyz)
    if len(shape) != 3 or min(shape) < 1:
        raise ValidationError(f"shape must be three positive extents, got {shape_xyz}")
    return shape


@dataclass(frozen=True)
class LabelVolume:
    """Dense 3D instance labeling; ``data`` is (Z, Y, X) unsigned integers.

    Label id 0 is reserved for "unassigned" in outputs; ground-truth inputs
    use ids >= 1.  ``resolution`` is the physical voxel size (rz, ry, rx)
    and is informational only.
    """

    data: np.ndarray
    resolution: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise ValidationError(f"label volume must be 3D, got ndim={self.data.ndim}")
        if self.data.dtype.kind != "u":
            raise ValidationError(f"label volume dtype must be unsigned integer, got {self.data.dtype}")
        if min(self.data.shape) < 1:
            raise ValidationError("label volume extents must be positive")

    @property
    def shape_xyz(self) -> tuple[int, int, int]:
        z, y, x = self.data.shape
        return (x, y, z)

    @property
    def shape_zyx(self) -> tuple[int, int, int]:
        return self.data.shape

    def label_at(self, c: Coord3) -> int:
        return int(self.data[c.z, c.y, c.x])

    def in_bounds(self, c: Coord3) -> bool:
        x, y, z = self.shape_xyz
        return 0 <= c.x < x and 0 <= c.y < y and 0 <= c.z < z


def source_slices(shape_xyz: Sequence[int], offset: Coord3) -> tuple[slice, slice, slice] | None:
    """(z, y, x) slices of source voxels u with both u and u+offset in bounds.

    Returns None when no edge of this offset fits in the volume.
    """
    x, y, z = _check_shape(shape_xyz)
    los, his = [], []
    for extent, o in ((z, offset.z), (y, offset.y), (x, offset.x)):
        lo = max(0, -o)
        hi = min(extent, extent - o)
        if hi <= lo:
            return None
        los.append(lo)
        his.append(hi)
    return tuple(slice(lo, hi) for lo, hi in zip(los, his))


def edge_count(shape_xyz: Sequence[int], neighborhood: AffinityNeighborhood) -> int:
    x, y, z = _check_shape(shape_xyz)
    total = 0
    for o in neighborhood.offsets:
        total += max(0, x - abs(o.x)) * max(0, y - abs(o.y)) * max(0, z - abs(o.z))
    return total


def enumerate_edges(
    shape_xyz: Sequence[int], neighborhood: AffinityNeighborhood
) -> Iterator[tuple[Coord3, int]]:
    """Yield all in-bounds edges (u, k) in lexicographic (z, y, x, k) order.

    Edge (u, k) denotes the voxel pair {u, u + offsets[k]}.
    """
    x_ext, y_ext, z_ext = _check_shape(shape_xyz)
    offsets = neighborhood.offsets
    for z in range(z_ext):
        for y in range(y_ext):
            for x in range(x_ext):
                for k, o in enumerate(offsets):
                    vx, vy, vz = x + o.x, y + o.y, z + o.z
                    if 0 <= vx < x_ext and 0 <= vy < y_ext and 0 <= vz < z_ext:
                        yield Coord3(x, y, z), k


def edge_arrays(
    shape_xyz: Sequence[int], neighborhood: AffinityNeighborhood
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized edge enumeration: (u_flat, k) arrays in enumeration order.

    u_flat is the row-major x-fastest flat index of the source voxel.
    Agrees with :func:`enumerate_edges` element for element.
    """
    x_ext, y_ext, z_ext = _check_shape(shape_xyz)
    u_parts, k_parts = [], []
    for k, o in enumerate(neighborhood.offsets):
        sl = source_slices(shape_xyz, o)
        if sl is None:
            continue
        zz, yy, xx = np.meshgrid(
            np.arange(sl[0].start, sl[0].stop, dtype=np.int64),
            np.arange(sl[1].start, sl[1].stop, dtype=np.int64),
            np.arange(sl[2].start, sl[2].stop, dtype=np.int64),
            indexing="ij",
        )
        u_parts.append(((zz * y_ext + yy) * x_ext + xx).ravel())
        k_parts.append(np.full(u_parts[-1].size, k, dtype=np.int64))
    if not u_parts:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    u_flat = np.concatenate(u_parts)
    k_arr = np.concatenate(k_parts)
    order = np.lexsort((k_arr, u_flat))
    return u_flat[order], k_arr[order]


@dataclass(frozen=True)
class SignedGridGraph:
    """Per-edge aggregated affinity statistics over a sparse neighborhood.

    Arrays are (K, Z, Y, X) where K indexes the neighborhood offsets; entries
    at out-of-bounds or zero-evidence edges are zero and flagged invalid.
    """

    shape_xyz: tuple[int, int, int]
    neighborhood: AffinityNeighborhood
    mean: np.ndarray
    variance: np.ndarray
    evidence: np.ndarray
    valid: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        shape = _check_shape(self.shape_xyz)
        object.__setattr__(self, "shape_xyz", shape)
        zyx = (shape[2], shape[1], shape[0])
        expect = (len(self.neighborhood),) + zyx
        for name in ("mean", "variance", "evidence"):
            arr = getattr(self, name)
            if arr.shape != expect:
                raise ValidationError(f"{name} array has shape {arr.shape}, expected {expect}")
        if self.valid is None:
            object.__setattr__(self, "valid", self.evidence > 0)
        if self.valid.shape != expect:
            raise ValidationError("valid array shape mismatch")
        self._check_bounds()

    def _check_bounds(self) -> None:
        v = self.valid
        if np.any(self.evidence < 0):
            raise ValidationError("evidence must be nonnegative")
        if not np.array_equal(v, self.evidence > 0):
            raise ValidationError("valid flag must equal evidence > 0")
        if v.any():
            m = self.mean[v]
            if m.min() < 0 or m.max() > 1:
                raise ValidationError("edge means must lie in [0, 1]")
            var = self.variance[v]
            if var.min() < 0 or var.max() > 0.25 + 1e-9:
                raise ValidationError("edge variances must lie in [0, 0.25]")
        inv = ~v
        if inv.any() and (
            np.any(self.mean[inv] != 0) or np.any(self.variance[inv] != 0) or np.any(self.evidence[inv] != 0)
        ):
            raise ValidationError("invalid edges must carry zero statistics")

    @classmethod
    def from_accumulators(
        cls,
        shape_xyz: Sequence[int],
        neighborhood: AffinityNeighborhood,
        mean: np.ndarray,
        m2: np.ndarray,
        weight: np.ndarray,
    ) -> "SignedGridGraph":
        """Build the graph from Welford accumulators, zeroing no-evidence edges
        and clipping float dust on the bounded fields."""
        valid = weight > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            variance = np.where(valid, m2 / np.where(valid, weight, 1.0), 0.0)
        mean = np.where(valid, mean, 0.0)
        mean = np.clip(mean, 0.0, 1.0)
        variance = np.clip(variance, 0.0, 0.25)
        evidence = np.where(valid, weight, 0.0)
        return cls(tuple(shape_xyz), neighborhood, mean, variance, evidence)

    def edge_values(self, u: Coord3, k: int) -> tuple[float, float, float, bool]:
        """(mean, variance, evidence, valid) of edge (u, k)."""
        idx = (k, u.z, u.y, u.x)
        return (
            float(self.mean[idx]),
            float(self.variance[idx]),
            float(self.evidence[idx]),
            bool(self.valid[idx]),
        )
