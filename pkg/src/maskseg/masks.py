"""Central instance masks and mask providers.

A central instance mask gives, for every window entry n around a center
voxel c, the pseudo-probability that c + scale*n belongs to the same
instance as c.  Ground-truth masks are binary; providers may return fuzzy
values.  A provider is any deterministic source of masks: the ground-truth
oracle, a noise-perturbed wrapper, a codec round-trip (see codec module),
or a file of exported predictions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter
from scipy.special import ndtri

from .core import DEFAULT_WINDOW, Coord3, LabelVolume, MaskWindow, Scale
from .errors import ValidationError
from .hashing import hash_key, hash_uniform
from .io import read_mask_field

LOGIT_EPS = 1e-4


@dataclass(frozen=True)
class CentralInstanceMask:
    """Fuzzy membership window around a center voxel.

    ``values`` is a (Kz, Ky, Kx) float32 array; entry n = (nx, ny, nz) lives
    at ``values[nz + hz, ny + hy, nx + hx]``.
    """

    window: MaskWindow
    scale: Scale
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != self.window.shape_zyx:
            raise ValidationError(
                f"mask values shape {self.values.shape} != window {self.window.shape_zyx}"
            )
        lo, hi = float(self.values.min()), float(self.values.max())
        if lo < 0.0 or hi > 1.0:
            raise ValidationError(f"mask values outside [0, 1]: min={lo}, max={hi}")

    def value(self, n: Coord3) -> float:
        h = self.window.half
        return float(self.values[n.z + h.z, n.y + h.y, n.x + h.x])

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def single_pixel_mask(window: MaskWindow, scale: Scale) -> CentralInstanceMask:
    """Mask with only the center active; the training target on boundaries."""
    values = np.zeros(window.shape_zyx, dtype=np.float32)
    h = window.half
    values[h.z, h.y, h.x] = 1.0
    return CentralInstanceMask(window, scale, values)


def boundary_near_map(labels: LabelVolume) -> np.ndarray:
    """Voxels with an in-plane Chebyshev-distance-1 neighbor of another label.

    The test is restricted to the xy plane (dz = 0) because of the strong
    z anisotropy of the data this targets.
    """
    data = labels.data
    near = np.zeros(data.shape, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            a_y = slice(max(0, dy), data.shape[1] + min(0, dy))
            a_x = slice(max(0, dx), data.shape[2] + min(0, dx))
            b_y = slice(max(0, -dy), data.shape[1] + min(0, -dy))
            b_x = slice(max(0, -dx), data.shape[2] + min(0, -dx))
            near[:, a_y, a_x] |= data[:, a_y, a_x] != data[:, b_y, b_x]
    return near


def gt_mask(
    labels: LabelVolume,
    center: Coord3,
    window: MaskWindow,
    scale: Scale,
    empty_near_boundary: bool = False,
) -> CentralInstanceMask:
    """Binary ground-truth mask at a center voxel.

    Entry n is 1 iff the voxel center + scale*n is in bounds and carries the
    same label as the center; out-of-bounds entries are 0.  When
    ``empty_near_boundary`` is set and the center is boundary-near, the
    single-pixel-cluster mask is returned instead.
    """
    window.validate()
    scale.validate()
    if not labels.in_bounds(center):
        raise ValidationError(f"center {tuple(center)} out of bounds {labels.shape_xyz}")
    if empty_near_boundary and _is_boundary_near(labels, center):
        return single_pixel_mask(window, scale)
    h = window.half
    own = labels.label_at(center)
    values = np.zeros(window.shape_zyx, dtype=np.float32)
    for nz in range(-h.z, h.z + 1):
        for ny in range(-h.y, h.y + 1):
            for nx in range(-h.x, h.x + 1):
                p = Coord3(center.x + scale.sx * nx, center.y + scale.sy * ny, center.z + scale.sz * nz)
                if labels.in_bounds(p) and labels.label_at(p) == own:
                    values[nz + h.z, ny + h.y, nx + h.x] = 1.0
    return CentralInstanceMask(window, scale, values)


def _is_boundary_near(labels: LabelVolume, center: Coord3) -> bool:
    own = labels.label_at(center)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            v = Coord3(center.x + dx, center.y + dy, center.z)
            if labels.in_bounds(v) and labels.label_at(v) != own:
                return True
    return False


def gt_mask_field(
    labels: LabelVolume,
    window: MaskWindow,
    scale: Scale,
    empty_near_boundary: bool = False,
) -> np.ndarray:
    """Dense (Z, Y, X, D) float32 field of ground-truth masks for all centers.

    Equivalent to stacking :func:`gt_mask` over every voxel, computed by
    shifted whole-volume comparisons.
    """
    window.validate()
    scale.validate()
    data = labels.data
    zf, yf, xf = data.shape
    h = window.half
    field = np.zeros((zf, yf, xf, window.size), dtype=np.float32)
    d = 0
    for nz in range(-h.z, h.z + 1):
        for ny in range(-h.y, h.y + 1):
            for nx in range(-h.x, h.x + 1):
                oz, oy, ox = nz * scale.sz, ny * scale.sy, nx * scale.sx
                c_z = slice(max(0, -oz), zf + min(0, -oz))
                c_y = slice(max(0, -oy), yf + min(0, -oy))
                c_x = slice(max(0, -ox), xf + min(0, -ox))
                if c_z.stop > c_z.start and c_y.stop > c_y.start and c_x.stop > c_x.start:
                    p_z = slice(c_z.start + oz, c_z.stop + oz)
                    p_y = slice(c_y.start + oy, c_y.stop + oy)
                    p_x = slice(c_x.start + ox, c_x.stop + ox)
                    field[c_z, c_y, c_x, d] = data[c_z, c_y, c_x] == data[p_z, p_y, p_x]
                d += 1
    if empty_near_boundary:
        near = boundary_near_map(labels)
        row = np.zeros(window.size, dtype=np.float32)
        row[window.flat_index(Coord3(0, 0, 0))] = 1.0
        field[near] = row
    return field


class MaskProvider:
    """Base class: deterministic, immutable mask source for one volume."""

    window: MaskWindow
    scales: tuple[Scale, ...]
    shape_xyz: tuple[int, int, int]

    def mask(self, center: Coord3, scale: Scale) -> CentralInstanceMask:
        raise NotImplementedError

    def mask_field(self, scale: Scale) -> np.ndarray:
        """(Z, Y, X, D) float32 field of all masks at one scale.

        Generic fallback assembles the field one center at a time;
        subclasses override with vectorized builders.
        """
        self.require_scale(scale)
        x, y, z = self.shape_xyz
        field = np.empty((z, y, x, self.window.size), dtype=np.float32)
        for cz in range(z):
            for cy in range(y):
                for cx in range(x):
                    field[cz, cy, cx] = self.mask(Coord3(cx, cy, cz), scale).flat
        return field

    def require_scale(self, scale: Scale) -> None:
        if tuple(scale) not in {tuple(s) for s in self.scales}:
            raise ValidationError(f"scale {tuple(scale)} not supported (have {self.scales})")


class OracleMaskProvider(MaskProvider):
    """Ground-truth oracle standing in for a trained network."""

    def __init__(
        self,
        labels: LabelVolume,
        window: MaskWindow | None = None,
        scales: tuple[Scale, ...] = (Scale(1, 1, 1),),
        empty_near_boundary: bool = False,
    ):
        self.labels = labels
        self.window = (window or DEFAULT_WINDOW).validate()
        self.scales = tuple(Scale(*s).validate() for s in scales)
        self.shape_xyz = labels.shape_xyz
        self.empty_near_boundary = empty_near_boundary

    def mask(self, center: Coord3, scale: Scale) -> CentralInstanceMask:
        self.require_scale(scale)
        return gt_mask(self.labels, center, self.window, scale, self.empty_near_boundary)

    def mask_field(self, scale: Scale) -> np.ndarray:
        self.require_scale(scale)
        return gt_mask_field(self.labels, self.window, scale, self.empty_near_boundary)


@dataclass(frozen=True)
class NoiseConfig:
    """Additive logit-space noise; ``flip_sigma`` = 0 is the identity."""

    flip_sigma: float = 0.0
    smoothing_radius: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.flip_sigma < 0:
            raise ValidationError("flip_sigma must be >= 0")
        if self.smoothing_radius < 0:
            raise ValidationError("smoothing_radius must be >= 0")


class NoisyMaskProvider(MaskProvider):
    """Wraps a provider with deterministic logit-space noise.

    The noise value for window entry n of mask (center, scale) is a pure
    function of (seed, center, scale, n), so repeated requests are bitwise
    identical and the full field can be generated in one pass.
    """

    def __init__(self, base: MaskProvider, cfg: NoiseConfig):
        self.base = base
        self.cfg = cfg
        self.window = base.window
        self.scales = base.scales
        self.shape_xyz = base.shape_xyz

    def _noise(self, scale: Scale, center_flat: np.ndarray) -> np.ndarray:
        """Standard-normal noise, shape (len(center_flat), Kz, Ky, Kx)."""
        d = self.window.size
        state = hash_key(self.cfg.seed, scale.sx, scale.sy, scale.sz)
        counters = center_flat[:, None] * np.uint64(d) + np.arange(d, dtype=np.uint64)[None, :]
        eta = ndtri(hash_uniform(state, counters))
        eta = eta.reshape((len(center_flat),) + self.window.shape_zyx)
        r = self.cfg.smoothing_radius
        if r > 0:
            size = tuple(min(2 * r + 1, k) for k in self.window.shape_zyx)
            eta = uniform_filter(eta, size=(1,) + size, mode="nearest")
            eta *= np.sqrt(float(np.prod(size)))
        return eta

    def _apply(self, values: np.ndarray, eta: np.ndarray) -> np.ndarray:
        if self.cfg.flip_sigma == 0.0:
            return values
        v = np.clip(values.astype(np.float64), LOGIT_EPS, 1.0 - LOGIT_EPS)
        logits = np.log(v / (1.0 - v)) + self.cfg.flip_sigma * eta
        out = 1.0 / (1.0 + np.exp(-logits))
        return np.clip(out, 0.0, 1.0).astype(np.float32)

    def mask(self, center: Coord3, scale: Scale) -> CentralInstanceMask:
        base = self.base.mask(center, scale)
        x, y, _ = self.shape_xyz
        flat = np.array([(center.z * y + center.y) * x + center.x], dtype=np.uint64)
        eta = self._noise(scale, flat)[0]
        return CentralInstanceMask(self.window, scale, self._apply(base.values, eta))

    def mask_field(self, scale: Scale) -> np.ndarray:
        field = self.base.mask_field(scale)
        if self.cfg.flip_sigma == 0.0:
            return field
        zf, yf, xf, d = field.shape
        flat = np.arange(zf * yf * xf, dtype=np.uint64)
        eta = self._noise(scale, flat).reshape(zf, yf, xf, d)
        return self._apply(field.reshape(-1, d), eta.reshape(-1, d)).reshape(field.shape)


def perturb(base: MaskProvider, cfg: NoiseConfig) -> MaskProvider:
    if cfg.flip_sigma == 0.0 and cfg.smoothing_radius == 0:
        return base
    return NoisyMaskProvider(base, cfg)


class FileMaskProvider(MaskProvider):
    """Serves masks from exported mask-field containers, one per scale."""

    def __init__(self, *paths: str | Path):
        if not paths:
            raise ValidationError("file provider needs at least one mask-field path")
        self.fields: dict[Scale, np.ndarray] = {}
        window = None
        shape = None
        for p in paths:
            field, win, scale = read_mask_field(p)
            if window is None:
                window = win
                shape = field.shape[:3]
            elif win != window:
                raise ValidationError(f"{p}: window {tuple(win)} differs from {tuple(window)}")
            elif field.shape[:3] != shape:
                raise ValidationError(f"{p}: field shape {field.shape[:3]} differs from {shape}")
            if scale in self.fields:
                raise ValidationError(f"{p}: duplicate scale {tuple(scale)}")
            self.fields[scale] = field
        self.window = window
        self.scales = tuple(self.fields.keys())
        zf, yf, xf = shape
        self.shape_xyz = (xf, yf, zf)

    def mask(self, center: Coord3, scale: Scale) -> CentralInstanceMask:
        self.require_scale(scale)
        field = self.fields[Scale(*scale)]
        values = field[center.z, center.y, center.x].reshape(self.window.shape_zyx)
        return CentralInstanceMask(self.window, Scale(*scale), values)

    def mask_field(self, scale: Scale) -> np.ndarray:
        self.require_scale(scale)
        return self.fields[Scale(*scale)]


def file_provider(*paths: str | Path) -> FileMaskProvider:
    return FileMaskProvider(*paths)
