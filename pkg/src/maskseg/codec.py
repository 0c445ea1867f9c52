"""Linear latent codec for flattened masks.

Masks of D = Kx*Ky*Kz entries are compressed to Q-dimensional latent
vectors via a truncated principal subspace: a sample mean plus Q
orthonormal basis vectors fitted with seeded power iteration and
deflation.  Decoding clamps to [0, 1].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import MaskWindow, Scale
from .errors import ContainerError, MalformedHeaderError, PayloadLengthError, ValidationError
from .masks import CentralInstanceMask, MaskProvider

POWER_ITERATION_CAP = 1000
POWER_ITERATION_TOL = 1e-8
ORTHONORMALITY_TOL = 1e-6


@dataclass(frozen=True)
class LinearMaskCodec:
    """Mean vector plus Q orthonormal basis rows over flattened masks."""

    window: MaskWindow
    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray | None = None

    def __post_init__(self) -> None:
        d = self.window.size
        if self.mean.shape != (d,):
            raise ValidationError(f"codec mean has shape {self.mean.shape}, expected ({d},)")
        if self.basis.ndim != 2 or self.basis.shape[1] != d:
            raise ValidationError(f"codec basis has shape {self.basis.shape}, expected (Q, {d})")
        if self.q > d:
            raise ValidationError(f"latent dimension {self.q} exceeds mask size {d}")
        if self.q:
            gram = self.basis @ self.basis.T
            if np.max(np.abs(gram - np.eye(self.q))) > ORTHONORMALITY_TOL:
                raise ValidationError("codec basis is not orthonormal")

    @property
    def q(self) -> int:
        return self.basis.shape[0]

    @property
    def d(self) -> int:
        return self.window.size


def _as_sample_matrix(masks: Sequence[CentralInstanceMask] | np.ndarray, window: MaskWindow | None):
    if isinstance(masks, np.ndarray):
        if masks.ndim != 2:
            raise ValidationError("sample array must be 2D (N, D)")
        if window is None:
            raise ValidationError("window required when fitting from a raw array")
        if masks.shape[1] != window.size:
            raise ValidationError(f"sample width {masks.shape[1]} != window size {window.size}")
        return masks.astype(np.float64, copy=False), window
    masks = list(masks)
    if not masks:
        raise ValidationError("cannot fit a codec on an empty sample")
    win = masks[0].window
    if window is not None and window != win:
        raise ValidationError("window argument disagrees with sample masks")
    for m in masks:
        if m.window != win:
            raise ValidationError("all sample masks must share one window")
    return np.stack([m.flat for m in masks]).astype(np.float64), win


def _project_out(v: np.ndarray, basis: np.ndarray, j: int) -> tuple[np.ndarray, float]:
    """Remove components along the first j basis rows (twice, for stability)."""
    for _ in range(2):
        if j:
            v = v - basis[:j].T @ (basis[:j] @ v)
    return v, float(np.linalg.norm(v))


def _top_eigenpairs(cov: np.ndarray, q: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Leading eigenpairs of a symmetric PSD matrix by power iteration.

    Deflation is the projection of every iterate onto the orthogonal
    complement of the eigenvectors found so far; iteration stops when the
    Rayleigh quotient changes by less than POWER_ITERATION_TOL.  Directions
    with (numerically) zero eigenvalue keep their seeded start vector, so a
    full orthonormal basis comes out even for rank-deficient samples.
    """
    d = cov.shape[0]
    rng = np.random.default_rng(seed)
    basis = np.zeros((q, d))
    eigenvalues = np.zeros(q)
    zero_floor = 1e-12 * max(1.0, float(np.trace(cov)))
    for j in range(q):
        while True:
            v, norm = _project_out(rng.standard_normal(d), basis, j)
            if norm > 1e-6:
                v /= norm
                break
        lam_old = np.inf
        lam = 0.0
        for _ in range(POWER_ITERATION_CAP):
            w, norm = _project_out(cov @ v, basis, j)
            lam = float(v @ w)
            if norm <= zero_floor:
                lam = 0.0
                break
            v = w / norm
            if abs(lam - lam_old) < POWER_ITERATION_TOL:
                break
            lam_old = lam
        v, norm = _project_out(v, basis, j)
        basis[j] = v / norm
        eigenvalues[j] = max(lam, 0.0)
    return basis, eigenvalues


def fit_codec(
    masks: Sequence[CentralInstanceMask] | np.ndarray,
    q: int,
    seed: int = 0,
    window: MaskWindow | None = None,
) -> LinearMaskCodec:
    """Fit mean and top-q principal directions of a mask sample."""
    x, window = _as_sample_matrix(masks, window)
    n, d = x.shape
    if n == 0:
        raise ValidationError("cannot fit a codec on an empty sample")
    if q < 0 or q > d:
        raise ValidationError(f"latent dimension must satisfy 0 <= q <= {d}, got {q}")
    if q > n:
        raise ValidationError(f"latent dimension {q} exceeds sample size {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / n
    basis, eigenvalues = _top_eigenpairs(cov, q, seed)
    return LinearMaskCodec(window, mean, basis, eigenvalues)


def encode(codec: LinearMaskCodec, mask: CentralInstanceMask) -> np.ndarray:
    if mask.window != codec.window:
        raise ValidationError(f"mask window {tuple(mask.window)} != codec window {tuple(codec.window)}")
    return codec.basis @ (mask.flat.astype(np.float64) - codec.mean)


def decode(codec: LinearMaskCodec, latent: np.ndarray, scale: Scale = Scale(1, 1, 1)) -> CentralInstanceMask:
    latent = np.asarray(latent, dtype=np.float64)
    if latent.shape != (codec.q,):
        raise ValidationError(f"latent has shape {latent.shape}, expected ({codec.q},)")
    values = np.clip(codec.mean + codec.basis.T @ latent, 0.0, 1.0)
    return CentralInstanceMask(
        codec.window, scale, values.reshape(codec.window.shape_zyx).astype(np.float32)
    )


def roundtrip_field(codec: LinearMaskCodec, field: np.ndarray) -> np.ndarray:
    """decode(encode(.)) applied to a whole (Z, Y, X, D) mask field."""
    zf, yf, xf, d = field.shape
    if d != codec.d:
        raise ValidationError(f"field depth {d} != codec dimension {codec.d}")
    flat = field.reshape(-1, d).astype(np.float64) - codec.mean
    recon = flat @ codec.basis.T @ codec.basis + codec.mean
    return np.clip(recon, 0.0, 1.0).astype(np.float32).reshape(zf, yf, xf, d)


class CodecMaskProvider(MaskProvider):
    """Masks round-tripped through the latent codec (predict-then-decode)."""

    def __init__(self, base: MaskProvider, codec: LinearMaskCodec):
        if base.window != codec.window:
            raise ValidationError(
                f"provider window {tuple(base.window)} != codec window {tuple(codec.window)}"
            )
        self.base = base
        self.codec = codec
        self.window = base.window
        self.scales = base.scales
        self.shape_xyz = base.shape_xyz

    def mask(self, center, scale: Scale) -> CentralInstanceMask:
        m = self.base.mask(center, scale)
        return decode(self.codec, encode(self.codec, m), scale=Scale(*scale))

    def mask_field(self, scale: Scale) -> np.ndarray:
        return roundtrip_field(self.codec, self.base.mask_field(scale))


def codec_provider(base: MaskProvider, codec: LinearMaskCodec) -> CodecMaskProvider:
    return CodecMaskProvider(base, codec)


def write_codec(codec: LinearMaskCodec, path: str | Path) -> Path:
    base = Path(path)
    for suffix in (".codec.json", ".codec.raw", ".codec"):
        if base.name.endswith(suffix):
            base = base.with_name(base.name[: -len(suffix)])
            break
    json_path = base.with_name(base.name + ".codec.json")
    raw_path = base.with_name(base.name + ".codec.raw")
    w = codec.window
    header = {"window": [w.kz, w.ky, w.kx], "q": codec.q, "d": codec.d, "endianness": "little"}
    payload = np.concatenate([codec.mean[None, :], codec.basis], axis=0).astype("<f4")
    json_path.write_text(json.dumps(header, indent=1) + "\n")
    raw_path.write_bytes(payload.tobytes())
    return json_path


def read_codec(path: str | Path) -> LinearMaskCodec:
    base = Path(path)
    name = base.name
    for suffix in (".codec.json", ".codec.raw", ".codec"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
            break
    json_path = base.with_name(name + ".codec.json")
    raw_path = base.with_name(name + ".codec.raw")
    if not json_path.exists() or not raw_path.exists():
        raise ContainerError(f"missing codec container {json_path}")
    try:
        header = json.loads(json_path.read_text())
        kz, ky, kx = header["window"]
        q, d = int(header["q"]), int(header["d"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise MalformedHeaderError(f"{json_path}: bad codec header ({e})") from e
    window = MaskWindow(kx, ky, kz).validate()
    if window.size != d:
        raise MalformedHeaderError(f"{json_path}: d={d} inconsistent with window {tuple(window)}")
    payload = raw_path.read_bytes()
    expected = (q + 1) * d * 4
    if len(payload) != expected:
        raise PayloadLengthError(f"{raw_path}: payload is {len(payload)} bytes, expected {expected}")
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(q + 1, d)
    return LinearMaskCodec(window, flat[0], flat[1:])
