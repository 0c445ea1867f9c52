"""Segmentation evaluation: VOI split/merge, adapted Rand error, their
geometric-mean summary score, and the fuzzy overlap coefficient for masks.

Entropies use natural logarithms.  All metrics are invariant under
relabeling of either argument and ignore no voxels (there is no background
or ignore label).
"""

from __future__ import annotations

import numpy as np

from .core import LabelVolume
from .errors import ValidationError
from .masks import CentralInstanceMask


def _contingency(seg: LabelVolume, gt: LabelVolume) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sparse joint counts: (c_ij, seg marginal s_i, gt marginal t_j).

    Counts come back sorted so that downstream reductions do not depend on
    the label values, making the metrics bitwise relabel-invariant.
    """
    if seg.shape_xyz != gt.shape_xyz:
        raise ValidationError(f"shape mismatch: {seg.shape_xyz} vs {gt.shape_xyz}")
    a = seg.data.ravel().astype(np.int64)
    b = gt.data.ravel().astype(np.int64)
    pair = a * (b.max() + 1) + b
    _, counts = np.unique(pair, return_counts=True)
    _, s_counts = np.unique(a, return_counts=True)
    _, t_counts = np.unique(b, return_counts=True)
    return (
        np.sort(counts).astype(np.float64),
        np.sort(s_counts).astype(np.float64),
        np.sort(t_counts).astype(np.float64),
    )


def voi(seg: LabelVolume, gt: LabelVolume) -> tuple[float, float]:
    """(voi_split, voi_merge) = (H(Seg|GT), H(GT|Seg)) in nats."""
    joint, s_counts, t_counts = _contingency(seg, gt)
    n = seg.data.size
    h_joint = _entropy(joint, n)
    h_seg = _entropy(s_counts, n)
    h_gt = _entropy(t_counts, n)
    voi_split = max(h_joint - h_gt, 0.0)
    voi_merge = max(h_joint - h_seg, 0.0)
    return voi_split, voi_merge


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts.astype(np.float64) / n
    return float(-np.sum(p * np.log(p)))


def adapted_rand_error(seg: LabelVolume, gt: LabelVolume) -> float:
    """1 - F-score of Rand precision/recall from the contingency table."""
    c, s, t = _contingency(seg, gt)
    sum_c2 = float(np.sum(c * c))
    sum_s2 = float(np.sum(s * s))
    sum_t2 = float(np.sum(t * t))
    precision = sum_c2 / sum_s2
    recall = sum_c2 / sum_t2
    return 1.0 - 2.0 * precision * recall / (precision + recall)


def cremi_score(seg: LabelVolume, gt: LabelVolume) -> float:
    """Geometric mean of total VOI and adapted Rand error; 0 iff identical."""
    voi_split, voi_merge = voi(seg, gt)
    arand = adapted_rand_error(seg, gt)
    return float(np.sqrt((voi_split + voi_merge) * arand))


def evaluation_report(seg: LabelVolume, gt: LabelVolume) -> dict[str, float]:
    voi_split, voi_merge = voi(seg, gt)
    arand = adapted_rand_error(seg, gt)
    return {
        "voi_split": voi_split,
        "voi_merge": voi_merge,
        "arand": arand,
        "cremi": float(np.sqrt((voi_split + voi_merge) * arand)),
    }


def fuzzy_dice(p: CentralInstanceMask | np.ndarray, t: CentralInstanceMask | np.ndarray) -> float:
    """Overlap coefficient 2*sum(p*t) / (sum(p^2) + sum(t^2)) for fuzzy
    membership values; two all-zero masks count as agreeing (1.0)."""
    pv = p.values if isinstance(p, CentralInstanceMask) else np.asarray(p)
    tv = t.values if isinstance(t, CentralInstanceMask) else np.asarray(t)
    if pv.shape != tv.shape:
        raise ValidationError(f"window mismatch: {pv.shape} vs {tv.shape}")
    pv = pv.astype(np.float64)
    tv = tv.astype(np.float64)
    denom = float(np.sum(pv * pv) + np.sum(tv * tv))
    if denom == 0.0:
        return 1.0
    return float(2.0 * np.sum(pv * tv) / denom)
