"""Construction of 2D and 4D minutiae histograms.

The 2D histogram bins, over all unordered minutiae pairs of a template, the
Euclidean distance between the two locations and the folded difference of the
two directions. The 4D histogram additionally bins the angle of the relative
position of the second minutia (measured against the first minutia's
direction, which keeps the feature rotation invariant) and the ordered type
combination; each unordered pair contributes through both orderings.

Templates must be at 500 DPI before histogramming; callers rescale first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from .template import BIFURCATION, ENDING, UNKNOWN, MinutiaTemplate

TYPE_COMBINATIONS = ("EE", "EB", "BE", "BB")


@dataclass(frozen=True)
class BinSpec:
    """Bin layout for minutiae histograms.

    d_max: maximal pair distance in pixels; larger pairs are discarded.
    b_dist: number of distance bins (width d_max / b_dist).
    b_dir: number of direction-difference bins covering [0, 180].
    b_relangle: number of relative-position-angle bins covering [0, 360), 4D only.
    b_type: number of type-combination bins, fixed at 4 (EE, EB, BE, BB).
    """

    d_max: float = 200.0
    b_dist: int = 10
    b_dir: int = 10
    b_relangle: int = 20
    b_type: int = 4

    def __post_init__(self) -> None:
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")
        if min(self.b_dist, self.b_dir, self.b_relangle) < 1:
            raise ValueError("bin counts must be at least 1")
        if self.b_type != 4:
            raise ValueError("b_type is fixed at 4 (EE, EB, BE, BB)")

    @property
    def dist_width(self) -> float:
        return self.d_max / self.b_dist

    @property
    def dir_width(self) -> float:
        return 180.0 / self.b_dir

    @property
    def relangle_width(self) -> float:
        return 360.0 / self.b_relangle

    def to_dict(self) -> Dict[str, Any]:
        return {
            "d_max": self.d_max,
            "b_dist": self.b_dist,
            "b_dir": self.b_dir,
            "b_relangle": self.b_relangle,
            "b_type": self.b_type,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "BinSpec":
        return cls(**d)


# Default spec for the identification path (unnormalized 4D histograms).
IDENTIFICATION_SPEC = BinSpec(d_max=200.0, b_dist=20, b_dir=20, b_relangle=20)


@dataclass
class MinutiaeHistogram:
    """Binned mass array over 2 or 4 feature axes.

    mass has shape (b_dist, b_dir) for 2D and (b_dist, b_dir, b_relangle, 4)
    for 4D. If normalized, masses sum to 1 (or all zero when no pair was
    binned); otherwise they are raw counts summing to pair_count (2D) or
    2 * pair_count (4D, both orderings of each pair).
    """

    spec: BinSpec
    dims: int
    mass: np.ndarray
    normalized: bool
    pair_count: int

    def total(self) -> float:
        return float(self.mass.sum())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "spec": self.spec.to_dict(),
            "dims": self.dims,
            "normalized": self.normalized,
            "pair_count": self.pair_count,
            "mass": self.mass.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "MinutiaeHistogram":
        spec = BinSpec.from_dict(d["spec"])
        dims = int(d["dims"])
        shape = _mass_shape(spec, dims)
        mass = np.asarray(d["mass"], dtype=float).reshape(shape)
        return cls(
            spec=spec,
            dims=dims,
            mass=mass,
            normalized=bool(d["normalized"]),
            pair_count=int(d["pair_count"]),
        )


def _mass_shape(spec: BinSpec, dims: int):
    if dims == 2:
        return (spec.b_dist, spec.b_dir)
    if dims == 4:
        return (spec.b_dist, spec.b_dir, spec.b_relangle, spec.b_type)
    raise ValueError("dims must be 2 or 4")


def fold_direction_difference(a1: float, a2: float) -> float:
    """Fold the difference of two directions in [0, 360) into [0, 180].

    Differences above 180 degrees are mirrored, so e.g. (10, 350) -> 20,
    (170, 190) -> 20 and (90, 270) -> 180.
    """
    if not (0.0 <= a1 < 360.0 and 0.0 <= a2 < 360.0):
        raise ValueError("directions must lie in [0, 360)")
    diff = abs(a1 - a2)
    return min(diff, 360.0 - diff)


def _pair_features(t: MinutiaTemplate):
    """Pairwise distance and folded direction-difference matrices (n x n)."""
    xy = np.array([[m.x, m.y] for m in t.minutiae], dtype=float)
    dirs = np.array([m.direction for m in t.minutiae], dtype=float)
    delta = xy[:, None, :] - xy[None, :, :]
    dist = np.hypot(delta[..., 0], delta[..., 1])
    diff = np.abs(dirs[:, None] - dirs[None, :])
    alpha = np.minimum(diff, 360.0 - diff)
    return xy, dirs, dist, alpha


def _check_histogram_input(t: MinutiaTemplate) -> None:
    if len(t.minutiae) < 2:
        raise ValueError("pair features undefined: template has fewer than 2 minutiae")
    if t.dpi != 500:
        raise ValueError("template must be rescaled to 500 DPI before histogramming")


def _bin_clamped(values: np.ndarray, width: float, n_bins: int) -> np.ndarray:
    idx = np.floor(values / width).astype(int)
    return np.clip(idx, 0, n_bins - 1)


def build_2dmh(
    t: MinutiaTemplate, spec: BinSpec = BinSpec(), normalize: bool = True
) -> MinutiaeHistogram:
    """Bin all unordered minutiae pairs by (distance, direction difference).

    Pairs with distance above spec.d_max are discarded. The boundary values
    d = d_max and alpha = 180 land in the last bin of their axis.
    """
    _check_histogram_input(t)
    _, _, dist, alpha = _pair_features(t)
    iu, ju = np.triu_indices(len(t.minutiae), k=1)
    d = dist[iu, ju]
    a = alpha[iu, ju]
    keep = d <= spec.d_max
    d, a = d[keep], a[keep]

    mass = np.zeros((spec.b_dist, spec.b_dir), dtype=float)
    di = _bin_clamped(d, spec.dist_width, spec.b_dist)
    ai = _bin_clamped(a, spec.dir_width, spec.b_dir)
    np.add.at(mass, (di, ai), 1.0)
    pair_count = int(keep.sum())
    if normalize and pair_count > 0:
        mass /= pair_count
    return MinutiaeHistogram(
        spec=spec, dims=2, mass=mass, normalized=normalize, pair_count=pair_count
    )


_TYPE_INDEX = {ENDING: 0, BIFURCATION: 1}


def build_4dmh(
    t: MinutiaTemplate, spec: BinSpec = IDENTIFICATION_SPEC, normalize: bool = False
) -> MinutiaeHistogram:
    """Bin all ordered minutiae pairs by (distance, direction difference,
    relative-position angle, type combination).

    The relative-position angle of pair (i, j) is the angle of the vector
    from i to j measured against i's direction, folded into [0, 360). Each
    unordered pair contributes via both orderings, so the histogram does not
    depend on the minutiae list order; the raw total mass is twice the
    unordered pair count.
    """
    _check_histogram_input(t)
    if any(m.mtype == UNKNOWN for m in t.minutiae):
        raise ValueError("4D histogram requires all minutiae typed (E or B)")
    xy, dirs, dist, alpha = _pair_features(t)
    n = len(t.minutiae)
    ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    d = dist[ii, jj]
    keep = d <= spec.d_max
    ii, jj, d = ii[keep], jj[keep], d[keep]
    a = alpha[ii, jj]

    delta = xy[jj] - xy[ii]
    pos_angle = np.degrees(np.arctan2(delta[:, 1], delta[:, 0]))
    relangle = (pos_angle - dirs[ii]) % 360.0

    types = np.array([_TYPE_INDEX[m.mtype] for m in t.minutiae])
    mass = np.zeros(_mass_shape(spec, 4), dtype=float)
    di = _bin_clamped(d, spec.dist_width, spec.b_dist)
    ai = _bin_clamped(a, spec.dir_width, spec.b_dir)
    ri = _bin_clamped(relangle, spec.relangle_width, spec.b_relangle)
    ti = 2 * types[ii] + types[jj]
    np.add.at(mass, (di, ai, ri, ti), 1.0)
    pair_count = int(keep.sum()) // 2
    if normalize and mass.sum() > 0:
        mass /= mass.sum()
    return MinutiaeHistogram(
        spec=spec, dims=4, mass=mass, normalized=normalize, pair_count=pair_count
    )
