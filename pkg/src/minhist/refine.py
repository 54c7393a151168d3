"""Synthetic template generation and EMD-guided iterative refinement.

A template is seeded by placing a drawn number of minutiae uniformly on the
foreground, with each direction set to the local orientation or its opposite
by a coin flip. It is then refined by greedy hill climbing: per iteration a
batch of candidate moves (add a minutia, delete one, flip a direction by
180 degrees) is scored by the EMD of the candidate's 2D histogram to a
target histogram, and the best strictly improving move is accepted. The
optimal transport flow of the current histogram identifies the bins that
contribute the most cost, and deletions are biased toward minutiae whose
pairs populate those bins. Everything is seeded and fully deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .histogram import MinutiaeHistogram, build_2dmh
from .template import BIFURCATION, ENDING, UNKNOWN, Minutia, MinutiaTemplate
from .transport import CostParams, TransportPlan, build_cost_matrix, transport_plan

Move = str  # "add", "delete", "flip"


@dataclass(frozen=True)
class OrientationField:
    """Toy orientation field: constant angle or radial around a center."""

    kind: str = "constant"  # "constant" or "radial"
    angle: float = 0.0  # constant field orientation, degrees
    center: Tuple[float, float] = (0.0, 0.0)  # radial field center

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "radial"):
            raise ValueError("field kind must be 'constant' or 'radial'")

    def orientation(self, x: float, y: float) -> float:
        """Local ridge orientation in [0, 180) degrees."""
        if self.kind == "constant":
            return self.angle % 180.0
        dx, dy = x - self.center[0], y - self.center[1]
        if dx == 0.0 and dy == 0.0:
            return 0.0
        return float(np.degrees(np.arctan2(dy, dx))) % 180.0


@dataclass
class RefineConfig:
    """Target histogram, acceptance threshold and search knobs."""

    target: MinutiaeHistogram  # normalized 2D reference, e.g. a class average
    threshold: float
    max_iters: int = 200
    moves: Tuple[Move, ...] = ("add", "delete", "flip")
    rng_seed: int = 0
    foreground: Tuple[float, float, float, float] = (0.0, 0.0, 200.0, 200.0)
    count_distribution: Tuple[int, ...] = (30,)
    orientation_field: OrientationField = field(default_factory=OrientationField)
    batch_size: int = 10
    params: CostParams = field(default_factory=CostParams)

    def __post_init__(self) -> None:
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if not self.moves:
            raise ValueError("at least one move must be enabled")
        for move in self.moves:
            if move not in ("add", "delete", "flip"):
                raise ValueError(f"unknown move {move!r}")
        x0, y0, x1, y1 = self.foreground
        if x1 <= x0 or y1 <= y0:
            raise ValueError("foreground rectangle is empty")
        if not self.count_distribution:
            raise ValueError("count distribution is empty")
        if not self.target.normalized or self.target.dims != 2:
            raise ValueError("target must be a normalized 2D histogram")


def _draw_minutia(rng: np.random.Generator, cfg: RefineConfig) -> Minutia:
    x0, y0, x1, y1 = cfg.foreground
    x = float(rng.uniform(x0, x1))
    y = float(rng.uniform(y0, y1))
    theta = cfg.orientation_field.orientation(x, y)
    direction = (theta + 180.0 * rng.integers(0, 2)) % 360.0
    return Minutia(x=x, y=y, direction=float(direction), mtype=UNKNOWN)


def init_template(cfg: RefineConfig) -> MinutiaTemplate:
    """Random initial template: count drawn from the empirical distribution,
    positions uniform on the foreground, directions from the orientation
    field flipped by 180 degrees with probability one half."""
    rng = np.random.default_rng([cfg.rng_seed, 0])
    n = int(rng.choice(np.asarray(cfg.count_distribution)))
    if n < 2:
        raise ValueError("drawn minutiae count must be at least 2")
    minutiae = tuple(_draw_minutia(rng, cfg) for _ in range(n))
    return MinutiaTemplate(minutiae=minutiae, dpi=500)


@dataclass
class TraceRow:
    iteration: int
    emd: float
    move: str


@dataclass
class RefineResult:
    template: MinutiaTemplate
    trace: List[TraceRow]
    status: str  # "success", "stall" or "timeout"
    final_emd: float


def write_trace_csv(trace: Sequence[TraceRow], path: Path | str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "emd", "move"])
        for row in trace:
            writer.writerow([row.iteration, row.emd, row.move])


def _deletion_weights(
    t: MinutiaTemplate, plan: TransportPlan, cfg: RefineConfig
) -> np.ndarray:
    """Per-minutia cost blame from the optimal flow out of each source bin.

    Each pair's bin inherits the outgoing transport cost of that bin, split
    evenly over the pairs inside it and credited to both pair members.
    """
    spec = cfg.target.spec
    cost = build_cost_matrix(spec, cfg.params).cost
    bin_cost = np.zeros(spec.b_dist * spec.b_dir)
    for (i, j), mass in plan.flow.items():
        bin_cost[i] += mass * cost[i, j]

    n = len(t.minutiae)
    weights = np.zeros(n)
    if bin_cost.sum() <= 0:
        return weights
    xy = np.array([[m.x, m.y] for m in t.minutiae])
    dirs = np.array([m.direction for m in t.minutiae])
    iu, ju = np.triu_indices(n, k=1)
    d = np.hypot(*(xy[iu] - xy[ju]).T)
    diff = np.abs(dirs[iu] - dirs[ju])
    a = np.minimum(diff, 360.0 - diff)
    keep = d <= spec.d_max
    iu, ju, d, a = iu[keep], ju[keep], d[keep], a[keep]
    di = np.clip((d / spec.dist_width).astype(int), 0, spec.b_dist - 1)
    ai = np.clip((a / spec.dir_width).astype(int), 0, spec.b_dir - 1)
    flat = di * spec.b_dir + ai
    per_bin_pairs = np.bincount(flat, minlength=spec.b_dist * spec.b_dir)
    blame = bin_cost[flat] / per_bin_pairs[flat]
    np.add.at(weights, iu, blame)
    np.add.at(weights, ju, blame)
    return weights


def _propose(
    rng: np.random.Generator,
    t: MinutiaTemplate,
    cfg: RefineConfig,
    delete_weights: np.ndarray,
) -> Tuple[Optional[MinutiaTemplate], str]:
    moves = list(cfg.moves)
    if len(t) <= 2 and "delete" in moves:
        moves.remove("delete")  # never shrink below 2 minutiae
        if not moves:
            return None, "none"
    move = moves[rng.integers(0, len(moves))]
    minutiae = list(t.minutiae)
    if move == "add":
        minutiae.append(_draw_minutia(rng, cfg))
        desc = "add"
    elif move == "delete":
        total = delete_weights.sum()
        if total > 0:
            p = 0.5 * delete_weights / total + 0.5 / len(minutiae)
            idx = int(rng.choice(len(minutiae), p=p / p.sum()))
        else:
            idx = int(rng.integers(0, len(minutiae)))
        del minutiae[idx]
        desc = f"delete:{idx}"
    else:
        idx = int(rng.integers(0, len(minutiae)))
        m = minutiae[idx]
        minutiae[idx] = replace(m, direction=(m.direction + 180.0) % 360.0)
        desc = f"flip:{idx}"
    return replace(t, minutiae=tuple(minutiae)), desc


def refine(t: MinutiaTemplate, cfg: RefineConfig) -> RefineResult:
    """Greedy best-of-batch hill climb toward the target histogram.

    Stops on EMD <= threshold (success), a full batch without a strictly
    improving move (stall), or the iteration budget (timeout). The trace
    holds the initial EMD and one row per accepted move; it is strictly
    decreasing after the first row.
    """
    if len(t) < 2:
        raise ValueError("refinement needs a template with at least 2 minutiae")
    rng = np.random.default_rng([cfg.rng_seed, 1])
    spec = cfg.target.spec

    current = t
    start = build_2dmh(current, spec)
    if start.pair_count == 0:
        raise ValueError("initial template has no pair within d_max")
    plan = transport_plan(start, cfg.target, cfg.params)
    current_emd = plan.total_cost
    trace = [TraceRow(iteration=0, emd=current_emd, move="init")]
    if current_emd <= cfg.threshold:
        return RefineResult(template=current, trace=trace, status="success",
                            final_emd=current_emd)

    for iteration in range(1, cfg.max_iters + 1):
        delete_weights = _deletion_weights(current, plan, cfg)
        best: Optional[Tuple[float, TransportPlan, MinutiaTemplate, str]] = None
        for _ in range(cfg.batch_size):
            candidate, desc = _propose(rng, current, cfg, delete_weights)
            if candidate is None:
                continue
            cand_hist = build_2dmh(candidate, spec)
            if cand_hist.pair_count == 0:
                continue  # all pairs beyond d_max; histogram undefined as a distribution
            cand_plan = transport_plan(cand_hist, cfg.target, cfg.params)
            if cand_plan.total_cost < current_emd and (
                best is None or cand_plan.total_cost < best[0]
            ):
                best = (cand_plan.total_cost, cand_plan, candidate, desc)
        if best is None:
            return RefineResult(template=current, trace=trace, status="stall",
                                final_emd=current_emd)
        current_emd, plan, current, desc = best
        trace.append(TraceRow(iteration=iteration, emd=current_emd, move=desc))
        if current_emd <= cfg.threshold:
            return RefineResult(template=current, trace=trace, status="success",
                                final_emd=current_emd)
    return RefineResult(template=current, trace=trace, status="timeout",
                        final_emd=current_emd)


def assign_types(
    t: MinutiaTemplate, p_bif_target: float, seed: int = 0
) -> MinutiaTemplate:
    """Independently assign each minutia the bifurcation type with the given
    probability, else ending; seeded."""
    if not (0.0 <= p_bif_target <= 1.0):
        raise ValueError("p_bif_target must lie in [0, 1]")
    rng = np.random.default_rng([seed, 2])
    draws = rng.random(len(t.minutiae))
    minutiae = tuple(
        replace(m, mtype=BIFURCATION if u < p_bif_target else ENDING)
        for m, u in zip(t.minutiae, draws)
    )
    return replace(t, minutiae=minutiae)
