"""Weighted distortion, view consistency, joint cost, and quality metrics.

Distortion is plain SSE per frame, scaled by the squared unified weight.
The discontinuity term couples nearby frames: every ordered pair closer
than the proximity radius contributes the squared, weight-gated gap
between the two frame SSEs. The joint cost adds lambda times the square
root of that sum to the weighted distortion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DomainError,
    IncompleteInput,
    InsufficientPoints,
    NoOverlap,
    ParseError,
    ShapeMismatch,
)
from .lightfield import PROXIMITY_RADIUS, FrameCoord, FrameGrid, PixelFrame, WeightSet

# Peak sample value for 8-bit content, used by the wPSNR conversion.
PEAK_SAMPLE_VALUE = 255.0


@dataclass(frozen=True, eq=False)
class DistortionSet:
    """Per-frame sums of squared errors."""

    sse: dict[FrameCoord, float]

    def __post_init__(self):
        if any(v < 0.0 for v in self.sse.values()):
            raise ValueError("SSE values must be nonnegative")


@dataclass(frozen=True)
class CostBreakdown:
    """The joint cost and its two parts."""

    weighted_distortion: float
    discontinuity: float
    lam: float
    total: float


@dataclass(frozen=True)
class RDPoint:
    """One operating point of a rate-quality curve."""

    rate: float
    quality: float


def compute_sse(original: PixelFrame, decoded: PixelFrame) -> float:
    """Sum of squared sample differences between two frames."""
    if original.samples.shape != decoded.samples.shape:
        raise ShapeMismatch(
            f"frame shapes differ: {original.samples.shape} vs {decoded.samples.shape}"
        )
    diff = decoded.samples - original.samples
    return float(np.sum(diff * diff))


def weighted_distortion(sse: float, unified_weight: float) -> float:
    """Scale a frame SSE by the squared unified weight."""
    return unified_weight * unified_weight * sse


def _aligned(grid: FrameGrid, weights: WeightSet, distortions: DistortionSet):
    coords = grid.coding_order
    missing = [c for c in coords if c not in weights.unified]
    if missing:
        raise IncompleteInput(f"weights missing for {missing[0]} and {len(missing) - 1} more")
    missing = [c for c in coords if c not in distortions.sse]
    if missing:
        raise IncompleteInput(f"SSE missing for {missing[0]} and {len(missing) - 1} more")
    w = np.array([weights.unified[c] for c in coords])
    d = np.array([distortions.sse[c] for c in coords])
    uu = np.array([c.u for c in coords])
    vv = np.array([c.v for c in coords])
    return w, d, uu, vv


def discontinuity(grid: FrameGrid, weights: WeightSet, distortions: DistortionSet) -> float:
    """Proximity-weighted squared SSE gaps, summed over ordered frame pairs.

    Each unordered pair is counted twice (once per direction); self pairs
    contribute exactly zero. The smaller of the two unified weights gates
    every pair, so a frame nobody cares about cannot create discontinuity.
    """
    w, d, uu, vv = _aligned(grid, weights, distortions)
    dist = np.abs(uu[:, None] - uu[None, :]) + np.abs(vv[:, None] - vv[None, :])
    delta = np.maximum(0.0, float(PROXIMITY_RADIUS) - dist)
    gate = np.minimum(w[:, None], w[None, :])
    gap = d[:, None] - d[None, :]
    return float(np.sum(delta * (gate * gap) ** 2))


def cost(grid: FrameGrid, weights: WeightSet, distortions: DistortionSet, lam: float) -> CostBreakdown:
    """Joint cost: weighted distortion plus lam times sqrt(discontinuity)."""
    if lam < 0.0:
        raise ValueError("lambda must be nonnegative")
    w, d, _, _ = _aligned(grid, weights, distortions)
    wd = float(np.sum(w * w * d))
    disc = discontinuity(grid, weights, distortions)
    return CostBreakdown(
        weighted_distortion=wd,
        discontinuity=disc,
        lam=lam,
        total=wd + lam * math.sqrt(disc),
    )


def wpsnr(total_cost: float, pixel_count: int) -> float:
    """Quality in dB from the joint cost spread over all pixels.

    pixel_count is the total pixel count across every frame of the light
    field. A zero cost returns math.inf, the lossless sentinel, instead of
    raising.
    """
    if pixel_count <= 0:
        raise ValueError("pixel count must be positive")
    if total_cost < 0.0:
        raise DomainError("total cost must be nonnegative")
    if total_cost == 0.0:
        return math.inf
    return 20.0 * math.log10(PEAK_SAMPLE_VALUE / math.sqrt(total_cost / pixel_count))


def bd_rate(anchor: list[RDPoint], test: list[RDPoint]) -> float:
    """Average rate difference of test over anchor, in percent.

    Classic form: fit log10(rate) as a cubic in quality for each curve,
    integrate both fits in closed form over the shared quality interval,
    and convert the mean log-rate gap back to a percentage.
    """
    curves = []
    for points in (anchor, test):
        if len(points) < 4:
            raise InsufficientPoints(f"need at least 4 points, got {len(points)}")
        if any(p.rate <= 0.0 for p in points):
            raise DomainError("rates must be positive")
        ordered = sorted(points, key=lambda p: p.quality)
        quality = np.array([p.quality for p in ordered])
        if len(np.unique(quality)) < 4:
            raise InsufficientPoints("need at least 4 distinct quality values")
        log_rate = np.log10([p.rate for p in ordered])
        curves.append((quality, log_rate))
    (qa, ya), (qt, yt) = curves
    lo = max(qa.min(), qt.min())
    hi = min(qa.max(), qt.max())
    if not hi > lo:
        raise NoOverlap("curves share no quality interval")
    poly_anchor = np.polyfit(qa, ya, 3)
    poly_test = np.polyfit(qt, yt, 3)
    int_anchor = np.polyint(poly_anchor)
    int_test = np.polyint(poly_test)
    avg_gap = (
        (np.polyval(int_test, hi) - np.polyval(int_test, lo))
        - (np.polyval(int_anchor, hi) - np.polyval(int_anchor, lo))
    ) / (hi - lo)
    return float((10.0 ** avg_gap - 1.0) * 100.0)


def format_cost_breakdown(breakdown: CostBreakdown) -> str:
    """Structured text form of a cost breakdown."""
    return (
        f"weighted_distortion {breakdown.weighted_distortion!r}\n"
        f"discontinuity {breakdown.discontinuity!r}\n"
        f"lambda {breakdown.lam!r}\n"
        f"total {breakdown.total!r}\n"
    )


CURVE_HEADER = "rate_bits,quality_db"


def write_curve_csv(points: list[RDPoint], path) -> None:
    lines = [CURVE_HEADER]
    lines.extend(f"{p.rate!r},{p.quality!r}" for p in points)
    Path(path).write_text("\n".join(lines) + "\n")


def read_curve_csv(path) -> list[RDPoint]:
    points = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#") or stripped == CURVE_HEADER:
            continue
        parts = stripped.split(",")
        if len(parts) != 2:
            raise ParseError(f"{path}: line {lineno}: expected 'rate,quality'")
        try:
            points.append(RDPoint(rate=float(parts[0]), quality=float(parts[1])))
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: bad number") from exc
    if not points:
        raise ParseError(f"{path}: no curve points")
    return points


SSE_HEADER = "u,v,sse"


def write_sse_csv(distortions: DistortionSet, path) -> None:
    lines = [SSE_HEADER]
    lines.extend(f"{c.u},{c.v},{v!r}" for c, v in distortions.sse.items())
    Path(path).write_text("\n".join(lines) + "\n")


def read_sse_csv(path) -> DistortionSet:
    sse: dict[FrameCoord, float] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#") or stripped == SSE_HEADER:
            continue
        parts = stripped.split(",")
        if len(parts) != 3:
            raise ParseError(f"{path}: line {lineno}: expected 'u,v,sse'")
        try:
            sse[FrameCoord(int(parts[0]), int(parts[1]))] = float(parts[2])
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: bad number") from exc
    if not sse:
        raise ParseError(f"{path}: no SSE rows")
    return DistortionSet(sse=sse)
