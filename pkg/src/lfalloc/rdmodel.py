"""Per-frame power-law rate-distortion models.

Each frame's SSE is modeled as alpha * rate**beta with alpha > 0 and
beta < 0, fitted by least squares in log-log space. The linearization
helper expands the model to first order around a rate, which is what the
allocator's cone penalty consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, InsufficientSamples, NonDecreasingRD, ParseError


@dataclass(frozen=True)
class RDSample:
    """One trial measurement: quantizer, rate in bits, distortion as SSE."""

    qp: int
    rate: float
    sse: float

    def __post_init__(self):
        if self.rate <= 0.0 or self.sse <= 0.0:
            raise ValueError("rate and sse must be positive for log fitting")


@dataclass(frozen=True)
class RDModelParams:
    """Fitted power-law parameters for one frame."""

    alpha: float
    beta: float
    r_squared: float = 1.0
    sample_count: int = 0

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if self.beta >= 0.0:
            raise ValueError("beta must be negative")


@dataclass(frozen=True)
class LinearizedRD:
    """First-order expansion of a power-law model around a rate."""

    intercept: float
    slope: float
    expansion_point: float

    def value(self, rate: float) -> float:
        return self.intercept + self.slope * rate


def fit_power_model(samples: list[RDSample]) -> RDModelParams:
    """Fit alpha * rate**beta to samples by least squares on the logs.

    The slope of the log-log regression is beta and exp(intercept) is
    alpha; r_squared is reported in the log domain.
    """
    if len({s.rate for s in samples}) < 2:
        raise InsufficientSamples(
            f"need at least 2 distinct rates, got {len(samples)} samples"
        )
    x = np.log([s.rate for s in samples])
    y = np.log([s.sse for s in samples])
    xc = x - x.mean()
    yc = y - y.mean()
    ss_tot = float(yc @ yc)
    if ss_tot == 0.0:
        # Flat distortion over distinct rates: exponent would be zero.
        raise NonDecreasingRD("distortion does not decrease with rate")
    slope = float((xc @ yc) / (xc @ xc))
    if slope >= 0.0:
        raise NonDecreasingRD(f"fitted exponent {slope:.6g} is not negative")
    intercept = float(y.mean() - slope * x.mean())
    residual = y - (intercept + slope * x)
    r_squared = 1.0 - float(residual @ residual) / ss_tot
    return RDModelParams(
        alpha=math.exp(intercept),
        beta=slope,
        r_squared=r_squared,
        sample_count=len(samples),
    )


def eval_model(params: RDModelParams, rate):
    """Model SSE at a rate; accepts a scalar or an ndarray of rates."""
    rates = np.asarray(rate, dtype=float)
    if np.any(rates <= 0.0):
        raise DomainError("rate must be positive")
    out = params.alpha * rates ** params.beta
    return float(out) if out.ndim == 0 else out


def linearize(params: RDModelParams, expansion_point: float) -> LinearizedRD:
    """Tangent line of the model at expansion_point.

    intercept = alpha * (1 - beta) * r0**beta and
    slope = alpha * beta * r0**(beta - 1), so the tangent touches the
    model exactly at r0 and lies below it elsewhere (the model is convex).
    """
    if expansion_point <= 0.0:
        raise DomainError("expansion point must be positive")
    a, b, r0 = params.alpha, params.beta, expansion_point
    return LinearizedRD(
        intercept=a * (1.0 - b) * r0 ** b,
        slope=a * b * r0 ** (b - 1.0),
        expansion_point=r0,
    )


SAMPLES_HEADER = "frame_index,qp,rate_bits,sse"
MODELS_HEADER = "frame_index,alpha,beta,r_squared"


def write_samples_csv(samples: dict[str, list[RDSample]], path) -> None:
    lines = [SAMPLES_HEADER]
    for frame_id, frame_samples in samples.items():
        lines.extend(
            f"{frame_id},{s.qp},{s.rate!r},{s.sse!r}" for s in frame_samples
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_samples_csv(path) -> dict[str, list[RDSample]]:
    """Read rate-distortion samples grouped by frame identifier.

    Frame identifiers are kept as strings in first-appearance order.
    """
    samples: dict[str, list[RDSample]] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#") or stripped == SAMPLES_HEADER:
            continue
        parts = stripped.split(",")
        if len(parts) != 4:
            raise ParseError(
                f"{path}: line {lineno}: expected 'frame_index,qp,rate_bits,sse'"
            )
        try:
            sample = RDSample(qp=int(parts[1]), rate=float(parts[2]), sse=float(parts[3]))
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from exc
        samples.setdefault(parts[0], []).append(sample)
    if not samples:
        raise ParseError(f"{path}: no sample rows")
    return samples


def write_models_csv(models: dict[str, RDModelParams], path) -> None:
    lines = [MODELS_HEADER]
    lines.extend(
        f"{frame_id},{m.alpha!r},{m.beta!r},{m.r_squared!r}"
        for frame_id, m in models.items()
    )
    Path(path).write_text("\n".join(lines) + "\n")


def read_models_csv(path) -> dict[str, RDModelParams]:
    models: dict[str, RDModelParams] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#") or stripped == MODELS_HEADER:
            continue
        parts = stripped.split(",")
        if len(parts) != 4:
            raise ParseError(
                f"{path}: line {lineno}: expected 'frame_index,alpha,beta,r_squared'"
            )
        try:
            models[parts[0]] = RDModelParams(
                alpha=float(parts[1]), beta=float(parts[2]), r_squared=float(parts[3])
            )
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    if not models:
        raise ParseError(f"{path}: no model rows")
    return models
