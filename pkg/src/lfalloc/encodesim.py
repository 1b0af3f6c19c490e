"""Iterative encode loop against a pluggable encoder adapter.

The loop mirrors a low-delay chain: frames are encoded in coding order
and each frame references the previously coded one. Around every frame's
working quantizer a small sweep of trial compressions measures the local
rate and distortion without advancing the chain; the sweep feeds the
per-frame power-law model refit and the quantizer choice for the next
pass. The first pass has no models yet, so it drives each frame toward a
neutral per-frame budget share with a bisection on the adapter's
monotone quantizer-rate response, which stands in for an encoder's
default rate control. Later passes alternate the allocator with a
re-encode until the realized rates settle.

mock_encode supplies a deterministic closed-form encoder for the whole
loop: rate halves every rate_qp_halving quantizer steps, and SSE follows
a hidden per-frame power law in rate, inflated by the reference frame's
SSE when the dependency gain is positive.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .allocator import AllocationProblem, AllocationResult, allocate
from .errors import EncodeFailed, IncompleteInput, NotConverged, ParseError
from .lightfield import FrameCoord, FrameGrid, WeightSet, spiral_order, unify_weights
from .metrics import CostBreakdown, DistortionSet, cost, wpsnr
from .rdmodel import RDModelParams, RDSample, fit_power_model

log = logging.getLogger("lfalloc.encodesim")

QP_MIN = 0
QP_MAX = 51

# Relative per-frame rate change below which the loop counts as settled.
RATE_CHANGE_TOL = 0.01


class EncoderAdapter(ABC):
    """Seam between the allocation loop and a real or simulated encoder.

    encode_frame must be deterministic in (coord, qp, ref_state), with
    rate non-increasing and SSE non-decreasing in qp at a fixed reference.
    Trial compressions call encode_frame without advancing the reference,
    so they can never change the actual output.
    """

    def initial_reference(self) -> Any:
        return 0.0

    def advance_reference(self, ref_state: Any, rate: float, sse: float) -> Any:
        return sse

    @abstractmethod
    def encode_frame(self, coord: FrameCoord, qp: int, ref_state: Any) -> tuple[float, float]:
        """Encode one frame; returns (rate in bits, SSE)."""

    @property
    @abstractmethod
    def total_pixels(self) -> int:
        """Total pixel count across all frames, for wPSNR."""


@dataclass(frozen=True, eq=False)
class MockEncoderConfig:
    """Parameters of the deterministic mock encoder."""

    frame_params: dict[FrameCoord, tuple[float, float]]  # hidden (a, b) per frame
    qp_anchor: int = 30
    rate_anchor: float = 1e6
    dependency_gamma: float = 0.0
    ref_norm: float = 1e6
    rate_qp_halving: float = 6.0
    frame_pixels: int = 271_250

    def __post_init__(self):
        if not self.frame_params:
            raise ValueError("frame_params must not be empty")
        for coord, (a, b) in self.frame_params.items():
            if a <= 0.0 or b >= 0.0:
                raise ValueError(f"frame ({coord.u},{coord.v}) needs a > 0 and b < 0")
        if self.rate_anchor <= 0.0 or self.ref_norm <= 0.0:
            raise ValueError("rate_anchor and ref_norm must be positive")
        if self.dependency_gamma < 0.0:
            raise ValueError("dependency_gamma must be nonnegative")
        if self.rate_qp_halving <= 0.0:
            raise ValueError("rate_qp_halving must be positive")
        if self.frame_pixels <= 0:
            raise ValueError("frame_pixels must be positive")


def mock_encode(
    config: MockEncoderConfig, coord: FrameCoord, qp: int, ref_sse: float
) -> tuple[float, float]:
    """Closed-form stand-in for a real encoder.

    rate = rate_anchor * 2**(-(qp - qp_anchor) / rate_qp_halving)
    sse  = a * rate**b * (1 + gamma * ref_sse / ref_norm)
    """
    a, b = config.frame_params[coord]
    rate = config.rate_anchor * 2.0 ** (-(qp - config.qp_anchor) / config.rate_qp_halving)
    sse = a * rate ** b * (1.0 + config.dependency_gamma * ref_sse / config.ref_norm)
    return rate, sse


class MockEncoder(EncoderAdapter):
    """EncoderAdapter over mock_encode."""

    def __init__(self, config: MockEncoderConfig):
        self.config = config

    def encode_frame(self, coord: FrameCoord, qp: int, ref_state: Any) -> tuple[float, float]:
        if not QP_MIN <= qp <= QP_MAX:
            raise EncodeFailed(f"qp {qp} outside [{QP_MIN}, {QP_MAX}]")
        if coord not in self.config.frame_params:
            raise EncodeFailed(f"no mock parameters for frame ({coord.u},{coord.v})")
        return mock_encode(self.config, coord, qp, float(ref_state))

    @property
    def total_pixels(self) -> int:
        return self.config.frame_pixels * len(self.config.frame_params)


@dataclass(frozen=True, eq=False)
class IterationEntry:
    """Everything one pass over the sequence produced."""

    qps: dict[FrameCoord, int]
    rates: dict[FrameCoord, float]
    sses: dict[FrameCoord, float]
    models: dict[FrameCoord, RDModelParams]
    cost: CostBreakdown
    wpsnr_db: float


@dataclass(frozen=True, eq=False)
class IterationTrace:
    """Ordered record of every pass plus the convergence flag."""

    grid: FrameGrid
    entries: list[IterationEntry]
    converged: bool


def trial_sweep(
    adapter: EncoderAdapter,
    coord: FrameCoord,
    center_qp: int,
    k: int,
    ref_state: Any,
) -> list[RDSample]:
    """Measure 2k+1 quantizer points around center_qp, clamped to the
    valid range, at the frame's current reference state."""
    if k < 1:
        raise ValueError("sweep half-width must be at least 1")
    lo = max(QP_MIN, center_qp - k)
    hi = min(QP_MAX, center_qp + k)
    samples = []
    for qp in range(lo, hi + 1):
        rate, sse = adapter.encode_frame(coord, qp, ref_state)
        samples.append(RDSample(qp=qp, rate=rate, sse=sse))
    return samples


def select_qp(samples: list[RDSample], target_rate: float) -> int:
    """Sweep sample whose measured rate lies closest to the target.

    The trial measurements are the quantizer-rate relation here; ties go
    to the lower qp, which favors quality.
    """
    if not samples:
        raise ValueError("empty sweep")
    best = min(samples, key=lambda s: (abs(s.rate - target_rate), s.qp))
    return best.qp


def _qp_for_target(
    adapter: EncoderAdapter, coord: FrameCoord, target_rate: float, ref_state: Any
) -> int:
    """First-pass quantizer choice: bisection on the monotone rate response."""

    def rate_at(qp: int) -> float:
        return adapter.encode_frame(coord, qp, ref_state)[0]

    lo, hi = QP_MIN, QP_MAX
    if rate_at(lo) <= target_rate:
        return lo
    if rate_at(hi) >= target_rate:
        return hi
    # Invariant: rate(lo) > target > rate(hi).
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if rate_at(mid) > target_rate:
            lo = mid
        else:
            hi = mid
    if abs(rate_at(lo) - target_rate) <= abs(rate_at(hi) - target_rate):
        return lo
    return hi


def _baseline_targets(
    grid: FrameGrid, weights: WeightSet, budget: float, baseline: str
) -> dict[FrameCoord, float]:
    coords = grid.coding_order
    if baseline == "uniform":
        share = budget / len(coords)
        return {c: share for c in coords}
    if baseline == "weight2":
        squares = {c: weights.unified[c] ** 2 for c in coords}
        total = sum(squares.values())
        if total <= 0.0:
            share = budget / len(coords)
            return {c: share for c in coords}
        return {c: budget * sq / total for c, sq in squares.items()}
    raise ValueError(f"unknown baseline {baseline!r}")


def _finish_entry(
    adapter: EncoderAdapter,
    grid: FrameGrid,
    weights: WeightSet,
    lam: float,
    qps: dict[FrameCoord, int],
    rates: dict[FrameCoord, float],
    sses: dict[FrameCoord, float],
    models: dict[FrameCoord, RDModelParams],
) -> IterationEntry:
    breakdown = cost(grid, weights, DistortionSet(dict(sses)), lam)
    return IterationEntry(
        qps=qps,
        rates=rates,
        sses=sses,
        models=models,
        cost=breakdown,
        wpsnr_db=wpsnr(breakdown.total, adapter.total_pixels),
    )


def run_first_iteration(
    adapter: EncoderAdapter,
    grid: FrameGrid,
    weights: WeightSet,
    budget: float,
    *,
    lam: float = 0.0,
    k_sweep: int = 2,
    baseline: str = "uniform",
) -> IterationEntry:
    """First pass: drive every frame toward its baseline budget share.

    Per frame, in coding order: pick the quantizer whose rate is nearest
    the share, run the trial sweep around it, encode, fit the power-law
    model from the sweep, then advance the reference chain.
    """
    if budget <= 0.0:
        raise ValueError("budget must be positive")
    targets = _baseline_targets(grid, weights, budget, baseline)
    ref = adapter.initial_reference()
    qps, rates, sses, models = {}, {}, {}, {}
    for coord in grid.coding_order:
        try:
            qp = _qp_for_target(adapter, coord, targets[coord], ref)
            sweep = trial_sweep(adapter, coord, qp, k_sweep, ref)
            rate, sse = adapter.encode_frame(coord, qp, ref)
        except EncodeFailed as exc:
            raise EncodeFailed(f"frame ({coord.u},{coord.v}): {exc}") from exc
        qps[coord] = qp
        rates[coord] = rate
        sses[coord] = sse
        models[coord] = fit_power_model(sweep)
        ref = adapter.advance_reference(ref, rate, sse)
    return _finish_entry(adapter, grid, weights, lam, qps, rates, sses, models)


def run_iteration(
    adapter: EncoderAdapter,
    previous: IterationEntry,
    allocation: AllocationResult,
    grid: FrameGrid,
    weights: WeightSet,
    *,
    lam: float = 0.0,
    k_sweep: int = 2,
) -> IterationEntry:
    """One re-encode pass toward an allocation.

    Per frame: sweep around the previous pass's quantizer, pick the
    sample nearest the allocated rate, encode with it, refit the model
    from the sweep, advance the chain.
    """
    ref = adapter.initial_reference()
    qps, rates, sses, models = {}, {}, {}, {}
    for coord in grid.coding_order:
        if coord not in allocation.rates:
            raise IncompleteInput(f"allocation missing frame ({coord.u},{coord.v})")
        try:
            sweep = trial_sweep(adapter, coord, previous.qps[coord], k_sweep, ref)
            qp = select_qp(sweep, allocation.rates[coord])
            rate, sse = adapter.encode_frame(coord, qp, ref)
        except EncodeFailed as exc:
            raise EncodeFailed(f"frame ({coord.u},{coord.v}): {exc}") from exc
        qps[coord] = qp
        rates[coord] = rate
        sses[coord] = sse
        models[coord] = fit_power_model(sweep)
        ref = adapter.advance_reference(ref, rate, sse)
    return _finish_entry(adapter, grid, weights, lam, qps, rates, sses, models)


def run_to_convergence(
    adapter: EncoderAdapter,
    grid: FrameGrid,
    weights: WeightSet,
    budget: float,
    lam: float,
    max_iters: int,
    *,
    k_sweep: int = 2,
    min_rate: float | None = None,
    baseline: str = "uniform",
    rate_change_tol: float = RATE_CHANGE_TOL,
) -> IterationTrace:
    """Alternate allocation and re-encoding until the rates settle.

    Settled means the largest relative per-frame rate change between two
    consecutive passes falls below rate_change_tol. Hitting max_iters
    first leaves converged False; the trace is returned either way. An
    allocator that runs out of iterations contributes its best feasible
    iterate instead of aborting the loop.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    first = run_first_iteration(
        adapter, grid, weights, budget, lam=lam, k_sweep=k_sweep, baseline=baseline
    )
    entries = [first]
    converged = False
    for _ in range(max_iters - 1):
        previous = entries[-1]
        problem = AllocationProblem(
            grid=grid,
            weights=weights,
            models=previous.models,
            budget=budget,
            lam=lam,
            min_rate=min_rate,
        )
        try:
            allocation = allocate(problem)
        except NotConverged as exc:
            log.warning("allocator did not fully converge; using best iterate")
            allocation = exc.result
        entry = run_iteration(
            adapter, previous, allocation, grid, weights, lam=lam, k_sweep=k_sweep
        )
        entries.append(entry)
        change = max(
            abs(entry.rates[c] - previous.rates[c]) / previous.rates[c]
            for c in grid.coding_order
        )
        log.info(
            "iteration %d: cost %.6g, max rate change %.4f",
            len(entries),
            entry.cost.total,
            change,
        )
        if change < rate_change_tol:
            converged = True
            break
    return IterationTrace(grid=grid, entries=entries, converged=converged)


@dataclass(frozen=True, eq=False)
class MockSetup:
    """A mock encoder configuration bound to its grid and weights."""

    config: MockEncoderConfig
    grid: FrameGrid
    weights: WeightSet


MOCK_FRAME_FIELDS = "u,v,a,b[,weight]"


def write_mock_config(setup: MockSetup, path) -> None:
    lines = [
        f"width: {setup.grid.width}",
        f"height: {setup.grid.height}",
        f"qp0: {setup.config.qp_anchor}",
        f"rate0: {setup.config.rate_anchor!r}",
        f"gamma: {setup.config.dependency_gamma!r}",
        f"ref_norm: {setup.config.ref_norm!r}",
        f"rate_qp_halving: {setup.config.rate_qp_halving!r}",
        f"frame_pixels: {setup.config.frame_pixels}",
    ]
    for c in setup.grid.coding_order:
        a, b = setup.config.frame_params[c]
        lines.append(f"frame: {c.u},{c.v},{a!r},{b!r},{setup.weights.raw[c]!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_mock_config(path) -> MockSetup:
    """Parse a mock encoder configuration.

    Frame lines carry u,v,a,b and an optional raw weight (default 1), so
    one file fully describes a simulation's encoder, grid, and weights.
    """
    scalars: dict[str, str] = {}
    params: dict[FrameCoord, tuple[float, float]] = {}
    raw_weights: dict[FrameCoord, float] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition(":")
        if not sep:
            raise ParseError(f"{path}: line {lineno}: expected 'key: value'")
        key = key.strip()
        value = value.strip()
        if key == "frame":
            parts = value.split(",")
            if len(parts) not in (4, 5):
                raise ParseError(f"{path}: line {lineno}: expected '{MOCK_FRAME_FIELDS}'")
            try:
                coord = FrameCoord(int(parts[0]), int(parts[1]))
                params[coord] = (float(parts[2]), float(parts[3]))
                raw_weights[coord] = float(parts[4]) if len(parts) == 5 else 1.0
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: bad frame line") from exc
        else:
            scalars[key] = value
    try:
        width = int(scalars["width"])
        height = int(scalars["height"])
    except KeyError as exc:
        raise ParseError(f"{path}: missing key {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ParseError(f"{path}: bad grid dimensions") from exc
    grid = spiral_order(width, height)
    missing = [c for c in grid.coding_order if c not in params]
    if missing:
        raise ParseError(f"{path}: no frame line for ({missing[0].u},{missing[0].v})")
    try:
        config = MockEncoderConfig(
            frame_params=params,
            qp_anchor=int(scalars.get("qp0", 30)),
            rate_anchor=float(scalars.get("rate0", 1e6)),
            dependency_gamma=float(scalars.get("gamma", 0.0)),
            ref_norm=float(scalars.get("ref_norm", 1e6)),
            rate_qp_halving=float(scalars.get("rate_qp_halving", 6.0)),
            frame_pixels=int(scalars.get("frame_pixels", 271_250)),
        )
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return MockSetup(config=config, grid=grid, weights=unify_weights(raw_weights))


TRACE_HEADER = "iteration,u,v,qp,rate_bits,sse,alpha,beta"


@dataclass(frozen=True, eq=False)
class ParsedTraceIteration:
    """File-level form of one pass: raw rows plus the summary pair."""

    rows: list[tuple[int, int, int, float, float, float, float]]  # u,v,qp,rate,sse,alpha,beta
    total_cost: float
    wpsnr_db: float


@dataclass(frozen=True, eq=False)
class ParsedTrace:
    iterations: list[ParsedTraceIteration]
    converged: bool


def trace_to_parsed(trace: IterationTrace) -> ParsedTrace:
    iterations = []
    for entry in trace.entries:
        rows = []
        for c in trace.grid.coding_order:
            m = entry.models[c]
            rows.append(
                (c.u, c.v, entry.qps[c], entry.rates[c], entry.sses[c], m.alpha, m.beta)
            )
        iterations.append(
            ParsedTraceIteration(
                rows=rows, total_cost=entry.cost.total, wpsnr_db=entry.wpsnr_db
            )
        )
    return ParsedTrace(iterations=iterations, converged=trace.converged)


def write_trace_csv(trace: IterationTrace | ParsedTrace, path) -> None:
    """Per-frame rows per pass, each pass closed by a commented summary row."""
    parsed = trace_to_parsed(trace) if isinstance(trace, IterationTrace) else trace
    lines = [TRACE_HEADER]
    for index, iteration in enumerate(parsed.iterations, 1):
        for u, v, qp, rate, sse, alpha, beta in iteration.rows:
            lines.append(f"{index},{u},{v},{qp},{rate!r},{sse!r},{alpha!r},{beta!r}")
        lines.append(
            f"# iteration {index} total_cost {iteration.total_cost!r} "
            f"wpsnr {iteration.wpsnr_db!r}"
        )
    lines.append(f"# converged {str(parsed.converged).lower()}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace_csv(path) -> ParsedTrace:
    iterations: list[ParsedTraceIteration] = []
    pending_rows: list[tuple[int, int, int, float, float, float, float]] = []
    pending_index = 1
    converged = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped == TRACE_HEADER:
            continue
        if stripped.startswith("#"):
            parts = stripped[1:].split()
            if parts[:1] == ["iteration"] and len(parts) == 6:
                try:
                    iterations.append(
                        ParsedTraceIteration(
                            rows=pending_rows,
                            total_cost=float(parts[3]),
                            wpsnr_db=float(parts[5]),
                        )
                    )
                except ValueError as exc:
                    raise ParseError(f"{path}: line {lineno}: bad summary") from exc
                pending_rows = []
                pending_index += 1
            elif parts[:1] == ["converged"] and len(parts) == 2:
                converged = parts[1] == "true"
            else:
                raise ParseError(f"{path}: line {lineno}: bad comment row")
            continue
        parts = stripped.split(",")
        if len(parts) != 8:
            raise ParseError(f"{path}: line {lineno}: expected '{TRACE_HEADER}'")
        try:
            if int(parts[0]) != pending_index:
                raise ParseError(f"{path}: line {lineno}: out-of-order iteration")
            pending_rows.append(
                (
                    int(parts[1]),
                    int(parts[2]),
                    int(parts[3]),
                    float(parts[4]),
                    float(parts[5]),
                    float(parts[6]),
                    float(parts[7]),
                )
            )
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: bad number") from exc
    if pending_rows or converged is None or not iterations:
        raise ParseError(f"{path}: truncated trace")
    return ParsedTrace(iterations=iterations, converged=converged)


def last_iteration_distortions(parsed: ParsedTrace) -> DistortionSet:
    """SSE per frame from the final pass of a parsed trace."""
    rows = parsed.iterations[-1].rows
    return DistortionSet({FrameCoord(u, v): sse for u, v, _, _, sse, _, _ in rows})
