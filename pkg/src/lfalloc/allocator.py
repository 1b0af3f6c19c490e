"""Two-step budgeted bit allocation across perspective frames.

Step one drops the consistency term and solves the separable problem

    minimize   sum_f w_f^2 * alpha_f * r_f**beta_f
    subject to sum_f r_f <= budget,  r_f >= min_rate

in closed form per frame via the common multiplier, with a bisection on
the multiplier to meet the budget (water-filling). Step two linearizes
each frame's distortion inside the consistency term around the step-one
rates, which turns the penalty into the Euclidean norm of an affine map
A r + b, and polishes the allocation by projected gradient descent over
the same feasible set.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    DomainError,
    IncompleteInput,
    InfeasibleBudget,
    NotConverged,
    ParseError,
)
from .lightfield import FrameCoord, FrameGrid, WeightSet, proximity, spiral_order, unify_weights
from .metrics import CostBreakdown, DistortionSet, cost
from .rdmodel import RDModelParams, eval_model, linearize

log = logging.getLogger("lfalloc.allocator")

# Default rate floor as a fraction of budget per frame.
MIN_RATE_BUDGET_FRACTION = 1e-3


@dataclass(frozen=True, eq=False)
class AllocationProblem:
    """One allocation instance over a frame grid."""

    grid: FrameGrid
    weights: WeightSet
    models: dict[FrameCoord, RDModelParams]
    budget: float
    lam: float = 0.0
    min_rate: float | None = None

    def __post_init__(self):
        if self.budget <= 0.0:
            raise ValueError("budget must be positive")
        if self.lam < 0.0:
            raise ValueError("lambda must be nonnegative")
        coords = self.grid.coding_order
        missing = [c for c in coords if c not in self.models]
        if missing:
            raise IncompleteInput(f"models missing for {missing[0]}")
        missing = [c for c in coords if c not in self.weights.unified]
        if missing:
            raise IncompleteInput(f"weights missing for {missing[0]}")
        n = self.grid.n_frames
        if self.min_rate is None:
            object.__setattr__(
                self, "min_rate", self.budget * MIN_RATE_BUDGET_FRACTION / n
            )
        if self.min_rate <= 0.0:
            raise ValueError("min_rate must be positive")
        if self.min_rate * n > self.budget:
            raise InfeasibleBudget(
                f"rate floor {self.min_rate!r} x {n} frames exceeds budget {self.budget!r}"
            )


@dataclass(frozen=True, eq=False)
class AllocationResult:
    """Solver output: rates plus diagnostics."""

    rates: dict[FrameCoord, float]
    objective: CostBreakdown
    kkt_residual: float
    iterations: int
    budget_used: float
    step1_rates: dict[FrameCoord, float] | None = None


@dataclass(frozen=True)
class PenaltyRow:
    """One stored row of the linearized consistency system."""

    pair_index: int  # 1-based row number in the conceptual n*n row layout
    i: int  # coding-order index of the first frame of the pair
    j: int
    coef_i: float
    coef_j: float
    rhs: float


@dataclass(frozen=True, eq=False)
class ConePenalty:
    """Sparse affine system A r + b for the linearized consistency term.

    Only rows whose frame pair lies within the proximity radius are
    stored; every stored row k touches exactly the two columns i and j of
    its pair. The arrays are aligned: row t of the system is
    coef_i[t] * r[col_i[t]] + coef_j[t] * r[col_j[t]] + rhs[t].
    """

    n_frames: int
    pair_index: np.ndarray
    col_i: np.ndarray
    col_j: np.ndarray
    coef_i: np.ndarray
    coef_j: np.ndarray
    rhs: np.ndarray

    @property
    def rows(self) -> tuple[PenaltyRow, ...]:
        return tuple(
            PenaltyRow(
                pair_index=int(self.pair_index[t]),
                i=int(self.col_i[t]),
                j=int(self.col_j[t]),
                coef_i=float(self.coef_i[t]),
                coef_j=float(self.coef_j[t]),
                rhs=float(self.rhs[t]),
            )
            for t in range(len(self.rhs))
        )

    def residual(self, rates: np.ndarray) -> np.ndarray:
        """A r + b for a rate vector in coding order."""
        return (
            self.coef_i * rates[self.col_i]
            + self.coef_j * rates[self.col_j]
            + self.rhs
        )

    def apply_transpose(self, values: np.ndarray) -> np.ndarray:
        """A^T y accumulated deterministically in row order."""
        out = np.zeros(self.n_frames)
        np.add.at(out, self.col_i, self.coef_i * values)
        np.add.at(out, self.col_j, self.coef_j * values)
        return out


def _vectors(problem: AllocationProblem):
    coords = problem.grid.coding_order
    w = np.array([problem.weights.unified[c] for c in coords])
    alpha = np.array([problem.models[c].alpha for c in coords])
    beta = np.array([problem.models[c].beta for c in coords])
    return coords, w, alpha, beta


def _as_vector(problem: AllocationProblem, rates) -> np.ndarray:
    if isinstance(rates, dict):
        return np.array([rates[c] for c in problem.grid.coding_order], dtype=float)
    return np.asarray(rates, dtype=float)


def predicted_distortions(problem: AllocationProblem, rates) -> DistortionSet:
    """Model-predicted SSE per frame at the given rates."""
    vec = _as_vector(problem, rates)
    coords = problem.grid.coding_order
    return DistortionSet(
        {c: eval_model(problem.models[c], float(r)) for c, r in zip(coords, vec)}
    )


def evaluate_cost(problem: AllocationProblem, rates) -> CostBreakdown:
    """Joint cost of an allocation under the problem's models and lambda."""
    return cost(
        problem.grid,
        problem.weights,
        predicted_distortions(problem, rates),
        problem.lam,
    )


def penalized_objective(problem: AllocationProblem, penalty: ConePenalty, rates) -> float:
    """Post-linearization objective: weighted model distortion plus
    lambda times the norm of the affine consistency residual."""
    coords, w, alpha, beta = _vectors(problem)
    vec = _as_vector(problem, rates)
    t_prime = float(np.sum(w * w * alpha * vec ** beta))
    res = penalty.residual(vec)
    return t_prime + problem.lam * float(np.linalg.norm(res))


def project_rates(rates: np.ndarray, budget: float, min_rate: float) -> np.ndarray:
    """Euclidean projection onto {r : r >= min_rate, sum(r) <= budget}.

    Shift by the floor, clip negatives, and only if the clipped point
    still exceeds the remaining budget project onto the scaled simplex
    with the sort-based O(n log n) rule.
    """
    y = np.asarray(rates, dtype=float) - min_rate
    slack = budget - min_rate * y.size
    if slack <= 0.0:
        return np.full(y.size, min_rate)
    clipped = np.maximum(y, 0.0)
    if float(clipped.sum()) <= slack:
        return clipped + min_rate
    u = np.sort(y, kind="stable")[::-1]
    cumulative = np.cumsum(u)
    counts = np.arange(1, y.size + 1)
    thresholds = (cumulative - slack) / counts
    support = np.nonzero(u - thresholds > 0.0)[0]
    theta = thresholds[support[-1]]
    return np.maximum(y - theta, 0.0) + min_rate


def solve_step1(problem: AllocationProblem) -> AllocationResult:
    """Water-filling solution of the weighted-distortion-only problem.

    Stationarity gives r_f(mu) = (w_f^2 alpha_f |beta_f| / mu)**(1/(1-beta_f))
    per positive-weight frame; a bisection on mu > 0 matches the budget to
    within 1e-10 relative. Zero-weight frames gain nothing from rate and
    are pinned to the floor. The reported kkt_residual is the worst
    relative mismatch between the per-frame marginal and the common
    multiplier over frames strictly above the floor.
    """
    coords, w, alpha, beta = _vectors(problem)
    n = len(coords)
    floor = problem.min_rate
    budget = problem.budget
    positive = w > 0.0
    n_zero = int(np.count_nonzero(~positive))
    budget_positive = budget - floor * n_zero
    coeff = w[positive] ** 2 * alpha[positive] * np.abs(beta[positive])
    b_pos = beta[positive]
    inv_exp = 1.0 / (1.0 - b_pos)

    def rates_at(mu: float) -> np.ndarray:
        return np.maximum((coeff / mu) ** inv_exp, floor)

    def mu_for_rate(rate: float) -> np.ndarray:
        return coeff * rate ** (b_pos - 1.0)

    lo = 0.5 * float(np.min(mu_for_rate(budget_positive)))
    hi = 2.0 * float(np.max(mu_for_rate(floor)))
    best = None
    iterations = 0
    for iterations in range(1, 201):
        mu = 0.5 * (lo + hi)
        r_pos = rates_at(mu)
        total = float(r_pos.sum()) + floor * n_zero
        gap = abs(total - budget) / budget
        if best is None or gap < best[0]:
            best = (gap, mu, r_pos)
        if gap < 1e-10:
            break
        if total > budget:
            lo = mu
        else:
            hi = mu
    gap, mu, r_pos = best
    log.debug("step1: %d bisection iterations, budget gap %.3e", iterations, gap)
    rates_vec = np.full(n, floor)
    rates_vec[positive] = r_pos
    interior = r_pos > floor
    if np.any(interior):
        marginal = coeff[interior] * r_pos[interior] ** (b_pos[interior] - 1.0)
        kkt_residual = float(np.max(np.abs(marginal - mu)) / mu)
    else:
        kkt_residual = 0.0
    rates = {c: float(r) for c, r in zip(coords, rates_vec)}
    return AllocationResult(
        rates=rates,
        objective=evaluate_cost(problem, rates),
        kkt_residual=kkt_residual,
        iterations=iterations,
        budget_used=float(rates_vec.sum()),
    )


def build_cone_penalty(problem: AllocationProblem, expansion_rates) -> ConePenalty:
    """Linearize the consistency term around expansion_rates.

    For the ordered pair (f_i, f_j) with proximity delta > 0 the stored
    row k = i*n + j + 1 (indices 0-based, k 1-based) reads

        sqrt(delta) * min(w_i, w_j) * (D_i(r_i) - D_j(r_j))

    with each D replaced by its tangent at the expansion point, split into
    the two rate coefficients and a constant. Self pairs and pairs beyond
    the proximity radius are omitted.
    """
    coords, w, _, _ = _vectors(problem)
    vec = _as_vector(problem, expansion_rates)
    if np.any(vec <= 0.0):
        raise DomainError("expansion rates must be positive")
    n = len(coords)
    tangents = [
        linearize(problem.models[c], float(r)) for c, r in zip(coords, vec)
    ]
    pair_index, col_i, col_j, coef_i, coef_j, rhs = [], [], [], [], [], []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            delta = proximity(coords[i], coords[j])
            if delta == 0.0:
                continue
            scale = math.sqrt(delta) * min(w[i], w[j])
            pair_index.append(i * n + j + 1)
            col_i.append(i)
            col_j.append(j)
            coef_i.append(scale * tangents[i].slope)
            coef_j.append(-scale * tangents[j].slope)
            rhs.append(scale * (tangents[i].intercept - tangents[j].intercept))
    return ConePenalty(
        n_frames=n,
        pair_index=np.array(pair_index, dtype=int),
        col_i=np.array(col_i, dtype=int),
        col_j=np.array(col_j, dtype=int),
        coef_i=np.array(coef_i, dtype=float),
        coef_j=np.array(coef_j, dtype=float),
        rhs=np.array(rhs, dtype=float),
    )


def solve_step2(
    problem: AllocationProblem,
    warm_start,
    penalty: ConePenalty,
    *,
    max_iterations: int = 10_000,
    tol: float = 1e-6,
    stall_limit: int = 50,
) -> AllocationResult:
    """Projected gradient descent on the smoothed penalized objective.

    The consistency norm is smoothed to sqrt(|A r + b|^2 + eps^2) with
    eps = 1e-9 * max(1, |b|) so the gradient exists at zero residual; the
    smoothed and exact objectives then agree to about lambda * eps.
    Every step is a projection of a gradient move onto the feasible set,
    accepted under a backtracking sufficient-decrease test with the step
    doubled between iterations.

    Convergence is declared when the projected-gradient norm
    |r - P(r - t g)| / t falls below tol * (1 + |objective|), or when the
    best exact objective stops improving beyond machine precision for
    stall_limit consecutive iterations; the second test terminates runs
    whose optimum sits at the nonsmooth tip of the penalty cone, where
    the iterates dither at float resolution without the first test ever
    firing. The iterate with the best exact objective, warm start
    included, is returned, so the result never climbs above the warm
    start. Running out of iterations raises NotConverged carrying the
    best iterate.
    """
    coords, w, alpha, beta = _vectors(problem)
    lam = problem.lam
    budget = problem.budget
    floor = problem.min_rate
    w2a = w * w * alpha
    eps = 1e-9 * max(1.0, float(np.linalg.norm(penalty.rhs)))

    def parts(vec: np.ndarray) -> tuple[float, np.ndarray]:
        return float(np.sum(w2a * vec ** beta)), penalty.residual(vec)

    r = project_rates(_as_vector(problem, warm_start), budget, floor)
    t_prime, res = parts(r)
    res_sq = float(res @ res)
    smooth_norm = math.sqrt(res_sq + eps * eps)
    objective = t_prime + lam * smooth_norm
    exact_best = t_prime + lam * math.sqrt(res_sq)
    r_best = r.copy()

    def gradient(vec: np.ndarray, residual_vec: np.ndarray, norm: float) -> np.ndarray:
        grad = w2a * beta * vec ** (beta - 1.0)
        if lam > 0.0:
            grad = grad + (lam / norm) * penalty.apply_transpose(residual_vec)
        return grad

    grad = gradient(r, res, smooth_norm)
    step = budget / (1.0 + float(np.linalg.norm(grad)))
    converged = False
    pg_norm = math.inf
    stall = 0
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        step = min(step * 2.0, 1e3 * budget)
        accepted = False
        for _ in range(200):
            candidate = project_rates(r - step * grad, budget, floor)
            move = candidate - r
            t_prime_c, res_c = parts(candidate)
            res_sq_c = float(res_c @ res_c)
            smooth_norm_c = math.sqrt(res_sq_c + eps * eps)
            objective_c = t_prime_c + lam * smooth_norm_c
            bound = (
                objective
                + float(grad @ move)
                + float(move @ move) / (2.0 * step)
                + 1e-12 * (1.0 + abs(objective))
            )
            if objective_c <= bound:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        pg_norm = float(np.linalg.norm(move)) / step
        r = candidate
        objective = objective_c
        exact = t_prime_c + lam * math.sqrt(res_sq_c)
        if exact < exact_best:
            if exact < exact_best - 1e-12 * (1.0 + abs(exact_best)):
                stall = 0
            else:
                stall += 1
            exact_best = exact
            r_best = r.copy()
        else:
            stall += 1
        grad = gradient(r, res_c, smooth_norm_c)
        if pg_norm < tol * (1.0 + abs(objective)) or stall >= stall_limit:
            converged = True
            break
    log.debug(
        "step2: %d iterations, projected-gradient norm %.3e, converged %s",
        iterations,
        pg_norm,
        converged,
    )
    rates = {c: float(v) for c, v in zip(coords, r_best)}
    result = AllocationResult(
        rates=rates,
        objective=evaluate_cost(problem, rates),
        kkt_residual=float(pg_norm),
        iterations=iterations,
        budget_used=float(r_best.sum()),
    )
    if not converged:
        raise NotConverged(
            f"projected gradient stopped after {iterations} iterations "
            f"(projected-gradient norm {pg_norm:.3e})",
            result=result,
        )
    return result


def allocate(problem: AllocationProblem) -> AllocationResult:
    """Full two-step allocation.

    With lambda zero the step-one answer is already optimal and is
    returned as is; otherwise step two polishes it against the linearized
    consistency penalty. The result carries the step-one rates for
    diagnostics either way.
    """
    step1 = solve_step1(problem)
    if problem.lam == 0.0:
        return replace(step1, step1_rates=dict(step1.rates))
    penalty = build_cone_penalty(problem, step1.rates)
    step2 = solve_step2(problem, step1.rates, penalty)
    return replace(step2, step1_rates=dict(step1.rates))


PROBLEM_FRAME_FIELDS = "u,v,weight,alpha,beta"


def write_problem_file(problem: AllocationProblem, path) -> None:
    """Serialize a problem as key-value lines plus one frame line per frame."""
    lines = [
        f"width: {problem.grid.width}",
        f"height: {problem.grid.height}",
        f"budget: {problem.budget!r}",
        f"lambda: {problem.lam!r}",
        f"min_rate: {problem.min_rate!r}",
        "order: " + ";".join(f"{c.u},{c.v}" for c in problem.grid.coding_order),
    ]
    for c in problem.grid.coding_order:
        m = problem.models[c]
        lines.append(
            f"frame: {c.u},{c.v},{problem.weights.raw[c]!r},{m.alpha!r},{m.beta!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_problem_file(path) -> AllocationProblem:
    """Parse an allocation problem file.

    Required keys: width, height, budget, lambda, and one frame line per
    grid coordinate. Optional: min_rate and an explicit coding order
    (spiral by default).
    """
    scalars: dict[str, str] = {}
    frames: dict[FrameCoord, tuple[float, float, float]] = {}
    order_text: str | None = None
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
            if len(parts) != 5:
                raise ParseError(
                    f"{path}: line {lineno}: expected '{PROBLEM_FRAME_FIELDS}'"
                )
            try:
                coord = FrameCoord(int(parts[0]), int(parts[1]))
                frames[coord] = (float(parts[2]), float(parts[3]), float(parts[4]))
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: bad frame line") from exc
        elif key == "order":
            order_text = value
        else:
            scalars[key] = value
    try:
        width = int(scalars["width"])
        height = int(scalars["height"])
        budget = float(scalars["budget"])
        lam = float(scalars["lambda"])
        min_rate = float(scalars["min_rate"]) if "min_rate" in scalars else None
    except KeyError as exc:
        raise ParseError(f"{path}: missing key {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ParseError(f"{path}: bad scalar value") from exc
    if order_text is None:
        grid = spiral_order(width, height)
    else:
        try:
            order = tuple(
                FrameCoord(int(pair.split(",")[0]), int(pair.split(",")[1]))
                for pair in order_text.split(";")
            )
            grid = FrameGrid(width=width, height=height, coding_order=order)
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}: bad order line") from exc
    missing = [c for c in grid.coding_order if c not in frames]
    if missing:
        raise ParseError(f"{path}: no frame line for ({missing[0].u},{missing[0].v})")
    weights = unify_weights({c: frames[c][0] for c in grid.coding_order})
    try:
        models = {
            c: RDModelParams(alpha=frames[c][1], beta=frames[c][2])
            for c in grid.coding_order
        }
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return AllocationProblem(
        grid=grid,
        weights=weights,
        models=models,
        budget=budget,
        lam=lam,
        min_rate=min_rate,
    )


ALLOCATION_HEADER = "u,v,rate_bits"


def write_allocation_file(result: AllocationResult, path) -> None:
    """Rates CSV plus a commented diagnostics block."""
    lines = [ALLOCATION_HEADER]
    lines.extend(f"{c.u},{c.v},{r!r}" for c, r in result.rates.items())
    lines.append("# diagnostics")
    lines.append(f"# weighted_distortion {result.objective.weighted_distortion!r}")
    lines.append(f"# discontinuity {result.objective.discontinuity!r}")
    lines.append(f"# lambda {result.objective.lam!r}")
    lines.append(f"# total {result.objective.total!r}")
    lines.append(f"# kkt_residual {result.kkt_residual!r}")
    lines.append(f"# iterations {result.iterations}")
    lines.append(f"# budget_used {result.budget_used!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_allocation_file(path) -> tuple[dict[FrameCoord, float], dict[str, float]]:
    """Parse rates and diagnostics back from an allocation file."""
    rates: dict[FrameCoord, float] = {}
    diagnostics: dict[str, float] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped == ALLOCATION_HEADER or stripped == "# diagnostics":
            continue
        if stripped.startswith("#"):
            parts = stripped[1:].split()
            if len(parts) != 2:
                raise ParseError(f"{path}: line {lineno}: bad diagnostics line")
            try:
                diagnostics[parts[0]] = float(parts[1])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: bad number") from exc
            continue
        parts = stripped.split(",")
        if len(parts) != 3:
            raise ParseError(f"{path}: line {lineno}: expected 'u,v,rate_bits'")
        try:
            rates[FrameCoord(int(parts[0]), int(parts[1]))] = float(parts[2])
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: bad number") from exc
    if not rates:
        raise ParseError(f"{path}: no rate rows")
    return rates, diagnostics
