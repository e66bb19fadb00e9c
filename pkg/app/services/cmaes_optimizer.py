import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict

from app.core.exceptions import NumericalError, OptimizationError
from app.models.optimizer import (
    CmaesConfig,
    CmaesState,
    EvaluationRecord,
    GenerationRecord,
    OptimizationResult,
    Termination,
)

logger = logging.getLogger(__name__)

MAX_RESAMPLES = 100
EIGEN_FLOOR = 1e-14          # relative to trace(C)
FLAT_FITNESS_BOOST = 0.2
LOG_EVERY = 10

CostFunction = Callable[[np.ndarray], float]


class StrategyParameters(BaseModel):
    '''Learning rates and weights of the (μ/μ_w, λ) strategy, standard tutorial defaults.'''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: int
    lam: int
    mu: int
    weights: np.ndarray
    mueff: float
    cc: float
    cs: float
    c1: float
    cmu: float
    damps: float
    chi_n: float

    @classmethod
    def from_config(cls, config: CmaesConfig) -> "StrategyParameters":
        n, lam, mu = config.dimension, config.population, config.parents
        raw = np.array([math.log(lam / 2.0 + 0.5) - math.log(i + 1) for i in range(mu)])
        if np.any(raw <= 0):
            # μ > λ/2 would give non-positive log weights; fall back to equal weighting.
            raw = np.ones(mu)
        weights = raw / raw.sum()
        mueff = 1.0 / float(np.sum(weights**2))
        cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
        cs = (mueff + 2) / (n + mueff + 5)
        c1 = 2 / ((n + 1.3) ** 2 + mueff)
        cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
        damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + cs
        chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n**2))
        return cls(n=n, lam=lam, mu=mu, weights=weights, mueff=mueff, cc=cc, cs=cs,
                   c1=c1, cmu=cmu, damps=damps, chi_n=chi_n)


def generation_rng(seed: int, generation: int) -> np.random.Generator:
    '''Independent, reproducible substream for one generation.'''
    return np.random.default_rng([seed, generation])


def initial_state(config: CmaesConfig) -> CmaesState:
    n = config.dimension
    return CmaesState(
        mean=np.asarray(config.initial_mean, dtype=float),
        covariance=np.eye(n),
        sigma=config.initial_step,
        path_sigma=np.zeros(n),
        path_c=np.zeros(n),
    )


def _decompose(covariance: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    '''Eigen-decomposition C = B diag(d²) Bᵀ, repairing the spectrum once if needed.'''
    c = 0.5 * (covariance + covariance.T)
    for attempt in range(2):
        try:
            w, b = np.linalg.eigh(c)
        except np.linalg.LinAlgError:
            w, b = None, None
        floor = EIGEN_FLOOR * max(float(np.trace(c)), EIGEN_FLOOR)
        if w is not None and np.all(np.isfinite(w)) and w.min() > floor:
            return w, b
        if attempt == 0:
            logger.warning("Covariance lost positive definiteness; applying eigenvalue floor")
            if w is None or not np.all(np.isfinite(w)):
                c = np.where(np.isfinite(c), c, 0.0)
                c = 0.5 * (c + c.T) + floor * np.eye(c.shape[0])
            else:
                c = (b * np.maximum(w, floor * 1.01)) @ b.T
                c = 0.5 * (c + c.T)
    raise NumericalError("covariance decomposition failed after repair")


def _inside(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> bool:
    return bool(np.all(x >= lower) and np.all(x <= upper))


def ask(state: CmaesState, config: CmaesConfig, rng: np.random.Generator) -> List[np.ndarray]:
    '''
    λ candidates from N(mean, σ²C). Out-of-bounds draws are resampled up to 100 times,
    then clipped; candidates consume the generator strictly in index order.
    '''
    w, b = _decompose(state.covariance)
    scale = b * np.sqrt(w)
    lower, upper = config.lower, config.upper
    candidates = []
    for _ in range(config.population):
        for _attempt in range(MAX_RESAMPLES):
            x = state.mean + state.sigma * (scale @ rng.standard_normal(config.dimension))
            if _inside(x, lower, upper):
                break
        else:
            logger.debug("Candidate clipped to bounds after resampling limit")
            x = np.clip(x, lower, upper)
        candidates.append(x)
    return candidates


def _sanitize(costs: Sequence[float]) -> np.ndarray:
    values = np.asarray(costs, dtype=float)
    nan = np.isnan(values)
    if np.all(nan):
        raise OptimizationError("every candidate in the generation returned NaN")
    return np.where(nan, np.inf, values)


def _record_best(state_best_cost: float, state_best_x, candidates, values):
    idx = int(np.argmin(values))
    if values[idx] < state_best_cost:
        return float(values[idx]), np.array(candidates[idx], dtype=float)
    return state_best_cost, state_best_x


def tell(
    state: CmaesState,
    config: CmaesConfig,
    candidates: Sequence[np.ndarray],
    costs: Sequence[float],
) -> CmaesState:
    if len(candidates) != config.population or len(costs) != config.population:
        raise ValueError(f"tell expects {config.population} candidates and costs")
    sp = StrategyParameters.from_config(config)
    values = _sanitize(costs)
    xs = np.asarray(candidates, dtype=float)
    best_cost, best_x = _record_best(state.best_cost, state.best_x, xs, values)
    generation = state.generation + 1
    evaluations = state.evaluations + config.population

    if np.all(values == values[0]):
        sigma = state.sigma * math.exp(FLAT_FITNESS_BOOST + sp.cs / sp.damps)
        logger.info(f"Flat fitness in generation {generation}; step size raised to {sigma:.3e}")
        return state.model_copy(update={
            "sigma": sigma, "generation": generation, "evaluations": evaluations,
            "best_cost": best_cost, "best_x": best_x,
        })

    # recombination: weighted mean of the mu best
    order = np.argsort(values, kind="stable")
    selected = xs[order[: sp.mu]]
    old_mean = state.mean
    mean = sp.weights @ selected
    y = (mean - old_mean) / state.sigma

    # evolution paths; hsig stalls p_c while p_sigma is still long
    w, b = _decompose(state.covariance)
    inv_sqrt = (b / np.sqrt(w)) @ b.T
    ps = (1 - sp.cs) * state.path_sigma + math.sqrt(sp.cs * (2 - sp.cs) * sp.mueff) * (inv_sqrt @ y)
    norm_ps = float(np.linalg.norm(ps))
    hsig_ratio = norm_ps**2 / sp.n / (1 - (1 - sp.cs) ** (2 * generation))
    hsig = 1.0 if hsig_ratio < 2 + 4 / (sp.n + 1) else 0.0
    pc = (1 - sp.cc) * state.path_c + hsig * math.sqrt(sp.cc * (2 - sp.cc) * sp.mueff) * y

    # rank-one plus rank-mu covariance update
    steps = (selected - old_mean) / state.sigma
    rank_mu = (steps.T * sp.weights) @ steps
    c1a = sp.c1 * (1 - (1 - hsig**2) * sp.cc * (2 - sp.cc))
    covariance = (1 - c1a - sp.cmu * sp.weights.sum()) * state.covariance
    covariance = covariance + sp.c1 * np.outer(pc, pc) + sp.cmu * rank_mu
    covariance = 0.5 * (covariance + covariance.T)

    # cumulative step-size adaptation, growth capped at e per generation
    sigma = state.sigma * math.exp(min(1.0, (sp.cs / sp.damps) * (norm_ps / sp.chi_n - 1)))
    if not np.isfinite(sigma) or sigma <= 0:
        raise NumericalError(f"step size became {sigma}")

    return CmaesState(
        mean=mean,
        covariance=covariance,
        sigma=sigma,
        path_sigma=ps,
        path_c=pc,
        generation=generation,
        evaluations=evaluations,
        best_x=best_x,
        best_cost=best_cost,
    )


def _evaluate_one(cost_fn: CostFunction, x: np.ndarray) -> float:
    try:
        return float(cost_fn(np.array(x, dtype=float)))
    except OptimizationError:
        raise
    except Exception as exc:
        raise OptimizationError(f"cost evaluation failed at {list(map(float, x))}: {exc}", candidate=x) from exc


def evaluate_batch(cost_fn: CostFunction, candidates: Sequence[np.ndarray], workers: int = 1) -> List[float]:
    '''Costs in candidate order; workers > 1 (or 0 for all cores) fans out through joblib.'''
    if workers == 1 or len(candidates) <= 1:
        return [_evaluate_one(cost_fn, x) for x in candidates]
    n_jobs = -1 if workers == 0 else workers
    return list(Parallel(n_jobs=n_jobs)(delayed(_evaluate_one)(cost_fn, x) for x in candidates))


def optimize(
    cost_fn: CostFunction,
    config: CmaesConfig,
    on_generation: Optional[Callable[[GenerationRecord], None]] = None,
) -> OptimizationResult:
    '''
    Minimize cost_fn inside the configured box.
    The initial mean is scored first as generation 0, then ask/tell runs until the
    target cost, the evaluation budget or the stagnation window stops it.
    '''
    state = initial_state(config)
    history: List[GenerationRecord] = []
    log: List[EvaluationRecord] = []

    start_cost = _sanitize([_evaluate_one(cost_fn, state.mean)])[0]
    state = state.model_copy(update={"evaluations": 1, "best_cost": float(start_cost), "best_x": state.mean.copy()})
    log.append(EvaluationRecord(generation=0, index=0, x=state.mean.tolist(), cost=float(start_cost)))
    history.append(GenerationRecord(generation=0, evaluations=1, best_cost=state.best_cost,
                                    median_cost=float(start_cost), sigma=state.sigma))
    if on_generation:
        on_generation(history[-1])

    last_improvement, reference_best = 0, state.best_cost
    termination = Termination.BUDGET_EXHAUSTED
    while True:
        if config.target_cost is not None and state.best_cost <= config.target_cost:
            termination = Termination.TARGET_REACHED
            break
        if state.evaluations + config.population > config.max_evaluations:
            termination = Termination.BUDGET_EXHAUSTED
            break
        generation = state.generation + 1
        candidates = ask(state, config, generation_rng(config.seed, generation))
        costs = evaluate_batch(cost_fn, candidates, config.workers)
        state = tell(state, config, candidates, costs)

        for index, (x, c) in enumerate(zip(candidates, costs)):
            log.append(EvaluationRecord(generation=generation, index=index, x=[float(v) for v in x], cost=float(c)))
        finite = _sanitize(costs)
        record = GenerationRecord(
            generation=generation,
            evaluations=state.evaluations,
            best_cost=state.best_cost,
            median_cost=float(np.median(finite)),
            sigma=state.sigma,
        )
        history.append(record)
        if on_generation:
            on_generation(record)
        if generation % LOG_EVERY == 0:
            logger.info(
                f"CMA-ES generation {generation}: best {state.best_cost:.6e}, "
                f"median {record.median_cost:.6e}, sigma {state.sigma:.3e}, evals {state.evaluations}"
            )

        if reference_best - state.best_cost > config.stagnation_tolerance:
            reference_best, last_improvement = state.best_cost, generation
        elif generation - last_improvement >= config.stagnation_generations:
            termination = Termination.STAGNATION
            break

    logger.info(f"CMA-ES finished ({termination.value}) after {state.evaluations} evaluations, best {state.best_cost:.6e}")
    return OptimizationResult(
        best_params=[float(v) for v in state.best_x],
        best_cost=state.best_cost,
        evaluations=state.evaluations,
        history=history,
        candidates=log,
        termination=termination,
        seed=config.seed,
    )
