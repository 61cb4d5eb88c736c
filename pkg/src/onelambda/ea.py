"""Mutation-only EA engine with success-based offspring population control.

The core algorithm keeps a single parent and, each generation, creates
``round(lambda)`` offspring by standard bit mutation (each bit flips
independently with probability 1/n).  A uniformly random fitness-maximal
offspring is selected.  Under comma selection it always replaces the
parent; under plus selection it replaces the parent only if at least as
fit.  A generation counts as a *success* only on strict improvement.

The offspring population size lambda is a real number.  After a success
it is divided by the update strength F (clamped to >= 1); otherwise it is
multiplied by F^(1/s), where s is the success rate.  One success every
s+1 generations keeps lambda constant.  Only the rounded value is used to
create offspring.

Mutation samples the flip count from Binomial(n, 1/n) and then picks that
many distinct positions uniformly, which is distributionally identical to
per-bit flips but independent of n in cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .fitness import FitnessFunction, SearchPoint

__all__ = [
    "ControllerParams",
    "AlgorithmKind",
    "StoppingCondition",
    "AlgoState",
    "StopCause",
    "RunRecord",
    "round_lambda",
    "update_lambda",
    "default_static_lambda",
    "default_lambda_abort_threshold",
    "mutate",
    "generation_comma",
    "generation_plus",
    "run",
]

_EMPTY_POSITIONS = np.empty(0, dtype=np.int64)


def round_lambda(lambda_real: float) -> int:
    """Round to the nearest integer, with .5 rounding up."""
    return int(math.floor(lambda_real + 0.5))


@dataclass(frozen=True)
class ControllerParams:
    """Success-based controller hyperparameters.

    F is the update strength (> 1), s the success rate (> 0).  The derived
    factors satisfy growth_factor**s * shrink_factor == 1, so one success
    per s+1 generations leaves lambda unchanged.
    """

    F: float = 1.5
    s: float = 1.0

    def __post_init__(self) -> None:
        if not self.F > 1.0:
            raise ValueError(f"update strength F must be > 1, got {self.F}")
        if not self.s > 0.0:
            raise ValueError(f"success rate s must be > 0, got {self.s}")
        if not math.isfinite(self.F ** (1.0 / self.s)):
            raise ValueError(f"F^(1/s) overflows for F={self.F}, s={self.s}")

    @property
    def growth_factor(self) -> float:
        """Multiplier applied to lambda after an unsuccessful generation."""
        return self.F ** (1.0 / self.s)

    @property
    def shrink_factor(self) -> float:
        """Multiplier applied to lambda after a successful generation."""
        return 1.0 / self.F


def update_lambda(lambda_real: float, success: bool, params: ControllerParams) -> float:
    """One controller step: divide by F on success (clamped at 1), else grow."""
    if success:
        return max(1.0, lambda_real / params.F)
    return lambda_real * params.growth_factor


def default_static_lambda(n: int) -> int:
    """Baseline fixed offspring population size, ceil(log_{e/(e-1)} n)."""
    if n < 2:
        return 1
    return max(1, math.ceil(math.log(n) / math.log(math.e / (math.e - 1.0))))


def default_lambda_abort_threshold(n: int, params: ControllerParams) -> float:
    """Runaway guard: one growth step past e * F^(1/s) * n^3."""
    return math.e * params.growth_factor ** 2 * float(n) ** 3


@dataclass(frozen=True)
class AlgorithmKind:
    """Selection scheme plus optional fixed offspring population size."""

    selection: str  # "comma" | "plus"
    static_lambda: int | None = None

    def __post_init__(self) -> None:
        if self.selection not in ("comma", "plus"):
            raise ValueError(f"selection must be 'comma' or 'plus', got {self.selection!r}")
        if self.static_lambda is not None:
            if self.selection != "comma":
                raise ValueError("a fixed lambda is only supported with comma selection")
            if self.static_lambda < 1:
                raise ValueError("static lambda must be >= 1")

    @classmethod
    def self_adjusting_comma(cls) -> "AlgorithmKind":
        return cls("comma")

    @classmethod
    def self_adjusting_plus(cls) -> "AlgorithmKind":
        return cls("plus")

    @classmethod
    def static_comma(cls, lam: int) -> "AlgorithmKind":
        return cls("comma", static_lambda=int(lam))

    @property
    def adaptive(self) -> bool:
        return self.static_lambda is None

    @property
    def label(self) -> str:
        if self.static_lambda is not None:
            return f"static-comma({self.static_lambda})"
        return f"sa-{self.selection}"


@dataclass(frozen=True)
class StoppingCondition:
    """When a run ends.  At least one stop cause must be enabled."""

    max_generations: int | None = None
    max_evaluations: int | None = None
    stop_on_optimum: bool = True
    lambda_abort_threshold: float | None = None  # None -> default guard

    def __post_init__(self) -> None:
        if (
            self.max_generations is None
            and self.max_evaluations is None
            and not self.stop_on_optimum
        ):
            raise ValueError("at least one stop cause must be enabled")


class StopCause(str, Enum):
    OPTIMUM = "optimum"
    GENERATION_CAP = "generation_cap"
    EVALUATION_CAP = "evaluation_cap"
    LAMBDA_ABORT = "lambda_abort"


@dataclass(frozen=True)
class AlgoState:
    """Current parent, real-valued lambda and counters."""

    x: SearchPoint
    lambda_real: float
    generation: int
    evaluations: int
    fitness_raw: int
    best_raw: int


def initial_state(
    fn: FitnessFunction, rng: np.random.Generator, lambda0: float = 1.0
) -> AlgoState:
    """Uniform random parent with lambda = lambda0 and zeroed counters."""
    x = SearchPoint.random(fn.n, rng)
    f = fn.raw(x)
    return AlgoState(x, float(lambda0), 0, 0, f, f)


def _distinct_positions(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """k distinct indices in [0, n), uniform over k-subsets."""
    if k <= 0:
        return _EMPTY_POSITIONS
    if k == 1:
        return np.array([rng.integers(0, n)], dtype=np.int64)
    if k * k <= n:
        # rejection on duplicates; collision probability < k^2/(2n)
        while True:
            idx = rng.integers(0, n, size=k)
            if len(set(idx.tolist())) == k:
                return idx
    return rng.permutation(n)[:k]


def mutate(x: SearchPoint, rng: np.random.Generator) -> SearchPoint:
    """Standard bit mutation: each bit flips independently with probability 1/n."""
    n = len(x)
    k = int(rng.binomial(n, 1.0 / n))
    return x.with_flips(_distinct_positions(rng, n, k))


def _best_offspring(
    x: SearchPoint, lam_int: int, fn: FitnessFunction, rng: np.random.Generator
) -> tuple[int, np.ndarray]:
    """Create lam_int mutants of x; return (raw fitness, flip set) of a
    uniformly random fitness-maximal one (reservoir tie-breaking)."""
    n = fn.n
    inv_n = 1.0 / n
    bits = x.bits
    ones = x.ones
    level = fn.level_based
    best_f = None
    best_pos = _EMPTY_POSITIONS
    ties = 0
    for _ in range(lam_int):
        k = int(rng.binomial(n, inv_n))
        pos = _distinct_positions(rng, n, k)
        child_ones = ones + k - 2 * int(bits[pos].sum()) if k else ones
        if level:
            f = fn.raw_from_ones(child_ones)
        else:
            child = np.array(bits, copy=True)
            if k:
                child[pos] ^= 1
            f = fn.raw_from_bits(child, child_ones)
        if best_f is None or f > best_f:
            best_f, best_pos, ties = f, pos, 1
        elif f == best_f:
            ties += 1
            if rng.random() < 1.0 / ties:
                best_pos = pos
    return best_f, best_pos


def _generation(
    state: AlgoState,
    fn: FitnessFunction,
    params: ControllerParams,
    rng: np.random.Generator,
    elitist: bool,
    adapt: bool,
) -> AlgoState:
    lam_int = round_lambda(state.lambda_real)
    best_f, best_pos = _best_offspring(state.x, lam_int, fn, rng)
    success = best_f > state.fitness_raw
    if elitist and best_f < state.fitness_raw:
        new_x, new_f = state.x, state.fitness_raw
    else:
        new_x, new_f = state.x.with_flips(best_pos), best_f
    lam = update_lambda(state.lambda_real, success, params) if adapt else state.lambda_real
    return AlgoState(
        x=new_x,
        lambda_real=lam,
        generation=state.generation + 1,
        evaluations=state.evaluations + lam_int,
        fitness_raw=new_f,
        best_raw=max(state.best_raw, best_f),
    )


def generation_comma(
    state: AlgoState,
    fn: FitnessFunction,
    params: ControllerParams,
    rng: np.random.Generator,
    adapt: bool = True,
) -> AlgoState:
    """One comma generation: the selected offspring always replaces the
    parent, even when worse; lambda shrinks only on strict improvement."""
    return _generation(state, fn, params, rng, elitist=False, adapt=adapt)


def generation_plus(
    state: AlgoState,
    fn: FitnessFunction,
    params: ControllerParams,
    rng: np.random.Generator,
    adapt: bool = True,
) -> AlgoState:
    """One elitist generation: the parent survives unless an offspring ties
    or beats it (ties replace the parent); lambda shrinks only on strict
    improvement, so fitness never decreases."""
    return _generation(state, fn, params, rng, elitist=True, adapt=adapt)


@dataclass
class RunRecord:
    """Outcome of a single run, plus optional traces.

    ``rows`` (trace level "full") holds one state snapshot per generation
    t = 0..T as columns (generation, fitness_raw, lambda_real, lambda_int,
    evaluations, best_raw): the state *after* generation t, where
    lambda_int = round_lambda(lambda_real) is the offspring count the next
    generation would use.  Level accumulators (trace levels "levels" and
    "full") aggregate over generations: for each raw fitness value v,
    ``gens_at[v]`` counts generations entered at fitness v, ``lambda_sum_at``
    and ``evals_at`` add up their offspring counts, and ``first_hit_evals[v]``
    is the evaluations counter when fitness >= v was first reached (-1 if
    never).
    """

    algorithm: str
    fn_spec: str
    n: int
    F: float
    s: float
    lambda0: float
    seed_key: tuple
    stop_cause: StopCause
    generations: int
    evaluations: int
    initial_fitness: float
    final_fitness: float
    best_fitness: float
    final_lambda: float
    trace_level: str = "summary"
    first_hit_evals: np.ndarray | None = None
    gens_at: np.ndarray | None = None
    lambda_sum_at: np.ndarray | None = None
    evals_at: np.ndarray | None = None
    rows: dict[str, np.ndarray] | None = field(default=None, repr=False)

    @property
    def censored(self) -> bool:
        return self.stop_cause != StopCause.OPTIMUM


_TRACE_LEVELS = ("summary", "levels", "full")


class _Trace:
    """Mutable run-trace state shared by the two engine loops."""

    def __init__(self, trace_level: str, size: int, cur_f: int, lam: float):
        self.want_levels = trace_level in ("levels", "full")
        self.want_rows = trace_level == "full"
        if self.want_levels:
            self.first_hit = [-1] * size
            for v in range(cur_f + 1):
                self.first_hit[v] = 0
            self.gens_at = [0] * size
            self.lambda_sum_at = [0] * size
            self.evals_at = [0] * size
        if self.want_rows:
            self.r_fit = [cur_f]
            self.r_lam = [lam]
            self.r_lint = [round_lambda(lam)]
            self.r_evals = [0]
            self.r_best = [cur_f]

    def before_generation(self, cur_f: int, lam_int: int) -> None:
        if self.want_levels:
            self.gens_at[cur_f] += 1
            self.lambda_sum_at[cur_f] += lam_int
            self.evals_at[cur_f] += lam_int

    def new_best(self, prev_best: int, best_f: int, evals: int) -> None:
        if self.want_levels:
            fh = self.first_hit
            for v in range(prev_best + 1, best_f + 1):
                if fh[v] < 0:
                    fh[v] = evals
        # lower targets were filled when first reached

    def after_generation(self, cur_f: int, lam: float, evals: int, best_f: int) -> None:
        if self.want_rows:
            self.r_fit.append(cur_f)
            self.r_lam.append(lam)
            self.r_lint.append(round_lambda(lam))
            self.r_evals.append(evals)
            self.r_best.append(best_f)

    def attach(self, rec: "RunRecord") -> None:
        if self.want_levels:
            rec.first_hit_evals = np.array(self.first_hit, dtype=np.int64)
            rec.gens_at = np.array(self.gens_at, dtype=np.int64)
            rec.lambda_sum_at = np.array(self.lambda_sum_at, dtype=np.int64)
            rec.evals_at = np.array(self.evals_at, dtype=np.int64)
        if self.want_rows:
            rec.rows = {
                "generation": np.arange(len(self.r_fit), dtype=np.int64),
                "fitness_raw": np.array(self.r_fit, dtype=np.int64),
                "lambda_real": np.array(self.r_lam, dtype=np.float64),
                "lambda_int": np.array(self.r_lint, dtype=np.int64),
                "evaluations": np.array(self.r_evals, dtype=np.int64),
                "best_raw": np.array(self.r_best, dtype=np.int64),
            }


def _stop_cause_initial(stop: StoppingCondition, cur_f: int, opt_raw: int):
    if stop.stop_on_optimum and cur_f >= opt_raw:
        return StopCause.OPTIMUM
    if stop.max_evaluations is not None and stop.max_evaluations <= 0:
        return StopCause.EVALUATION_CAP
    if stop.max_generations is not None and stop.max_generations <= 0:
        return StopCause.GENERATION_CAP
    return None


def _run_level_engine(fn, params, stop, rng, trace, elitist, adapt, lam, abort_at):
    """Hot loop for ones-count-valued functions: bit positions matter only
    through the one-bit count, so the parent is a plain list of ints and
    flip counts / single-flip positions come from pre-sampled blocks."""
    n = fn.n
    inv_n = 1.0 / n
    table = fn.level_table().tolist()
    opt_raw = fn.optimum_raw
    F = params.F
    growth = params.growth_factor
    max_evals = stop.max_evaluations
    max_gens = stop.max_generations
    stop_opt = stop.stop_on_optimum

    bits = rng.integers(0, 2, size=n, dtype=np.uint8).tolist()
    ones = sum(bits)
    cur_f = table[ones]
    best_f = cur_f
    gens = 0
    evals = 0
    cause = _stop_cause_initial(stop, cur_f, opt_raw)

    kblock = rng.binomial(n, inv_n, size=4096).tolist()
    kidx = 0
    pblock = rng.integers(0, n, size=4096).tolist()
    pidx = 0
    rand = rng.random

    while cause is None:
        lam_int = int(lam + 0.5)  # floor(lam + 0.5): round half up
        trace.before_generation(cur_f, lam_int)

        if kidx + lam_int > 4096:
            kblock = rng.binomial(n, inv_n, size=max(4096, lam_int)).tolist()
            kidx = 0
        bf = -1
        best_ones = ones
        best_flips = None  # None: no flips; int: single position; list: several
        ties = 0
        for _ in range(lam_int):
            k = kblock[kidx]
            kidx += 1
            if k == 0:
                co = ones
                f = cur_f
                flips = None
            elif k == 1:
                if pidx == 4096:
                    pblock = rng.integers(0, n, size=4096).tolist()
                    pidx = 0
                flips = pblock[pidx]
                pidx += 1
                co = ones + 1 - 2 * bits[flips]
                f = table[co]
            else:
                pos = _distinct_positions(rng, n, k).tolist()
                co = ones + k - 2 * sum(bits[p] for p in pos)
                f = table[co]
                flips = pos
            if f > bf:
                bf, best_ones, best_flips, ties = f, co, flips, 1
            elif f == bf:
                ties += 1
                if rand() < 1.0 / ties:
                    best_ones, best_flips = co, flips
        if not elitist or bf >= cur_f:
            if best_flips is not None:
                if type(best_flips) is int:
                    bits[best_flips] ^= 1
                else:
                    for p in best_flips:
                        bits[p] ^= 1
                ones = best_ones
            success = bf > cur_f
            cur_f = bf
        else:
            success = False
        if adapt:
            if success:
                lam = lam / F
                if lam < 1.0:
                    lam = 1.0
            else:
                lam = lam * growth
        gens += 1
        evals += lam_int
        if bf > best_f:
            trace.new_best(best_f, bf, evals)
            best_f = bf
        trace.after_generation(cur_f, lam, evals, best_f)

        if stop_opt and cur_f >= opt_raw:
            cause = StopCause.OPTIMUM
        elif lam > abort_at:
            cause = StopCause.LAMBDA_ABORT
        elif max_evals is not None and evals >= max_evals:
            cause = StopCause.EVALUATION_CAP
        elif max_gens is not None and gens >= max_gens:
            cause = StopCause.GENERATION_CAP
    return cause, gens, evals, cur_f, best_f, lam


def _run_genotype_engine(fn, params, stop, rng, trace, elitist, adapt, lam, abort_at):
    """General loop evaluating full bit strings (needed for ridge)."""
    n = fn.n
    inv_n = 1.0 / n
    opt_raw = fn.optimum_raw

    bits = rng.integers(0, 2, size=n, dtype=np.uint8)
    ones = int(bits.sum())
    cur_f = fn.raw_from_bits(bits, ones)
    best_f = cur_f
    gens = 0
    evals = 0
    cause = _stop_cause_initial(stop, cur_f, opt_raw)

    while cause is None:
        lam_int = round_lambda(lam)
        trace.before_generation(cur_f, lam_int)
        bf = None
        best_pos = _EMPTY_POSITIONS
        best_ones = ones
        ties = 0
        for _ in range(lam_int):
            k = int(rng.binomial(n, inv_n))
            pos = _distinct_positions(rng, n, k)
            co = ones + k - 2 * int(bits[pos].sum()) if k else ones
            if k:
                child = np.array(bits, copy=True)
                child[pos] ^= 1
                f = fn.raw_from_bits(child, co)
            else:
                f = cur_f
            if bf is None or f > bf:
                bf, best_pos, best_ones, ties = f, pos, co, 1
            elif f == bf:
                ties += 1
                if rng.random() < 1.0 / ties:
                    best_pos, best_ones = pos, co
        if not elitist or bf >= cur_f:
            if best_pos.size:
                bits[best_pos] ^= 1
                ones = best_ones
            success = bf > cur_f
            cur_f = bf
        else:
            success = False
        if adapt:
            lam = update_lambda(lam, success, params)
        gens += 1
        evals += lam_int
        if bf > best_f:
            trace.new_best(best_f, bf, evals)
            best_f = bf
        trace.after_generation(cur_f, lam, evals, best_f)

        if stop.stop_on_optimum and cur_f >= opt_raw:
            cause = StopCause.OPTIMUM
        elif lam > abort_at:
            cause = StopCause.LAMBDA_ABORT
        elif stop.max_evaluations is not None and evals >= stop.max_evaluations:
            cause = StopCause.EVALUATION_CAP
        elif stop.max_generations is not None and gens >= stop.max_generations:
            cause = StopCause.GENERATION_CAP
    return cause, gens, evals, cur_f, best_f, lam


def run(
    kind: AlgorithmKind,
    fn: FitnessFunction,
    params: ControllerParams,
    stop: StoppingCondition,
    seed,
    trace_level: str = "summary",
    lambda0: float = 1.0,
    engine: str = "auto",
) -> RunRecord:
    """Run the configured algorithm from a fresh uniform random parent.

    ``seed`` may be an int, a numpy SeedSequence, or a Generator.  Output
    is bit-identical for identical (configuration, seed).  ``engine``
    picks the internal loop: "level" exploits that most benchmarks depend
    only on the one-bit count, "genotype" evaluates full strings (ridge
    needs it); "auto" chooses per function.  Both sample identical
    offspring distributions.
    """
    if trace_level not in _TRACE_LEVELS:
        raise ValueError(f"trace_level must be one of {_TRACE_LEVELS}")
    if engine not in ("auto", "level", "genotype"):
        raise ValueError("engine must be auto|level|genotype")
    if isinstance(seed, np.random.Generator):
        rng = seed
        seed_key = ("generator",)
    elif isinstance(seed, np.random.SeedSequence):
        rng = np.random.default_rng(seed)
        seed_key = (seed.entropy,) + tuple(seed.spawn_key)
    else:
        rng = np.random.default_rng(seed)
        seed_key = (seed,)
    if kind.static_lambda is not None:
        lambda0 = float(kind.static_lambda)
    if lambda0 < 1.0:
        raise ValueError("initial lambda must be >= 1")
    if engine == "level" and not fn.level_based:
        raise ValueError(f"{fn.spec_string} needs the genotype engine")

    abort_at = stop.lambda_abort_threshold
    if abort_at is None:
        abort_at = default_lambda_abort_threshold(fn.n, params)
    use_level = fn.level_based if engine == "auto" else (engine == "level")
    size = (int(fn.level_table().max()) if fn.level_based else 2 * fn.n)
    size = max(size, fn.optimum_raw) + 1

    # peek the initial parent through the engine-specific code path below;
    # the trace needs the initial fitness first, so draw it here and hand the
    # generator on (both engines draw the parent the same way).
    state = rng.bit_generator.state
    bits0 = rng.integers(0, 2, size=fn.n, dtype=np.uint8)
    init_raw = fn.raw_from_bits(bits0, int(bits0.sum()))
    rng.bit_generator.state = state

    trace = _Trace(trace_level, size, init_raw, float(lambda0))
    loop = _run_level_engine if use_level else _run_genotype_engine
    cause, gens, evals, cur_f, best_f, lam = loop(
        fn, params, stop, rng, trace,
        elitist=kind.selection == "plus",
        adapt=kind.adaptive,
        lam=float(lambda0),
        abort_at=abort_at,
    )

    rec = RunRecord(
        algorithm=kind.label,
        fn_spec=fn.spec_string,
        n=fn.n,
        F=params.F,
        s=params.s,
        lambda0=float(lambda0),
        seed_key=seed_key,
        stop_cause=cause,
        generations=gens,
        evaluations=evals,
        initial_fitness=fn.display(init_raw),
        final_fitness=fn.display(cur_f),
        best_fitness=fn.display(best_f),
        final_lambda=lam,
        trace_level=trace_level,
    )
    trace.attach(rec)
    return rec
