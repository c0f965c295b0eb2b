"""Binary-encoded genetic algorithm over box-bounded real vectors.

Used both for configuration search (deviation minimization over the
configuration space) and for membership-function parameter search in the
gray-box learning schema. Selection is stochastic universal sampling over
linearly rank-scaled fitness; crossover is single-point; mutation flips
each bit independently. A generation-gap fraction of the population is
replaced by offspring each generation while the best individuals survive,
so the best-so-far objective never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .domain_model import SpaceBox


@dataclass(frozen=True)
class GASettings:
    chrom_length: int = 20
    population_size: int = 100
    max_gen: int = 100
    gen_gap: float = 0.9
    crossover_rate: float = 0.9
    mutation_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.chrom_length < 1:
            raise ValueError("chrom_length must be >= 1")
        if self.population_size < 2 or self.population_size % 2:
            raise ValueError("population_size must be even and >= 2")
        if self.max_gen < 1:
            raise ValueError("max_gen must be >= 1")
        for name in ("gen_gap", "crossover_rate", "mutation_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass
class BoxObjective:
    """Objective to minimize over a box; ``fn`` maps a vector to a real.

    Set ``vectorized`` when ``fn`` accepts a (B, dims) batch and returns a
    (B,) array; scalar objectives are looped. Non-finite values are treated
    as +inf so the individual simply loses.
    """

    box: SpaceBox
    fn: Callable
    vectorized: bool = False

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.vectorized:
            values = np.asarray(self.fn(X), dtype=float)
        else:
            values = np.array([float(self.fn(x)) for x in X], dtype=float)
        return np.where(np.isfinite(values), values, np.inf)


@dataclass
class GAResult:
    x: np.ndarray
    value: float
    history: list[float] = field(default_factory=list)


def decode(bits: np.ndarray, box: SpaceBox, chrom_length: int = 20) -> np.ndarray:
    """Map binary chromosomes to real vectors in the box.

    Each group of ``chrom_length`` bits is a big-endian unsigned integer u
    mapped linearly to lo + (hi - lo) * u / (2**chrom_length - 1).
    """
    bits = np.asarray(bits)
    squeeze = bits.ndim == 1
    bits = np.atleast_2d(bits)
    dims = len(box)
    if bits.shape[1] != dims * chrom_length:
        raise ValueError(f"expected {dims * chrom_length} bits, got {bits.shape[1]}")
    weights = 2.0 ** np.arange(chrom_length - 1, -1, -1)
    u = bits.reshape(bits.shape[0], dims, chrom_length) @ weights
    span = 2.0**chrom_length - 1.0
    X = box.lows + (box.highs - box.lows) * u / span
    return X[0] if squeeze else X


def sus_select(fitness: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Stochastic universal sampling: n picks with one spin of n evenly spaced pointers.

    An individual with selection probability p receives floor(n*p) or
    ceil(n*p) copies.
    """
    fitness = np.asarray(fitness, dtype=float)
    total = fitness.sum()
    if total <= 0.0:
        return rng.integers(0, fitness.size, size=n)
    step = total / n
    points = rng.uniform(0.0, step) + step * np.arange(n)
    return np.searchsorted(np.cumsum(fitness), points, side="right")


def _rank_fitness(values: np.ndarray) -> np.ndarray:
    """Linear ranking for minimization: worst gets 0, best gets 2."""
    n = values.size
    order = np.argsort(-values, kind="stable")  # descending value = ascending quality
    fitness = np.empty(n)
    fitness[order] = 2.0 * np.arange(n) / (n - 1)
    return fitness


def minimize(problem: BoxObjective, settings: GASettings = GASettings()) -> GAResult:
    """Run the GA and return the best-ever decoded individual.

    Deterministic for a fixed settings.seed; the returned history holds the
    best-so-far objective value after each generation.
    """
    rng = np.random.default_rng(settings.seed)
    dims = len(problem.box)
    n_bits = dims * settings.chrom_length
    n = settings.population_size

    pop = rng.integers(0, 2, size=(n, n_bits), dtype=np.uint8)
    values = problem.evaluate(decode(pop, problem.box, settings.chrom_length))

    best_idx = int(np.argmin(values))
    best_bits = pop[best_idx].copy()
    best_value = float(values[best_idx])
    history: list[float] = []

    n_off = int(round(n * settings.gen_gap))
    n_off -= n_off % 2  # offspring are produced in pairs
    n_keep = max(n - n_off, 1)

    for _ in range(settings.max_gen):
        if n_off:
            parents = pop[sus_select(_rank_fitness(values), n_off, rng)]
            parents = parents[rng.permutation(n_off)]
            offspring = parents.copy()
            for i in range(0, n_off, 2):
                if rng.random() < settings.crossover_rate:
                    point = int(rng.integers(1, n_bits))
                    offspring[i, point:] = parents[i + 1, point:]
                    offspring[i + 1, point:] = parents[i, point:]
            flips = rng.random(offspring.shape) < settings.mutation_rate
            offspring ^= flips.astype(np.uint8)
            off_values = problem.evaluate(decode(offspring, problem.box, settings.chrom_length))

            keep = np.argsort(values, kind="stable")[: n - n_off] if n > n_off else []
            pop = np.concatenate([pop[keep], offspring])[:n]
            values = np.concatenate([values[keep], off_values])[:n]
            if n == n_off:  # no survivors: re-insert the elite over the worst offspring
                worst = int(np.argmax(values))
                pop[worst] = best_bits
                values[worst] = best_value

        gen_best = int(np.argmin(values))
        if values[gen_best] < best_value:
            best_value = float(values[gen_best])
            best_bits = pop[gen_best].copy()
        history.append(best_value)

    return GAResult(x=decode(best_bits, problem.box, settings.chrom_length), value=best_value, history=history)
