"""Membership functions, fuzzification and the two inference engines.

Mamdani inference (linguistic consequents, min conjunction, max aggregation,
centroid defuzzification) serves the context->softgoal, task->softgoal and
gray-box context->task reasoning. Takagi-Sugeno inference (affine consequents
blended by antecedent memberships) serves the learned black-box variant.

All operations are pure functions of their inputs; nothing here mutates
shared state, so inferences can run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

DEFAULT_GRID_POINTS = 201

# Diagnostic flag codes.
FLAG_CLAMPED = "input_clamped"
FLAG_NO_RULE_FIRED = "no_rule_fired"
FLAG_TS_ZERO_MEMBERSHIP = "ts_zero_membership"


class Flags:
    """Collector for non-fatal diagnostic events.

    Operations that clamp inputs or hit degenerate branches record a flag
    here when a collector is supplied, so callers can distinguish a
    "reasoned" result from a "defaulted" one without changing return types.
    """

    def __init__(self):
        self.events: list[tuple[str, str]] = []

    def raise_flag(self, code: str, detail: str = "") -> None:
        self.events.append((code, detail))

    def has(self, code: str) -> bool:
        return any(c == code for c, _ in self.events)

    def count(self, code: str) -> int:
        return sum(1 for c, _ in self.events if c == code)

    def __len__(self) -> int:
        return len(self.events)

    def __repr__(self) -> str:
        return f"Flags({self.events!r})"


class MembershipFunction:
    """Piecewise-linear membership function given by (x, mu) vertices.

    Evaluation interpolates linearly between vertices. Outside the vertex
    span the boundary mu extends flat, so a boundary vertex with mu=0 yields
    0 beyond the support while a nonzero boundary becomes a plateau.
    """

    __slots__ = ("xs", "mus")

    def __init__(self, vertices: Sequence[tuple[float, float]]):
        xs = np.asarray([v[0] for v in vertices], dtype=float)
        mus = np.asarray([v[1] for v in vertices], dtype=float)
        if xs.size < 2:
            raise ValueError("membership function needs at least 2 vertices")
        if not np.all(np.diff(xs) > 0):
            raise ValueError("vertex x coordinates must be strictly increasing")
        if np.any(mus < 0.0) or np.any(mus > 1.0):
            raise ValueError("membership values must lie in [0, 1]")
        self.xs = xs
        self.mus = mus

    @classmethod
    def triangle(cls, a: float, b: float, c: float) -> "MembershipFunction":
        """Triangle with feet a, c and peak b; a==b or b==c give shoulder ramps."""
        vertices: list[tuple[float, float]] = []
        if a < b:
            vertices.append((a, 0.0))
        vertices.append((b, 1.0))
        if c > b:
            vertices.append((c, 0.0))
        return cls(vertices)

    def __call__(self, x):
        return np.interp(x, self.xs, self.mus)

    @property
    def support(self) -> tuple[float, float]:
        """Closed hull of {x : mu(x) > 0} within the vertex span."""
        nz = np.nonzero(self.mus > 0.0)[0]
        if nz.size == 0:
            return (self.xs[0], self.xs[0])
        lo = self.xs[max(nz[0] - 1, 0)]
        hi = self.xs[min(nz[-1] + 1, self.xs.size - 1)]
        return (float(lo), float(hi))

    def vertices(self) -> list[tuple[float, float]]:
        return [(float(x), float(m)) for x, m in zip(self.xs, self.mus)]

    def __repr__(self) -> str:
        return f"MembershipFunction({self.vertices()!r})"


def evaluate_mf(mf: MembershipFunction, x: float) -> float:
    """Membership degree of x under mf (legal for x outside the vertex span)."""
    return float(mf(x))


class LinguisticVariable:
    """A named real domain with ordered linguistic terms.

    Each term label is paired one-to-one with a membership function whose
    vertices lie inside the domain.
    """

    __slots__ = ("name", "domain", "labels", "mfs", "_grids")

    def __init__(
        self,
        name: str,
        domain: tuple[float, float],
        terms: Sequence[tuple[str, MembershipFunction]],
    ):
        lo, hi = float(domain[0]), float(domain[1])
        if not lo < hi:
            raise ValueError(f"{name}: domain must satisfy lo < hi, got [{lo}, {hi}]")
        labels = tuple(label for label, _ in terms)
        mfs = tuple(mf for _, mf in terms)
        if len(labels) != len(set(labels)):
            raise ValueError(f"{name}: term labels must be unique")
        if not labels:
            raise ValueError(f"{name}: at least one term required")
        for label, mf in terms:
            if mf.xs[0] < lo - 1e-12 or mf.xs[-1] > hi + 1e-12:
                raise ValueError(
                    f"{name}/{label}: vertices [{mf.xs[0]}, {mf.xs[-1]}] exceed domain [{lo}, {hi}]"
                )
        self.name = name
        self.domain = (lo, hi)
        self.labels = labels
        self.mfs = mfs
        self._grids: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"{self.name}: unknown term {label!r}") from None

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.domain[0] + self.domain[1])

    @property
    def width(self) -> float:
        return self.domain[1] - self.domain[0]

    def clamp(self, x: float) -> float:
        return min(max(x, self.domain[0]), self.domain[1])

    def grid(self, n: int = DEFAULT_GRID_POINTS) -> tuple[np.ndarray, np.ndarray]:
        """Uniform sample grid and per-term membership values, cached."""
        cached = self._grids.get(n)
        if cached is None:
            xs = np.linspace(self.domain[0], self.domain[1], n)
            table = np.stack([mf(xs) for mf in self.mfs])
            cached = (xs, table)
            self._grids[n] = cached
        return cached

    def __repr__(self) -> str:
        return f"LinguisticVariable({self.name!r}, {self.domain}, terms={list(self.labels)})"


#: A fuzzy vector is one membership degree per term of a LinguisticVariable.
FuzzyVector = np.ndarray


def fuzzify(lv: LinguisticVariable, x: float, flags: Flags | None = None) -> FuzzyVector:
    """Map a crisp value to its per-term membership degrees.

    Values outside the domain are clamped to the boundary and flagged.
    """
    cx = lv.clamp(float(x))
    if cx != x and flags is not None:
        flags.raise_flag(FLAG_CLAMPED, f"{lv.name}: {x} -> {cx}")
    return np.array([float(mf(cx)) for mf in lv.mfs])


def defuzzify_centroid(
    lv: LinguisticVariable,
    clipped: FuzzyVector,
    flags: Flags | None = None,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> float:
    """Center of gravity of the max-aggregated, min-clipped term surfaces.

    Computed on a uniform grid over the variable's domain. An all-zero
    aggregate returns the domain midpoint and raises a no-rule-fired flag.
    """
    clipped = np.asarray(clipped, dtype=float)
    if clipped.shape != (len(lv),):
        raise ValueError(f"{lv.name}: expected {len(lv)} clip levels, got {clipped.shape}")
    if np.any(clipped < 0.0) or np.any(clipped > 1.0):
        raise ValueError("clip levels must lie in [0, 1]")
    xs, table = lv.grid(grid_points)
    agg = np.max(np.minimum(clipped[:, None], table), axis=0)
    total = agg.sum()
    if total <= 0.0:
        if flags is not None:
            flags.raise_flag(FLAG_NO_RULE_FIRED, lv.name)
        return lv.midpoint
    return float(np.dot(xs, agg) / total)


@dataclass(frozen=True)
class MamdaniRule:
    """Conjunctive rule: antecedent and consequent are (entity index, term label) pairs."""

    antecedent: tuple[tuple[int, str], ...]
    consequent: tuple[tuple[int, str], ...]


class CompiledMamdani:
    """A Mamdani rule set compiled to index arrays for fast repeated inference.

    Firing strength is the min over antecedent memberships, per-term
    aggregation is the max over asserting rules, and each output variable is
    defuzzified by grid centroid.
    """

    def __init__(
        self,
        rules: Sequence[MamdaniRule],
        input_lvs: Sequence[LinguisticVariable],
        output_lvs: Sequence[LinguisticVariable],
        grid_points: int = DEFAULT_GRID_POINTS,
    ):
        if not rules:
            raise ValueError("empty rule set")
        self.input_lvs = list(input_lvs)
        self.output_lvs = list(output_lvs)
        self.grid_points = grid_points
        n_in = len(self.input_lvs)
        n_rules = len(rules)
        max_t = max(len(lv) for lv in self.input_lvs)
        # Sentinel column max_t holds membership 1.0 (neutral for min), used
        # by rules that do not constrain a given input.
        ant = np.full((n_rules, n_in), max_t, dtype=np.intp)
        for r, rule in enumerate(rules):
            for idx, label in rule.antecedent:
                if not 0 <= idx < n_in:
                    raise ValueError(f"rule {r}: input index {idx} out of range")
                ant[r, idx] = self.input_lvs[idx].index(label)
        self._ant = ant
        self._max_t = max_t
        # Per output variable and term, the indices of rules asserting it.
        self._asserting: list[list[np.ndarray]] = []
        for j, lv in enumerate(self.output_lvs):
            by_term: list[list[int]] = [[] for _ in lv.labels]
            for r, rule in enumerate(rules):
                for idx, label in rule.consequent:
                    if not 0 <= idx < len(self.output_lvs):
                        raise ValueError(f"rule {r}: output index {idx} out of range")
                    if idx == j:
                        by_term[lv.index(label)].append(r)
            self._asserting.append([np.asarray(ix, dtype=np.intp) for ix in by_term])

    def _memberships(self, X: np.ndarray) -> np.ndarray:
        """(B, n_in, max_t + 1) membership table with the neutral sentinel column."""
        B = X.shape[0]
        M = np.ones((B, len(self.input_lvs), self._max_t + 1))
        for i, lv in enumerate(self.input_lvs):
            xi = np.clip(X[:, i], lv.domain[0], lv.domain[1])
            for t, mf in enumerate(lv.mfs):
                M[:, i, t] = mf(xi)
        return M

    def firing_strengths(self, X: np.ndarray) -> np.ndarray:
        """(B, n_rules) min-conjunction firing strengths for a batch of inputs."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        M = self._memberships(X)
        rows = np.arange(len(self.input_lvs))[None, :]
        return M[:, rows, self._ant].min(axis=2)

    def clip_levels(self, firing: np.ndarray, j: int) -> np.ndarray:
        """(B, n_terms_j) per-term aggregates (max over asserting rules)."""
        B = firing.shape[0]
        lv = self.output_lvs[j]
        clips = np.zeros((B, len(lv)))
        for t, idx in enumerate(self._asserting[j]):
            if idx.size:
                clips[:, t] = firing[:, idx].max(axis=1)
        return clips

    def infer(self, x: Sequence[float], flags: Flags | None = None) -> np.ndarray:
        return self.infer_batch(np.asarray(x, dtype=float)[None, :], flags)[0]

    def infer_batch(self, X: np.ndarray, flags: Flags | None = None) -> np.ndarray:
        """Crisp outputs for a (B, n_in) batch; rows independent."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.input_lvs):
            raise ValueError(f"expected {len(self.input_lvs)} inputs, got {X.shape[1]}")
        if flags is not None:
            for i, lv in enumerate(self.input_lvs):
                n_clamped = int(np.sum((X[:, i] < lv.domain[0]) | (X[:, i] > lv.domain[1])))
                for _ in range(n_clamped):
                    flags.raise_flag(FLAG_CLAMPED, lv.name)
        firing = self.firing_strengths(X)
        out = np.empty((X.shape[0], len(self.output_lvs)))
        for j, lv in enumerate(self.output_lvs):
            clips = self.clip_levels(firing, j)
            xs, table = lv.grid(self.grid_points)
            agg = np.max(np.minimum(clips[:, :, None], table[None, :, :]), axis=1)
            total = agg.sum(axis=1)
            dead = total <= 0.0
            if flags is not None:
                for _ in range(int(dead.sum())):
                    flags.raise_flag(FLAG_NO_RULE_FIRED, lv.name)
            safe = np.where(dead, 1.0, total)
            out[:, j] = np.where(dead, lv.midpoint, agg @ xs / safe)
        return out


def mamdani_infer(
    rules: Sequence[MamdaniRule],
    inputs: Sequence[float],
    input_lvs: Sequence[LinguisticVariable],
    output_lvs: Sequence[LinguisticVariable],
    flags: Flags | None = None,
) -> np.ndarray:
    """One-shot Mamdani inference; compiles the rule set on the fly."""
    return CompiledMamdani(rules, input_lvs, output_lvs).infer(inputs, flags)


@dataclass(frozen=True)
class TSRule:
    """Affine-consequent rule: membership-weighted y_j = a0 + sum_i a_i * x_i.

    ``center`` is the antecedent prototype used for the nearest-rule
    fallback when every membership vanishes. ``coefficients`` has one row
    (a0, a1..am) per output variable.
    """

    center: np.ndarray
    membership: Callable[[np.ndarray], float]
    coefficients: np.ndarray


def ts_infer(rules: Sequence[TSRule], inputs: Sequence[float], flags: Flags | None = None) -> np.ndarray:
    """Takagi-Sugeno inference: weighted average of affine consequents."""
    if not rules:
        raise ValueError("empty rule set")
    x = np.asarray(inputs, dtype=float)
    n_in = x.size
    n_out = rules[0].coefficients.shape[0]
    for r, rule in enumerate(rules):
        if rule.coefficients.shape != (n_out, n_in + 1):
            raise ValueError(
                f"rule {r}: coefficient shape {rule.coefficients.shape} "
                f"does not match {n_out} outputs x {n_in + 1} terms"
            )
    weights = np.array([max(0.0, float(rule.membership(x))) for rule in rules])
    if weights.sum() <= 0.0:
        if flags is not None:
            flags.raise_flag(FLAG_TS_ZERO_MEMBERSHIP, f"inputs={x.tolist()}")
        nearest = min(range(len(rules)), key=lambda r: float(np.linalg.norm(x - rules[r].center)))
        weights = np.zeros(len(rules))
        weights[nearest] = 1.0
    z = np.concatenate(([1.0], x))
    outputs = np.stack([rule.coefficients @ z for rule in rules])
    return outputs.T @ weights / weights.sum()


def interp_vertices(vx: np.ndarray, vm: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Vectorized piecewise-linear evaluation with per-row vertex arrays.

    vx, vm: (..., V) with vx strictly increasing along the last axis;
    q broadcasts against vx[..., 0]. Outside the span the boundary value
    extends flat, matching np.interp semantics.
    """
    vx = np.asarray(vx, dtype=float)
    vm = np.asarray(vm, dtype=float)
    q = np.asarray(q, dtype=float)
    vx, vm = np.broadcast_arrays(vx, vm)
    V = vx.shape[-1]
    k = (q[..., None] >= vx).sum(axis=-1) - 1
    k = np.clip(k, 0, V - 2)
    x0 = np.take_along_axis(vx, k[..., None], axis=-1)[..., 0]
    x1 = np.take_along_axis(vx, (k + 1)[..., None], axis=-1)[..., 0]
    m0 = np.take_along_axis(vm, k[..., None], axis=-1)[..., 0]
    m1 = np.take_along_axis(vm, (k + 1)[..., None], axis=-1)[..., 0]
    span = x1 - x0
    t = np.where(span > 0.0, (q - x0) / np.where(span > 0.0, span, 1.0), 0.0)
    out = m0 + t * (m1 - m0)
    out = np.where(q <= vx[..., 0], vm[..., 0], out)
    out = np.where(q >= vx[..., -1], vm[..., -1], out)
    return out
