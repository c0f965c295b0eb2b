"""Derive Mamdani rule sets from weighted relations.

Every combination of source terms is scored ordinally through the weight
matrix; each target column's score range is split into as many equal-width
intervals as the target has terms, and the interval an individual score
falls into names the consequent term. Interior boundaries belong to the
lower interval.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain_model import WeightedRelation
from .fuzzy_core import LinguisticVariable, MamdaniRule


@dataclass(frozen=True)
class BoundaryMatrix:
    """Per-target-column (min, max) of ordinal scores over all combinations."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if np.any(self.lo > self.hi):
            raise ValueError("boundary matrix requires lo <= hi per column")

    def as_array(self) -> np.ndarray:
        return np.stack([self.lo, self.hi])


def numeric_map(labels: Sequence[str], lvs: Sequence[LinguisticVariable]) -> np.ndarray:
    """Ordinal positions (1-based) of term labels in their variables."""
    if len(labels) != len(lvs):
        raise ValueError("one label per variable required")
    return np.array([lv.index(label) + 1 for label, lv in zip(labels, lvs)])


def boundary_matrix(W: np.ndarray, term_counts: Sequence[int]) -> BoundaryMatrix:
    """Column-wise min/max of v @ W over all ordinal combinations v.

    Closed form: a positive weight contributes at the minimum (maximum)
    ordinal to the column minimum (maximum), a negative weight the other
    way around.
    """
    W = np.asarray(W, dtype=float)
    if W.size == 0:
        raise ValueError("empty weight matrix")
    counts = np.asarray(term_counts, dtype=float)
    if np.any(counts < 2):
        raise ValueError("every source needs at least 2 terms")
    if counts.shape != (W.shape[0],):
        raise ValueError("one term count per source row required")
    low_ord = np.where(W >= 0.0, 1.0, counts[:, None])
    high_ord = np.where(W >= 0.0, counts[:, None], 1.0)
    return BoundaryMatrix(lo=(low_ord * W).sum(axis=0), hi=(high_ord * W).sum(axis=0))


def _section_index(score: float, lo: float, hi: float, k: int) -> int:
    """1-based index of the equal-width interval containing score.

    Interior boundaries belong to the lower interval; a degenerate column
    (lo == hi) maps to the middle interval.
    """
    if k < 1:
        raise ValueError("need at least one target term")
    if hi <= lo:
        return (k + 1) // 2
    ratio = (score - lo) * k / (hi - lo)
    return min(max(math.ceil(ratio), 1), k)


def assign_consequent(score: float, lo: float, hi: float, labels: Sequence[str]) -> str:
    """Pick the consequent term whose score interval contains the score."""
    return labels[_section_index(score, lo, hi, len(labels)) - 1]


def generate_ruleset(relation: WeightedRelation) -> list[MamdaniRule]:
    """One rule per source-term combination, in lexicographic combination order."""
    src_lvs = relation.source_lvs
    tgt_lvs = relation.target_lvs
    bm = boundary_matrix(relation.weights, [len(lv) for lv in src_lvs])
    rules = []
    for combo in itertools.product(*(range(len(lv)) for lv in src_lvs)):
        ordinals = np.asarray(combo, dtype=float) + 1.0
        scores = ordinals @ relation.weights
        antecedent = tuple((i, src_lvs[i].labels[t]) for i, t in enumerate(combo))
        consequent = tuple(
            (j, assign_consequent(float(scores[j]), float(bm.lo[j]), float(bm.hi[j]), lv.labels))
            for j, lv in enumerate(tgt_lvs)
        )
        rules.append(MamdaniRule(antecedent=antecedent, consequent=consequent))
    return rules
