"""Uncertain entities, weighted relations, spaces, and the bundled model.

The model ties together contexts (monitored values), task configuration
variables (including OR-merged option groups), and softgoals (weighted
satisfaction degrees on [0, 1]) through three weighted relations:

* EVO: contexts -> softgoals (desired satisfaction under changing context)
* SAT: tasks -> softgoals (actual satisfaction under a configuration)
* ADP: contexts -> tasks (configuration chosen for a context)

Model objects are immutable after load and safe to share across parallel
simulation runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np

from .fuzzy_core import Flags, FLAG_CLAMPED, LinguisticVariable, MembershipFunction

ROLE_CONTEXT = "context"
ROLE_TASK = "task"
ROLE_SOFTGOAL = "softgoal"
_ROLES = (ROLE_CONTEXT, ROLE_TASK, ROLE_SOFTGOAL)

RELATION_EVO = "EVO"
RELATION_SAT = "SAT"
RELATION_ADP = "ADP"

#: (source role, target role) required per relation kind.
RELATION_ROLES = {
    RELATION_EVO: (ROLE_CONTEXT, ROLE_SOFTGOAL),
    RELATION_SAT: (ROLE_TASK, ROLE_SOFTGOAL),
    RELATION_ADP: (ROLE_CONTEXT, ROLE_TASK),
}


class FixtureError(ValueError):
    """Raised for malformed model files; carries the offending JSON path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class UncertainEntity:
    """A context, task, or softgoal with a crisp value and linguistic terms."""

    name: str
    role: str
    crisp: float
    lv: LinguisticVariable
    weight: float | None = None
    unit: str = ""

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ValueError(f"{self.name}: unknown role {self.role!r}")
        lo, hi = self.lv.domain
        if not lo <= self.crisp <= hi:
            raise ValueError(f"{self.name}: crisp value {self.crisp} outside domain [{lo}, {hi}]")
        if self.role == ROLE_SOFTGOAL:
            if self.weight is None or self.weight < 0.0:
                raise ValueError(f"{self.name}: softgoals need a nonnegative weight")
            if self.lv.domain != (0.0, 1.0):
                raise ValueError(f"{self.name}: softgoal domain must be [0, 1]")
        elif self.weight is not None:
            raise ValueError(f"{self.name}: weight is only meaningful for softgoals")

    def fuzzy_vector(self) -> np.ndarray:
        return np.array([float(mf(self.crisp)) for mf in self.lv.mfs])


@dataclass(frozen=True)
class MergedTaskGroup:
    """An OR-decomposed task pair folded into one signed configuration variable.

    The positive half of the domain selects one option, the non-positive
    half the other; the magnitude is the option-local parameter. Option
    membership functions must have disjoint (open) supports.
    """

    entity_name: str
    members: tuple[str, ...]
    positive_option: str
    nonpositive_option: str
    lv: LinguisticVariable

    def __post_init__(self):
        for option in (self.positive_option, self.nonpositive_option):
            if option not in self.lv.labels:
                raise ValueError(f"{self.entity_name}: option {option!r} is not a term")
        supports = [mf.support for mf in self.lv.mfs]
        for i in range(len(supports)):
            for j in range(i + 1, len(supports)):
                lo = max(supports[i][0], supports[j][0])
                hi = min(supports[i][1], supports[j][1])
                if lo < hi:
                    raise ValueError(
                        f"{self.entity_name}: option supports {supports[i]} and {supports[j]} overlap"
                    )

    def decode(self, cp: float, flags: Flags | None = None) -> tuple[str, float]:
        """Map a crisp combined value to (selected option, option-local parameter)."""
        lo, hi = self.lv.domain
        clamped = min(max(cp, lo), hi)
        if clamped != cp and flags is not None:
            flags.raise_flag(FLAG_CLAMPED, f"{self.entity_name}: {cp} -> {clamped}")
        if clamped > 0.0:
            return (self.positive_option, clamped)
        return (self.nonpositive_option, -clamped)

    def encode(self, option: str, parameter: float) -> float:
        if parameter < 0.0:
            raise ValueError("option-local parameter must be nonnegative")
        if option == self.positive_option:
            return parameter
        if option == self.nonpositive_option:
            return -parameter
        raise ValueError(f"{self.entity_name}: unknown option {option!r}")


@dataclass(frozen=True)
class WeightedRelation:
    """Directed dependency between entity lists with an elicited weight matrix."""

    kind: str
    sources: tuple[UncertainEntity, ...]
    targets: tuple[UncertainEntity, ...]
    weights: np.ndarray

    def __post_init__(self):
        if self.kind not in RELATION_ROLES:
            raise ValueError(f"unknown relation kind {self.kind!r}")
        src_role, tgt_role = RELATION_ROLES[self.kind]
        for e in self.sources:
            if e.role != src_role:
                raise ValueError(f"{self.kind}: source {e.name} has role {e.role}, expected {src_role}")
        for e in self.targets:
            if e.role != tgt_role:
                raise ValueError(f"{self.kind}: target {e.name} has role {e.role}, expected {tgt_role}")
        W = np.asarray(self.weights, dtype=float)
        if W.shape != (len(self.sources), len(self.targets)):
            raise ValueError(
                f"{self.kind}: weight matrix {W.shape} does not match "
                f"{len(self.sources)} sources x {len(self.targets)} targets"
            )
        object.__setattr__(self, "weights", W)

    @property
    def source_lvs(self) -> list[LinguisticVariable]:
        return [e.lv for e in self.sources]

    @property
    def target_lvs(self) -> list[LinguisticVariable]:
        return [e.lv for e in self.targets]


@dataclass(frozen=True)
class SpaceBox:
    """Cartesian product of closed per-dimension intervals."""

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        for lo, hi in self.bounds:
            if lo > hi:
                raise ValueError(f"interval [{lo}, {hi}] has lo > hi")

    def __len__(self) -> int:
        return len(self.bounds)

    @property
    def lows(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds])

    @property
    def highs(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds])

    @property
    def widths(self) -> np.ndarray:
        return self.highs - self.lows

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lows + self.highs)

    def contains(self, x: Sequence[float], rtol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        slack = rtol * self.widths
        return bool(np.all(x >= self.lows - slack) and np.all(x <= self.highs + slack))

    def clamp(self, x: Sequence[float]) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lows, self.highs)

    def normalize(self, x: Sequence[float]) -> np.ndarray:
        """Map into [0, 1] per dimension (zero-width dimensions map to 0)."""
        x = np.asarray(x, dtype=float)
        w = np.where(self.widths > 0.0, self.widths, 1.0)
        return (x - self.lows) / w

    def denormalize(self, u: Sequence[float]) -> np.ndarray:
        return self.lows + np.asarray(u, dtype=float) * self.widths


def build_space(entities: Sequence[UncertainEntity]) -> SpaceBox:
    """Cartesian product of the entities' domains, in entity order."""
    if not entities:
        raise ValueError("cannot build a space from zero entities")
    return SpaceBox(tuple(e.lv.domain for e in entities))


def decode_merged_task(group: MergedTaskGroup, cp: float, flags: Flags | None = None) -> tuple[str, float]:
    """Decode a merged-group crisp value into (option label, parameter)."""
    return group.decode(cp, flags)


@dataclass(frozen=True)
class SystemModel:
    """Immutable bundle of entities, merged groups and weighted relations."""

    contexts: tuple[UncertainEntity, ...]
    tasks: tuple[UncertainEntity, ...]
    softgoals: tuple[UncertainEntity, ...]
    relations: dict[str, WeightedRelation]
    merged_groups: tuple[MergedTaskGroup, ...] = field(default_factory=tuple)

    @property
    def context_space(self) -> SpaceBox:
        return build_space(self.contexts)

    @property
    def config_space(self) -> SpaceBox:
        return build_space(self.tasks)

    @property
    def satisfaction_space(self) -> SpaceBox:
        return build_space(self.softgoals)

    @property
    def softgoal_weights(self) -> np.ndarray:
        return np.array([sg.weight for sg in self.softgoals])

    def entity(self, name: str) -> UncertainEntity:
        for e in (*self.contexts, *self.tasks, *self.softgoals):
            if e.name == name:
                return e
        raise KeyError(f"no entity named {name!r}")


# ---------------------------------------------------------------------------
# JSON model loading


def _expect_keys(obj: dict, path: str, required: set[str], optional: set[str] = frozenset()):
    for key in required:
        if key not in obj:
            raise FixtureError(path, f"missing field {key!r}")
    for key in obj:
        if key not in required and key not in optional:
            raise FixtureError(path, f"unknown field {key!r}")


def _parse_mf(spec, path: str) -> MembershipFunction:
    if not isinstance(spec, list) or len(spec) < 2:
        raise FixtureError(path, "vertices must be a list of at least 2 [x, mu] pairs")
    try:
        return MembershipFunction([(float(x), float(m)) for x, m in spec])
    except (TypeError, ValueError) as exc:
        raise FixtureError(path, str(exc)) from None


def _parse_entity(obj, path: str) -> UncertainEntity:
    if not isinstance(obj, dict):
        raise FixtureError(path, "entity must be an object")
    _expect_keys(obj, path, {"name", "role", "crisp", "domain", "terms"}, {"weight", "unit"})
    name = obj["name"]
    domain = obj["domain"]
    if not (isinstance(domain, list) and len(domain) == 2):
        raise FixtureError(f"{path}.domain", "domain must be [lo, hi]")
    terms = []
    if not isinstance(obj["terms"], list) or not obj["terms"]:
        raise FixtureError(f"{path}.terms", "terms must be a non-empty list")
    for k, term in enumerate(obj["terms"]):
        tpath = f"{path}.terms[{k}]"
        if not isinstance(term, dict):
            raise FixtureError(tpath, "term must be an object")
        _expect_keys(term, tpath, {"label", "vertices"})
        terms.append((term["label"], _parse_mf(term["vertices"], f"{tpath}.vertices")))
    try:
        lv = LinguisticVariable(name, (float(domain[0]), float(domain[1])), terms)
        return UncertainEntity(
            name=name,
            role=obj["role"],
            crisp=float(obj["crisp"]),
            lv=lv,
            weight=float(obj["weight"]) if "weight" in obj else None,
            unit=obj.get("unit", ""),
        )
    except (TypeError, ValueError) as exc:
        raise FixtureError(path, str(exc)) from None


def load_model(source) -> SystemModel:
    """Load a SystemModel from a JSON file path or file object.

    Raises FixtureError with a line/field pointer on malformed input.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FixtureError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from None
    return model_from_dict(doc)


def model_from_dict(doc: dict) -> SystemModel:
    if not isinstance(doc, dict):
        raise FixtureError("$", "top level must be an object")
    _expect_keys(doc, "$", {"entities", "relations"}, {"merged_groups"})

    entities: dict[str, UncertainEntity] = {}
    for k, obj in enumerate(doc["entities"]):
        e = _parse_entity(obj, f"entities[{k}]")
        if e.name in entities:
            raise FixtureError(f"entities[{k}]", f"duplicate entity name {e.name!r}")
        entities[e.name] = e

    def _resolve(names, path, role):
        out = []
        for n in names:
            if n not in entities:
                raise FixtureError(path, f"unknown entity {n!r}")
            if entities[n].role != role:
                raise FixtureError(path, f"{n!r} has role {entities[n].role}, expected {role}")
            out.append(entities[n])
        return tuple(out)

    relations: dict[str, WeightedRelation] = {}
    for k, obj in enumerate(doc["relations"]):
        path = f"relations[{k}]"
        if not isinstance(obj, dict):
            raise FixtureError(path, "relation must be an object")
        _expect_keys(obj, path, {"kind", "sources", "targets", "weights"})
        kind = obj["kind"]
        if kind not in RELATION_ROLES:
            raise FixtureError(path, f"unknown relation kind {kind!r}")
        if kind in relations:
            raise FixtureError(path, f"duplicate relation kind {kind!r}")
        src_role, tgt_role = RELATION_ROLES[kind]
        try:
            relations[kind] = WeightedRelation(
                kind=kind,
                sources=_resolve(obj["sources"], f"{path}.sources", src_role),
                targets=_resolve(obj["targets"], f"{path}.targets", tgt_role),
                weights=np.asarray(obj["weights"], dtype=float),
            )
        except (TypeError, ValueError) as exc:
            raise FixtureError(path, str(exc)) from None

    groups = []
    for k, obj in enumerate(doc.get("merged_groups", [])):
        path = f"merged_groups[{k}]"
        if not isinstance(obj, dict):
            raise FixtureError(path, "merged group must be an object")
        _expect_keys(obj, path, {"entity", "members", "positive_option", "nonpositive_option"})
        if obj["entity"] not in entities:
            raise FixtureError(path, f"unknown entity {obj['entity']!r}")
        try:
            groups.append(
                MergedTaskGroup(
                    entity_name=obj["entity"],
                    members=tuple(obj["members"]),
                    positive_option=obj["positive_option"],
                    nonpositive_option=obj["nonpositive_option"],
                    lv=entities[obj["entity"]].lv,
                )
            )
        except (TypeError, ValueError) as exc:
            raise FixtureError(path, str(exc)) from None

    contexts = tuple(e for e in entities.values() if e.role == ROLE_CONTEXT)
    tasks = tuple(e for e in entities.values() if e.role == ROLE_TASK)
    softgoals = tuple(e for e in entities.values() if e.role == ROLE_SOFTGOAL)
    if not contexts or not tasks or not softgoals:
        raise FixtureError("entities", "need at least one context, task, and softgoal")
    for kind in RELATION_ROLES:
        if kind not in relations:
            raise FixtureError("relations", f"missing {kind} relation")
    return SystemModel(
        contexts=contexts,
        tasks=tasks,
        softgoals=softgoals,
        relations=relations,
        merged_groups=tuple(groups),
    )


def load_fixture(path=None) -> SystemModel:
    """Load the bundled mobile business application model, or a user file."""
    if path is not None:
        return load_model(path)
    ref = resources.files("fuzzyadapt.data").joinpath("mobile_fixture.json")
    with ref.open("r", encoding="utf-8") as fh:
        return load_model(fh)
