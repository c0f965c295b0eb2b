"""The four reasoning schemas: naive, optimized, gray-box, and black-box.

* forward_reason: feed the context through the prior context->task rules and
  report the satisfaction that configuration earns. No optimization.
* backward_reason: search the configuration space with the GA for the
  configuration whose actual satisfaction best matches the desired one.
* pr_step (gray-box): reuse the nearest learned membership-function set when
  it keeps the deviation under the threshold, otherwise optimize and learn a
  new parameter set for the current context.
* sr_step (black-box): during warm-up collect (context, optimal config)
  samples via the optimizer; afterwards reuse the learned affine model when
  good enough, otherwise re-cluster and retrain it.

A schema instance owns its knowledge base and is single-writer; concurrent
runs must use separate engines and knowledge bases.
"""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .domain_model import SpaceBox, SystemModel
from .evolutionary_optimizer import BoxObjective, GASettings, minimize
from .fuzzy_core import (
    CompiledMamdani,
    Flags,
    LinguisticVariable,
    MembershipFunction,
    TSRule,
    interp_vertices,
    ts_infer,
)
from .learning import (
    CoefficientMatrix,
    FCMSettings,
    TrainerSettings,
    fcm_cluster,
    fcm_memberships,
    train_consequents,
)
from .rule_generation import generate_ruleset

MODE_NAIVE = "naive"
MODE_OPTIMIZED = "optimized"
MODE_REUSED = "reused"
MODE_LEARNED = "learned"

KB_KIND_PR = "pr"
KB_KIND_SR = "sr"

FLAG_SR_K_GUARD = "sr_cluster_count_guard"
FLAG_SR_K_CAPPED = "sr_cluster_count_capped"

DEFAULT_WARMUP = 50


def weighted_deviation(sd_desired, sd_actual, weights) -> float:
    """Preference-weighted mean of squared satisfaction differences."""
    d = np.asarray(sd_desired, dtype=float)
    a = np.asarray(sd_actual, dtype=float)
    w = np.asarray(weights, dtype=float)
    if d.shape != a.shape or d.shape != w.shape:
        raise ValueError("satisfaction vectors and weights must share one length")
    if np.any(w < 0.0) or w.sum() <= 0.0:
        raise ValueError("weights must be nonnegative and not all zero")
    return float(((d - a) ** 2 @ w) / w.sum())


def _deviation_batch(sd_desired: np.ndarray, SD: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return ((SD - sd_desired[None, :]) ** 2 @ weights) / weights.sum()


@dataclass(frozen=True)
class AdaptationDecision:
    """Outcome of one schema step."""

    cp: np.ndarray
    sd_desired: np.ndarray
    sd_actual: np.ndarray
    deviation: float
    mode: str
    wall_time: float


_uid_counter = itertools.count()


@dataclass
class KBEntry:
    key: np.ndarray
    payload: dict
    uid: int = field(default_factory=lambda: next(_uid_counter))


@dataclass
class KnowledgeBase:
    """Learned artifacts keyed by context, plus the prior MF set as entry zero.

    ``kind`` selects the payload schema: "pr" entries hold membership
    -function parameter sets, "sr" entries hold cluster centers plus the
    affine coefficient tensor. ``samples`` is black-box run state (the
    accumulated normalized (context, configuration) pairs) and is not part
    of the persisted document.
    """

    kind: str
    prior_mfs: dict
    entries: list[KBEntry] = field(default_factory=list)
    samples: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    uid: int = field(default_factory=lambda: next(_uid_counter))

    def __post_init__(self):
        if self.kind not in (KB_KIND_PR, KB_KIND_SR):
            raise ValueError(f"unknown knowledge base kind {self.kind!r}")

    def save(self, path) -> None:
        doc = {
            "kind": self.kind,
            "prior_mfs": self.prior_mfs,
            "entries": [{"key": list(map(float, e.key)), "payload": e.payload} for e in self.entries],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)

    @classmethod
    def load(cls, path) -> "KnowledgeBase":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        kb = cls(kind=doc["kind"], prior_mfs=doc["prior_mfs"])
        for item in doc["entries"]:
            kb.entries.append(KBEntry(key=np.asarray(item["key"], dtype=float), payload=item["payload"]))
        return kb


def find_nearest(kb: KnowledgeBase, mv: Sequence[float], space: SpaceBox) -> KBEntry | None:
    """Entry with the smallest Euclidean distance on range-normalized keys.

    Ties go to the earliest-inserted entry; an empty knowledge base yields
    None so callers can fall back to the prior set.
    """
    if not kb.entries:
        return None
    q = space.normalize(mv)
    keys = np.stack([space.normalize(e.key) for e in kb.entries])
    dists = np.linalg.norm(keys - q[None, :], axis=1)
    return kb.entries[int(np.argmin(dists))]


def _mf_payload(lvs: Sequence[LinguisticVariable]) -> dict:
    return {lv.name: [mf.vertices() for mf in lv.mfs] for lv in lvs}


def _lvs_from_payload(model_lvs: Sequence[LinguisticVariable], mfs: dict) -> list[LinguisticVariable]:
    out = []
    for lv in model_lvs:
        vertex_lists = mfs[lv.name]
        terms = [(label, MembershipFunction(v)) for label, v in zip(lv.labels, vertex_lists)]
        out.append(LinguisticVariable(lv.name, lv.domain, terms))
    return out


def _child_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence((int(seed),) + tuple(int(t) for t in tags)).generate_state(1)[0])


class _MFParameterSpec:
    """Free parameters of the gray-box chromosome: every membership-function
    vertex x-coordinate strictly inside its variable's domain, over all
    context and task variables. Decoded rows are repaired to stay sorted
    and inside the domain."""

    def __init__(self, lvs: Sequence[LinguisticVariable]):
        self.lvs = list(lvs)
        self.slots: list[tuple[int, int, int]] = []  # (var, term, vertex)
        bounds = []
        for i, lv in enumerate(self.lvs):
            lo, hi = lv.domain
            for t, mf in enumerate(lv.mfs):
                for v, x in enumerate(mf.xs):
                    if lo < x < hi:
                        self.slots.append((i, t, v))
                        bounds.append((lo, hi))
        self.box = SpaceBox(tuple(bounds))

    def default_params(self) -> np.ndarray:
        return np.array([self.lvs[i].mfs[t].xs[v] for i, t, v in self.slots])

    def batch_vertices(self, P: np.ndarray) -> list[list[np.ndarray]]:
        """Per variable, per term, a (B, V) vertex-x array (repaired)."""
        P = np.atleast_2d(P)
        B = P.shape[0]
        out: list[list[np.ndarray]] = []
        by_term: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for s, (i, t, v) in enumerate(self.slots):
            by_term.setdefault((i, t), []).append((v, s))
        for i, lv in enumerate(self.lvs):
            lo, hi = lv.domain
            delta = (hi - lo) * 1e-9
            rows = []
            for t, mf in enumerate(lv.mfs):
                X = np.broadcast_to(mf.xs, (B, mf.xs.size)).copy()
                for v, s in by_term.get((i, t), []):
                    X[:, v] = P[:, s]
                rows.append(_repair_vertex_rows(X, lo, hi, delta))
            out.append(rows)
        return out

    def payload_from_params(self, params: np.ndarray) -> dict:
        verts = self.batch_vertices(params[None, :])
        mfs = {}
        for i, lv in enumerate(self.lvs):
            mfs[lv.name] = [
                [[float(x), float(m)] for x, m in zip(verts[i][t][0], lv.mfs[t].mus)]
                for t in range(len(lv.mfs))
            ]
        return {"mfs": mfs}


def _repair_vertex_rows(X: np.ndarray, lo: float, hi: float, delta: float) -> np.ndarray:
    """Sort each row and enforce strict increase within [lo, hi]."""
    X = np.sort(X, axis=-1)
    np.clip(X, lo, hi, out=X)
    V = X.shape[-1]
    for v in range(1, V):
        X[:, v] = np.maximum(X[:, v], X[:, v - 1] + delta)
    X[:, -1] = np.minimum(X[:, -1], hi)
    for v in range(V - 2, -1, -1):
        X[:, v] = np.minimum(X[:, v], X[:, v + 1] - delta)
    return X


class _GrayBoxObjective:
    """Batched chain deviation at a fixed context over MF parameter sets.

    Evaluates context->task inference with candidate membership functions,
    then task->softgoal inference (softgoal terms stay fixed), and scores
    the result against the desired satisfaction. Matches the scalar engine
    path so a learned parameter set replays to the same deviation.
    """

    def __init__(self, engine: "AdaptationEngine", mv: np.ndarray, sd_desired: np.ndarray):
        self.engine = engine
        self.spec = engine.mf_spec
        self.mv = np.asarray(mv, dtype=float)
        self.sd_desired = np.asarray(sd_desired, dtype=float)
        self.n_ctx = len(engine.model.contexts)
        self.n_task = len(engine.model.tasks)

    def __call__(self, P: np.ndarray) -> np.ndarray:
        eng = self.engine
        verts = self.spec.batch_vertices(P)
        B = np.atleast_2d(P).shape[0]
        ctx_lvs = [e.lv for e in eng.model.contexts]
        task_lvs = [e.lv for e in eng.model.tasks]

        cp = self._mamdani_batch(
            eng._adp,
            [verts[i] for i in range(self.n_ctx)],
            [[lv.mfs[t].mus for t in range(len(lv))] for lv in ctx_lvs],
            np.broadcast_to(self.mv, (B, self.n_ctx)),
            out_verts=[verts[self.n_ctx + j] for j in range(self.n_task)],
            out_mus=[[lv.mfs[t].mus for t in range(len(lv))] for lv in task_lvs],
            out_lvs=task_lvs,
        )
        sd = self._mamdani_batch(
            eng._sat,
            [verts[self.n_ctx + j] for j in range(self.n_task)],
            [[lv.mfs[t].mus for t in range(len(lv))] for lv in task_lvs],
            cp,
            out_verts=None,
            out_mus=None,
            out_lvs=[e.lv for e in eng.model.softgoals],
        )
        return _deviation_batch(self.sd_desired, sd, eng.model.softgoal_weights)

    def _mamdani_batch(self, compiled, in_verts, in_mus, X, out_verts, out_mus, out_lvs):
        B = X.shape[0]
        n_in = len(in_verts)
        M = np.ones((B, n_in, compiled._max_t + 1))
        for i in range(n_in):
            xi = X[:, i]
            for t, vx in enumerate(in_verts[i]):
                M[:, i, t] = interp_vertices(vx, in_mus[i][t], xi)
        rows = np.arange(n_in)[None, :]
        firing = M[:, rows, compiled._ant].min(axis=2)

        out = np.empty((B, len(out_lvs)))
        for j, lv in enumerate(out_lvs):
            clips = np.zeros((B, len(lv)))
            for t, idx in enumerate(compiled._asserting[j]):
                if idx.size:
                    clips[:, t] = firing[:, idx].max(axis=1)
            if out_verts is None:
                xs, table = lv.grid(compiled.grid_points)
                G = np.broadcast_to(table, (B,) + table.shape)
            else:
                xs = np.linspace(lv.domain[0], lv.domain[1], compiled.grid_points)
                G = np.stack(
                    [
                        interp_vertices(out_verts[j][t][:, None, :], out_mus[j][t], xs[None, :])
                        for t in range(len(lv))
                    ],
                    axis=1,
                )
            agg = np.max(np.minimum(clips[:, :, None], G), axis=1)
            total = agg.sum(axis=1)
            dead = total <= 0.0
            safe = np.where(dead, 1.0, total)
            out[:, j] = np.where(dead, lv.midpoint, agg @ xs / safe)
        return out


class AdaptationEngine:
    """Rule sets, spaces, and the four reasoning schemas over one model."""

    def __init__(
        self,
        model: SystemModel,
        ga_settings: GASettings | None = None,
        trainer_settings: TrainerSettings | None = None,
        fcm_settings: FCMSettings | None = None,
        seed: int = 0,
    ):
        self.model = model
        self.ga_settings = ga_settings or GASettings()
        self.trainer_settings = trainer_settings or TrainerSettings()
        self.fcm_settings = fcm_settings or FCMSettings()
        self.seed = seed

        self.evo_rules = generate_ruleset(model.relations["EVO"])
        self.sat_rules = generate_ruleset(model.relations["SAT"])
        self.adp_rules = generate_ruleset(model.relations["ADP"])
        ctx_lvs = [e.lv for e in model.contexts]
        task_lvs = [e.lv for e in model.tasks]
        sg_lvs = [e.lv for e in model.softgoals]
        self._evo = CompiledMamdani(self.evo_rules, ctx_lvs, sg_lvs)
        self._sat = CompiledMamdani(self.sat_rules, task_lvs, sg_lvs)
        self._adp = CompiledMamdani(self.adp_rules, ctx_lvs, task_lvs)
        self.mf_spec = _MFParameterSpec(ctx_lvs + task_lvs)
        self._entry_engines: dict[tuple, tuple[CompiledMamdani, CompiledMamdani]] = {}
        self._entry_ts_rules: dict[int, list[TSRule]] = {}

    # -- plain inference ----------------------------------------------------

    def desired_satisfaction(self, mv, flags: Flags | None = None) -> np.ndarray:
        """Softgoal satisfaction the user expects under the given context."""
        return self._evo.infer(np.asarray(mv, dtype=float), flags)

    def actual_satisfaction(self, cp, flags: Flags | None = None) -> np.ndarray:
        """Softgoal satisfaction a configuration earns."""
        return self._sat.infer(np.asarray(cp, dtype=float), flags)

    def actual_satisfaction_batch(self, CP: np.ndarray) -> np.ndarray:
        return self._sat.infer_batch(CP)

    def prior_mf_payload(self) -> dict:
        """The prior (elicited) MF parameter set for the context and task variables."""
        return _mf_payload([e.lv for e in (*self.model.contexts, *self.model.tasks)])

    def new_knowledge_base(self, kind: str) -> KnowledgeBase:
        return KnowledgeBase(kind=kind, prior_mfs=self.prior_mf_payload())

    # -- schemas ------------------------------------------------------------

    def forward_reason(self, mv, flags: Flags | None = None) -> AdaptationDecision:
        """Naive adaptation: prior context->task rules, no optimization."""
        mv = np.asarray(mv, dtype=float)
        t0 = time.perf_counter()
        cp = self._adp.infer(mv, flags)
        sd_actual = self._sat.infer(cp, flags)
        wall = time.perf_counter() - t0
        # The naive schema never consults desired satisfaction; computed here
        # only so every decision records a comparable deviation.
        sd_desired = self._evo.infer(mv, flags)
        dev = weighted_deviation(sd_desired, sd_actual, self.model.softgoal_weights)
        return AdaptationDecision(cp, sd_desired, sd_actual, dev, MODE_NAIVE, wall)

    def backward_reason(self, mv, seed: int | None = None, flags: Flags | None = None) -> AdaptationDecision:
        """Optimized adaptation: GA search over the configuration space."""
        mv = np.asarray(mv, dtype=float)
        t0 = time.perf_counter()
        sd_desired = self._evo.infer(mv, flags)
        weights = self.model.softgoal_weights
        problem = BoxObjective(
            box=self.model.config_space,
            fn=lambda CP: _deviation_batch(sd_desired, self._sat.infer_batch(CP), weights),
            vectorized=True,
        )
        ga = replace(self.ga_settings, seed=self.seed if seed is None else seed)
        result = minimize(problem, ga)
        cp = self.model.config_space.clamp(result.x)
        sd_actual = self._sat.infer(cp, flags)
        wall = time.perf_counter() - t0
        dev = weighted_deviation(sd_desired, sd_actual, weights)
        return AdaptationDecision(cp, sd_desired, sd_actual, dev, MODE_OPTIMIZED, wall)

    def _engines_for(self, kb: KnowledgeBase, entry: KBEntry | None):
        if entry is None:
            payload = {"mfs": kb.prior_mfs}
            key = ("kb", kb.uid)
        else:
            payload = entry.payload
            key = ("entry", entry.uid)
        cached = self._entry_engines.get(key)
        if cached is None:
            n_ctx = len(self.model.contexts)
            lvs = _lvs_from_payload(
                [e.lv for e in (*self.model.contexts, *self.model.tasks)], payload["mfs"]
            )
            ctx_lvs, task_lvs = lvs[:n_ctx], lvs[n_ctx:]
            sg_lvs = [e.lv for e in self.model.softgoals]
            cached = (
                CompiledMamdani(self.adp_rules, ctx_lvs, task_lvs),
                CompiledMamdani(self.sat_rules, task_lvs, sg_lvs),
            )
            self._entry_engines[key] = cached
        return cached

    def pr_step(
        self,
        mv,
        threshold: float,
        kb: KnowledgeBase,
        seed: int | None = None,
        flags: Flags | None = None,
    ) -> AdaptationDecision:
        """Gray-box step: reuse the nearest learned MF set or learn a new one.

        The reuse branch leaves the knowledge base untouched; the learn
        branch appends exactly one entry keyed by the current context.
        """
        if kb.kind != KB_KIND_PR:
            raise ValueError(f"pr_step needs a {KB_KIND_PR!r} knowledge base, got {kb.kind!r}")
        mv = np.asarray(mv, dtype=float)
        base_seed = self.seed if seed is None else seed
        t0 = time.perf_counter()
        sd_desired = self._evo.infer(mv, flags)
        entry = find_nearest(kb, mv, self.model.context_space)
        adp_eng, sat_eng = self._engines_for(kb, entry)
        cp = adp_eng.infer(mv, flags)
        sd_actual = sat_eng.infer(cp, flags)
        dev = weighted_deviation(sd_desired, sd_actual, self.model.softgoal_weights)
        if dev <= threshold:
            wall = time.perf_counter() - t0
            return AdaptationDecision(cp, sd_desired, sd_actual, dev, MODE_REUSED, wall)

        optimized = self.backward_reason(mv, seed=_child_seed(base_seed, 1), flags=flags)
        problem = BoxObjective(
            box=self.mf_spec.box,
            fn=_GrayBoxObjective(self, mv, sd_desired),
            vectorized=True,
        )
        ga = replace(self.ga_settings, seed=_child_seed(base_seed, 2))
        learned = minimize(problem, ga)
        kb.entries.append(KBEntry(key=mv.copy(), payload=self.mf_spec.payload_from_params(learned.x)))
        wall = time.perf_counter() - t0
        return AdaptationDecision(
            optimized.cp, sd_desired, optimized.sd_actual, optimized.deviation, MODE_LEARNED, wall
        )

    # -- black-box schema ----------------------------------------------------

    def _ts_rules(self, entry: KBEntry) -> list[TSRule]:
        cached = self._entry_ts_rules.get(entry.uid)
        if cached is None:
            centers = np.asarray(entry.payload["centers"], dtype=float)
            A = np.asarray(entry.payload["coefficients"], dtype=float)
            m = self.fcm_settings.fuzzifier

            def make_membership(k: int):
                return lambda x: float(fcm_memberships(centers, x[None, :], m)[0, k])

            cached = [
                TSRule(center=centers[k], membership=make_membership(k), coefficients=A[k])
                for k in range(centers.shape[0])
            ]
            self._entry_ts_rules[entry.uid] = cached
        return cached

    def _sr_retrain(self, kb: KnowledgeBase, mv: np.ndarray, time_step: int, T: int, seed: int, flags: Flags | None):
        K_raw = time_step % T
        K = max(2, K_raw)
        if K != K_raw and flags is not None:
            flags.raise_flag(FLAG_SR_K_GUARD, f"time={time_step} T={T} raw K={K_raw}")
        if K > len(kb.samples):
            K = len(kb.samples)
            if flags is not None:
                flags.raise_flag(FLAG_SR_K_CAPPED, f"lowered to {K} samples")
        ctx = np.stack([s[0] for s in kb.samples])
        fcm = fcm_cluster(ctx, K, replace(self.fcm_settings, seed=seed), flags)
        coeffs = train_consequents(kb.samples, fcm, self.trainer_settings, flags)
        payload = {
            "centers": [list(map(float, c)) for c in fcm.centers],
            "coefficients": [[list(map(float, row)) for row in out] for out in coeffs.a],
        }
        kb.entries.clear()
        kb.entries.append(KBEntry(key=mv.copy(), payload=payload))
        self._entry_ts_rules.clear()

    def sr_step(
        self,
        mv,
        threshold: float,
        T: int,
        kb: KnowledgeBase,
        time_step: int,
        seed: int | None = None,
        flags: Flags | None = None,
    ) -> AdaptationDecision:
        """Black-box step: optimize during warm-up, then reuse or retrain.

        Warm-up steps (time_step <= T) run the optimizer and record the
        (context, configuration) sample; the initial clusters and affine
        coefficients are fitted when warm-up ends. Afterwards the learned
        model proposes the configuration, and only a deviation above the
        threshold triggers re-optimization plus a full retrain on every
        accumulated sample.
        """
        if kb.kind != KB_KIND_SR:
            raise ValueError(f"sr_step needs a {KB_KIND_SR!r} knowledge base, got {kb.kind!r}")
        mv = np.asarray(mv, dtype=float)
        base_seed = self.seed if seed is None else seed
        ctx_space = self.model.context_space
        cfg_space = self.model.config_space

        if time_step <= T:
            decision = self.backward_reason(mv, seed=_child_seed(base_seed, 1), flags=flags)
            kb.samples.append((ctx_space.normalize(mv), cfg_space.normalize(decision.cp)))
            if time_step == T:
                self._sr_retrain(kb, mv, time_step, T, _child_seed(base_seed, 3), flags)
            return decision

        t0 = time.perf_counter()
        sd_desired = self._evo.infer(mv, flags)
        entry = find_nearest(kb, mv, ctx_space)
        if entry is not None:
            rules = self._ts_rules(entry)
            cp = cfg_space.clamp(cfg_space.denormalize(ts_infer(rules, ctx_space.normalize(mv), flags)))
            sd_actual = self._sat.infer(cp, flags)
            dev = weighted_deviation(sd_desired, sd_actual, self.model.softgoal_weights)
            if dev <= threshold:
                wall = time.perf_counter() - t0
                return AdaptationDecision(cp, sd_desired, sd_actual, dev, MODE_REUSED, wall)

        optimized = self.backward_reason(mv, seed=_child_seed(base_seed, 1), flags=flags)
        kb.samples.append((ctx_space.normalize(mv), cfg_space.normalize(optimized.cp)))
        self._sr_retrain(kb, mv, time_step, T, _child_seed(base_seed, 3), flags)
        wall = time.perf_counter() - t0
        return AdaptationDecision(
            optimized.cp, sd_desired, optimized.sd_actual, optimized.deviation, MODE_LEARNED, wall
        )
