"""Distance measurement by a robot searching rightward for a single particle.

The robot counts its steps in ``run`` while moving right, copies the count into
``perm`` when it meets the particle, walks back while counting down, and then
runs a ballast phase of further decrements with do-nothing actions. A search
that saturates the counter ends in the non-stopping ``mrS`` motion; a ballast
that exhausts the counter ends in ``mlS``.

:func:`classical_oracle_trace` re-derives the same dynamics by hand, on single
basis labels, without touching rule tables, state vectors or operators.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .hilbert import BasisState, ModelConfig, Out, StateVector, decode_all, encode_arrays
from .operators import StepOperator, rotate_column_pairs
from .taskmodel import ActionRule, ComputeRule, TaskDefinition, build_step_operator, complete_rule_table

DN, MR1, MRS, ML1, MLS = Out.dn, Out.mr1, Out.mrS, Out.ml1, Out.mlS

# decision-tree node of each rule; "off-tree" marks canonical completion
NODE_OF_RULE = {
    "search-start": "search",
    "search-step": "search",
    "saturate": "search",
    "search-move": "search",
    "find-here": "find",
    "find": "find",
    "return-step": "return",
    "return-done": "return",
    "return-move": "return",
    "ballast": "ballast",
    "ballast-end": "ballast",
    "ballast-wait": "ballast",
    "stream-right": "stream-right",
    "stream-left": "stream-left",
}
OFF_TREE = "off-tree"
START = "start"


def build_distance_task(config: ModelConfig) -> TaskDefinition:
    top = (1 << config.N) - 1
    compute = (
        ComputeRule(DN, run=(0, 0), particle=False, run_delta=1, set_out=MR1, name="search-start"),
        ComputeRule(DN, run=(0, 0), particle=True, copy_run=True, run_delta=-1, name="find-here"),
        ComputeRule(MR1, run=(1, top - 1), particle=False, run_delta=1, name="search-step"),
        ComputeRule(MR1, particle=True, copy_run=True, run_delta=-1, set_out=ML1, name="find"),
        ComputeRule(MR1, run=(top, top), particle=False, run_delta=1, set_out=MRS, name="saturate"),
        # the return rules never fire on the particle's own site;
        # guarding them keeps them disjoint from the two find rules
        ComputeRule(ML1, run=(1, config.run_max), particle=False, run_delta=-1, name="return-step"),
        ComputeRule(ML1, run=(0, 0), particle=False, run_delta=-1, set_out=DN, name="return-done"),
        ComputeRule(DN, run=(-top + 1, -1), run_delta=-1, name="ballast"),
        ComputeRule(DN, run=(-top, -top), run_delta=-1, set_out=MLS, name="ballast-end"),
    )
    action = (
        ActionRule(MR1, "right", halts=True, name="search-move"),
        ActionRule(ML1, "left", halts=True, name="return-move"),
        ActionRule(DN, "stay", halts=True, name="ballast-wait"),
        ActionRule(MRS, "right", halts=False, name="stream-right"),
        ActionRule(MLS, "left", halts=False, name="stream-left"),
    )
    return TaskDefinition(config, compute, action, name="distance")


def distance_operator(config: ModelConfig) -> StepOperator:
    return build_step_operator(build_distance_task(config))


def transition_labels(task: TaskDefinition) -> list[str]:
    """Node label for the transition leaving each basis index."""
    comp = complete_rule_table(task)
    compute = [r.name or f"compute-{i}" for i, r in enumerate(task.compute_rules)]
    action = [r.name or f"action-{i}" for i, r in enumerate(task.action_rules)]
    names = []
    for r in comp.rule_of.tolist():
        if r == -1:
            names.append(OFF_TREE)
        elif r >= 0:
            names.append(compute[r])
        else:
            names.append(action[-r - 2])
    return [NODE_OF_RULE.get(n, n) for n in names]


# --------------------------------------------------------------------------
# classical oracle

_Label = tuple  # (run, perm, mu, out, ctl) inside one (robot, particle) site
_HALTING = {DN: 0, MR1: 1, ML1: -1}
_STREAM = {MRS: 1, MLS: -1}


class _DistanceOracle:
    def __init__(self, config: ModelConfig):
        self.cfg = config
        self.top = (1 << config.N) - 1
        self.m = config.modulus
        self._tables: dict[bool, dict] = {}
        self._claims: dict[bool, set] = {}

    def wrap(self, run):
        return self.cfg.wrap_run(run)

    def rule(self, out, run, present):
        """(name, out, run_delta, copy) of the computation that fires, or None."""
        top = self.top
        if out == DN:
            if run == 0:
                return ("find-here", DN, -1, True) if present else ("search-start", MR1, 1, False)
            if -top < run <= -1:
                return ("ballast", DN, -1, False)
            if run == -top:
                return ("ballast-end", MLS, -1, False)
        elif out == MR1:
            if present:
                return ("find", ML1, -1, True)
            if 1 <= run <= top - 1:
                return ("search-step", MR1, 1, False)
            if run == top:
                return ("saturate", MRS, 1, False)
        elif out == ML1 and not present:
            if run >= 1:
                return ("return-step", ML1, -1, False)
            if run == 0:
                return ("return-done", DN, -1, False)
        return None

    def compute_next(self, lab: _Label, present: bool):
        run, perm, mu, out, ctl = lab
        r = self.rule(out, run, present)
        if r is None:
            return None
        name, new_out, delta, copy = r
        if mu < self.cfg.k_stretch - 1:
            return name, (run, perm, mu + 1, out, 0)
        new_perm = (perm + run) % self.m if copy else perm
        return name, (self.wrap(run + delta), new_perm, 0, new_out, 1)

    def labels(self):
        cfg = self.cfg
        for run_digit in range(self.m):
            run = self.wrap(run_digit)
            for perm in range(self.m):
                for mu in range(cfg.k_stretch):
                    for out in Out:
                        for ctl in (0, 1):
                            yield (run, perm, mu, out, ctl)

    def compute_claims(self, present: bool) -> set:
        if present not in self._claims:
            claims = set()
            for lab in self.labels():
                if lab[4] == 0:
                    nxt = self.compute_next(lab, present)
                    if nxt is not None:
                        claims.add(nxt[1])
            self._claims[present] = claims
        return self._claims[present]

    def action_landing(self, lab: _Label, present_at_target: bool):
        """Label an action entry produces at its target site, or None if it cannot be placed."""
        run, perm, mu, out, _ = lab
        if out in _HALTING:
            return (run, perm, mu, out, 0), False
        moved = (run, perm, mu, out, 1)
        if moved not in self.compute_claims(present_at_target):
            return moved, False
        halted = (run, perm, mu, out, 0)
        if halted in self.compute_claims(present_at_target):
            return None, True
        return halted, True

    def site_table(self, present: bool) -> dict:
        """Completion map (label -> label) for unmatched inputs of a site with this flag."""
        if present in self._tables:
            return self._tables[present]
        order = sorted(self.labels(), key=lambda lab: (lab[0] % self.m, lab[1], lab[2], int(lab[3]), lab[4]))
        taken = set(self.compute_claims(present))
        unmatched = []
        for lab in order:
            run, perm, mu, out, ctl = lab
            if ctl == 0:
                if self.compute_next(lab, present) is None:
                    unmatched.append(lab)
            elif mu != 0:
                unmatched.append(lab)
            # every site receives exactly one action entry per on-board label
            if ctl == 1 and mu == 0:
                landing, _ = self.action_landing(lab, present)
                if landing is None:
                    raise RuntimeError(f"oracle cannot place blocked stream entry {lab}")
                taken.add(landing)
        table = {}
        rest = []
        for lab in unmatched:
            if lab not in taken:
                table[lab] = lab
                taken.add(lab)
            else:
                rest.append(lab)
        rest2 = []
        for lab in rest:
            flipped = lab[:4] + (1 - lab[4],)
            if flipped not in taken:
                table[lab] = flipped
                taken.add(flipped)
            else:
                rest2.append(lab)
        free = [lab for lab in order if lab not in taken]
        if len(free) != len(rest2):
            raise RuntimeError("oracle site completion is unbalanced")
        table.update(zip(rest2, free))
        self._tables[present] = table
        return table

    def step(self, s: BasisState) -> tuple[BasisState, str]:
        L = self.cfg.L
        lab = (s.run, s.perm, s.mu, s.out, s.ctl)
        present = s.robot == s.particle
        if s.ctl == 0:
            nxt = self.compute_next(lab, present)
            if nxt is not None:
                name, (run, perm, mu, out, ctl) = nxt
                return s.replace(run=run, perm=perm, mu=mu, out=out, ctl=ctl), NODE_OF_RULE[name]
        elif s.mu == 0:
            delta = _HALTING.get(s.out, _STREAM.get(s.out))
            robot = (s.robot + delta) % L
            landing, _ = self.action_landing(lab, robot == s.particle)
            if landing is not None:
                node = {DN: "ballast", MR1: "search", ML1: "return", MRS: "stream-right", MLS: "stream-left"}
                return s.replace(robot=robot, ctl=landing[4]), node[s.out]
        run, perm, mu, out, ctl = self.site_table(present)[lab]
        return s.replace(run=run, perm=perm, mu=mu, out=out, ctl=ctl), OFF_TREE


_ORACLES: dict[ModelConfig, _DistanceOracle] = {}


def _oracle(config: ModelConfig) -> _DistanceOracle:
    if config not in _ORACLES:
        _ORACLES[config] = _DistanceOracle(config)
    return _ORACLES[config]


@dataclass(frozen=True)
class OracleTrace:
    steps: list[BasisState]
    labels: list[str]
    completion_step: int | None
    recorded_distance: int | None
    off_tree_step: int | None = None


def classical_oracle_trace(config: ModelConfig, j: int, x: int, max_steps: int) -> OracleTrace:
    """Iterate the distance-task dynamics on one basis label.

    ``steps[n]`` is the label after ``n`` steps (``steps[0]`` is the initial
    state). ``completion_step`` is the first step that lands in the
    task-complete label (out=dn, ctl=1, run=-1) through a find or return rule
    before any off-tree transition; ``off_tree_step`` is the first step governed
    by the canonical completion rather than a task rule.
    """
    if max_steps < 1:
        raise PreconditionError("max_steps must be >= 1")
    if not (0 <= j < config.L and 0 <= x < config.L):
        raise PreconditionError(f"sites ({j}, {x}) outside the lattice")
    oracle = _oracle(config)
    s = BasisState(robot=j, particle=x)
    steps, labels = [s], [START]
    completion = distance = off_tree = None
    for n in range(1, max_steps + 1):
        s, label = oracle.step(s)
        steps.append(s)
        labels.append(label)
        if label == OFF_TREE and off_tree is None:
            off_tree = n
        if (
            completion is None
            and off_tree is None
            and s.out == DN and s.ctl == 1 and s.run == -1
            and label in ("find", "return")
        ):
            completion, distance = n, s.perm
    return OracleTrace(steps, labels, completion, distance, off_tree)


def expected_final_state(config: ModelConfig, j: int, x: int) -> BasisState | None:
    """First task-complete label for robot ``j`` and particle ``x``; None when not found."""
    delta = (x - j) % config.L
    if delta > (1 << config.N) - 1:
        return None
    return BasisState(robot=j, particle=x, run=-1, perm=delta, mu=0, out=DN, ctl=1)


def inject_search_error(task: TaskDefinition, phi: float) -> StepOperator:
    """Error-free operator with every pair of ``mr1`` action columns at robot
    sites (2k, 2k+1) rotated by ``phi``; all other fields of a pair agree."""
    cfg = task.config
    if task.name != "distance":
        raise PreconditionError("search error injection applies to the distance task")
    if cfg.L % 2:
        raise PreconditionError(f"robot-site pairing needs an even lattice, got L={cfg.L}")
    T = build_step_operator(task)
    f = decode_all(cfg)
    sel = (f.ctl == 1) & (f.mu == 0) & (f.out == int(MR1)) & (f.robot % 2 == 0)
    u1 = np.flatnonzero(sel)
    u2 = encode_arrays(
        cfg, f.robot[sel] + 1, f.particle[sel], f.run[sel], f.perm[sel], f.mu[sel], f.out[sel], f.ctl[sel]
    )
    return rotate_column_pairs(T, zip(u1.tolist(), u2.tolist()), phi)


@dataclass(frozen=True)
class CompletionStats:
    distances: dict[int, float]
    not_complete: float

    def total(self) -> float:
        return sum(self.distances.values()) + self.not_complete

    def as_dict(self) -> dict:
        return {"distances": {str(d): p for d, p in sorted(self.distances.items())}, "not_complete": self.not_complete}


def is_complete(config: ModelConfig, s: BasisState) -> bool:
    """Task finished with a record in ``perm``: output dn, counter in the ballast range."""
    return s.out == DN and -((1 << config.N) - 1) <= s.run <= -1


def completion_stats(config: ModelConfig, psi: StateVector) -> CompletionStats:
    dist: dict[int, float] = {}
    rest = 0.0
    for s, a in psi.states():
        p = abs(a) ** 2
        if is_complete(config, s):
            dist[s.perm] = dist.get(s.perm, 0.0) + p
        else:
            rest += p
    return CompletionStats(dist, rest)
