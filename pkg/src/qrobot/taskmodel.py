"""Declarative rule tables for computation and action phases.

A task is two ordered rule lists. Computation rules act on ``ctl=0`` states,
action rules on ``ctl=1`` states at micro-stage 0. The rules only cover part of
the basis; :func:`complete_rule_table` extends them to a permutation
deterministically, and the ``check_*`` functions scan an operator for the
structural constraints both phase kinds must respect.

Completion order, applied to inputs no rule claims:

1. non-halting action entries whose target is already claimed by a strong
   entry are demoted to the halting version of the same move;
2. remaining unmatched inputs become fixed points where their own label is free;
3. otherwise they flip the control bit where the flipped label is free;
4. the rest are paired with free outputs of the same (robot, particle) site in
   ascending index order, and any leftovers globally in ascending order.
"""
from __future__ import annotations

import functools
import logging
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import BijectionError, ConfigError
from .hilbert import BasisState, ModelConfig, Out, decode_all, decode_state, encode_arrays
from .jsonio import complex_record
from .operators import StepOperator, from_permutation, restrict_inputs

log = logging.getLogger(__name__)

MOVES = {"left": -1, "stay": 0, "right": 1}


class RuleOverlapWarning(UserWarning):
    pass


def _parse_outs(value) -> tuple[Out, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(Out.parse(v) for v in value)
    return (Out.parse(value),)


@dataclass(frozen=True)
class ComputeRule:
    """Guarded on-board update for the computation phase.

    Guard: output symbol(s), inclusive ``run`` range, and the particle-at-robot
    flag (``None`` = either). Effect, applied on the phase's last micro-step:
    ``perm += run`` if ``copy_run``, then ``run += run_delta`` (wrapping), then
    ``out := set_out`` if given. Earlier micro-steps only advance ``mu``.
    """

    out: tuple[Out, ...]
    run: tuple[int, int] | None = None
    particle: bool | None = None
    run_delta: int = 0
    copy_run: bool = False
    set_out: Out | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "out", _parse_outs(self.out))
        if self.set_out is not None:
            object.__setattr__(self, "set_out", Out.parse(self.set_out))
        if self.run is not None:
            lo, hi = self.run
            object.__setattr__(self, "run", (int(lo), int(hi)))

    def guard(self, out, run, flag):
        """Vectorised (or scalar) guard evaluation."""
        ok = np.isin(out, [int(o) for o in self.out])
        if self.run is not None:
            ok = ok & (run >= self.run[0]) & (run <= self.run[1])
        if self.particle is not None:
            ok = ok & (flag == self.particle)
        return ok

    def effect(self, run, perm, out):
        new_perm = perm + run if self.copy_run else perm
        new_run = run + self.run_delta
        new_out = out if self.set_out is None else np.full_like(out, int(self.set_out))
        return new_run, new_perm, new_out

    def to_dict(self) -> dict:
        d = {"out": [o.name for o in self.out]}
        if self.run is not None:
            d["run"] = list(self.run)
        if self.particle is not None:
            d["particle"] = self.particle
        if self.run_delta:
            d["run_delta"] = self.run_delta
        if self.copy_run:
            d["copy_run"] = True
        if self.set_out is not None:
            d["set_out"] = self.set_out.name
        if self.name:
            d["name"] = self.name
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ComputeRule":
        unknown = set(d) - {"out", "run", "particle", "run_delta", "copy_run", "set_out", "name"}
        if unknown:
            raise ConfigError("compute_rules", f"unknown keys {sorted(unknown)}")
        if "out" not in d:
            raise ConfigError("compute_rules", "rule needs an 'out' guard")
        run = d.get("run")
        if isinstance(run, int):
            run = (run, run)
        elif run is not None:
            if len(run) != 2:
                raise ConfigError("compute_rules", "'run' must be an int or [lo, hi]")
            run = tuple(run)
        try:
            return cls(
                out=d["out"],
                run=run,
                particle=d.get("particle"),
                run_delta=int(d.get("run_delta", 0)),
                copy_run=bool(d.get("copy_run", False)),
                set_out=d.get("set_out"),
                name=str(d.get("name", "")),
            )
        except ValueError as exc:
            raise ConfigError("compute_rules", str(exc)) from None


@dataclass(frozen=True)
class ActionRule:
    """Robot motion of at most one site, selected by the output symbol."""

    out: Out
    move: str = "stay"
    halts: bool = True
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "out", Out.parse(self.out))
        if self.move not in MOVES:
            raise ValueError(f"move must be one of {sorted(MOVES)}, got {self.move!r}")

    @property
    def delta(self) -> int:
        return MOVES[self.move]

    def to_dict(self) -> dict:
        d = {"out": self.out.name, "move": self.move, "halts": self.halts}
        if self.name:
            d["name"] = self.name
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ActionRule":
        unknown = set(d) - {"out", "move", "halts", "name"}
        if unknown:
            raise ConfigError("action_rules", f"unknown keys {sorted(unknown)}")
        if "out" not in d:
            raise ConfigError("action_rules", "rule needs an 'out' guard")
        try:
            return cls(
                out=d["out"],
                move=d.get("move", "stay"),
                halts=bool(d.get("halts", True)),
                name=str(d.get("name", "")),
            )
        except ValueError as exc:
            raise ConfigError("action_rules", str(exc)) from None


@dataclass(frozen=True)
class TaskDefinition:
    config: ModelConfig
    compute_rules: tuple[ComputeRule, ...] = ()
    action_rules: tuple[ActionRule, ...] = ()
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "compute_rules", tuple(self.compute_rules))
        object.__setattr__(self, "action_rules", tuple(self.action_rules))

    def to_dict(self) -> dict:
        return {
            "compute_rules": [r.to_dict() for r in self.compute_rules],
            "action_rules": [r.to_dict() for r in self.action_rules],
        }

    @classmethod
    def from_dict(cls, config: ModelConfig, d: Mapping, name: str = "custom") -> "TaskDefinition":
        if not isinstance(d, Mapping):
            raise ConfigError("task", "inline task must be an object with rule lists")
        unknown = set(d) - {"compute_rules", "action_rules"}
        if unknown:
            raise ConfigError("task", f"unknown keys {sorted(unknown)}")
        return cls(
            config,
            tuple(ComputeRule.from_dict(r) for r in d.get("compute_rules", [])),
            tuple(ActionRule.from_dict(r) for r in d.get("action_rules", [])),
            name=name,
        )


# stage codes for completed inputs
STAGE_DEMOTED = "demote"
STAGE_IDENTITY = "identity"
STAGE_FLIP = "flip"
STAGE_SITE = "site"
STAGE_GLOBAL = "global"


@dataclass
class Completion:
    """Outcome of extending a rule table to a total index map."""

    config: ModelConfig
    permutation: np.ndarray | None
    rule_of: np.ndarray  # compute rule i -> i, action rule i -> -(i + 2), completion -> -1
    unmatched_inputs: np.ndarray
    unclaimed_outputs: np.ndarray
    completed_pairs: list[tuple[int, int, str]]
    demoted: np.ndarray
    overlaps: list[tuple[str, int, int, int]]
    collision: tuple[int, int, int] | None = None

    @property
    def passed(self) -> bool:
        return self.collision is None and self.permutation is not None

    def stage_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for _, _, stage in self.completed_pairs:
            counts[stage] = counts.get(stage, 0) + 1
        return counts


def _first_collision(inputs: np.ndarray, targets: np.ndarray):
    order = np.argsort(targets, kind="stable")
    t = targets[order]
    dup = np.flatnonzero(t[1:] == t[:-1])
    if not dup.size:
        return None
    k = dup[0]
    a, b = sorted((int(inputs[order[k]]), int(inputs[order[k + 1]])))
    return a, b, int(t[k])


def _overlaps(masks: Sequence[np.ndarray], kind: str):
    found = []
    for a in range(len(masks)):
        for b in range(a + 1, len(masks)):
            n = int(np.count_nonzero(masks[a] & masks[b]))
            if n:
                found.append((kind, a, b, n))
    return found


@functools.lru_cache(maxsize=32)
def complete_rule_table(task: TaskDefinition) -> Completion:
    cfg = task.config
    d = cfg.dimension
    k = cfg.k_stretch
    f = decode_all(cfg)
    flag = f.robot == f.particle

    target = np.full(d, -1, dtype=np.int64)
    strong = np.zeros(d, dtype=bool)
    weak = np.zeros(d, dtype=bool)
    rule_of = np.full(d, -1, dtype=np.int64)

    ctl0 = f.ctl == 0
    cmasks = [ctl0 & r.guard(f.out, f.run, flag) for r in task.compute_rules]
    for ri, (rule, m) in enumerate(zip(task.compute_rules, cmasks)):
        sel = m & (rule_of == -1)
        mid = sel & (f.mu < k - 1)
        target[mid] = encode_arrays(
            cfg, f.robot[mid], f.particle[mid], f.run[mid], f.perm[mid], f.mu[mid] + 1, f.out[mid], 0
        )
        last = sel & (f.mu == k - 1)
        run2, perm2, out2 = rule.effect(f.run[last], f.perm[last], f.out[last])
        target[last] = encode_arrays(cfg, f.robot[last], f.particle[last], run2, perm2, 0, out2, 1)
        strong |= sel
        rule_of[sel] = ri

    act = (f.ctl == 1) & (f.mu == 0)
    amasks = [act & (f.out == int(r.out)) for r in task.action_rules]
    for ri, (rule, m) in enumerate(zip(task.action_rules, amasks)):
        sel = m & (rule_of == -1)
        target[sel] = encode_arrays(
            cfg,
            f.robot[sel] + rule.delta,
            f.particle[sel],
            f.run[sel],
            f.perm[sel],
            f.mu[sel],
            f.out[sel],
            0 if rule.halts else 1,
        )
        if rule.halts:
            strong |= sel
        else:
            weak |= sel
        rule_of[sel] = -(ri + 2)

    overlaps = _overlaps(cmasks, "compute") + _overlaps(amasks, "action")

    s_idx = np.flatnonzero(strong)
    collision = _first_collision(s_idx, target[s_idx])
    if collision is not None:
        return Completion(
            cfg, None, rule_of, np.empty(0, np.int64), np.empty(0, np.int64), [], np.empty(0, np.int64),
            overlaps, collision,
        )

    claimed = np.zeros(d, dtype=bool)
    claimed[target[s_idx]] = True

    # Non-halting entries are injective among themselves (they keep every
    # on-board field and shift only the robot), so only clashes with strong
    # entries need resolving.
    w_idx = np.flatnonzero(weak)
    blocked = claimed[target[w_idx]]
    fallback = target[w_idx] ^ 1
    demote = blocked & ~claimed[fallback]
    dropped = blocked & ~demote
    target[w_idx[demote]] = fallback[demote]
    target[w_idx[dropped]] = -1
    rule_of[w_idx[dropped]] = -1
    kept = w_idx[~dropped]
    claimed[target[kept]] = True
    demoted = w_idx[demote]

    unmatched_inputs = np.flatnonzero(target < 0)
    unclaimed_outputs = np.flatnonzero(~claimed)
    pairs: list[tuple[int, int, str]] = [(int(i), int(target[i]), STAGE_DEMOTED) for i in demoted]

    rest = unmatched_inputs
    ident = rest[~claimed[rest]]
    target[ident] = ident
    claimed[ident] = True
    pairs += [(int(i), int(i), STAGE_IDENTITY) for i in ident]

    rest = rest[target[rest] < 0]
    flips = rest[~claimed[rest ^ 1]]
    target[flips] = flips ^ 1
    claimed[flips ^ 1] = True
    pairs += [(int(i), int(i ^ 1), STAGE_FLIP) for i in flips]

    rest = rest[target[rest] < 0]
    free = np.flatnonzero(~claimed)
    site = cfg.site_size
    left_in, left_out = [], []
    in_sites = rest // site
    out_sites = free // site
    for s in np.union1d(in_sites, out_sites):
        ins = rest[in_sites == s]
        outs = free[out_sites == s]
        n = min(ins.size, outs.size)
        target[ins[:n]] = outs[:n]
        pairs += [(int(a), int(b), STAGE_SITE) for a, b in zip(ins[:n], outs[:n])]
        left_in.append(ins[n:])
        left_out.append(outs[n:])
    if left_in:
        li = np.concatenate(left_in)
        lo = np.concatenate(left_out)
        if li.size:
            log.warning("%d completion pairs cross site boundaries", li.size)
        target[li] = lo
        pairs += [(int(a), int(b), STAGE_GLOBAL) for a, b in zip(li, lo)]

    pairs.sort()
    return Completion(cfg, target, rule_of, unmatched_inputs, unclaimed_outputs, pairs, demoted, overlaps)


@dataclass(frozen=True)
class BijectionReport:
    unmatched_inputs: np.ndarray
    unclaimed_outputs: np.ndarray
    completed_pairs: list[tuple[int, int, str]]
    demoted: np.ndarray
    overlaps: list[tuple[str, int, int, int]]
    collision: tuple[int, int, int] | None
    passed: bool

    def summary(self) -> dict:
        stages: dict[str, int] = {}
        for _, _, s in self.completed_pairs:
            stages[s] = stages.get(s, 0) + 1
        return {
            "pass": self.passed,
            "unmatched_inputs": int(self.unmatched_inputs.size),
            "unclaimed_outputs": int(self.unclaimed_outputs.size),
            "completed_pairs": len(self.completed_pairs),
            "completion_stages": stages,
            "demoted_stream_entries": int(self.demoted.size),
            "overlapping_guards": [list(o) for o in self.overlaps],
            "collision": list(self.collision) if self.collision else None,
        }


def verify_bijection(task: TaskDefinition) -> BijectionReport:
    comp = complete_rule_table(task)
    for kind, a, b, n in comp.overlaps:
        warnings.warn(
            f"{kind} rules {a} and {b} overlap on {n} states; the earlier rule wins",
            RuleOverlapWarning,
            stacklevel=2,
        )
    passed = comp.passed
    if passed:
        perm = comp.permutation
        passed = bool(np.all(np.bincount(perm, minlength=perm.size) == 1))
    return BijectionReport(
        comp.unmatched_inputs,
        comp.unclaimed_outputs,
        comp.completed_pairs,
        comp.demoted,
        comp.overlaps,
        comp.collision,
        passed,
    )


def build_step_operator(task: TaskDefinition) -> StepOperator:
    comp = complete_rule_table(task)
    if comp.collision is not None:
        a, b, t = comp.collision
        cfg = task.config
        raise BijectionError(
            f"rules send {decode_state(cfg, a)} and {decode_state(cfg, b)} "
            f"to the same state {decode_state(cfg, t)}",
            pair=(a, b),
            target=t,
        )
    return from_permutation(task.config, comp.permutation)


def split_phases(op: StepOperator) -> tuple[StepOperator, StepOperator]:
    """``(T P0, T P1)``: the computation and action parts of ``op``."""
    return restrict_inputs(op, lambda i: i & 1 == 0), restrict_inputs(op, lambda i: i & 1 == 1)


@dataclass(frozen=True)
class ConstraintReport:
    name: str
    passed: bool
    checked_entries: int
    counterexample: dict | None = None

    def summary(self) -> dict:
        ce = None
        if self.counterexample:
            ce = dict(self.counterexample)
            for key in ("input", "output"):
                if isinstance(ce.get(key), BasisState):
                    ce[key] = ce[key].as_dict()
            amp = ce.get("amplitude")
            if isinstance(amp, complex):
                ce["amplitude"] = complex_record(amp)
        return {"check": self.name, "pass": self.passed, "checked_entries": self.checked_entries, "counterexample": ce}


def _entry_arrays(op: StepOperator, ctl: int):
    ins, outs, amps = [], [], []
    for i, col in op.columns.items():
        if i & 1 != ctl:
            continue
        for o, a in col:
            ins.append(i)
            outs.append(o)
            amps.append(a)
    ins = np.asarray(ins, dtype=np.int64)
    outs = np.asarray(outs, dtype=np.int64)
    order = np.lexsort((outs, ins))
    return ins[order], outs[order], np.asarray(amps, dtype=complex)[order]


def _counterexample(cfg, i, o, a, reason):
    return {
        "input_index": int(i),
        "output_index": int(o),
        "input": decode_state(cfg, int(i)),
        "output": decode_state(cfg, int(o)),
        "amplitude": complex(a),
        "reason": reason,
    }


def check_computation_constraints(op: StepOperator, config: ModelConfig, tol: float = 1e-12) -> ConstraintReport:
    """Computation entries keep robot and particle, and see the environment only
    through the particle-at-robot flag (identical on-board sub-maps per flag)."""
    f = decode_all(config)
    ins, outs, amps = _entry_arrays(op, 0)
    bad = (f.robot[outs] != f.robot[ins]) | (f.particle[outs] != f.particle[ins])
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        return ConstraintReport(
            "computation", False, int(ins.size),
            _counterexample(config, ins[k], outs[k], amps[k], "computation entry changes robot or particle"),
        )
    site = config.site_size
    # on-board sub-map of every site, then compare within each flag class
    submaps: dict[int, dict[int, list]] = {}
    for i, o, a in zip(ins.tolist(), outs.tolist(), amps.tolist()):
        submaps.setdefault(i // site, {}).setdefault(i % site, []).append((o % site, a))
    reference: dict[bool, tuple[int, dict]] = {}
    for s in sorted(submaps):
        present = bool(f.robot[s * site] == f.particle[s * site])
        sub = submaps[s]
        if present not in reference:
            reference[present] = (s, sub)
            continue
        ref_site, ref = reference[present]
        for b in sorted(set(sub) | set(ref)):
            x = dict(sub.get(b, ()))
            y = dict(ref.get(b, ()))
            for ob in x.keys() | y.keys():
                if abs(x.get(ob, 0j) - y.get(ob, 0j)) > tol:
                    i = s * site + b
                    col = op.column(i)
                    o, a = col[0] if col else (i, 0j)
                    return ConstraintReport(
                        "computation", False, int(ins.size),
                        _counterexample(
                            config, i, o, a,
                            f"on-board map differs from site {ref_site} with the same particle-at-robot flag",
                        ),
                    )
    return ConstraintReport("computation", True, int(ins.size))


def check_action_constraints(op: StepOperator, config: ModelConfig) -> ConstraintReport:
    """Action entries keep out/run/perm/mu and the particle, and move the robot at most one site."""
    f = decode_all(config)
    ins, outs, amps = _entry_arrays(op, 1)
    onboard_changed = (
        (f.out[outs] != f.out[ins])
        | (f.run[outs] != f.run[ins])
        | (f.perm[outs] != f.perm[ins])
        | (f.mu[outs] != f.mu[ins])
    )
    particle_moved = f.particle[outs] != f.particle[ins]
    hop = np.mod(f.robot[outs] - f.robot[ins], config.L)
    too_far = ~np.isin(hop, (0, 1, config.L - 1))
    for mask, reason in (
        (onboard_changed, "action entry changes the output or on-board memory"),
        (particle_moved, "action entry changes the environment"),
        (too_far, "action entry moves the robot more than one site"),
    ):
        if mask.any():
            k = int(np.flatnonzero(mask)[0])
            return ConstraintReport(
                "action", False, int(ins.size), _counterexample(config, ins[k], outs[k], amps[k], reason)
            )
    return ConstraintReport("action", True, int(ins.size))
