"""Direct evolution and its decomposition into phase paths.

Between two completed phases the control bit is constant, so ``T`` restricted
to the current control sector acts as the phase operator ``T P_ctl``. A path
records the boundary states at which the control bit flipped, together with
how many steps each phase took. Superpositions inside a phase stay in the
path's residual; components that complete a phase branch off one basis state
at a time.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import PathLimitError, PreconditionError
from .hilbert import BasisState, StateVector, decode_state, encode_state
from .jsonio import complex_record
from .operators import StepOperator, _same_dim, apply

COMPUTATION = "computation"
ACTION = "action"
KIND_CTL = {COMPUTATION: 0, ACTION: 1}
DEFAULT_MAX_PATHS = 10**6


def evolve(T: StepOperator, psi0: StateVector, n: int) -> StateVector:
    if n < 0:
        raise PreconditionError(f"steps must be >= 0, got {n}")
    _same_dim(T, psi0)
    psi = psi0
    for _ in range(n):
        psi = apply(T, psi)
    return psi


def evolve_steps(T: StepOperator, psi0: StateVector, n: int) -> list[StateVector]:
    """``[psi0, T psi0, ..., T^n psi0]``."""
    if n < 0:
        raise PreconditionError(f"steps must be >= 0, got {n}")
    _same_dim(T, psi0)
    out = [psi0]
    for _ in range(n):
        out.append(apply(T, out[-1]))
    return out


@dataclass(frozen=True)
class PhaseSegment:
    kind: str
    duration: int
    boundary: BasisState
    amplitude: complex = 1.0 + 0j  # <boundary|(T P_kind)^duration|previous boundary>

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "duration": self.duration,
            "boundary": self.boundary.as_dict(),
            "amplitude": complex_record(self.amplitude),
        }


@dataclass
class PhasePath:
    segments: tuple[PhaseSegment, ...]
    residual: StateVector
    amplitude_chain: complex
    residual_steps: int = 0
    _boundary_index: tuple[int, ...] = field(default=(), repr=False)

    @property
    def current_kind(self) -> str:
        if not self.segments:
            return COMPUTATION
        return ACTION if self.segments[-1].kind == COMPUTATION else COMPUTATION

    @property
    def total_steps(self) -> int:
        return sum(s.duration for s in self.segments) + self.residual_steps

    def signature(self) -> tuple:
        return tuple((s.duration, b) for s, b in zip(self.segments, self._boundary_index))

    def weight(self) -> float:
        """|chain|^2 times the squared residual norm."""
        return abs(self.amplitude_chain) ** 2 * self.residual.norm() ** 2

    def as_dict(self) -> dict:
        return {
            "segments": [s.as_dict() for s in self.segments],
            "amplitude_chain": complex_record(self.amplitude_chain),
            "residual_steps": self.residual_steps,
            "residual": [
                {"state": s.as_dict(), "amplitude": complex_record(a)} for s, a in self.residual.states()
            ],
        }


def decompose_phase_paths(
    T: StepOperator,
    psi0: StateVector,
    n: int,
    eps: float = 0.0,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> list[PhasePath]:
    """Split ``T^n psi0`` into phase paths.

    With ``eps=0`` the paths are exact: summing ``amplitude_chain * residual``
    over all of them gives ``T^n psi0``. Paths whose chain magnitude falls
    below ``eps`` are discarded. More than ``max_paths`` live paths raises
    PathLimitError. The result is sorted by (durations, boundary indices).
    """
    if n < 0:
        raise PreconditionError(f"steps must be >= 0, got {n}")
    if eps < 0:
        raise PreconditionError(f"eps must be >= 0, got {eps}")
    _same_dim(T, psi0)
    if any(i & 1 for i in psi0.amplitudes):
        raise PreconditionError("initial state must lie in the computation sector (ctl=0)")
    if not psi0.amplitudes:
        return []
    cfg = psi0.config
    paths = [PhasePath((), psi0, 1.0 + 0j)]
    for _ in range(n):
        nxt: list[PhasePath] = []
        for p in paths:
            ctl = KIND_CTL[p.current_kind]
            r = apply(T, p.residual)
            stay, done = {}, []
            for i, a in r.amplitudes.items():
                if (i & 1) == ctl:
                    stay[i] = a
                else:
                    done.append((i, a))
            steps = p.residual_steps + 1
            if stay:
                res = StateVector.__new__(StateVector)
                res.config = cfg
                res.amplitudes = stay
                nxt.append(PhasePath(p.segments, res, p.amplitude_chain, steps, p._boundary_index))
            for i, a in sorted(done):
                chain = p.amplitude_chain * a
                if eps and abs(chain) < eps:
                    continue
                seg = PhaseSegment(p.current_kind, steps, decode_state(cfg, i), a)
                nxt.append(
                    PhasePath(
                        p.segments + (seg,),
                        StateVector.basis(cfg, i),
                        chain,
                        0,
                        p._boundary_index + (i,),
                    )
                )
            if len(nxt) > max_paths:
                raise PathLimitError(f"more than {max_paths} phase paths; raise max_paths or use eps > 0")
        paths = nxt
    paths.sort(key=PhasePath.signature)
    return paths


def reconstruct_amplitude(paths: list[PhasePath], w: BasisState | int) -> complex:
    if not paths:
        return 0j
    idx = w if isinstance(w, int) else encode_state(paths[0].residual.config, w)
    return sum((p.amplitude_chain * p.residual.amplitudes.get(idx, 0j) for p in paths), 0j)


def reconstruct_state(paths: list[PhasePath]) -> StateVector:
    if not paths:
        raise PreconditionError("no paths to reconstruct from")
    acc: dict[int, complex] = {}
    for p in paths:
        for i, a in p.residual.amplitudes.items():
            acc[i] = acc.get(i, 0j) + p.amplitude_chain * a
    return StateVector(paths[0].residual.config, acc)


def significant_paths(paths: list[PhasePath], tol: float = 1e-12) -> list[PhasePath]:
    return [p for p in paths if abs(p.amplitude_chain) > tol]


def duration_amplitudes(
    T: StepOperator, in_state: BasisState, kind: str, h_max: int
) -> dict[int, dict[BasisState, complex]]:
    """Completion amplitudes of one phase started in ``in_state``.

    Entry ``h`` maps each control-flipped state to
    ``<out|T (T P_kind)^(h-1)|in>``, i.e. the amplitude of finishing the phase
    in exactly ``h`` steps. Completed components are removed before the next
    step, so completion is absorbing.
    """
    if kind not in KIND_CTL:
        raise PreconditionError(f"kind must be one of {sorted(KIND_CTL)}, got {kind!r}")
    ctl = KIND_CTL[kind]
    if in_state.ctl != ctl:
        raise PreconditionError(f"{kind} phase needs ctl={ctl}, got ctl={in_state.ctl}")
    if h_max < 1:
        raise PreconditionError("h_max must be >= 1")
    cfg = T.config
    v = StateVector.basis(cfg, in_state)
    result = {}
    for h in range(1, h_max + 1):
        r = apply(T, v)
        done = {}
        stay = {}
        for i, a in r.amplitudes.items():
            if (i & 1) == ctl:
                stay[i] = a
            else:
                done[decode_state(cfg, i)] = a
        result[h] = dict(sorted(done.items()))
        v = StateVector(cfg, stay)
    return result


def paths_to_records(paths: list[PhasePath]) -> list[dict]:
    return [p.as_dict() for p in paths]
