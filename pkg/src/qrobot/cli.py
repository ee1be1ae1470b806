"""Command-line scenario runner.

Exit status: 0 on success, 1 on a configuration or precondition problem, 2
when any verification check fails (the report is still written).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .distance_task import (
    START,
    build_distance_task,
    completion_stats,
    inject_search_error,
    transition_labels,
)
from .errors import BijectionError, ConfigError, PreconditionError, QRobotError
from .hamiltonian import build_hamiltonian, spectral_check, spectrum_csv
from .hilbert import ModelConfig, StateVector, decode_state, superpose
from .jsonio import complex_record, dumps, dumps_line, real
from .operators import StepOperator, apply, check_unitary
from .phasepath import DEFAULT_MAX_PATHS, decompose_phase_paths, reconstruct_state
from .taskmodel import (
    RuleOverlapWarning,
    TaskDefinition,
    build_step_operator,
    check_action_constraints,
    check_computation_constraints,
    verify_bijection,
)

log = logging.getLogger("qrobot")

OUTPUTS = ("trace", "paths", "stats", "spectrum", "checks")
TOP_KEYS = {"model", "task", "initial", "steps", "error_phi", "outputs"}

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2


@dataclass(frozen=True)
class Scenario:
    model: ModelConfig
    task: TaskDefinition
    initial: tuple[tuple[complex, int, int], ...]
    steps: int
    error_phi: float = 0.0
    outputs: tuple[str, ...] = ("stats",)


def _int(value, name):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    return value


def _float(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(name, f"expected a finite number, got {value!r}")
    return float(value)


def parse_scenario(data) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a JSON object")
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")

    model = data.get("model")
    if not isinstance(model, dict):
        raise ConfigError("model", "required object with L, N and optional k_stretch")
    extra = set(model) - {"L", "N", "k_stretch"}
    if extra:
        raise ConfigError(f"model.{sorted(extra)[0]}", "unknown key")
    for key in ("L", "N"):
        if key not in model:
            raise ConfigError(f"model.{key}", "required")
    try:
        cfg = ModelConfig(
            _int(model["L"], "model.L"),
            _int(model["N"], "model.N"),
            _int(model.get("k_stretch", 1), "model.k_stretch"),
        )
    except ConfigError as exc:
        if exc.field.startswith("model."):
            raise
        raise ConfigError(f"model.{exc.field}", str(exc).split(": ", 1)[1]) from None

    task_field = data.get("task", "distance")
    if task_field == "distance":
        task = build_distance_task(cfg)
    elif isinstance(task_field, dict):
        task = TaskDefinition.from_dict(cfg, task_field)
    else:
        raise ConfigError("task", f"expected \"distance\" or an inline rule table, got {task_field!r}")

    initial = data.get("initial")
    if not isinstance(initial, list) or not initial:
        raise ConfigError("initial", "required non-empty list of {re, im, j, x}")
    terms = []
    for n, term in enumerate(initial):
        where = f"initial[{n}]"
        if not isinstance(term, dict):
            raise ConfigError(where, "expected an object")
        extra = set(term) - {"re", "im", "j", "x"}
        if extra:
            raise ConfigError(f"{where}.{sorted(extra)[0]}", "unknown key")
        c = complex(_float(term.get("re", 1.0), f"{where}.re"), _float(term.get("im", 0.0), f"{where}.im"))
        for key in ("j", "x"):
            if key not in term:
                raise ConfigError(f"{where}.{key}", "required")
            v = _int(term[key], f"{where}.{key}")
            if not 0 <= v < cfg.L:
                raise ConfigError(f"{where}.{key}", f"site {v} outside [0, {cfg.L - 1}]")
        terms.append((c, term["j"], term["x"]))
    if all(c == 0 for c, _, _ in terms):
        raise ConfigError("initial", "coefficients are all zero")

    if "steps" not in data:
        raise ConfigError("steps", "required")
    steps = _int(data["steps"], "steps")
    if steps < 0:
        raise ConfigError("steps", f"must be >= 0, got {steps}")

    phi = _float(data.get("error_phi", 0.0), "error_phi")
    if phi and cfg.L % 2:
        raise ConfigError("error_phi", f"error injection needs an even L, got L={cfg.L}")
    if phi and task.name != "distance":
        raise ConfigError("error_phi", "error injection applies to the distance task only")

    outputs = data.get("outputs", ["stats"])
    if not isinstance(outputs, list) or not all(isinstance(o, str) for o in outputs):
        raise ConfigError("outputs", "expected a list of strings")
    bad = [o for o in outputs if o not in OUTPUTS]
    if bad:
        raise ConfigError("outputs", f"unknown output {bad[0]!r}; choose from {list(OUTPUTS)}")
    return Scenario(cfg, task, tuple(terms), steps, phi, tuple(dict.fromkeys(outputs)))


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_scenario(data)


def initial_state(sc: Scenario) -> StateVector:
    return superpose(sc.model, sc.initial)


def step_operator(sc: Scenario) -> StepOperator:
    if sc.error_phi:
        return inject_search_error(sc.task, sc.error_phi)
    return build_step_operator(sc.task)


def run_checks(sc: Scenario) -> tuple[list[dict], StepOperator | None]:
    """The four structural checks; the operator is None if the rule table is not a bijection."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuleOverlapWarning)
        rep = verify_bijection(sc.task)
    reports = [{"check": "bijection", **rep.summary()}]
    if not rep.passed:
        return reports, None
    T = step_operator(sc)
    u = check_unitary(T)
    reports.append(
        {
            "check": "unitarity",
            "pass": u.passed,
            "max_column_norm_error": real(u.max_column_norm_error),
            "max_offdiag_overlap": real(u.max_offdiag_overlap),
            "worst_column": u.worst_column,
            "worst_pair": list(u.worst_pair) if u.worst_pair else None,
        }
    )
    reports.append(check_computation_constraints(T, sc.model).summary())
    reports.append(check_action_constraints(T, sc.model).summary())
    return reports, T


def emit_trace(sc: Scenario, T: StepOperator) -> list[dict]:
    """One record per step of a definite initial state; raises if the state ever branches."""
    if len(sc.initial) != 1:
        raise PreconditionError("trace needs a single initial term; use the paths output for superpositions")
    labels = transition_labels(sc.task)
    psi = initial_state(sc)
    (idx, amp), = psi.amplitudes.items()
    label = START
    records = []
    for n in range(sc.steps + 1):
        records.append(
            {"step": n, "label": label, "amplitude": complex_record(amp), **decode_state(sc.model, idx).as_dict()}
        )
        if n == sc.steps:
            break
        label = labels[idx]
        psi = apply(T, psi)
        if len(psi) != 1:
            raise PreconditionError(f"state branches at step {n + 1}; use the paths output instead")
        (idx, amp), = psi.amplitudes.items()
    return records


def stats_record(sc: Scenario, psi: StateVector) -> dict:
    st = completion_stats(sc.model, psi)
    return {
        "distances": {str(d): real(p) for d, p in sorted(st.distances.items())},
        "not_complete": real(st.not_complete),
        "total": real(st.total()),
        "steps": sc.steps,
    }


def stats_csv(record: dict) -> str:
    lines = ["distance,probability"]
    lines += [f"{d},{p!r}" for d, p in record["distances"].items()]
    lines.append(f"none,{record['not_complete']!r}")
    return "\n".join(lines) + "\n"


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)
    log.info("wrote %s", out / name)


def execute(sc: Scenario, out: Path, outputs, eps: float = 0.0, max_paths: int = DEFAULT_MAX_PATHS) -> int:
    checks, T = run_checks(sc)
    failed = [c["check"] for c in checks if not c["pass"]]
    status = EXIT_OK
    if failed:
        status = EXIT_VERIFY
        log.error("verification failed: %s", ", ".join(failed))
    if "checks" in outputs or failed:
        _write(out, "checks.json", dumps({"checks": checks, "pass": not failed}))
    if T is None:
        return status

    psi0 = initial_state(sc)
    if "stats" in outputs:
        psi = psi0
        for _ in range(sc.steps):
            psi = apply(T, psi)
        rec = stats_record(sc, psi)
        _write(out, "stats.json", dumps(rec))
        _write(out, "stats.csv", stats_csv(rec))
    if "trace" in outputs:
        _write(out, "trace.jsonl", "".join(dumps_line(r) for r in emit_trace(sc, T)))
    if "paths" in outputs:
        paths = decompose_phase_paths(T, psi0, sc.steps, eps=eps, max_paths=max_paths)
        doc = {
            "steps": sc.steps,
            "eps": eps,
            "count": len(paths),
            "stats": stats_record(sc, reconstruct_state(paths)) if paths else None,
            "paths": [p.as_dict() for p in paths],
        }
        _write(out, "paths.json", dumps(doc))
    if "spectrum" in outputs:
        H = build_hamiltonian(T, 1.0)
        rep = spectral_check(H, T)
        _write(out, "spectrum.csv", spectrum_csv(H))
        if not rep.passed:
            status = EXIT_VERIFY
            _write(out, "spectrum_check.json", dumps({k: (real(v) if isinstance(v, float) else v) for k, v in rep.summary().items()}))
    return status


COMMAND_OUTPUTS = {
    "check": lambda sc: ("checks",),
    "simulate": lambda sc: tuple(o for o in sc.outputs if o in ("stats", "trace")) or ("stats",),
    "paths": lambda sc: ("paths",),
    "spectrum": lambda sc: ("spectrum",),
    "run": lambda sc: sc.outputs,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qrobot", description="Quantum robot lattice simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "check": "build the step operator and run the structural checks",
        "simulate": "evolve the initial state; write stats (and trace if requested)",
        "paths": "decompose the evolution into phase paths",
        "spectrum": "eigenvalues of the associated Hamiltonian",
        "run": "produce every output listed in the scenario",
    }
    for name, text in helps.items():
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True, help="scenario JSON file")
        s.add_argument("--out", default=".", help="output directory (default: current)")
        s.add_argument("--eps", type=float, default=0.0, help="phase-path pruning threshold")
        s.add_argument("--max-paths", type=int, default=DEFAULT_MAX_PATHS, help="phase-path ceiling")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        if args.eps < 0:
            raise ConfigError("--eps", "must be >= 0")
        if args.max_paths < 1:
            raise ConfigError("--max-paths", "must be >= 1")
        sc = load_scenario(args.config)
        return execute(sc, Path(args.out), COMMAND_OUTPUTS[args.command](sc), args.eps, args.max_paths)
    except BijectionError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except QRobotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
