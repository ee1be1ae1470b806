import json

import numpy as np
import pytest

from qrobot.distance_task import build_distance_task, classical_oracle_trace, expected_final_state
from qrobot.errors import DimensionMismatchError, PathLimitError, PreconditionError
from qrobot.hilbert import BasisState, ModelConfig, StateVector, make_initial_state, superpose
from qrobot.operators import identity
from qrobot.phasepath import (
    ACTION,
    COMPUTATION,
    decompose_phase_paths,
    duration_amplitudes,
    evolve,
    reconstruct_amplitude,
    reconstruct_state,
    significant_paths,
)
from qrobot.taskmodel import build_step_operator


def max_gap(u, v):
    keys = set(u.amplitudes) | set(v.amplitudes)
    return max((abs(u.amplitude(i) - v.amplitude(i)) for i in keys), default=0.0)


def test_evolve_zero_steps(cfg8, T8):
    psi = make_initial_state(cfg8, 0, 2)
    assert evolve(T8, psi, 0) is psi
    with pytest.raises(PreconditionError):
        evolve(T8, psi, -1)
    with pytest.raises(DimensionMismatchError):
        evolve(identity(ModelConfig(3, 1)), psi, 1)


def test_evolve_reaches_expected_state(cfg8, T8):
    psi = evolve(T8, make_initial_state(cfg8, 0, 2), 9)
    assert psi.states() == [(expected_final_state(cfg8, 0, 2), 1)]


def test_evolve_norm(cfg8, T8_err):
    psi = evolve(T8_err, superpose(cfg8, [(1, 0, 2), (1j, 3, 6)]), 25)
    assert abs(psi.norm() - 1) < 1e-12 * 25


def test_single_path_for_listed_scenario(cfg8, T8):
    paths = decompose_phase_paths(T8, make_initial_state(cfg8, 0, 2), 6)
    assert len(paths) == 1
    p = paths[0]
    assert [s.kind for s in p.segments] == [COMPUTATION, ACTION] * 3
    assert [s.duration for s in p.segments] == [1] * 6
    assert p.segments[0].boundary == BasisState(0, 2, run=1, out="mr1", ctl=1)
    assert p.segments[4].boundary == BasisState(2, 2, run=1, perm=2, out="ml1", ctl=1)
    assert p.total_steps == 6


def test_short_run_has_only_residual():
    cfg = ModelConfig(8, 2, 3)
    T = build_step_operator(build_distance_task(cfg))
    paths = decompose_phase_paths(T, make_initial_state(cfg, 0, 2), 2)
    assert len(paths) == 1 and paths[0].segments == ()
    assert paths[0].residual_steps == 2
    assert paths[0].residual.states()[0][0].mu == 2


def test_rejects_action_sector_start(cfg8, T8):
    psi = StateVector.basis(cfg8, BasisState(0, 2, ctl=1))
    with pytest.raises(PreconditionError):
        decompose_phase_paths(T8, psi, 3)
    with pytest.raises(PreconditionError):
        decompose_phase_paths(T8, make_initial_state(cfg8, 0, 2), 3, eps=-1)


def test_error_paths_branch_and_are_complete(cfg8, T8_err):
    paths = decompose_phase_paths(T8_err, make_initial_state(cfg8, 0, 2), 6)
    assert len(paths) >= 2
    assert abs(sum(p.weight() for p in paths) - 1) < 1e-10


@pytest.mark.parametrize("n", [0, 1, 5, 9, 14, 20])
@pytest.mark.parametrize("j, x", [(0, 2), (1, 3), (6, 1), (2, 7)])
def test_reconstruction_matches_evolution(cfg8, T8, T8_err, j, x, n):
    psi0 = make_initial_state(cfg8, j, x)
    for T in (T8, T8_err):
        paths = decompose_phase_paths(T, psi0, n)
        direct = evolve(T, psi0, n)
        assert max_gap(reconstruct_state(paths), direct) < 1e-10
        for w in direct.amplitudes:
            assert abs(reconstruct_amplitude(paths, w) - direct.amplitudes[w]) < 1e-10


def test_reconstruction_of_absent_state(cfg8, T8):
    paths = decompose_phase_paths(T8, make_initial_state(cfg8, 0, 2), 9)
    assert abs(reconstruct_amplitude(paths, BasisState(5, 5))) < 1e-12
    w = expected_final_state(cfg8, 0, 2)
    assert abs(abs(reconstruct_amplitude(paths, w)) - 1) < 1e-10


def test_reconstruction_random_targets_with_errors(cfg8, T8_err, rng):
    psi0 = make_initial_state(cfg8, 1, 4)
    paths = decompose_phase_paths(T8_err, psi0, 15)
    direct = evolve(T8_err, psi0, 15)
    support = sorted(direct.amplitudes)
    targets = rng.choice(cfg8.dimension, size=25, replace=False).tolist()
    targets += rng.choice(support, size=min(25, len(support)), replace=False).tolist()
    for w in targets:
        assert abs(reconstruct_amplitude(paths, int(w)) - direct.amplitude(int(w))) < 1e-10


def test_superposed_start_reconstructs(cfg8, T8_err):
    psi0 = superpose(cfg8, [(1, 0, 2), (1j, 0, 3), (0.5, 4, 4)])
    paths = decompose_phase_paths(T8_err, psi0, 12)
    assert max_gap(reconstruct_state(paths), evolve(T8_err, psi0, 12)) < 1e-10


def test_path_order_is_deterministic(cfg8, T8_err):
    psi0 = make_initial_state(cfg8, 0, 3)
    a = decompose_phase_paths(T8_err, psi0, 14)
    b = decompose_phase_paths(T8_err, psi0, 14)
    assert [p.signature() for p in a] == [p.signature() for p in b]
    assert [p.signature() for p in a] == sorted(p.signature() for p in a)
    assert json.dumps([p.as_dict() for p in a]) == json.dumps([p.as_dict() for p in b])


def test_path_ceiling(cfg8, T8_err):
    with pytest.raises(PathLimitError):
        decompose_phase_paths(T8_err, make_initial_state(cfg8, 0, 3), 14, max_paths=3)


def test_eps_prunes_weak_paths(cfg8, T8_err):
    psi0 = make_initial_state(cfg8, 0, 3)
    full = decompose_phase_paths(T8_err, psi0, 14)
    pruned = decompose_phase_paths(T8_err, psi0, 14, eps=0.1)
    assert len(pruned) < len(full)
    assert all(abs(p.amplitude_chain) >= 0.1 for p in pruned)


def test_invariants_along_every_path(cfg8, T8_err):
    n = 16
    for p in decompose_phase_paths(T8_err, make_initial_state(cfg8, 0, 2), n):
        assert p.total_steps == n
        kinds = [s.kind for s in p.segments]
        assert kinds == [(COMPUTATION, ACTION)[k % 2] for k in range(len(kinds))]
        for s in p.segments:
            assert s.duration >= 1
            assert s.boundary.ctl == (1 if s.kind == COMPUTATION else 0)
        chain = np.prod([s.amplitude for s in p.segments]) if p.segments else 1
        assert abs(chain - p.amplitude_chain) < 1e-15


def test_single_path_law(cfg8, T8):
    top = (1 << cfg8.N) - 1
    for j in range(8):
        for d in range(top + 1):
            x = (j + d) % 8
            n_star = classical_oracle_trace(cfg8, j, x, 30).completion_step
            for n in range(1, n_star + 1):
                paths = decompose_phase_paths(T8, make_initial_state(cfg8, j, x), n)
                assert len(significant_paths(paths)) == 1


def test_duration_of_do_nothing_action(cfg8, T8):
    s = BasisState(0, 2, run=-1, perm=2, out="dn", ctl=1)
    amps = duration_amplitudes(T8, s, ACTION, 4)
    assert amps[1] == {s.replace(ctl=0): 1}
    assert all(amps[h] == {} for h in (2, 3, 4))


def test_duration_of_stretched_computation():
    cfg = ModelConfig(8, 2, 3)
    T = build_step_operator(build_distance_task(cfg))
    amps = duration_amplitudes(T, BasisState(0, 2), COMPUTATION, 6)
    assert amps[3] == {BasisState(0, 2, run=1, out="mr1", ctl=1): 1}
    assert all(amps[h] == {} for h in (1, 2, 4, 5, 6))


def test_duration_never_completing(cfg8, T8):
    # ctl=1 mid-stage label: completion sends it straight back, never to this target
    amps = duration_amplitudes(T8, BasisState(0, 2, ctl=1), ACTION, 5)
    target = BasisState(4, 4, run=3, out="ml1")
    assert all(target not in amps[h] for h in amps)


def test_duration_ctl_mismatch(cfg8, T8):
    with pytest.raises(PreconditionError):
        duration_amplitudes(T8, BasisState(0, 2), ACTION, 3)
    with pytest.raises(PreconditionError):
        duration_amplitudes(T8, BasisState(0, 2), "sleep", 3)


def test_duration_amplitudes_agree_with_segments(cfg8, T8_err):
    for p in decompose_phase_paths(T8_err, make_initial_state(cfg8, 1, 3), 12):
        prev = BasisState(1, 3)
        for s in p.segments:
            amps = duration_amplitudes(T8_err, prev, s.kind, s.duration)
            assert abs(amps[s.duration].get(s.boundary, 0) - s.amplitude) < 1e-12
            prev = s.boundary
