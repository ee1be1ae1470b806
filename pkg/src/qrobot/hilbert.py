"""Composite basis of robot + environment, index encoding and sparse state vectors.

A basis label carries seven fields, encoded mixed-radix in the fixed order
``(robot, particle, run, perm, mu, out, ctl)`` with ``ctl`` varying fastest::

    D = L * L * 2**(N+1) * 2**(N+1) * k_stretch * 5 * 2

The running counter ``run`` is a signed two's-complement value in
``[-2**N, 2**N - 1]``; its digit is ``run mod 2**(N+1)``, so arithmetic on it
wraps and is always bijective.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError, DegenerateInputError, DimensionMismatchError, RangeError


class Out(IntEnum):
    """Output-system symbols. ``mrS``/``mlS`` are the non-stopping moves."""

    dn = 0
    mr1 = 1
    mrS = 2
    ml1 = 3
    mlS = 4

    @classmethod
    def parse(cls, value) -> "Out":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value]
            except KeyError:
                raise ValueError(f"unknown output symbol {value!r}") from None
        return cls(int(value))


N_OUT = len(Out)


@dataclass(frozen=True)
class ModelConfig:
    L: int
    N: int
    k_stretch: int = 1

    def __post_init__(self):
        if not isinstance(self.L, int) or self.L < 3:
            raise ConfigError("L", f"lattice size must be an integer >= 3, got {self.L!r}")
        if not isinstance(self.N, int) or not 1 <= self.N <= 6:
            raise ConfigError("N", f"counter bits must be in [1, 6], got {self.N!r}")
        if not isinstance(self.k_stretch, int) or self.k_stretch < 1:
            raise ConfigError("k_stretch", f"must be an integer >= 1, got {self.k_stretch!r}")

    @property
    def modulus(self) -> int:
        """Cardinality of the ``run`` and ``perm`` registers, 2**(N+1)."""
        return 1 << (self.N + 1)

    @property
    def run_min(self) -> int:
        return -(1 << self.N)

    @property
    def run_max(self) -> int:
        return (1 << self.N) - 1

    @property
    def shape(self) -> tuple[int, ...]:
        m = self.modulus
        return (self.L, self.L, m, m, self.k_stretch, N_OUT, 2)

    @property
    def dimension(self) -> int:
        return math.prod(self.shape)

    @property
    def site_size(self) -> int:
        """Number of basis states sharing one (robot, particle) pair."""
        return self.dimension // (self.L * self.L)

    def wrap_run(self, value: int) -> int:
        m = self.modulus
        v = value % m
        return v - m if v > self.run_max else v


@dataclass(frozen=True, order=True)
class BasisState:
    robot: int
    particle: int
    run: int = 0
    perm: int = 0
    mu: int = 0
    out: Out = Out.dn
    ctl: int = 0

    def __post_init__(self):
        object.__setattr__(self, "out", Out.parse(self.out))

    def replace(self, **changes) -> "BasisState":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {
            "robot": self.robot,
            "particle": self.particle,
            "run": self.run,
            "perm": self.perm,
            "mu": self.mu,
            "out": self.out.name,
            "ctl": self.ctl,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "BasisState":
        return cls(
            robot=int(d["robot"]),
            particle=int(d["particle"]),
            run=int(d.get("run", 0)),
            perm=int(d.get("perm", 0)),
            mu=int(d.get("mu", 0)),
            out=Out.parse(d.get("out", "dn")),
            ctl=int(d.get("ctl", 0)),
        )


def _check(field_name, value, lo, hi):
    if not isinstance(value, (int, np.integer)) or not lo <= value <= hi:
        raise RangeError(field_name, value, lo, hi)


def validate_state(config: ModelConfig, state: BasisState) -> None:
    _check("robot", state.robot, 0, config.L - 1)
    _check("particle", state.particle, 0, config.L - 1)
    _check("run", state.run, config.run_min, config.run_max)
    _check("perm", state.perm, 0, config.modulus - 1)
    _check("mu", state.mu, 0, config.k_stretch - 1)
    _check("ctl", state.ctl, 0, 1)


def encode_state(config: ModelConfig, state: BasisState) -> int:
    validate_state(config, state)
    digits = (
        state.robot,
        state.particle,
        state.run % config.modulus,
        state.perm,
        state.mu,
        int(state.out),
        state.ctl,
    )
    index = 0
    for d, radix in zip(digits, config.shape):
        index = index * radix + d
    return index


def decode_state(config: ModelConfig, index: int) -> BasisState:
    _check("index", index, 0, config.dimension - 1)
    digits = []
    for radix in reversed(config.shape):
        index, d = divmod(int(index), radix)
        digits.append(d)
    robot, particle, run_digit, perm, mu, out, ctl = reversed(digits)
    return BasisState(
        robot=robot,
        particle=particle,
        run=config.wrap_run(run_digit),
        perm=perm,
        mu=mu,
        out=Out(out),
        ctl=ctl,
    )


@dataclass(frozen=True)
class FieldArrays:
    """Decoded fields of every basis index, as parallel integer arrays."""

    robot: np.ndarray
    particle: np.ndarray
    run: np.ndarray
    perm: np.ndarray
    mu: np.ndarray
    out: np.ndarray
    ctl: np.ndarray


def decode_all(config: ModelConfig) -> FieldArrays:
    idx = np.arange(config.dimension)
    robot, particle, run_digit, perm, mu, out, ctl = np.unravel_index(idx, config.shape)
    m = config.modulus
    run = np.where(run_digit > config.run_max, run_digit - m, run_digit)
    return FieldArrays(robot, particle, run, perm, mu, out, ctl)


def encode_arrays(config: ModelConfig, robot, particle, run, perm, mu, out, ctl) -> np.ndarray:
    """Vectorised encoder; ``run`` and ``perm`` are reduced modulo 2**(N+1), sites modulo L."""
    m = config.modulus
    return np.ravel_multi_index(
        (
            np.mod(robot, config.L),
            np.mod(particle, config.L),
            np.mod(run, m),
            np.mod(perm, m),
            mu,
            out,
            ctl,
        ),
        config.shape,
    )


class StateVector:
    """Sparse state: basis index -> complex amplitude. Zero amplitudes are never stored."""

    __slots__ = ("config", "amplitudes")

    def __init__(self, config: ModelConfig, amplitudes: Mapping[int, complex] | None = None):
        self.config = config
        amps = {}
        dim = config.dimension
        for i, a in (amplitudes or {}).items():
            i = int(i)
            if not 0 <= i < dim:
                raise RangeError("index", i, 0, dim - 1)
            a = complex(a)
            if a != 0:
                amps[i] = a
        self.amplitudes = amps

    @classmethod
    def basis(cls, config: ModelConfig, state: BasisState | int) -> "StateVector":
        idx = state if isinstance(state, (int, np.integer)) else encode_state(config, state)
        return cls(config, {int(idx): 1.0})

    def __len__(self):
        return len(self.amplitudes)

    def __repr__(self):
        return f"StateVector(nnz={len(self.amplitudes)}, norm={self.norm():.12g})"

    def amplitude(self, state: BasisState | int) -> complex:
        idx = state if isinstance(state, (int, np.integer)) else encode_state(self.config, state)
        return self.amplitudes.get(int(idx), 0j)

    def norm(self) -> float:
        return math.sqrt(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def normalized(self) -> "StateVector":
        n = self.norm()
        if n == 0:
            raise DegenerateInputError("cannot normalise the zero vector")
        return self.scaled(1.0 / n)

    def scaled(self, alpha: complex) -> "StateVector":
        return StateVector(self.config, {i: alpha * a for i, a in self.amplitudes.items()})

    def __add__(self, other: "StateVector") -> "StateVector":
        _same_config(self, other)
        out = dict(self.amplitudes)
        for i, a in other.amplitudes.items():
            out[i] = out.get(i, 0j) + a
        return StateVector(self.config, out)

    def __sub__(self, other: "StateVector") -> "StateVector":
        return self + other.scaled(-1.0)

    def pruned(self, threshold: float) -> "StateVector":
        return StateVector(
            self.config, {i: a for i, a in self.amplitudes.items() if abs(a) >= threshold}
        )

    def items_sorted(self):
        return sorted(self.amplitudes.items())

    def states(self) -> list[tuple[BasisState, complex]]:
        return [(decode_state(self.config, i), a) for i, a in self.items_sorted()]

    def to_dense(self) -> np.ndarray:
        v = np.zeros(self.config.dimension, dtype=complex)
        for i, a in self.amplitudes.items():
            v[i] = a
        return v

    @classmethod
    def from_dense(cls, config: ModelConfig, v: np.ndarray, threshold: float = 0.0) -> "StateVector":
        nz = np.flatnonzero(np.abs(v) > threshold)
        return cls(config, {int(i): v[i] for i in nz})


def _same_config(u: StateVector, v: StateVector) -> None:
    if u.config != v.config:
        raise DimensionMismatchError(f"config mismatch: {u.config} vs {v.config}")


def make_initial_state(config: ModelConfig, j: int, x: int) -> StateVector:
    """Robot at ``j``, particle at ``x``, blank memories, output ``dn``, computation active."""
    _check("j", j, 0, config.L - 1)
    _check("x", x, 0, config.L - 1)
    return StateVector.basis(config, BasisState(robot=j, particle=x))


def superpose(config: ModelConfig, terms: Iterable[tuple[complex, int, int]]) -> StateVector:
    """Normalised sum of ``c * make_initial_state(j, x)`` over ``(c, j, x)`` terms."""
    acc = {}
    for c, j, x in terms:
        idx = encode_state(config, BasisState(robot=j, particle=x))
        acc[idx] = acc.get(idx, 0j) + complex(c)
    psi = StateVector(config, acc)
    if psi.norm() < 1e-300:
        raise DegenerateInputError("superposition coefficients cancel to the zero vector")
    return psi.normalized()


def inner_product(u: StateVector, v: StateVector) -> complex:
    """<u|v>, conjugate-linear in ``u``."""
    _same_config(u, v)
    ua, va = u.amplitudes, v.amplitudes
    keys = ua.keys() & va.keys()
    return sum((ua[i].conjugate() * va[i] for i in keys), 0j)


def fidelity(u: StateVector, v: StateVector) -> float:
    return abs(inner_product(u, v)) ** 2 / (u.norm() ** 2 * v.norm() ** 2)


def random_state(config: ModelConfig, rng: np.random.Generator, support: int | None = None) -> StateVector:
    """Random unit vector; dense unless ``support`` caps the number of nonzeros."""
    dim = config.dimension
    if support is None or support >= dim:
        idx = np.arange(dim)
    else:
        idx = rng.choice(dim, size=support, replace=False)
    amps = rng.normal(size=idx.size) + 1j * rng.normal(size=idx.size)
    amps /= np.linalg.norm(amps)
    return StateVector(config, dict(zip(idx.tolist(), amps.tolist())))
