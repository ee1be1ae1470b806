"""Sparse column-stored operators over the composite basis.

Every operator here is a permutation, possibly edited by disjoint 2x2 rotations,
so a column holds at most two entries and application costs O(nnz).
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import BijectionError, DimensionMismatchError, PreconditionError
from .hilbert import ModelConfig, StateVector

PRUNE_THRESHOLD = 1e-15

Column = tuple[tuple[int, complex], ...]


class StepOperator:
    """Sparse operator stored by columns: input index -> ((output index, amplitude), ...).

    Inputs absent from ``columns`` are zero columns.
    """

    __slots__ = ("config", "columns", "_perm")

    def __init__(self, config: ModelConfig, columns: Mapping[int, Iterable[tuple[int, complex]]]):
        self.config = config
        self.columns: dict[int, Column] = {
            int(i): tuple((int(o), complex(a)) for o, a in col if a != 0) for i, col in columns.items()
        }
        self._perm = None

    @property
    def dimension(self) -> int:
        return self.config.dimension

    def __repr__(self):
        return f"StepOperator(D={self.dimension}, nnz={self.nnz()})"

    def nnz(self) -> int:
        return sum(len(c) for c in self.columns.values())

    def column(self, i: int) -> Column:
        return self.columns.get(int(i), ())

    def entry(self, out: int, inp: int) -> complex:
        for o, a in self.column(inp):
            if o == out:
                return a
        return 0j

    def entries(self):
        """Yield ``(input, output, amplitude)`` for every stored entry, in input order."""
        for i in sorted(self.columns):
            for o, a in self.columns[i]:
                yield i, o, a

    def as_permutation(self) -> np.ndarray | None:
        """The index map if every column is a single unit entry, else None."""
        if self._perm is None:
            d = self.dimension
            if len(self.columns) != d:
                self._perm = False
            else:
                perm = np.empty(d, dtype=np.int64)
                for i, col in self.columns.items():
                    if len(col) != 1 or col[0][1] != 1:
                        self._perm = False
                        break
                    perm[i] = col[0][0]
                else:
                    self._perm = perm
        return None if self._perm is False else self._perm

    def to_dense(self) -> np.ndarray:
        d = self.dimension
        m = np.zeros((d, d), dtype=complex)
        for i, col in self.columns.items():
            for o, a in col:
                m[o, i] += a
        return m

    def equals(self, other: "StepOperator", tol: float = 0.0) -> bool:
        """Entrywise comparison; ``tol=0`` demands exact equality."""
        if self.config != other.config:
            return False
        keys = set(self.columns) | set(other.columns)
        for i in keys:
            a = dict(self.column(i))
            b = dict(other.column(i))
            for o in a.keys() | b.keys():
                if abs(a.get(o, 0j) - b.get(o, 0j)) > tol:
                    return False
        return True


def _same_dim(a, b):
    if a.config != b.config:
        raise DimensionMismatchError(f"dimension mismatch: {a.config} vs {b.config}")


def identity(config: ModelConfig) -> StepOperator:
    return from_permutation(config, np.arange(config.dimension))


def from_permutation(config: ModelConfig, pi: Mapping[int, int] | Sequence[int] | np.ndarray) -> StepOperator:
    """Unitary realising the index map ``pi``; raises BijectionError on any collision."""
    d = config.dimension
    if isinstance(pi, Mapping):
        missing = [i for i in range(d) if i not in pi]
        if missing:
            raise BijectionError(f"map is not total: input {missing[0]} has no image")
        arr = np.fromiter((pi[i] for i in range(d)), dtype=np.int64, count=d)
    else:
        arr = np.asarray(pi, dtype=np.int64)
        if arr.shape != (d,):
            raise DimensionMismatchError(f"permutation has length {arr.size}, expected {d}")
    if arr.min(initial=0) < 0 or arr.max(initial=0) >= d:
        raise BijectionError("map leaves the index range")
    order = np.argsort(arr, kind="stable")
    sorted_out = arr[order]
    dup = np.flatnonzero(sorted_out[1:] == sorted_out[:-1])
    if dup.size:
        k = dup[0]
        pair = (int(order[k]), int(order[k + 1]))
        raise BijectionError(
            f"inputs {pair[0]} and {pair[1]} both map to {int(sorted_out[k])}",
            pair=pair,
            target=int(sorted_out[k]),
        )
    op = StepOperator.__new__(StepOperator)
    op.config = config
    op.columns = {i: ((int(o), 1 + 0j),) for i, o in enumerate(arr.tolist())}
    op._perm = arr
    return op


def apply(op: StepOperator, v: StateVector, prune: float = PRUNE_THRESHOLD) -> StateVector:
    _same_dim(op, v)
    acc: dict[int, complex] = defaultdict(complex)
    cols = op.columns
    for i, a in v.amplitudes.items():
        for o, t in cols.get(i, ()):
            acc[o] += t * a
    w = StateVector.__new__(StateVector)
    w.config = v.config
    w.amplitudes = {o: a for o, a in acc.items() if abs(a) >= prune and a != 0}
    return w


def adjoint(op: StepOperator) -> StepOperator:
    rows: dict[int, list] = defaultdict(list)
    for i, col in op.columns.items():
        for o, a in col:
            rows[o].append((i, a.conjugate()))
    return StepOperator(op.config, rows)


def compose(a: StepOperator, b: StepOperator) -> StepOperator:
    """The product ``a @ b`` (apply ``b`` first)."""
    _same_dim(a, b)
    cols = {}
    for i, col in b.columns.items():
        acc: dict[int, complex] = defaultdict(complex)
        for m, t in col:
            for o, s in a.columns.get(m, ()):
                acc[o] += s * t
        cols[i] = [(o, x) for o, x in sorted(acc.items()) if x != 0]
    return StepOperator(a.config, cols)


def add(a: StepOperator, b: StepOperator) -> StepOperator:
    _same_dim(a, b)
    cols = {}
    for i in set(a.columns) | set(b.columns):
        acc: dict[int, complex] = defaultdict(complex)
        for o, x in a.column(i) + b.column(i):
            acc[o] += x
        cols[i] = sorted(acc.items())
    return StepOperator(a.config, cols)


def restrict_inputs(op: StepOperator, keep) -> StepOperator:
    """Operator ``op @ P`` where ``P`` projects onto the inputs for which ``keep(index)`` holds."""
    return StepOperator(op.config, {i: c for i, c in op.columns.items() if keep(i)})


@dataclass(frozen=True)
class UnitarityReport:
    max_column_norm_error: float
    max_offdiag_overlap: float
    tol: float
    worst_column: int | None = None
    worst_pair: tuple[int, int] | None = None

    @property
    def passed(self) -> bool:
        return self.max_column_norm_error <= self.tol and self.max_offdiag_overlap <= self.tol


def check_unitary(op: StepOperator, tol: float = 1e-12) -> UnitarityReport:
    """Exhaustive column orthonormality over stored entries.

    Off-diagonal overlaps are only nonzero between columns that share a row, so
    pairs are enumerated through a row -> columns index.
    """
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    d = op.dimension
    worst_norm, worst_col = 0.0, None
    rows: dict[int, list[int]] = defaultdict(list)
    for i in range(d):
        col = op.columns.get(i, ())
        err = abs(math.sqrt(sum(abs(a) ** 2 for _, a in col)) - 1.0)
        if err > worst_norm:
            worst_norm, worst_col = err, i
        for o, _ in col:
            rows[o].append(i)
    worst_ov, worst_pair = 0.0, None
    seen = set()
    for cols in rows.values():
        if len(cols) < 2:
            continue
        for x in range(len(cols)):
            for y in range(x + 1, len(cols)):
                p, q = cols[x], cols[y]
                key = (p, q) if p < q else (q, p)
                if key in seen:
                    continue
                seen.add(key)
                cp = dict(op.columns[p])
                ov = abs(sum(cp.get(o, 0j).conjugate() * a for o, a in op.columns[q]))
                if ov > worst_ov:
                    worst_ov, worst_pair = ov, key
    return UnitarityReport(worst_norm, worst_ov, tol, worst_col, worst_pair)


def rotate_columns(op: StepOperator, u1: int, u2: int, phi: float) -> StepOperator:
    """Replace columns c1, c2 by (cos φ c1 + sin φ c2, -sin φ c1 + cos φ c2)."""
    return rotate_column_pairs(op, [(u1, u2)], phi)


def rotate_column_pairs(op: StepOperator, pairs: Iterable[tuple[int, int]], phi: float) -> StepOperator:
    """Apply :func:`rotate_columns` to many disjoint column pairs in one pass."""
    c, s = math.cos(phi), math.sin(phi)
    cols = dict(op.columns)
    touched = set()
    for u1, u2 in pairs:
        u1, u2 = int(u1), int(u2)
        if u1 == u2:
            raise PreconditionError(f"rotation needs two distinct columns, got {u1} twice")
        if u1 in touched or u2 in touched:
            raise PreconditionError(f"column pairs overlap at ({u1}, {u2})")
        touched.update((u1, u2))
        c1 = dict(op.column(u1))
        c2 = dict(op.column(u2))
        rows = sorted(c1.keys() | c2.keys())
        cols[u1] = tuple((o, c * c1.get(o, 0j) + s * c2.get(o, 0j)) for o in rows)
        cols[u2] = tuple((o, -s * c1.get(o, 0j) + c * c2.get(o, 0j)) for o in rows)
    return StepOperator(op.config, cols)


def power(op: StepOperator, n: int) -> StepOperator:
    if n < 0:
        raise PreconditionError("power needs n >= 0")
    result = identity(op.config)
    base = op
    while n:
        if n & 1:
            result = compose(base, result)
        n >>= 1
        if n:
            base = compose(base, base)
    return result
