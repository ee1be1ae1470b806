"""Dense Hamiltonian ``H = K(2I - T - T^dagger)`` for small unitary step operators."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, PreconditionError, SizeLimitError
from .hilbert import ModelConfig, StateVector
from .operators import StepOperator

DENSE_LIMIT = 4096


class HermitianOperator:
    """Dense Hermitian matrix with a lazily cached eigendecomposition."""

    def __init__(self, config: ModelConfig, entries: np.ndarray, scale: float):
        self.config = config
        self.entries = entries
        self.scale = scale
        self._eig = None

    @property
    def dimension(self) -> int:
        return self.entries.shape[0]

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        if self._eig is None:
            self._eig = np.linalg.eigh(self.entries)
        return self._eig

    def eigenvalues(self) -> np.ndarray:
        return self.eigh()[0]

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0))


def build_hamiltonian(T: StepOperator, K: float = 1.0) -> HermitianOperator:
    if not K > 0 or not math.isfinite(K):
        raise PreconditionError(f"K must be a positive real, got {K!r}")
    d = T.dimension
    if d > DENSE_LIMIT:
        raise SizeLimitError(f"dimension {d} exceeds the dense limit {DENSE_LIMIT}")
    t = T.to_dense()
    h = K * (2.0 * np.eye(d) - t - t.conj().T)
    return HermitianOperator(T.config, h, K)


def evolve_continuous(H: HermitianOperator, t: float, psi: StateVector) -> StateVector:
    """``exp(-iHt) psi`` via the eigendecomposition of ``H``."""
    if psi.config != H.config:
        raise DimensionMismatchError(f"config mismatch: {H.config} vs {psi.config}")
    if t == 0:
        return psi
    w, V = H.eigh()
    v = psi.to_dense()
    out = V @ (np.exp(-1j * w * t) * (V.conj().T @ v))
    return StateVector.from_dense(psi.config, out)


def propagator(H: HermitianOperator, t: float) -> np.ndarray:
    w, V = H.eigh()
    return (V * np.exp(-1j * w * t)) @ V.conj().T


@dataclass(frozen=True)
class SpectralReport:
    passed: bool
    max_error: float
    min_eigenvalue: float
    tol: float
    psd_tol: float

    def summary(self) -> dict:
        return {
            "check": "spectrum",
            "pass": self.passed,
            "max_error": self.max_error,
            "min_eigenvalue": self.min_eigenvalue,
        }


def predicted_spectrum(T: StepOperator, K: float) -> np.ndarray:
    """Sorted ``2K(1 - cos theta)`` over the eigenphases of ``T``."""
    theta = np.angle(np.linalg.eigvals(T.to_dense()))
    return np.sort(2.0 * K * (1.0 - np.cos(theta)))


def spectral_check(H: HermitianOperator, T: StepOperator, tol: float = 1e-8, psd_tol: float = 1e-10) -> SpectralReport:
    lam = np.sort(H.eigenvalues())
    pred = predicted_spectrum(T, H.scale)
    lo = float(lam.min()) if lam.size else 0.0
    if lam.shape != pred.shape:
        return SpectralReport(False, math.inf, lo, tol, psd_tol)
    err = float(np.max(np.abs(lam - pred), initial=0.0))
    return SpectralReport(err <= tol and lo >= -psd_tol, err, lo, tol, psd_tol)


def spectrum_csv(H: HermitianOperator) -> str:
    lines = ["eigenvalue"]
    # round away last-bit noise so the file is reproducible
    lines += [f"{(0.0 if abs(x) < 1e-12 else x):.12g}" for x in np.sort(H.eigenvalues())]
    return "\n".join(lines) + "\n"
