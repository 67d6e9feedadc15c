"""Dense symmetric linear algebra: eigendecomposition, norms, effective rank."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DegenerateMatrixError(ValueError):
    """Raised when an operation needs a nonzero / positive-trace matrix."""


class EigenConvergenceError(RuntimeError):
    """Eigendecomposition failed to converge; carries the offending matrix's scale."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SymmetricMatrix:
    """A real symmetric p x p matrix. Storage is symmetrized on construction."""

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if a.shape[0] < 1:
            raise ValueError("dimension must be at least 1")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        object.__setattr__(self, "entries", _readonly((a + a.T) / 2.0))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_diagonal(cls, values) -> "SymmetricMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @classmethod
    def identity(cls, p: int) -> "SymmetricMatrix":
        return cls(np.eye(p))

    def scaled(self, c: float) -> "SymmetricMatrix":
        return SymmetricMatrix(c * self.entries)

    def add_scaled_identity(self, c: float) -> "SymmetricMatrix":
        return SymmetricMatrix(self.entries + c * np.eye(self.dim))

    def minus(self, other: "SymmetricMatrix") -> "SymmetricMatrix":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return SymmetricMatrix(self.entries - other.entries)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues in descending order with the matching orthonormal eigenvectors.

    Column k of ``eigenvectors`` pairs with ``eigenvalues[k]``.
    """

    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _readonly(self.eigenvalues))
        object.__setattr__(self, "eigenvectors", _readonly(self.eigenvectors))

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T

    def vector(self, k: int) -> np.ndarray:
        """Eigenvector for the k-th largest eigenvalue, 1-indexed."""
        if not 1 <= k <= self.dim:
            raise IndexError(f"k={k} outside 1..{self.dim}")
        return self.eigenvectors[:, k - 1]


def eigh(m: SymmetricMatrix) -> SpectralDecomposition:
    """Full eigendecomposition of a symmetric matrix, eigenvalues descending.

    Deterministic for a fixed input; ties keep the backend's (reversed
    ascending) order.
    """
    try:
        w, v = np.linalg.eigh(m.entries)
    except np.linalg.LinAlgError as exc:
        raise EigenConvergenceError(
            f"eigendecomposition did not converge for dim={m.dim}: {exc}",
            residual=float(np.abs(m.entries).max()),
        ) from exc
    return SpectralDecomposition(w[::-1], v[:, ::-1])


def trace(m: SymmetricMatrix) -> float:
    return float(np.trace(m.entries))


def frobenius_norm(m: SymmetricMatrix) -> float:
    return float(np.linalg.norm(m.entries, "fro"))


def operator_norm(m: SymmetricMatrix) -> float:
    """Spectral norm, i.e. the largest eigenvalue magnitude."""
    w = np.linalg.eigvalsh(m.entries)
    return float(max(abs(w[0]), abs(w[-1])))


def effective_rank(m: SymmetricMatrix) -> float:
    """trace / operator norm; lies in [1, p] for a nonzero PSD matrix."""
    t = trace(m)
    if t <= 0:
        raise DegenerateMatrixError(f"effective rank needs trace > 0, got {t}")
    op = operator_norm(m)
    if op == 0:
        raise DegenerateMatrixError("effective rank undefined for the zero matrix")
    return t / op


def align_sign(estimated: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Flip ``estimated`` so its inner product with ``reference`` is >= 0.

    An exactly-zero inner product returns the input unchanged.
    """
    estimated = np.asarray(estimated, dtype=float)
    if float(estimated @ np.asarray(reference, dtype=float)) < 0.0:
        return -estimated
    return estimated
