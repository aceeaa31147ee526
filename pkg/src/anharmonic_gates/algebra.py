"""Operators on the two-qubit x truncated-Fock Hilbert space.

Basis ordering is Fock-major: the composite index of Fock level ``n`` and
two-qubit basis state ``s`` is ``4 * n + s``.  With numpy's ``kron`` this
means a product operator ``B_fock (x) A_spin`` is stored as
``np.kron(B_fock, A_spin)``.

All operators are dense ``complex128`` arrays.  Arrays returned from this
module are marked read-only so they can be shared between workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
EXACT_TOL = 1e-14

SPIN_DIM = 4

_PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
_ID2 = np.eye(2, dtype=complex)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=complex)
    a.flags.writeable = False
    return a


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(a - a.conj().T)) <= tol)


def is_unitary(a: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    eye = np.eye(a.shape[0])
    return bool(np.max(np.abs(a.conj().T @ a - eye)) <= tol)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


@dataclass(frozen=True)
class HilbertLayout:
    """Composite space of two qubits and ``n_fock`` bus-mode levels."""

    n_fock: int

    def __post_init__(self):
        if int(self.n_fock) != self.n_fock or self.n_fock < 2:
            raise ValueError(f"n_fock must be an integer >= 2, got {self.n_fock!r}")

    @property
    def dim(self) -> int:
        return SPIN_DIM * self.n_fock

    def index(self, n: int, s: int) -> int:
        if not (0 <= n < self.n_fock and 0 <= s < SPIN_DIM):
            raise IndexError(f"basis label (n={n}, s={s}) outside layout")
        return SPIN_DIM * n + s

    def embed(self, spin_op=None, fock_op=None) -> np.ndarray:
        """Return ``fock_op (x) spin_op``; a missing factor is the identity."""
        if spin_op is None:
            spin_op = np.eye(SPIN_DIM)
        if fock_op is None:
            fock_op = np.eye(self.n_fock)
        spin_op = np.asarray(spin_op)
        fock_op = np.asarray(fock_op)
        if spin_op.shape != (SPIN_DIM, SPIN_DIM):
            raise ValueError(f"spin operator must be 4x4, got {spin_op.shape}")
        if fock_op.shape != (self.n_fock, self.n_fock):
            raise ValueError(f"Fock operator must be {self.n_fock}x{self.n_fock}, got {fock_op.shape}")
        return _frozen(np.kron(fock_op, spin_op))


def fock_ops(n_fock: int) -> tuple[np.ndarray, np.ndarray]:
    """Truncated annihilation and creation operators.

    ``a |n> = sqrt(n) |n-1>``; the truncation artifact ``[a, a^dag] != 1`` on
    the top level is left in place.
    """
    if int(n_fock) != n_fock or n_fock < 2:
        raise ValueError(f"n_fock must be an integer >= 2, got {n_fock!r}")
    a = np.diag(np.sqrt(np.arange(1, n_fock, dtype=float)), 1).astype(complex)
    return _frozen(a), _frozen(a.conj().T)


def number_op(n_fock: int) -> np.ndarray:
    return _frozen(np.diag(np.arange(n_fock, dtype=float)))


def spin_sy() -> np.ndarray:
    """Total spin ``S_y = sigma_y (x) 1 + 1 (x) sigma_y`` of the two qubits."""
    return _frozen(np.kron(_PAULI_Y, _ID2) + np.kron(_ID2, _PAULI_Y))


def spin_sy_eigen() -> tuple[np.ndarray, np.ndarray]:
    """Exact eigenvalues ``(-2, 0, 0, 2)`` of ``S_y`` and an orthonormal eigenbasis.

    Columns of the returned matrix are the eigenvectors.  The eigenvalues
    are returned as exact integers rather than the numerically computed ones.
    """
    vals, vecs = np.linalg.eigh(spin_sy())
    exact = np.rint(vals)
    if np.max(np.abs(vals - exact)) > 1e-12:
        raise ArithmeticError("S_y spectrum is not integral")
    return exact, _frozen(vecs)


def sigma_transition(n: int, n_fock: int) -> np.ndarray:
    """Fock-space lowering operator ``|n-1><n|`` of transition ``n``."""
    if not 1 <= n <= n_fock - 1:
        raise ValueError(f"transition index must satisfy 1 <= n <= {n_fock - 1}, got {n}")
    s = np.zeros((n_fock, n_fock), dtype=complex)
    s[n - 1, n] = 1.0
    return s


def transition_ops(n: int, layout: HilbertLayout) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pauli-like triple ``(X_n, Y_n, Z_n)`` of the Fock transition ``n-1 <-> n``.

    ``X_n = (sigma_n + sigma_n^dag) S_y / 2``,
    ``Y_n = i (sigma_n - sigma_n^dag) S_y / 2`` and
    ``Z_n = [sigma_n^dag, sigma_n] S_y^2 / 4``.  They obey
    ``[X_n, Y_n] = 2i Z_n`` and cyclic permutations.
    """
    sig = sigma_transition(n, layout.n_fock)
    sy = spin_sy()
    x = layout.embed(sy, 0.5 * (sig + sig.conj().T))
    y = layout.embed(sy, 0.5j * (sig - sig.conj().T))
    z = layout.embed(sy @ sy, 0.25 * commutator(sig.conj().T, sig))
    return x, y, z


def transition_identity(n: int, layout: HilbertLayout) -> np.ndarray:
    """Unit of the triple's algebra: ``X_n^2 = Y_n^2 = Z_n^2`` equals this."""
    fock = np.zeros((layout.n_fock, layout.n_fock))
    fock[n - 1, n - 1] = fock[n, n] = 1.0
    sy = spin_sy()
    return layout.embed(0.25 * sy @ sy, fock)


def subspace_projector(n_sub: int, layout: HilbertLayout) -> np.ndarray:
    """Fock-space projector onto the lowest ``n_sub`` levels (``n_fock x n_fock``)."""
    if int(n_sub) != n_sub or not 1 <= n_sub <= layout.n_fock:
        raise ValueError(f"n_sub must satisfy 1 <= n_sub <= {layout.n_fock}, got {n_sub!r}")
    p = np.zeros((layout.n_fock, layout.n_fock), dtype=complex)
    p[:n_sub, :n_sub] = np.eye(n_sub)
    return _frozen(p)


def target_gate() -> np.ndarray:
    """Entangling target ``U_T = exp(i pi/8 S_y^2)`` on the two qubits."""
    vals, vecs = spin_sy_eigen()
    phases = np.exp(1j * np.pi / 8 * vals**2)
    return _frozen((vecs * phases) @ vecs.conj().T)
