"""Exact linear algebra on one and two polarization qubits.

Two-qubit vectors and operators use the ordered basis {HH, HV, VH, VV};
Alice is always the first tensor factor.  Angles enter the public API in
degrees.
"""

from __future__ import annotations

import math

import numpy as np

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
DEGENERACY_TOL = 1e-10

BASIS_LABELS = ("HH", "HV", "VH", "VV")


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


class ContractError(ValueError):
    """Raised when an input violates a structural contract (shape, hermiticity...)."""


def _ket(*amplitudes) -> np.ndarray:
    v = np.array(amplitudes, dtype=complex)
    v.setflags(write=False)
    return v


_S = 1 / math.sqrt(2)

H = _ket(1, 0)
V = _ket(0, 1)
PLUS = _ket(_S, _S)
MINUS = _ket(_S, -_S)
R = _ket(_S, 1j * _S)
L = _ket(_S, -1j * _S)

I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _check_angle(theta: float) -> float:
    theta = float(theta)
    if not 0.0 < theta < 90.0:
        raise DomainError(f"theta must lie in (0, 90) degrees, got {theta}")
    return math.radians(theta)


def target_state(theta: float) -> np.ndarray:
    """Return cos(theta)|HV> - sin(theta)|VH> for ``theta`` in degrees."""
    t = _check_angle(theta)
    return _ket(0, math.cos(t), -math.sin(t), 0)


def orthogonal_state(theta: float) -> np.ndarray:
    """Return sin(theta)|HV> + cos(theta)|VH>.

    This is the unique (up to phase) unit vector orthogonal to the target
    state, |HH> and |VV>.
    """
    t = _check_angle(theta)
    return _ket(0, math.sin(t), math.cos(t), 0)


def basis_state(label: str) -> np.ndarray:
    """Computational basis ket for a label such as ``"HV"``."""
    try:
        idx = BASIS_LABELS.index(label)
    except ValueError:
        raise DomainError(f"unknown basis label {label!r}") from None
    v = np.zeros(4, dtype=complex)
    v[idx] = 1
    return v


def upsilon(theta: float, sign: int) -> np.ndarray:
    """sin(theta)|H> -/+ cos(theta)|V>; ``sign=+1`` gives the minus combination."""
    t = math.radians(theta)
    return _ket(math.sin(t), -sign * math.cos(t))


def omega(theta: float, sign: int) -> np.ndarray:
    """sin(theta)|H> +/- i cos(theta)|V>."""
    t = math.radians(theta)
    return _ket(math.sin(t), sign * 1j * math.cos(t))


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with ``a`` as Alice's (first) factor."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.ndim != b.ndim:
        raise ContractError("tensor operands must both be kets or both be operators")
    return np.kron(a, b)


def projector(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.max(np.abs(a - a.conj().T)) <= tol


def check_state(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.ndim != 1 or v.shape[0] not in (2, 4):
        raise ContractError(f"state must be a 2- or 4-vector, got shape {v.shape}")
    if abs(np.linalg.norm(v) - 1) > NORM_TOL:
        raise ContractError(f"state is not normalized (norm {np.linalg.norm(v)!r})")
    return v


def check_density(rho: np.ndarray) -> np.ndarray:
    """Validate a 4x4 density matrix and return it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ContractError(f"density matrix must be 4x4, got {rho.shape}")
    if not is_hermitian(rho):
        raise ContractError("density matrix is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1) > TRACE_TOL:
        raise ContractError(f"density matrix trace is {tr!r}, expected 1")
    if np.linalg.eigvalsh(rho).min() < -PSD_TOL:
        raise ContractError("density matrix has a negative eigenvalue")
    return rho


def eigh(op: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Returns ``(w, vecs)`` where ``vecs[:, i]`` is the eigenvector for
    ``w[i]``.  Within each degenerate group (spread below
    ``DEGENERACY_TOL``) the vectors are re-orthonormalized with a QR step so
    that the returned basis is orthonormal to working precision.
    """
    op = np.asarray(op, dtype=complex)
    if not is_hermitian(op):
        raise ContractError("eigh requires a Hermitian matrix")
    w, vecs = np.linalg.eigh((op + op.conj().T) / 2)
    order = np.argsort(-w, kind="stable")
    w = w[order]
    vecs = vecs[:, order]

    start = 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[start] - w[i] > DEGENERACY_TOL:
            if i - start > 1:
                q, _ = np.linalg.qr(vecs[:, start:i])
                vecs[:, start:i] = q
            start = i
    return w, vecs


def expectation(op: np.ndarray, sigma: np.ndarray) -> float:
    """tr(op @ sigma) with the (numerically zero) imaginary part dropped."""
    return float(np.real(np.trace(np.asarray(op) @ np.asarray(sigma))))


def fidelity(sigma: np.ndarray, psi: np.ndarray) -> float:
    """<psi|sigma|psi> for a density matrix and a pure state."""
    return expectation(projector(psi), sigma)


def partial_inner(leader_vec: np.ndarray, psi: np.ndarray, leader: str = "A") -> np.ndarray:
    """Contract one party of a two-qubit ket with a single-qubit bra.

    Returns the (unnormalized) ket left on the other party, i.e.
    ``(<leader_vec| x I) |psi>`` for ``leader="A"``.
    """
    m = np.asarray(psi, dtype=complex).reshape(2, 2)
    bra = np.asarray(leader_vec, dtype=complex).conj()
    if leader == "A":
        return bra @ m
    if leader == "B":
        return m @ bra
    raise DomainError(f"leader must be 'A' or 'B', got {leader!r}")
