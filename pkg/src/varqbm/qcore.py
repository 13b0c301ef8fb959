"""Dense linear algebra, Pauli algebra and exact classical oracles.

Conventions
-----------
Qubit 0 is the leftmost letter of a Pauli word and the most significant bit
of a computational-basis index. States are plain complex ``numpy`` arrays:
a state vector has shape ``(2**n,)`` and a density matrix ``(2**n, 2**n)``.
The ``check_*`` helpers validate them in the spirit of
``sklearn.utils.check_array``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class PauliParseError(ValueError):
    """Raised when a Hamiltonian description contains an invalid token."""


def _n_qubits_of(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if n < 0 or 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


# --------------------------------------------------------------------------
# Pauli algebra
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PauliString:
    """A tensor product of single-qubit Paulis, e.g. ``PauliString("ZI")``."""

    word: str

    def __post_init__(self):
        word = str(self.word).upper()
        if not word:
            raise PauliParseError("empty Pauli word")
        bad = [ch for ch in word if ch not in PAULI_MATRICES]
        if bad:
            raise PauliParseError(f"invalid Pauli word {self.word!r}: bad letter {bad[0]!r}")
        object.__setattr__(self, "word", word)

    @property
    def n_qubits(self) -> int:
        return len(self.word)

    def support(self) -> tuple[int, ...]:
        return tuple(i for i, ch in enumerate(self.word) if ch != "I")

    def padded(self, n_qubits: int) -> "PauliString":
        """Extend with identities on trailing qubits."""
        if n_qubits < self.n_qubits:
            raise ValueError("cannot shrink a Pauli word")
        return PauliString(self.word + "I" * (n_qubits - self.n_qubits))

    def to_matrix(self) -> np.ndarray:
        return pauli_to_matrix(self)

    def __str__(self):
        return self.word


def pauli_to_matrix(p: PauliString | str) -> np.ndarray:
    """Kronecker expansion of a Pauli word in qubit order."""
    if not isinstance(p, PauliString):
        p = PauliString(p)
    return reduce(np.kron, (PAULI_MATRICES[ch] for ch in p.word))


def apply_pauli(p: PauliString | str, psi: np.ndarray) -> np.ndarray:
    """Apply a Pauli word to a state (or a batch of states along axis 0)
    without building the dense matrix."""
    if not isinstance(p, PauliString):
        p = PauliString(p)
    n = p.n_qubits
    batched = psi.ndim == 2
    out = psi.reshape((-1,) + (2,) * n) if batched else psi.reshape((2,) * n)
    off = 1 if batched else 0
    for q, ch in enumerate(p.word):
        if ch == "I":
            continue
        out = np.tensordot(PAULI_MATRICES[ch], out, axes=([1], [q + off]))
        out = np.moveaxis(out, 0, q + off)
    return out.reshape(psi.shape)


@dataclass(frozen=True)
class PauliSum:
    """Real-weighted sum of Pauli words, ``H = sum_i coeff_i * word_i``."""

    terms: tuple[tuple[float, PauliString], ...]

    def __post_init__(self):
        terms = []
        for coeff, word in self.terms:
            if not isinstance(word, PauliString):
                word = PauliString(word)
            coeff = float(coeff)
            if not np.isfinite(coeff):
                raise ValueError(f"non-finite coefficient {coeff} on term {word}")
            terms.append((coeff, word))
        if not terms:
            raise ValueError("PauliSum needs at least one term")
        widths = {w.n_qubits for _, w in terms}
        if len(widths) != 1:
            raise ValueError(f"Pauli words of mixed length: {sorted(widths)}")
        object.__setattr__(self, "terms", tuple(terms))

    @classmethod
    def from_terms(cls, terms: Iterable) -> "PauliSum":
        """Build from ``(word, coeff)`` or ``(coeff, word)`` pairs."""
        out = []
        for a, b in terms:
            if isinstance(a, (str, PauliString)):
                a, b = b, a
            out.append((a, b))
        return cls(tuple(out))

    @classmethod
    def from_template(cls, words: Sequence[str | PauliString], theta) -> "PauliSum":
        theta = np.asarray(theta, dtype=float).ravel()
        if len(words) != len(theta):
            raise ValueError(f"{len(words)} words but {len(theta)} coefficients")
        return cls(tuple(zip(theta, words)))

    @classmethod
    def parse(cls, text: str) -> "PauliSum":
        """Parse strings like ``"1.0 ZZ - 0.2 ZI + 0.3*XI"``."""
        # split on signs that are not part of an exponent
        pieces = re.split(r"(?<![eE])([+-])", text)
        terms = []
        sign = 1.0
        for piece in pieces:
            if piece in ("+", "-"):
                sign = -sign if piece == "-" else sign
                continue
            tokens = piece.replace("*", " ").split()
            if not tokens:
                continue
            coeff = 1.0
            if len(tokens) == 2:
                try:
                    coeff = float(tokens[0])
                except ValueError:
                    raise PauliParseError(f"invalid Hamiltonian token {tokens[0]!r}") from None
                tokens = tokens[1:]
            if len(tokens) != 1:
                raise PauliParseError(f"cannot parse Hamiltonian term {piece.strip()!r}")
            if not re.fullmatch(r"[IXYZixyz]+", tokens[0]):
                raise PauliParseError(f"invalid Hamiltonian token {tokens[0]!r}")
            terms.append((sign * coeff, PauliString(tokens[0])))
            sign = 1.0
        if not terms:
            raise PauliParseError(f"no terms found in {text!r}")
        return cls(tuple(terms))

    @property
    def n_qubits(self) -> int:
        return self.terms[0][1].n_qubits

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([c for c, _ in self.terms])

    @property
    def words(self) -> list[PauliString]:
        return [w for _, w in self.terms]

    def with_coefficients(self, theta) -> "PauliSum":
        return PauliSum.from_template(self.words, theta)

    def padded(self, n_qubits: int) -> "PauliSum":
        """Embed on the leading qubits of a larger register (``H ⊗ I``)."""
        return PauliSum(tuple((c, w.padded(n_qubits)) for c, w in self.terms))

    def to_matrix(self) -> np.ndarray:
        dim = 2**self.n_qubits
        out = np.zeros((dim, dim), dtype=complex)
        for c, w in self.terms:
            out += c * pauli_to_matrix(w)
        return out

    def apply(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(psi, dtype=complex)
        for c, w in self.terms:
            if c != 0.0:
                out += c * apply_pauli(w, psi)
        return out

    def __str__(self):
        return " ".join(f"{c:+g} {w}" for c, w in self.terms)


# --------------------------------------------------------------------------
# validation helpers
# --------------------------------------------------------------------------


def check_state_vector(psi, atol: float = 1e-10) -> np.ndarray:
    """Validate a normalized state vector and return it as a complex array."""
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise ValueError(f"state vector must be 1-D, got shape {psi.shape}")
    _n_qubits_of(psi.size)
    if not np.all(np.isfinite(psi)):
        raise ValueError("state vector has non-finite amplitudes")
    norm = np.vdot(psi, psi).real
    if abs(norm - 1.0) > atol:
        raise ValueError(f"state vector is not normalized (norm² = {norm:.3e})")
    return psi


def check_density_matrix(rho, atol: float = 1e-10, eig_tol: float = 1e-9) -> np.ndarray:
    """Validate Hermiticity, unit trace and positivity of ``rho``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    _n_qubits_of(rho.shape[0])
    if not np.all(np.isfinite(rho)):
        raise ValueError("density matrix has non-finite entries")
    if np.max(np.abs(rho - rho.conj().T)) > atol:
        raise ValueError("density matrix is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > atol:
        raise ValueError(f"density matrix trace is {tr:.12g}, expected 1")
    if np.linalg.eigvalsh(rho).min() < -eig_tol:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def n_qubits(obj) -> int:
    """Number of qubits of a state vector, density matrix or operator."""
    return _n_qubits_of(np.shape(obj)[0])


def basis_state(bits: str | Sequence[int]) -> np.ndarray:
    bits = "".join(str(int(b)) for b in bits)
    psi = np.zeros(2 ** len(bits), dtype=complex)
    psi[int(bits, 2)] = 1.0
    return psi


def zero_state(n: int) -> np.ndarray:
    return basis_state("0" * n)


def bell_pairs(n: int) -> np.ndarray:
    """|φ+>^{⊗n} with qubit j of subsystem a paired to qubit n+j of b."""
    dim = 2**n
    psi = np.zeros(dim * dim, dtype=complex)
    idx = np.arange(dim)
    psi[idx * dim + idx] = 1.0 / np.sqrt(dim)
    return psi


def pure_density(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


# --------------------------------------------------------------------------
# exact oracles
# --------------------------------------------------------------------------


def hermitian_eig(m, atol: float = 1e-10):
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    if np.max(np.abs(m - m.conj().T)) > atol * scale:
        raise ValueError("matrix is not Hermitian")
    return np.linalg.eigh(0.5 * (m + m.conj().T))


def _as_matrix(h) -> np.ndarray:
    if isinstance(h, PauliSum):
        return h.to_matrix()
    return np.asarray(h, dtype=complex)


def exact_gibbs(h, kbt: float = 1.0) -> np.ndarray:
    """Thermal state ``exp(-H/kbt) / Z`` of a Hamiltonian.

    Parameters
    ----------
    h : PauliSum or ndarray
        Hermitian Hamiltonian.
    kbt : float
        Boltzmann constant times temperature, must be positive.
    """
    if not kbt > 0:
        raise ValueError(f"kbt must be positive, got {kbt}")
    hm = _as_matrix(h)
    if not np.all(np.isfinite(hm)):
        raise ValueError("Hamiltonian has non-finite entries")
    energies, vecs = hermitian_eig(hm)
    weights = np.exp(-(energies - energies.min()) / kbt)
    weights /= weights.sum()
    rho = (vecs * weights) @ vecs.conj().T
    return 0.5 * (rho + rho.conj().T)


def gibbs_batch(hs: np.ndarray, kbt: float = 1.0) -> np.ndarray:
    """Vectorized :func:`exact_gibbs` over a stack of Hermitian matrices."""
    energies, vecs = np.linalg.eigh(hs)
    w = np.exp(-(energies - energies.min(axis=-1, keepdims=True)) / kbt)
    w /= w.sum(axis=-1, keepdims=True)
    return np.einsum("...ik,...k,...jk->...ij", vecs, w, vecs.conj())


def exact_ite(psi0, h, tau: float) -> np.ndarray:
    """Normalized imaginary-time evolution ``C(τ) exp(-Hτ) |ψ0>``."""
    if tau < 0:
        raise ValueError(f"imaginary time must be nonnegative, got {tau}")
    psi0 = check_state_vector(psi0)
    energies, vecs = hermitian_eig(_as_matrix(h))
    coeffs = vecs.conj().T @ psi0
    # shift by the ground energy so large τ does not underflow
    out = vecs @ (np.exp(-(energies - energies.min()) * tau) * coeffs)
    norm = np.linalg.norm(out)
    if norm == 0.0:
        raise ValueError("evolved state vanished")
    return out / norm


def partial_trace(rho, keep: Iterable[int]) -> np.ndarray:
    """Reduced density matrix on the qubits in ``keep`` (kept in ascending order)."""
    rho = np.asarray(rho, dtype=complex)
    n = n_qubits(rho)
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep set must be nonempty")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"keep indices {keep} out of range for {n} qubits")
    drop = [q for q in range(n) if q not in keep]
    t = rho.reshape((2,) * (2 * n))
    perm = keep + drop + [n + q for q in keep] + [n + q for q in drop]
    dk, dd = 2 ** len(keep), 2 ** len(drop)
    t = t.transpose(perm).reshape(dk, dd, dk, dd)
    return np.einsum("ajbj->ab", t)


def reduced_state(psi, keep: Iterable[int]) -> np.ndarray:
    """Partial trace of the pure state ``|ψ><ψ|`` without forming it."""
    psi = np.asarray(psi, dtype=complex)
    n = n_qubits(psi)
    keep = sorted(set(int(k) for k in keep))
    if not keep or keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"invalid keep set {keep} for {n} qubits")
    drop = [q for q in range(n) if q not in keep]
    m = psi.reshape((2,) * n).transpose(keep + drop).reshape(2 ** len(keep), -1)
    return m @ m.conj().T


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T


def fidelity(a, b) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(a) b sqrt(a)))**2``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    sa = _psd_sqrt(a)
    vals = np.linalg.eigvalsh(sa @ b @ sa)
    f = np.sum(np.sqrt(np.clip(vals, 0.0, None))) ** 2
    return float(np.clip(f, 0.0, 1.0))
