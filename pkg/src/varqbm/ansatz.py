"""Parameterized circuits built from Pauli rotations, with exact derivatives.

A :class:`Circuit` is an ordered gate list acting on ``n_qubits``. Every
trainable parameter is carried by exactly one :class:`PauliRotation`, so
``d/dω_k R_σ(ω_k) = -(i/2) σ R_σ(ω_k)`` and derivative states are obtained by
inserting ``-(i/2) σ`` right after that gate. All derivative orders are
propagated together as one batch of branch states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .qcore import PAULI_MATRICES, check_state_vector, zero_state

AXES = ("X", "Y", "Z")


def rotation_matrix(axis: str, angle: float) -> np.ndarray:
    """``exp(-i angle σ / 2)``."""
    return np.cos(angle / 2) * PAULI_MATRICES["I"] - 1j * np.sin(angle / 2) * PAULI_MATRICES[axis]


def _apply_1q(states: np.ndarray, n: int, target: int, u: np.ndarray) -> np.ndarray:
    b = states.shape[0]
    t = states.reshape(b, 2**target, 2, 2 ** (n - target - 1))
    out = np.empty_like(t)
    out[:, :, 0, :] = u[0, 0] * t[:, :, 0, :] + u[0, 1] * t[:, :, 1, :]
    out[:, :, 1, :] = u[1, 0] * t[:, :, 0, :] + u[1, 1] * t[:, :, 1, :]
    return out.reshape(b, -1)


# --------------------------------------------------------------------------
# gates
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PauliRotation:
    """Trainable ``R_axis(ω[param])`` on one qubit."""

    axis: str
    target: int
    param: int

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"rotation axis must be one of {AXES}, got {self.axis!r}")

    @property
    def qubits(self):
        return (self.target,)

    def matrix(self, omega) -> np.ndarray:
        return rotation_matrix(self.axis, omega[self.param])

    def apply(self, states, n, omega):
        return _apply_1q(states, n, self.target, self.matrix(omega))

    def insert(self, states, n):
        """Multiply by ``-(i/2) σ`` on the target (the derivative generator)."""
        return _apply_1q(states, n, self.target, -0.5j * PAULI_MATRICES[self.axis])


@dataclass(frozen=True)
class FixedRotation:
    axis: str
    target: int
    angle: float

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"rotation axis must be one of {AXES}, got {self.axis!r}")

    @property
    def qubits(self):
        return (self.target,)

    def apply(self, states, n, omega):
        return _apply_1q(states, n, self.target, rotation_matrix(self.axis, self.angle))


_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


@dataclass(frozen=True)
class Hadamard:
    target: int

    @property
    def qubits(self):
        return (self.target,)

    def apply(self, states, n, omega):
        return _apply_1q(states, n, self.target, _HADAMARD)


@dataclass(frozen=True)
class ControlledNot:
    control: int
    target: int

    @property
    def qubits(self):
        return (self.control, self.target)

    def apply(self, states, n, omega):
        t = states.reshape((states.shape[0],) + (2,) * n).copy()
        sel = [slice(None)] * (n + 1)
        sel[self.control + 1] = 1
        sel = tuple(sel)
        # target axis shifts down by one when the control axis precedes it
        axis = self.target + (0 if self.target < self.control else -1)
        t[sel] = np.flip(t[sel], axis=axis + 1)
        return t.reshape(states.shape)


@dataclass(frozen=True)
class ControlledZ:
    control: int
    target: int

    @property
    def qubits(self):
        return (self.control, self.target)

    def apply(self, states, n, omega):
        t = states.reshape((states.shape[0],) + (2,) * n).copy()
        sel = [slice(None)] * (n + 1)
        sel[self.control + 1] = 1
        sel[self.target + 1] = 1
        t[tuple(sel)] *= -1
        return t.reshape(states.shape)


Gate = PauliRotation | FixedRotation | Hadamard | ControlledNot | ControlledZ


# --------------------------------------------------------------------------
# circuits
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Circuit:
    """``V(ω) = U_G ... U_1`` on ``n_qubits`` with ``n_params`` trainable angles."""

    n_qubits: int
    n_params: int
    gates: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.n_qubits < 1:
            raise ValueError("a circuit needs at least one qubit")
        owner = [None] * self.n_params
        for pos, g in enumerate(self.gates):
            for q in g.qubits:
                if not 0 <= q < self.n_qubits:
                    raise ValueError(f"gate {g} acts on qubit {q}, outside 0..{self.n_qubits - 1}")
            if len(set(g.qubits)) != len(g.qubits):
                raise ValueError(f"gate {g} repeats a qubit")
            if isinstance(g, PauliRotation):
                if not 0 <= g.param < self.n_params:
                    raise ValueError(f"parameter index {g.param} out of range")
                if owner[g.param] is not None:
                    raise ValueError(f"parameter {g.param} is carried by more than one gate")
                owner[g.param] = pos
        unused = [k for k, o in enumerate(owner) if o is None]
        if unused:
            raise ValueError(f"parameters {unused} are not used by any gate")
        object.__setattr__(self, "_owner", tuple(owner))

    def gate_of(self, k: int) -> PauliRotation:
        return self.gates[self._owner[k]]

    def check_omega(self, omega) -> np.ndarray:
        omega = np.asarray(omega, dtype=float).ravel()
        if omega.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {omega.size}")
        return omega

    def _check_index(self, k: int) -> int:
        if not 0 <= k < self.n_params:
            raise IndexError(f"parameter index {k} out of range 0..{self.n_params - 1}")
        return int(k)


def _prepare(c: Circuit, omega, psi_in):
    omega = c.check_omega(omega)
    psi_in = zero_state(c.n_qubits) if psi_in is None else check_state_vector(psi_in)
    if psi_in.size != 2**c.n_qubits:
        raise ValueError("input state does not match the circuit's qubit count")
    return omega, psi_in


def apply(c: Circuit, omega, psi_in=None) -> np.ndarray:
    """``V(ω)|ψ_in>`` (``|0...0>`` when ``psi_in`` is omitted)."""
    omega, psi_in = _prepare(c, omega, psi_in)
    states = psi_in[None, :].copy()
    for g in c.gates:
        states = g.apply(states, c.n_qubits, omega)
    return states[0]


def state_derivatives(c: Circuit, omega, psi_in=None):
    """Return ``(ψ, dψ)`` with ``dψ[k] = ∂ψ/∂ω_k``, shape ``(q, 2**n)``."""
    omega, psi_in = _prepare(c, omega, psi_in)
    q, dim, n = c.n_params, psi_in.size, c.n_qubits
    states = np.zeros((1 + q, dim), dtype=complex)
    states[0] = psi_in
    for g in c.gates:
        states = g.apply(states, n, omega)
        if isinstance(g, PauliRotation):
            states[1 + g.param] = g.insert(states[:1], n)[0]
    return states[0], states[1:]


def state_second_derivatives(c: Circuit, omega, psi_in=None):
    """Return ``(ψ, dψ, d2ψ)`` with ``d2ψ[k, l] = ∂²ψ/∂ω_k∂ω_l``."""
    omega, psi_in = _prepare(c, omega, psi_in)
    q, dim, n = c.n_params, psi_in.size, c.n_qubits
    states = np.zeros((1 + q + q * q, dim), dtype=complex)
    states[0] = psi_in
    born = []
    for g in c.gates:
        states = g.apply(states, n, omega)
        if isinstance(g, PauliRotation):
            k = g.param
            second = states[1 + q :].reshape(q, q, dim)
            if born:
                ins = g.insert(states[[1 + j for j in born]], n)
                second[born, k] = ins
                second[k, born] = ins
            second[k, k] = -0.25 * states[0]
            states[1 + k] = g.insert(states[:1], n)[0]
            born.append(k)
    return states[0], states[1 : 1 + q], states[1 + q :].reshape(q, q, dim)


def directional_derivatives(c: Circuit, omega, directions, psi_in=None):
    """First derivatives plus second derivatives contracted with directions.

    Parameters
    ----------
    directions : array of shape (q, p)
        Column ``i`` is a tangent vector ``t_i`` in parameter space.

    Returns
    -------
    psi : (dim,)
    dpsi : (q, dim)
        ``∂_k ψ``.
    dir1 : (p, dim)
        ``Σ_s t_{s,i} ∂_s ψ``.
    dir2 : (q, p, dim)
        ``Σ_s t_{s,i} ∂_k ∂_s ψ``.

    This needs ``O(q p)`` branch states instead of the ``O(q²)`` of
    :func:`state_second_derivatives`.
    """
    omega, psi_in = _prepare(c, omega, psi_in)
    t = np.asarray(directions, dtype=float)
    q, dim, n = c.n_params, psi_in.size, c.n_qubits
    if t.ndim != 2 or t.shape[0] != q:
        raise ValueError(f"directions must have shape ({q}, p), got {t.shape}")
    p = t.shape[1]
    o1, o2, o3 = 1, 1 + q, 1 + q + p
    states = np.zeros((o3 + q * p, dim), dtype=complex)
    states[0] = psi_in
    born = []
    for g in c.gates:
        states = g.apply(states, n, omega)
        if isinstance(g, PauliRotation):
            k = g.param
            gpsi = g.insert(states[:1], n)[0]
            dir2 = states[o3:].reshape(q, p, dim)
            if born:
                # s = k, derivative index earlier
                ins = g.insert(states[[o1 + j for j in born]], n)
                dir2[born] += t[k][None, :, None] * ins[:, None, :]
            # derivative index k, s earlier (dir1 holds only earlier branches)
            dir2[k] += g.insert(states[o2:o3], n)
            dir2[k] += t[k][:, None] * (-0.25 * states[0])[None, :]
            states[o2:o3] += t[k][:, None] * gpsi[None, :]
            states[o1 + k] = gpsi
            born.append(k)
    return states[0], states[o1:o2], states[o2:o3], states[o3:].reshape(q, p, dim)


def d_state(c: Circuit, omega, psi_in=None, k: int = 0) -> np.ndarray:
    """``∂|ψ_ω>/∂ω_k`` (unnormalized)."""
    k = c._check_index(k)
    return state_derivatives(c, omega, psi_in)[1][k]


def d2_state(c: Circuit, omega, psi_in=None, k: int = 0, l: int = 0) -> np.ndarray:
    """``∂²|ψ_ω>/∂ω_k∂ω_l`` (unnormalized)."""
    k, l = c._check_index(k), c._check_index(l)
    return state_second_derivatives(c, omega, psi_in)[2][k, l]


def shift_parameter(omega, k: int, delta: float) -> np.ndarray:
    """Copy of ``omega`` with ``omega[k] += delta``."""
    out = np.array(omega, dtype=float)
    out[k] += delta
    return out


# --------------------------------------------------------------------------
# ansatz templates
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AnsatzTemplate:
    """Purification ansatz on ``2 n_system (+1)`` qubits.

    Register layout: system qubits ``a_j = j``, ancillas ``b_j = n + j`` and,
    with ``phase_fix``, one extra qubit ``2n`` carrying a single ``R_Z``.

    The circuit starts with a fixed Bell-pair prefix ``R_Y(π/2)`` on ``a_j``
    and ``CX(a_j, b_j)``. Each of the ``depth`` layers then applies

    * ``R_Y`` and ``R_Z`` on every system qubit (and on the ancillas when
      ``rotate_ancillas``),
    * per pair ``CX(a_j, b_j) · [R_Y(a_j) R_Y(b_j)] · CX(a_j, b_j)``, i.e.
      the entangling rotations ``exp(-iω Y_a X_b / 2)`` and
      ``exp(-iω Z_a Y_b / 2)``,
    * a CX ladder on the ``a`` register mirrored on the ``b`` register.

    All trainable angles start at 0. The sandwiches are then identities and
    the mirrored ladder maps ``|φ+>^{⊗n}`` to itself, so ``V(ω(0))|0>`` is the
    Bell-pair state.
    """

    n_system: int
    depth: int = 2
    phase_fix: bool = True
    rotate_ancillas: bool = False

    def __post_init__(self):
        if self.n_system < 1:
            raise ValueError("n_system must be positive")
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_system + int(self.phase_fix)

    @property
    def system_qubits(self) -> tuple[int, ...]:
        return tuple(range(self.n_system))

    @property
    def ancilla_qubits(self) -> tuple[int, ...]:
        return tuple(range(self.n_system, 2 * self.n_system))

    @property
    def phase_qubit(self) -> int | None:
        return 2 * self.n_system if self.phase_fix else None

    def build(self) -> tuple[Circuit, np.ndarray]:
        n = self.n_system
        a, b = self.system_qubits, self.ancilla_qubits
        gates: list = []
        counter = iter(range(10**9))
        for j in range(n):
            gates.append(FixedRotation("Y", a[j], np.pi / 2))
            gates.append(ControlledNot(a[j], b[j]))
        rotated = a + b if self.rotate_ancillas else a
        for _ in range(self.depth):
            for qb in rotated:
                gates.append(PauliRotation("Y", qb, next(counter)))
                gates.append(PauliRotation("Z", qb, next(counter)))
            for j in range(n):
                gates.append(ControlledNot(a[j], b[j]))
                gates.append(PauliRotation("Y", a[j], next(counter)))
                gates.append(PauliRotation("Y", b[j], next(counter)))
                gates.append(ControlledNot(a[j], b[j]))
            for j in range(n - 1):
                gates.append(ControlledNot(a[j], a[j + 1]))
                gates.append(ControlledNot(b[j], b[j + 1]))
        if self.phase_fix:
            gates.append(PauliRotation("Z", self.phase_qubit, next(counter)))
        q = next(counter)
        return Circuit(self.n_qubits, q, tuple(gates)), np.zeros(q)

    @property
    def phase_param(self) -> int | None:
        if not self.phase_fix:
            return None
        return self.build()[0].n_params - 1
