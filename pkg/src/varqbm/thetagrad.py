"""Forward-mode derivatives of a VarQITE run with respect to Hamiltonian
coefficients, and gradients of measurement probabilities.

The tangent ``∂ω/∂θ`` is pushed through every Euler step by differentiating
``A ω̇ = C``::

    A ∂ω̇/∂θ_i = ∂C/∂θ_i - (∂A/∂θ_i) ω̇
    ∂ω/∂θ_i  += δτ ∂ω̇/∂θ_i

``∂A`` and ``∂C`` only involve second derivatives contracted with the current
tangent, which :func:`varqbm.ansatz.directional_derivatives` provides directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ansatz import Circuit, PauliRotation, apply, directional_derivatives, shift_parameter
from .qcore import PauliSum, apply_pauli, n_qubits
from .regularize import RegularizationPolicy, ridge_inverse, solve_with


@dataclass
class ThetaJacobianState:
    """``d_omega[k, i] = ∂ω_k/∂θ_i`` and ``d_omega_dot[k, i] = ∂ω̇_k/∂θ_i``."""

    d_omega: np.ndarray
    d_omega_dot: np.ndarray

    @classmethod
    def zeros(cls, q: int, p: int) -> "ThetaJacobianState":
        # ω(0) does not depend on θ
        return cls(np.zeros((q, p)), np.zeros((q, p)))


@dataclass(frozen=True)
class ProjectorSpec:
    """``Λ_v = |v><v| ⊗ I`` on the listed visible qubits."""

    visible_qubits: tuple[int, ...]
    outcome: str

    def __post_init__(self):
        vis = tuple(int(q) for q in self.visible_qubits)
        if not vis:
            raise ValueError("visible qubit set must be nonempty")
        if len(set(vis)) != len(vis):
            raise ValueError("visible qubits must be distinct")
        outcome = str(self.outcome)
        if len(outcome) != len(vis) or set(outcome) - {"0", "1"}:
            raise ValueError(f"outcome {outcome!r} is not a bitstring over {len(vis)} qubits")
        object.__setattr__(self, "visible_qubits", vis)
        object.__setattr__(self, "outcome", outcome)


# --------------------------------------------------------------------------
# tangent system
# --------------------------------------------------------------------------


def _check_h(c: Circuit, h: PauliSum):
    if h.n_qubits != c.n_qubits:
        raise ValueError(f"Hamiltonian acts on {h.n_qubits} qubits, circuit on {c.n_qubits}")


def tangent_system(c: Circuit, omega, h: PauliSum, d_omega, psi_in=None):
    """``A``, ``C``, ``∂A/∂θ`` (p, q, q) and ``∂C/∂θ`` (p, q) at one point."""
    _check_h(c, h)
    d_omega = np.asarray(d_omega, dtype=float)
    psi, dpsi, dir1, dir2 = directional_derivatives(c, omega, d_omega, psi_in)
    a = (dpsi.conj() @ dpsi.T).real
    hpsi = h.apply(psi)
    cvec = -(dpsi.conj() @ hpsi).real

    # ∂A_i[p, q] = Re(<dir2[p,i]|∂_q ψ> + <∂_p ψ|dir2[q,i]>)
    half = np.einsum("pid,qd->ipq", dir2.conj(), dpsi).real
    da = half + half.transpose(0, 2, 1)

    terms = np.stack([apply_pauli(w, psi) for w in h.words])
    direct = -(terms.conj() @ dpsi.T).real
    chain = -(dpsi.conj() @ h.apply(dir1).T).real.T
    chain -= np.einsum("pjd,d->jp", dir2.conj(), hpsi).real
    return a, cvec, da, direct + chain


def d_a_d_theta(c: Circuit, omega, d_omega, psi_in=None) -> np.ndarray:
    """``∂A/∂θ_i`` for every i, shape ``(p, q, q)``."""
    d_omega = np.asarray(d_omega, dtype=float)
    _, dpsi, _, dir2 = directional_derivatives(c, omega, d_omega, psi_in)
    half = np.einsum("pid,qd->ipq", dir2.conj(), dpsi).real
    return half + half.transpose(0, 2, 1)


def d_c_d_theta(c: Circuit, omega, h: PauliSum, d_omega, psi_in=None) -> np.ndarray:
    """``∂C/∂θ_j`` for every j, shape ``(p, q)``."""
    return tangent_system(c, omega, h, d_omega, psi_in)[3]


def step_theta_jacobian(
    a,
    omega_dot,
    d_a,
    d_c,
    state: ThetaJacobianState,
    policy: RegularizationPolicy,
    delta_tau: float,
    lam: float | None = None,
    residual=None,
) -> ThetaJacobianState:
    """One Euler step of the θ-tangent, reusing the primal solve's ``lam``.

    For the Tikhonov scheme, pass ``residual = C - A ω̇`` of the primal solve:
    the ridge solution ``(AᵀA+λ)⁻¹AᵀC`` then differentiates to the usual
    tangent solve plus ``(AᵀA+λ)⁻¹ ∂A residual``. Without it the tangent drifts
    from the true derivative of the regularized trajectory whenever ``C`` is
    not fully resolved.
    """
    omega_dot = np.asarray(omega_dot, dtype=float)
    p = state.d_omega.shape[1]
    if len(d_a) != p or len(d_c) != p:
        raise ValueError("derivative lists do not match the tangent width")
    ridge = policy.scheme == "tikhonov-grid" and residual is not None
    lam_eff = policy.fallback_lambda if lam is None else lam
    dot = np.empty_like(state.d_omega)
    for i in range(p):
        rhs = np.asarray(d_c[i]) - np.asarray(d_a[i]) @ omega_dot
        dot[:, i] = solve_with(a, rhs, policy, lam)
        if ridge:
            dot[:, i] += ridge_inverse(a, np.asarray(d_a[i]).T @ residual, lam_eff)
    return ThetaJacobianState(state.d_omega + delta_tau * dot, dot)


# --------------------------------------------------------------------------
# probabilities
# --------------------------------------------------------------------------


def _marginal_from_diag(diag: np.ndarray, n: int, visible) -> np.ndarray:
    visible = list(visible)
    if any(not 0 <= v < n for v in visible):
        raise ValueError(f"visible qubits {visible} out of range for {n} qubits")
    rest = [qb for qb in range(n) if qb not in visible]
    t = diag.reshape(diag.shape[:-1] + (2,) * n)
    lead = diag.ndim - 1
    t = np.transpose(t, list(range(lead)) + [lead + v for v in visible] + [lead + r for r in rest])
    return t.reshape(diag.shape[:-1] + (2 ** len(visible), -1)).sum(axis=-1)


def marginal_distribution(rho, visible) -> np.ndarray:
    """All ``Tr[Λ_v ρ]``, indexed by the visible bitstring (first listed qubit
    most significant)."""
    rho = np.asarray(rho)
    return _marginal_from_diag(np.real(np.diagonal(rho)).copy(), n_qubits(rho), visible)


def state_distribution(psi, visible) -> np.ndarray:
    """Visible-qubit outcome probabilities of a pure state (batched on axis 0)."""
    psi = np.asarray(psi)
    n = int(psi.shape[-1]).bit_length() - 1
    return _marginal_from_diag(np.abs(psi) ** 2, n, visible)


def measure_prob(rho, proj: ProjectorSpec) -> float:
    """``Tr[Λ_v ρ]``."""
    rho = np.asarray(rho)
    if max(proj.visible_qubits) >= n_qubits(rho):
        raise ValueError("projector does not fit the density matrix")
    return float(marginal_distribution(rho, proj.visible_qubits)[int(proj.outcome, 2)])


def distribution_gradient(c: Circuit, omega, visible, psi_in=None) -> np.ndarray:
    """π/2-shift gradient of all visible-outcome probabilities, shape ``(q, 2^v)``."""
    omega = c.check_omega(omega)
    grads = []
    for k in range(c.n_params):
        if not isinstance(c.gate_of(k), PauliRotation):
            raise NotImplementedError("shift rule needs a Pauli rotation")
        plus = apply(c, shift_parameter(omega, k, np.pi / 2), psi_in)
        minus = apply(c, shift_parameter(omega, k, -np.pi / 2), psi_in)
        grads.append(0.5 * (state_distribution(plus, visible) - state_distribution(minus, visible)))
    return np.array(grads).reshape(c.n_params, -1)


def d_prob_d_omega(c: Circuit, omega, proj: ProjectorSpec, k: int, psi_in=None) -> float:
    """π/2-shift derivative ``∂ Tr[Λ_v ρ_ω]/∂ω_k``.

    ``ρ_ω`` is the reduced state of ``V(ω)|ψ_in>`` on the visible qubits; the
    traced-out qubits never enter the projector.
    """
    k = c._check_index(k)
    gate = c.gate_of(k)
    if not isinstance(gate, PauliRotation):
        raise NotImplementedError(f"parameter {k} is not carried by a Pauli rotation")
    idx = int(proj.outcome, 2)
    plus = apply(c, shift_parameter(omega, k, np.pi / 2), psi_in)
    minus = apply(c, shift_parameter(omega, k, -np.pi / 2), psi_in)
    vis = proj.visible_qubits
    return 0.5 * float(state_distribution(plus, vis)[idx] - state_distribution(minus, vis)[idx])


def d_prob_d_theta(dp_domega, d_omega_d_theta) -> np.ndarray:
    """Chain rule ``Σ_k ∂p/∂ω_k ∂ω_k/∂θ_i``.

    ``dp_domega`` is ``(q,)`` for one outcome or ``(q, V)`` for many; the
    result is ``(p,)`` or ``(p, V)``.
    """
    g = np.asarray(dp_domega, dtype=float)
    j = np.asarray(d_omega_d_theta, dtype=float)
    if j.ndim != 2 or g.shape[0] != j.shape[0]:
        raise ValueError(f"shape mismatch: {g.shape} vs {j.shape}")
    return j.T @ g
