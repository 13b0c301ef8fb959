"""Variational imaginary-time evolution and purification-based Gibbs states.

Each Euler step assembles the McLachlan system::

    A_pq = Re<∂_pψ|∂_qψ>,   C_p = -Σ_i θ_i Re<∂_pψ|h_i|ψ>

solves ``A ω̇ = C`` with a regularized solver and sets ``ω += δτ ω̇``. The
default path evaluates the inner products on exact derivative states;
:func:`hadamard_test_value` simulates the corresponding ancilla-controlled
circuits and serves as a cross-check and as the unit for circuit counting.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .ansatz import AnsatzTemplate, Circuit, PauliRotation, apply, state_derivatives
from .counting import CircuitCounts, step_counts
from .qcore import PauliString, PauliSum, apply_pauli, reduced_state, zero_state
from .regularize import RegularizationPolicy, solve_regularized
from .thetagrad import ThetaJacobianState, step_theta_jacobian, tangent_system

logger = logging.getLogger(__name__)

__all__ = [
    "EvolutionConfig",
    "EvolutionError",
    "HadamardTestSpec",
    "McLachlanSystem",
    "RegularizationPolicy",
    "VarQiteSolution",
    "assemble_a",
    "assemble_c",
    "assemble_a_hadamard",
    "assemble_c_hadamard",
    "evolve",
    "hadamard_test_value",
    "prepare_gibbs",
    "solve_regularized",
]


class EvolutionError(ArithmeticError):
    """Raised when the parameter trajectory becomes non-finite."""


@dataclass(frozen=True)
class EvolutionConfig:
    """Euler integration settings.

    ``tau`` may be left as ``None`` for :func:`prepare_gibbs`, which derives it
    from the temperature as ``1 / (2 kbt)``.
    """

    tau: float | None = None
    n_steps: int = 10
    regularization: RegularizationPolicy = field(default_factory=RegularizationPolicy)
    track_theta_gradients: bool = False

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")

    @property
    def delta_tau(self) -> float:
        if self.tau is None:
            raise ValueError("tau is not set")
        return self.tau / self.n_steps


@dataclass
class McLachlanSystem:
    a: np.ndarray
    c: np.ndarray


@dataclass
class VarQiteSolution:
    omega_final: np.ndarray
    omega_trajectory: np.ndarray
    d_omega_d_theta: np.ndarray | None
    circuit_counts: CircuitCounts
    residuals: np.ndarray
    lambdas: list
    circuit: Circuit | None = None
    psi_in: np.ndarray | None = None

    def state(self, step: int = -1) -> np.ndarray:
        """Trial state at a stored step (final by default)."""
        return apply(self.circuit, self.omega_trajectory[step], self.psi_in)


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------


def _check_h(c: Circuit, h: PauliSum):
    if h.n_qubits != c.n_qubits:
        raise ValueError(f"Hamiltonian acts on {h.n_qubits} qubits, circuit on {c.n_qubits}")


def assemble_a(c: Circuit, omega, psi_in=None) -> np.ndarray:
    _, dpsi = state_derivatives(c, omega, psi_in)
    a = (dpsi.conj() @ dpsi.T).real
    return 0.5 * (a + a.T)


def assemble_c(c: Circuit, omega, h: PauliSum, psi_in=None) -> np.ndarray:
    _check_h(c, h)
    psi, dpsi = state_derivatives(c, omega, psi_in)
    return -(dpsi.conj() @ h.apply(psi)).real


def assemble_system(c: Circuit, omega, h: PauliSum, psi_in=None) -> McLachlanSystem:
    _check_h(c, h)
    psi, dpsi = state_derivatives(c, omega, psi_in)
    a = (dpsi.conj() @ dpsi.T).real
    return McLachlanSystem(0.5 * (a + a.T), -(dpsi.conj() @ h.apply(psi)).real)


# --------------------------------------------------------------------------
# Hadamard test
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HadamardTestSpec:
    """Two gate sequences sharing ``ρ_in``.

    ``U`` is ``V(ω)`` with the Pauli generator of each parameter in ``left``
    inserted after its gate; ``V`` likewise with ``right`` and then the
    optional ``observable``. Repeated indices insert the generator twice.
    """

    circuit: Circuit
    omega: tuple
    left: tuple[int, ...] = ()
    right: tuple[int, ...] = ()
    observable: PauliString | None = None
    psi_in: np.ndarray | None = None


def hadamard_test_value(spec: HadamardTestSpec, alpha: float) -> float:
    """Simulate the ancilla-controlled circuit and return ``<Z>`` on the ancilla,
    i.e. ``Re(e^{iα} <ψ_U|ψ_V>)``.

    The ancilla is prepared with ``H`` (and ``S`` for ``α = π/2``). Insertions
    for ``U`` are controlled on the ancilla being ``|0>``, those for ``V`` on
    ``|1>``; a final ``H`` maps the overlap to the ancilla's ``Z`` expectation.
    """
    if np.isclose(alpha, 0.0):
        phase = 1.0
    elif np.isclose(alpha, np.pi / 2):
        phase = 1j
    else:
        raise ValueError(f"alpha must be 0 or π/2, got {alpha}")
    c = spec.circuit
    omega = c.check_omega(spec.omega)
    n = c.n_qubits
    psi_in = zero_state(n) if spec.psi_in is None else np.asarray(spec.psi_in, dtype=complex)
    # row r holds the register amplitude for ancilla basis state |r>
    branches = np.stack([psi_in, psi_in]) / np.sqrt(2)
    branches[1] *= phase
    for g in c.gates:
        branches = g.apply(branches, n, omega)
        if isinstance(g, PauliRotation):
            sigma = PauliString("I" * g.target + g.axis + "I" * (n - g.target - 1))
            for row, wanted in ((0, spec.left), (1, spec.right)):
                for _ in range(wanted.count(g.param)):
                    branches[row] = apply_pauli(sigma, branches[row])
    if spec.observable is not None:
        branches[1] = apply_pauli(spec.observable, branches[1])
    zero = (branches[0] + branches[1]) / np.sqrt(2)
    one = (branches[0] - branches[1]) / np.sqrt(2)
    return float(np.vdot(zero, zero).real - np.vdot(one, one).real)


def assemble_a_hadamard(c: Circuit, omega, psi_in=None) -> np.ndarray:
    """``A`` from Hadamard tests: ``A_pq = ¼ Re<V_pψ|V_qψ>``."""
    q = c.n_params
    omega = tuple(c.check_omega(omega))
    a = np.zeros((q, q))
    for p in range(q):
        for r in range(p, q):
            spec = HadamardTestSpec(c, omega, (p,), (r,), psi_in=psi_in)
            a[p, r] = a[r, p] = 0.25 * hadamard_test_value(spec, 0.0)
    return a


def assemble_c_hadamard(c: Circuit, omega, h: PauliSum, psi_in=None) -> np.ndarray:
    """``C`` from Hadamard tests: ``C_p = -½ Σ_i θ_i Re(i <V_pψ|h_i Vψ>)``."""
    _check_h(c, h)
    omega = tuple(c.check_omega(omega))
    out = np.zeros(c.n_params)
    for p in range(c.n_params):
        for coeff, word in h.terms:
            spec = HadamardTestSpec(c, omega, (p,), (), word, psi_in)
            out[p] -= 0.5 * coeff * hadamard_test_value(spec, np.pi / 2)
    return out


# --------------------------------------------------------------------------
# evolution
# --------------------------------------------------------------------------


def evolve(
    c: Circuit,
    omega0,
    h: PauliSum,
    cfg: EvolutionConfig,
    psi_in=None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> VarQiteSolution:
    """Explicit-Euler VarQITE from ``omega0`` for time ``cfg.tau``.

    With ``cfg.track_theta_gradients`` the θ-tangent ``∂ω/∂θ`` is propagated
    alongside, one column per term of ``h``.
    """
    _check_h(c, h)
    omega = c.check_omega(omega0).copy()
    dt = cfg.delta_tau
    policy = cfg.regularization
    q, p = c.n_params, len(h.terms)
    traj = [omega.copy()]
    residuals, lambdas = [], []
    counts = CircuitCounts()
    jac = ThetaJacobianState.zeros(q, p) if cfg.track_theta_gradients else None
    for step in range(cfg.n_steps):
        if jac is not None:
            a, cvec, da, dc = tangent_system(c, omega, h, jac.d_omega, psi_in)
        else:
            sysm = assemble_system(c, omega, h, psi_in)
            a, cvec = sysm.a, sysm.c
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(cvec))):
            raise EvolutionError(f"non-finite McLachlan system at step {step + 1} of {cfg.n_steps}")
        omega_dot, lam = solve_regularized(a, cvec, policy, return_lambda=True)
        if jac is not None:
            jac = step_theta_jacobian(
                a, omega_dot, da, dc, jac, policy, dt, lam, residual=cvec - a @ omega_dot
            )
        omega = omega + dt * omega_dot
        if not np.all(np.isfinite(omega)) or (jac is not None and not np.all(np.isfinite(jac.d_omega))):
            raise EvolutionError(f"non-finite parameters after step {step + 1} of {cfg.n_steps}")
        residuals.append(float(np.linalg.norm(a @ omega_dot - cvec)))
        lambdas.append(lam)
        counts = counts + step_counts(q, p, jac is not None)
        traj.append(omega.copy())
        if callback is not None:
            callback(step + 1, omega)
    logger.debug("evolved %d steps, final |ω| = %.4g", cfg.n_steps, np.linalg.norm(omega))
    return VarQiteSolution(
        omega_final=omega,
        omega_trajectory=np.array(traj),
        d_omega_d_theta=None if jac is None else jac.d_omega,
        circuit_counts=counts,
        residuals=np.array(residuals),
        lambdas=lambdas,
        circuit=c,
        psi_in=None if psi_in is None else np.asarray(psi_in),
    )


def effective_hamiltonian(h: PauliSum, ansatz: AnsatzTemplate) -> PauliSum:
    """``H ⊗ I_b (⊗ I_phase)`` on the full purification register."""
    if h.n_qubits != ansatz.n_system:
        raise ValueError(f"Hamiltonian has {h.n_qubits} qubits, ansatz expects {ansatz.n_system}")
    return h.padded(ansatz.n_qubits)


def prepare_gibbs(h: PauliSum, ansatz: AnsatzTemplate, cfg: EvolutionConfig | None = None, kbt: float = 1.0):
    """Approximate ``exp(-H/kbt)/Z`` by evolving Bell pairs for ``τ = 1/(2 kbt)``.

    Returns the reduced state on the system qubits and the solution record.
    """
    if not kbt > 0:
        raise ValueError("kbt must be positive")
    cfg = EvolutionConfig() if cfg is None else cfg
    cfg = replace(cfg, tau=1.0 / (2.0 * kbt))
    circuit, omega0 = ansatz.build()
    sol = evolve(circuit, omega0, effective_hamiltonian(h, ansatz), cfg)
    psi = apply(circuit, sol.omega_final)
    rho = reduced_state(psi, ansatz.system_qubits)
    return 0.5 * (rho + rho.conj().T), sol
