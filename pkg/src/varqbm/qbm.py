"""Generative quantum Boltzmann machines.

The model distribution is the visible-qubit marginal of the Gibbs state of
``H_θ = Σ_i θ_i h_i``. Training minimizes the cross-entropy to a target
distribution with AMSGrad, using gradients pushed through VarQITE::

    ∂L/∂θ_i = -Σ_v p_v^data (∂p_v/∂θ_i) / p_v
    ∂p_v/∂θ_i = Σ_k (∂p_v/∂ω_k)(∂ω_k/∂θ_i)

:func:`train_exact` replaces VarQITE by exact Gibbs states and finite
differences; it is used as a reference trainer.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .ansatz import AnsatzTemplate
from .qcore import PauliString, PauliSum, exact_gibbs
from .thetagrad import d_prob_d_theta, distribution_gradient, marginal_distribution, state_distribution
from .varqite import EvolutionConfig, EvolutionError, prepare_gibbs

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12

__all__ = [
    "AMSGradState",
    "OptimizerConfig",
    "QbmModel",
    "QBMGenerativeModel",
    "TargetDistribution",
    "TrainingRecord",
    "amsgrad_step",
    "bell_model",
    "derive_seeds",
    "exact_distribution",
    "l1_distance",
    "loss",
    "loss_and_gradient",
    "loss_gradient",
    "model_distribution",
    "train_exact",
    "train_generative",
]


# --------------------------------------------------------------------------
# model types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetDistribution:
    """Probabilities over visible bitstrings, index = bitstring read MSB first."""

    probabilities: tuple

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float).ravel()
        if p.size < 2 or p.size & (p.size - 1):
            raise ValueError(f"distribution length {p.size} is not a power of two >= 2")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {p.sum():.12g}, not 1")
        object.__setattr__(self, "probabilities", tuple(float(x) for x in p))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.probabilities)

    @property
    def n_visible(self) -> int:
        return len(self.probabilities).bit_length() - 1

    @property
    def entropy(self) -> float:
        p = self.array
        nz = p[p > 0]
        return float(-(nz * np.log(nz)).sum())

    @classmethod
    def from_samples(cls, samples) -> "TargetDistribution":
        """Empirical distribution of 0/1 rows (or bitstrings)."""
        rows = [s if isinstance(s, str) else "".join(str(int(b)) for b in s) for s in samples]
        if not rows:
            raise ValueError("no samples")
        width = len(rows[0])
        if any(len(r) != width or set(r) - {"0", "1"} for r in rows):
            raise ValueError("samples must be equal-length bitstrings")
        counts = np.bincount([int(r, 2) for r in rows], minlength=2**width)
        return cls(tuple(counts / counts.sum()))


@dataclass
class QbmModel:
    hamiltonian_template: tuple
    theta: np.ndarray
    visible_qubits: tuple
    ansatz: AnsatzTemplate
    kbt: float = 1.0

    def __post_init__(self):
        words = tuple(w if isinstance(w, PauliString) else PauliString(w) for w in self.hamiltonian_template)
        if not words:
            raise ValueError("empty Hamiltonian template")
        n = self.ansatz.n_system
        if any(w.n_qubits != n for w in words):
            raise ValueError(f"template words must act on {n} system qubits")
        theta = np.asarray(self.theta, dtype=float).ravel()
        if theta.shape != (len(words),):
            raise ValueError(f"theta has {theta.size} entries, template has {len(words)}")
        vis = tuple(int(v) for v in self.visible_qubits)
        if not vis or len(set(vis)) != len(vis) or any(not 0 <= v < n for v in vis):
            raise ValueError(f"invalid visible qubits {vis} for {n} system qubits")
        if not self.kbt > 0:
            raise ValueError("kbt must be positive")
        self.hamiltonian_template = words
        self.theta = theta
        self.visible_qubits = vis

    @property
    def hidden_qubits(self) -> tuple:
        return tuple(q for q in range(self.ansatz.n_system) if q not in self.visible_qubits)

    @property
    def n_params(self) -> int:
        return len(self.hamiltonian_template)

    def hamiltonian(self, theta=None) -> PauliSum:
        theta = self.theta if theta is None else theta
        return PauliSum.from_template(self.hamiltonian_template, theta)

    def with_theta(self, theta) -> "QbmModel":
        return replace(self, theta=np.asarray(theta, dtype=float))


def bell_model(theta=(0.0, 0.0, 0.0), depth: int = 2) -> QbmModel:
    """Fully visible two-qubit model ``θ₀ ZZ + θ₁ IZ + θ₂ ZI``."""
    return QbmModel(("ZZ", "IZ", "ZI"), np.asarray(theta, dtype=float), (0, 1), AnsatzTemplate(2, depth))


# --------------------------------------------------------------------------
# loss
# --------------------------------------------------------------------------


def _as_probs(p) -> np.ndarray:
    return p.array if isinstance(p, TargetDistribution) else np.asarray(p, dtype=float)


def loss(p_model, p_data) -> float:
    """Cross-entropy ``-Σ p_data log p_model``; zero-data outcomes contribute 0."""
    pm, pd = _as_probs(p_model), _as_probs(p_data)
    if pm.shape != pd.shape:
        raise ValueError(f"distribution shapes differ: {pm.shape} vs {pd.shape}")
    mask = pd > 0
    return float(-(pd[mask] * np.log(np.maximum(pm[mask], PROB_FLOOR))).sum())


def l1_distance(p_model, p_data) -> float:
    return float(np.abs(_as_probs(p_model) - _as_probs(p_data)).sum())


def model_distribution(model: QbmModel, cfg: EvolutionConfig | None = None) -> np.ndarray:
    """Visible marginal of the VarQITE Gibbs approximation."""
    rho, _ = prepare_gibbs(model.hamiltonian(), model.ansatz, cfg, model.kbt)
    return marginal_distribution(rho, model.visible_qubits)


def exact_distribution(model: QbmModel, theta=None) -> np.ndarray:
    rho = exact_gibbs(model.hamiltonian(theta).to_matrix(), model.kbt)
    return marginal_distribution(rho, model.visible_qubits)


def loss_and_gradient(model: QbmModel, p_data, cfg: EvolutionConfig | None = None):
    """One tracked Gibbs preparation; returns ``(loss, gradient, p_model)``."""
    pd = _as_probs(p_data)
    cfg = EvolutionConfig() if cfg is None else cfg
    cfg = replace(cfg, track_theta_gradients=True)
    _, sol = prepare_gibbs(model.hamiltonian(), model.ansatz, cfg, model.kbt)
    circuit = sol.circuit
    p_model = state_distribution(sol.state(), model.visible_qubits)
    if p_model.shape != pd.shape:
        raise ValueError(f"target has {pd.size} outcomes, model has {p_model.size}")
    dp_domega = distribution_gradient(circuit, sol.omega_final, model.visible_qubits)
    dp_dtheta = d_prob_d_theta(dp_domega, sol.d_omega_d_theta)  # (p, V)
    mask = pd > 0
    if np.any(p_model[mask] < PROB_FLOOR):
        msg = "model probability below 1e-12 for an observed outcome; clamping the denominator"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        logger.warning(msg)
    denom = np.maximum(p_model[mask], PROB_FLOOR)
    grad = -(dp_dtheta[:, mask] * (pd[mask] / denom)).sum(axis=1)
    return loss(p_model, pd), grad, p_model


def loss_gradient(model: QbmModel, p_data, cfg: EvolutionConfig | None = None) -> np.ndarray:
    return loss_and_gradient(model, p_data, cfg)[1]


# --------------------------------------------------------------------------
# optimizer
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.1
    beta1: float = 0.7
    beta2: float = 0.99
    max_iterations: int = 200
    epsilon_div: float = 1e-8
    scheme: str = "amsgrad"

    def __post_init__(self):
        if self.scheme != "amsgrad":
            raise ValueError(f"unsupported optimizer {self.scheme!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.learning_rate > 0 or not self.epsilon_div > 0:
            raise ValueError("learning_rate and epsilon_div must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")


@dataclass
class AMSGradState:
    m: np.ndarray
    v: np.ndarray
    v_hat: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, p: int) -> "AMSGradState":
        return cls(np.zeros(p), np.zeros(p), np.zeros(p), 0)


def amsgrad_step(theta, gradient, state: AMSGradState, cfg: OptimizerConfig | None = None):
    """One AMSGrad update with bias-corrected step size.

    Returns the new parameters and a fresh state; the input state is not
    modified.
    """
    cfg = OptimizerConfig() if cfg is None else cfg
    theta = np.asarray(theta, dtype=float)
    g = np.asarray(gradient, dtype=float)
    if g.shape != theta.shape:
        raise ValueError("gradient and theta shapes differ")
    t = state.t + 1
    m = cfg.beta1 * state.m + (1 - cfg.beta1) * g
    v = cfg.beta2 * state.v + (1 - cfg.beta2) * g * g
    v_hat = np.maximum(state.v_hat, v)
    lr = cfg.learning_rate * np.sqrt(1 - cfg.beta2**t) / (1 - cfg.beta1**t)
    new = theta - lr * m / (np.sqrt(v_hat) + cfg.epsilon_div)
    return new, AMSGradState(m, v, v_hat, t)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


@dataclass
class TrainingRecord:
    """Row 0 is the initial θ; row k follows the k-th update."""

    seed: int | None
    losses: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    distributions: list = field(default_factory=list)
    theta: np.ndarray | None = None
    theta_init: np.ndarray | None = None
    error: str | None = None

    @property
    def final_distance(self) -> float:
        return self.distances[-1] if self.distances else float("nan")

    @property
    def final_distribution(self) -> np.ndarray | None:
        return self.distributions[-1] if self.distributions else None


def derive_seeds(seed: int, n: int) -> list[int]:
    """Deterministic per-run seeds from one top-level seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _initial_theta(seed, p: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=p)


def _train_one(model, pd, opt, evo, seed, n_iter):
    theta = _initial_theta(seed, model.n_params)
    rec = TrainingRecord(seed=seed, theta_init=theta.copy())
    state = AMSGradState.zeros(model.n_params)
    for it in range(n_iter + 1):
        current = model.with_theta(theta)
        if it < n_iter:
            value, grad, p_model = loss_and_gradient(current, pd, evo)
        else:
            p_model = model_distribution(current, replace(evo, track_theta_gradients=False))
            value = loss(p_model, pd)
        if not np.isfinite(value):
            raise EvolutionError(f"non-finite loss at iteration {it}")
        rec.losses.append(value)
        rec.distances.append(l1_distance(p_model, pd))
        rec.distributions.append(np.asarray(p_model, dtype=float))
        if it < n_iter:
            theta, state = amsgrad_step(theta, grad, state, opt)
            if not np.all(np.isfinite(theta)):
                raise EvolutionError(f"non-finite parameters after iteration {it + 1}")
    rec.theta = theta
    return rec


def train_generative(
    model: QbmModel,
    p_data,
    opt: OptimizerConfig | None = None,
    evo: EvolutionConfig | None = None,
    seeds=(0,),
    n_iterations: int | None = None,
) -> list[TrainingRecord]:
    """Multi-start AMSGrad training through VarQITE gradients.

    Each seed draws ``θ ~ U[-1, 1]^p``; ``model.theta`` is ignored. A failing
    seed yields a record with ``error`` set and the remaining seeds still run.
    """
    opt = OptimizerConfig() if opt is None else opt
    evo = EvolutionConfig() if evo is None else evo
    pd = _as_probs(p_data)
    n_iter = opt.max_iterations if n_iterations is None else int(n_iterations)
    if n_iter < 0:
        raise ValueError("n_iterations must be nonnegative")
    records = []
    for seed in seeds:
        try:
            records.append(_train_one(model, pd, opt, evo, seed, n_iter))
        except (EvolutionError, np.linalg.LinAlgError) as exc:
            logger.error("seed %s failed: %s", seed, exc)
            records.append(TrainingRecord(seed=seed, error=str(exc)))
    return records


def _fd_gradient(f, theta, step):
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        g[i] = (f(theta + e) - f(theta - e)) / (2 * step)
    return g


def train_exact(
    model: QbmModel,
    p_data,
    opt: OptimizerConfig | None = None,
    theta0=None,
    fd_step: float = 1e-6,
    return_record: bool = False,
):
    """AMSGrad on exact Gibbs distributions with central-difference gradients."""
    opt = OptimizerConfig() if opt is None else opt
    pd = _as_probs(p_data)
    theta = np.array(model.theta if theta0 is None else theta0, dtype=float)

    def f(th):
        return loss(exact_distribution(model, th), pd)

    rec = TrainingRecord(seed=None, theta_init=theta.copy())
    state = AMSGradState.zeros(theta.size)
    for it in range(opt.max_iterations + 1):
        p_model = exact_distribution(model, theta)
        rec.losses.append(loss(p_model, pd))
        rec.distances.append(l1_distance(p_model, pd))
        rec.distributions.append(p_model)
        if it == opt.max_iterations:
            break
        theta, state = amsgrad_step(theta, _fd_gradient(f, theta, fd_step), state, opt)
        if not np.all(np.isfinite(theta)):
            raise EvolutionError(f"exact training diverged at iteration {it + 1}")
    rec.theta = theta
    return rec if return_record else theta


# --------------------------------------------------------------------------
# estimator
# --------------------------------------------------------------------------


class QBMGenerativeModel(BaseEstimator):
    """Estimator wrapper: ``fit`` on 0/1 samples (rows = visible bitstrings)
    or on a :class:`TargetDistribution`, then ``predict_proba``/``sample``.

    Among ``n_restarts`` seeds derived from ``random_state`` the run with the
    lowest final loss is kept.
    """

    def __init__(
        self,
        hamiltonian=("ZZ", "IZ", "ZI"),
        visible=None,
        depth=2,
        n_steps=10,
        kbt=1.0,
        learning_rate=0.1,
        beta1=0.7,
        beta2=0.99,
        max_iterations=50,
        n_restarts=1,
        random_state=0,
    ):
        self.hamiltonian = hamiltonian
        self.visible = visible
        self.depth = depth
        self.n_steps = n_steps
        self.kbt = kbt
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.max_iterations = max_iterations
        self.n_restarts = n_restarts
        self.random_state = random_state

    def _template(self):
        words = tuple(PauliString(w) for w in self.hamiltonian)
        n = words[0].n_qubits
        visible = tuple(range(n)) if self.visible is None else tuple(self.visible)
        return QbmModel(words, np.zeros(len(words)), visible, AnsatzTemplate(n, self.depth), self.kbt)

    def fit(self, X, y=None):
        target = X if isinstance(X, TargetDistribution) else TargetDistribution.from_samples(np.asarray(X))
        model = self._template()
        if target.n_visible != len(model.visible_qubits):
            raise ValueError("sample width does not match the number of visible qubits")
        opt = OptimizerConfig(self.learning_rate, self.beta1, self.beta2, self.max_iterations)
        evo = EvolutionConfig(n_steps=self.n_steps)
        seeds = derive_seeds(self.random_state, self.n_restarts)
        records = [r for r in train_generative(model, target, opt, evo, seeds) if r.error is None]
        if not records:
            raise EvolutionError("every training run failed")
        best = min(records, key=lambda r: r.losses[-1])
        self.records_ = records
        self.theta_ = best.theta
        self.model_ = model.with_theta(best.theta)
        self.distribution_ = best.final_distribution
        self.target_ = target
        return self

    def predict_proba(self, X=None):
        check_is_fitted(self, "distribution_")
        return self.distribution_.copy()

    def sample(self, n_samples: int, random_state=None) -> np.ndarray:
        check_is_fitted(self, "distribution_")
        rng = np.random.default_rng(random_state)
        idx = rng.choice(self.distribution_.size, size=n_samples, p=self.distribution_ / self.distribution_.sum())
        width = self.target_.n_visible
        return ((idx[:, None] >> np.arange(width - 1, -1, -1)) & 1).astype(int)

    def score(self, X, y=None) -> float:
        """Negative cross-entropy of the fitted distribution on ``X``."""
        check_is_fitted(self, "distribution_")
        target = X if isinstance(X, TargetDistribution) else TargetDistribution.from_samples(np.asarray(X))
        return -loss(self.distribution_, target)
