"""Discriminative QBM for transaction fraud detection.

Each feature vector ``x`` conditions a two-qubit Hamiltonian::

    H_θ(x) = Σ_i (θ_i · x) h_i,   h = (ZZ, ZI, IZ, XI, IX)

Qubit 0 is hidden and qubit 1 visible; visible outcome 1 means fraud. The
parameters are trained on exact Gibbs states and the trained model is then
evaluated with VarQITE-prepared states.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.cluster import KMeans
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .ansatz import AnsatzTemplate
from .qcore import PauliString, PauliSum, gibbs_batch
from .thetagrad import marginal_distribution
from .varqite import EvolutionConfig, prepare_gibbs

logger = logging.getLogger(__name__)

H_DISC_WORDS = ("ZZ", "ZI", "IZ", "XI", "IX")
VISIBLE_QUBIT = 1
LABELS = ("valid", "fraud")
FIELDS = ("time", "amount", "zip", "mcc", "label")
PROB_FLOOR = 1e-12


class DegenerateFeatureError(ValueError):
    """A feature cannot be discretized or standardized."""


# --------------------------------------------------------------------------
# records and I/O
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TransactionRecord:
    time: float
    amount: float
    zip: int
    mcc: int
    label: str

    def __post_init__(self):
        if not 0 <= self.time < 24:
            raise ValueError(f"time {self.time} outside [0, 24)")
        if not self.amount >= 0:
            raise ValueError(f"negative amount {self.amount}")
        if not 0 <= self.zip <= 99999:
            raise ValueError(f"zip {self.zip} is not a 5-digit code")
        if not 0 <= self.mcc < 10000:
            raise ValueError(f"mcc {self.mcc} outside [0, 10000)")
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")


def records_to_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    """Raw feature matrix ``(n, 4)`` and 0/1 labels (1 = fraud)."""
    records = list(records)
    if not records:
        raise ValueError("empty dataset")
    x = np.array([[r.time, r.amount, r.zip, r.mcc] for r in records], dtype=float)
    y = np.array([LABELS.index(r.label) for r in records], dtype=int)
    return x, y


def write_transactions(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELDS)
        for r in records:
            w.writerow([f"{r.time:.4f}", f"{r.amount:.2f}", f"{r.zip:05d}", r.mcc, r.label])


def read_transactions(path) -> list[TransactionRecord]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset {path} does not exist")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != FIELDS:
            raise ValueError(f"{path}: header must be {','.join(FIELDS)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(
                    TransactionRecord(
                        float(row["time"]), float(row["amount"]), int(row["zip"]), int(row["mcc"]), row["label"]
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------

_TIME_CENTERS = (9.0, 14.0, 21.0)
_AMOUNT_CENTERS = (20.0, 100.0, 300.0)
_ZIP_RANGES = ((1000, 19999), (40000, 69999), (80000, 99999))  # east, central, west
_RISKY_FRACTION = 1.0 / 9.0


def _risky(time, amount):
    return (time >= 18.0) & (amount >= 150.0)


def _draw(rng, n, fraud_rate, label_independent):
    tc = rng.integers(0, 3, n)
    time = np.mod(np.take(_TIME_CENTERS, tc) + rng.normal(0, 1.2, n), 24.0)
    ac = rng.integers(0, 3, n)
    amount = np.round(np.take(_AMOUNT_CENTERS, ac) * rng.lognormal(0, 0.25, n), 2)
    zc = rng.integers(0, 3, n)
    lo = np.take([r[0] for r in _ZIP_RANGES], zc)
    hi = np.take([r[1] for r in _ZIP_RANGES], zc)
    zips = rng.integers(lo, hi + 1)
    mcc = rng.integers(0, 10000, n)
    if label_independent:
        p = np.full(n, fraud_rate)
    else:
        p_hi = min(0.85, 0.8 * fraud_rate / _RISKY_FRACTION)
        p_lo = max(0.0, (fraud_rate - _RISKY_FRACTION * p_hi) / (1 - _RISKY_FRACTION))
        p = np.where(_risky(time, amount), p_hi, p_lo)
    fraud = rng.random(n) < p
    return [
        TransactionRecord(round(float(t), 4), float(a), int(z), int(m), LABELS[int(f)])
        for t, a, z, m, f in zip(time, amount, zips, mcc, fraud)
    ]


def generate_synthetic(
    seed: int,
    n_train: int = 500,
    n_test: int = 250,
    fraud_train: float = 0.15,
    fraud_test: float = 0.10,
    label_independent: bool = False,
):
    """Seeded synthetic transactions ``(train, test)``.

    Features are drawn from three clusters each (time of day, amount, ZIP
    region) plus a uniform MCC. Evening transactions above $150 carry most of
    the fraud; ``label_independent`` draws labels at the base rate instead.
    """
    if n_train < 1 or n_test < 1:
        raise ValueError("dataset sizes must be positive")
    for r in (fraud_train, fraud_test):
        if not 0 <= r <= 1:
            raise ValueError("fraud rates must lie in [0, 1]")
    train_seq, test_seq = np.random.SeedSequence(seed).spawn(2)
    train = _draw(np.random.default_rng(train_seq), n_train, fraud_train, label_independent)
    test = _draw(np.random.default_rng(test_seq), n_test, fraud_test, label_independent)
    return train, test


# --------------------------------------------------------------------------
# preprocessing
# --------------------------------------------------------------------------


def kmeans_bins(values, k: int = 3, max_iter: int = 100, tol: float = 1e-9) -> np.ndarray:
    """Sorted 1-D k-means centers, initialized at the (2j+1)/(2k) quantiles."""
    v = np.asarray(values, dtype=float).reshape(-1, 1)
    if len(np.unique(v)) < k:
        raise DegenerateFeatureError(f"need at least {k} distinct values to form {k} bins")
    init = np.quantile(v, (2 * np.arange(k) + 1) / (2 * k)).reshape(-1, 1)
    if len(np.unique(init)) < k:
        # heavy ties at the quantiles; spread the seeds over the distinct values
        distinct = np.unique(v)
        init = distinct[np.linspace(0, len(distinct) - 1, k).round().astype(int)].reshape(-1, 1)
    km = KMeans(n_clusters=k, init=init, n_init=1, max_iter=max_iter, tol=tol, algorithm="lloyd")
    km.fit(v)
    return np.sort(km.cluster_centers_.ravel())


class DiscPreprocessor(TransformerMixin, BaseEstimator):
    """Discretize (time, amount, zip) into 3 k-means bins, group MCC by
    thousands, then standardize with training statistics.

    Input columns are ``time, amount, zip, mcc``; output has 4 columns, or 5
    with ``add_bias`` (a trailing constant 1, not standardized).
    """

    def __init__(self, n_bins: int = 3, add_bias: bool = False):
        self.n_bins = n_bins
        self.add_bias = add_bias

    def _discretize(self, x):
        cols = [np.searchsorted(edges, x[:, j]) for j, edges in enumerate(self.edges_)]
        cols.append(np.floor(x[:, 3] / 1000.0))
        return np.column_stack(cols).astype(float)

    def fit(self, X, y=None):
        x = check_array(X, dtype=float)
        if x.shape[1] != 4:
            raise ValueError(f"expected 4 raw feature columns, got {x.shape[1]}")
        self.centers_ = []
        self.edges_ = []
        for j, name in enumerate(FIELDS[:3]):
            try:
                c = kmeans_bins(x[:, j], self.n_bins)
            except DegenerateFeatureError as exc:
                raise DegenerateFeatureError(f"feature {name!r}: {exc}") from None
            self.centers_.append(c)
            self.edges_.append(0.5 * (c[1:] + c[:-1]))
        d = self._discretize(x)
        self.mean_ = d.mean(axis=0)
        self.scale_ = d.std(axis=0)
        bad = [FIELDS[j] for j in np.flatnonzero(self.scale_ < 1e-12)]
        if bad:
            raise DegenerateFeatureError(f"constant feature(s) after discretization: {', '.join(bad)}")
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        x = check_array(X, dtype=float)
        if x.shape[1] != 4:
            raise ValueError(f"expected 4 raw feature columns, got {x.shape[1]}")
        z = (self._discretize(x) - self.mean_) / self.scale_
        if self.add_bias:
            z = np.column_stack([z, np.ones(len(z))])
        return z


def fit_preprocessor(train, add_bias: bool = False) -> DiscPreprocessor:
    x, _ = records_to_arrays(train)
    return DiscPreprocessor(add_bias=add_bias).fit(x)


# --------------------------------------------------------------------------
# conditioned Hamiltonians and losses
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionedHamiltonian:
    """``theta[i]`` is the weight vector of the i-th template word."""

    theta: np.ndarray
    template: tuple = H_DISC_WORDS

    def __post_init__(self):
        words = tuple(w if isinstance(w, PauliString) else PauliString(w) for w in self.template)
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 2 or theta.shape[0] != len(words):
            raise ValueError(f"theta must have shape ({len(words)}, d), got {theta.shape}")
        object.__setattr__(self, "template", words)
        object.__setattr__(self, "theta", theta)

    @property
    def n_features(self) -> int:
        return self.theta.shape[1]

    @classmethod
    def from_flat(cls, flat, n_features: int) -> "ConditionedHamiltonian":
        return cls(np.asarray(flat, dtype=float).reshape(len(H_DISC_WORDS), n_features))

    def coefficients(self, x) -> np.ndarray:
        """``f_i(θ, x)`` for one vector (→ (5,)) or a batch (→ (n, 5))."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_features:
            raise ValueError(f"feature length {x.shape[-1]} does not match θ length {self.n_features}")
        return x @ self.theta.T


def condition(h: ConditionedHamiltonian, x) -> PauliSum:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("condition takes a single feature vector")
    return PauliSum.from_template(h.template, h.coefficients(x))


def _unique_rows(x):
    xu, inv, counts = np.unique(np.round(x, 12), axis=0, return_inverse=True, return_counts=True)
    return xu, inv.ravel(), counts


def fraud_probabilities(h: ConditionedHamiltonian, x, mode: str = "exact", evo: EvolutionConfig | None = None, depth: int = 2):
    """``p(visible = 1 | x)`` for each row of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xu, inv, _ = _unique_rows(x)
    if mode == "exact":
        mats = np.stack([w.to_matrix() for w in h.template])
        hs = np.einsum("ni,ijk->njk", h.coefficients(xu), mats)
        rhos = gibbs_batch(hs)
        pu = np.real(rhos[:, 1, 1] + rhos[:, 3, 3])
    elif mode == "varqite":
        ansatz = AnsatzTemplate(2, depth)
        pu = np.empty(len(xu))
        for k, row in enumerate(xu):
            rho, _ = prepare_gibbs(condition(h, row), ansatz, evo)
            pu[k] = marginal_distribution(rho, (VISIBLE_QUBIT,))[1]
    else:
        raise ValueError(f"unknown Gibbs mode {mode!r}")
    return np.clip(pu, 0.0, 1.0)[inv]


def conditional_loss(h: ConditionedHamiltonian, x, y, gibbs_mode: str = "exact", evo=None, depth: int = 2) -> float:
    """Occurrence-weighted conditional cross-entropy over unique feature rows."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=int)
    if len(x) != len(y):
        raise ValueError("x and y lengths differ")
    p1 = fraud_probabilities(h, x, gibbs_mode, evo, depth)
    p_label = np.where(y == 1, p1, 1.0 - p1)
    # averaging per row equals Σ_x p_x Σ_v p_{v|x} (-log p_{v|x}) with counts as weights
    return float(-np.mean(np.log(np.maximum(p_label, PROB_FLOOR))))


def conditional_entropy(x, y) -> float:
    """Lower bound ``Σ_x p_x H(p_{·|x})`` of :func:`conditional_loss`."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=int)
    _, inv, counts = _unique_rows(x)
    frac = np.bincount(inv, weights=y) / counts
    ent = np.zeros_like(frac)
    mask = (frac > 0) & (frac < 1)
    f = frac[mask]
    ent[mask] = -(f * np.log(f) + (1 - f) * np.log(1 - f))
    return float((counts / counts.sum()) @ ent)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


@dataclass
class DiscTrainingResult:
    hamiltonian: ConditionedHamiltonian
    initial_loss: float
    final_loss: float
    history: list = field(default_factory=list)
    n_iterations: int = 0
    stopped: str = ""
    optimizer: str = "L-BFGS-B (central-difference gradient)"


def _central_gradient(f, theta, step):
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        g[i] = (f(theta + e) - f(theta - e)) / (2 * step)
    return g


def train_discriminative(
    x,
    y,
    seed: int | None = 0,
    theta0=None,
    maxiter: int = 100,
    fd_step: float = 1e-6,
    patience: int = 10,
    bound: float | None = 1.0,
) -> DiscTrainingResult:
    """Minimize the exact-mode conditional loss with L-BFGS-B.

    ``θ`` starts at ``theta0`` or ``U[-1, 1]`` draws. The run stops after
    ``maxiter`` iterations or once ``patience`` consecutive iterations fail to
    improve the best loss; the best evaluated ``θ`` is returned.
    """
    x, y = check_X_y(x, y, dtype=float)
    y = y.astype(int)
    d = x.shape[1]
    n_par = len(H_DISC_WORDS) * d
    if theta0 is None:
        theta0 = np.random.default_rng(seed).uniform(-1.0, 1.0, n_par)
    theta0 = np.asarray(theta0, dtype=float).ravel()
    if bound is not None:
        theta0 = np.clip(theta0, -bound, bound)
    if theta0.size != n_par:
        raise ValueError(f"theta0 needs {n_par} entries")

    best = {"f": np.inf, "theta": theta0.copy()}

    def f(flat):
        val = conditional_loss(ConditionedHamiltonian.from_flat(flat, d), x, y)
        if val < best["f"]:
            best["f"], best["theta"] = val, flat.copy()
        return val

    initial = f(theta0)
    history = [initial]
    state = {"stall": 0, "reason": "maxiter"}

    def callback(intermediate_result):
        val = float(intermediate_result.fun)
        state["stall"] = state["stall"] + 1 if val >= min(history) - 1e-12 else 0
        history.append(val)
        if state["stall"] >= patience:
            state["reason"] = "stagnation"
            raise StopIteration

    res = minimize(
        f,
        theta0,
        jac=lambda th: _central_gradient(f, th, fd_step),
        method="L-BFGS-B",
        callback=callback,
        bounds=None if bound is None else [(-bound, bound)] * n_par,
        options={"maxiter": maxiter},
    )
    if res.success and state["reason"] == "maxiter" and res.nit < maxiter:
        state["reason"] = "converged"
    h = ConditionedHamiltonian.from_flat(best["theta"], d)
    logger.info("discriminative training: %s after %d iterations, loss %.5f -> %.5f", state["reason"], res.nit, initial, best["f"])
    return DiscTrainingResult(h, initial, float(best["f"]), history, int(res.nit), state["reason"])


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------


@dataclass
class MetricsReport:
    accuracy: float
    recall: float
    precision: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "MetricsReport":
        t = np.asarray(y_true, dtype=int)
        p = np.asarray(y_pred, dtype=int)
        if t.shape != p.shape or t.size == 0:
            raise ValueError("label arrays must be nonempty and equally long")
        tp = int(np.sum((t == 1) & (p == 1)))
        fp = int(np.sum((t == 0) & (p == 1)))
        tn = int(np.sum((t == 0) & (p == 0)))
        fn = int(np.sum((t == 1) & (p == 0)))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls((tp + tn) / t.size, recall, precision, f1, tp, fp, tn, fn)

    def as_dict(self) -> dict:
        return {**asdict(self), "n": self.n}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def predict_labels(p_fraud) -> np.ndarray:
    # ties go to valid
    return (np.asarray(p_fraud) > 0.5).astype(int)


def evaluate(h: ConditionedHamiltonian, x, y, evo: EvolutionConfig | None = None, depth: int = 2, mode: str = "varqite"):
    """Predict with VarQITE-prepared Gibbs states; returns ``(report, p_fraud)``."""
    p1 = fraud_probabilities(h, x, mode, evo, depth)
    return MetricsReport.from_predictions(y, predict_labels(p1)), p1


class QBMClassifier(ClassifierMixin, BaseEstimator):
    """Estimator over preprocessed features: trained exactly, predicts with
    ``predict_mode`` Gibbs states (VarQITE by default)."""

    def __init__(self, depth=2, n_steps=10, maxiter=100, fd_step=1e-6, patience=10, predict_mode="varqite", random_state=0):
        self.depth = depth
        self.n_steps = n_steps
        self.maxiter = maxiter
        self.fd_step = fd_step
        self.patience = patience
        self.predict_mode = predict_mode
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        labels = np.unique(y)
        if not set(labels.tolist()) <= {0, 1}:
            raise ValueError("labels must be 0 (valid) or 1 (fraud)")
        self.classes_ = np.array([0, 1])
        self.result_ = train_discriminative(X, y, self.random_state, None, self.maxiter, self.fd_step, self.patience)
        self.hamiltonian_ = self.result_.hamiltonian
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "hamiltonian_")
        X = check_array(X, dtype=float)
        p1 = fraud_probabilities(self.hamiltonian_, X, self.predict_mode, EvolutionConfig(n_steps=self.n_steps), self.depth)
        return np.column_stack([1 - p1, p1])

    def predict(self, X):
        return predict_labels(self.predict_proba(X)[:, 1])
