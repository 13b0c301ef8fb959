import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from varqbm.ansatz import apply, state_derivatives
from varqbm.disc import ConditionedHamiltonian, MetricsReport, condition
from varqbm.qbm import AMSGradState, TargetDistribution, amsgrad_step, loss
from varqbm.qcore import (
    PauliString,
    PauliSum,
    apply_pauli,
    bell_pairs,
    exact_gibbs,
    partial_trace,
    pure_density,
    reduced_state,
)
from varqbm.thetagrad import marginal_distribution
from varqbm.varqite import HadamardTestSpec, assemble_a, hadamard_test_value

from conftest import random_circuit, random_state

seeds = st.integers(0, 2**32 - 1)
words = st.integers(1, 3).flatmap(lambda n: st.text("IXYZ", min_size=n, max_size=n))
probs = st.integers(1, 3).flatmap(
    lambda n: arrays(float, 2**n, elements=st.floats(0, 1)).filter(lambda a: a.sum() > 1e-3).map(lambda a: a / a.sum())
)
FAST = settings(max_examples=40, deadline=None)


@FAST
@given(words, seeds)
def test_apply_pauli_matches_matrix(word, seed):
    rng = np.random.default_rng(seed)
    psi = random_state(rng, len(word))
    np.testing.assert_allclose(apply_pauli(word, psi), PauliString(word).to_matrix() @ psi, atol=1e-12)


@FAST
@given(st.lists(st.tuples(st.floats(-3, 3), st.text("IXYZ", min_size=2, max_size=2)), min_size=1, max_size=5), st.floats(0.2, 5))
def test_gibbs_is_density_matrix(terms, kbt):
    rho = exact_gibbs(PauliSum.from_terms(terms), kbt)
    np.testing.assert_allclose(rho, rho.conj().T, atol=1e-12)
    assert abs(np.trace(rho) - 1) < 1e-10
    assert np.linalg.eigvalsh(rho).min() > -1e-10


@FAST
@given(st.integers(1, 3))
def test_bell_pairs_reduce_to_identity(n):
    np.testing.assert_allclose(reduced_state(bell_pairs(n), range(n)), np.eye(2**n) / 2**n, atol=1e-12)


@FAST
@given(seeds, st.integers(1, 3))
def test_partial_trace_consistency(seed, n):
    rng = np.random.default_rng(seed)
    psi = random_state(rng, n + 1)
    keep = sorted(rng.choice(n + 1, size=int(rng.integers(1, n + 2)), replace=False).tolist())
    np.testing.assert_allclose(partial_trace(pure_density(psi), keep), reduced_state(psi, keep), atol=1e-12)


@FAST
@given(seeds, st.integers(1, 3), st.integers(1, 6))
def test_metric_tensor_symmetric_psd(seed, n, q):
    rng = np.random.default_rng(seed)
    c = random_circuit(rng, n, q)
    a = assemble_a(c, rng.uniform(-np.pi, np.pi, q))
    assert np.max(np.abs(a - a.T)) <= 1e-9
    assert np.linalg.eigvalsh(a).min() >= -1e-9


@FAST
@given(seeds)
def test_hadamard_overlap(seed):
    rng = np.random.default_rng(seed)
    c = random_circuit(rng, 2, 4)
    w = rng.normal(size=4)
    _, dpsi = state_derivatives(c, w)
    i, j = rng.integers(0, 4, 2)
    spec = HadamardTestSpec(c, tuple(w), (int(i),), (int(j),))
    assert abs(hadamard_test_value(spec, 0.0) - 4 * np.vdot(dpsi[i], dpsi[j]).real) <= 1e-10


@FAST
@given(seeds, st.integers(2, 3))
def test_marginals_normalized(seed, n):
    rng = np.random.default_rng(seed)
    rho = pure_density(apply(random_circuit(rng, n, 4), rng.normal(size=4)))
    vis = sorted(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False).tolist())
    assert abs(marginal_distribution(rho, vis).sum() - 1) <= 1e-9


@FAST
@given(probs, st.data())
def test_cross_entropy_bounded_by_entropy(p_data, data):
    p_model = data.draw(arrays(float, p_data.size, elements=st.floats(0, 1)))
    p_model = p_model / p_model.sum() if p_model.sum() > 0 else np.full(p_data.size, 1 / p_data.size)
    target = TargetDistribution(tuple(p_data / p_data.sum()))
    assert loss(p_model, target) >= target.entropy - 1e-9


@FAST
@given(st.lists(arrays(float, 3, elements=st.floats(-1e3, 1e3)), min_size=1, max_size=30))
def test_amsgrad_cap_nondecreasing(grads):
    th, state = np.zeros(3), AMSGradState.zeros(3)
    for g in grads:
        prev = state.v_hat.copy()
        th, state = amsgrad_step(th, g, state)
        assert np.all(state.v_hat >= prev)
        assert np.all(np.isfinite(th))


@FAST
@given(seeds, st.floats(-3, 3), st.floats(-3, 3))
def test_condition_bilinear(seed, a, b):
    rng = np.random.default_rng(seed)
    t = rng.normal(size=(5, 3))
    x1, x2 = rng.normal(size=(2, 3))
    h = ConditionedHamiltonian(t)
    lhs = condition(h, a * x1 + b * x2).coefficients
    rhs = a * condition(h, x1).coefficients + b * condition(h, x2).coefficients
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(rhs).max()))


@FAST
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60))
def test_metrics_identities(pairs):
    t, p = map(np.array, zip(*pairs))
    r = MetricsReport.from_predictions(t, p)
    assert r.n == len(pairs)
    assert r.accuracy == (r.tp + r.tn) / r.n
    denom = r.precision + r.recall
    assert r.f1 == (2 * r.precision * r.recall / denom if denom > 0 else 0.0)
    assert all(0 <= v <= 1 for v in (r.accuracy, r.precision, r.recall, r.f1))
