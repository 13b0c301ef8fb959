"""Symbolic enumeration of the Hadamard-test circuits behind one training step.

The unit of cost is one circuit of the form ``Re(e^{iα} <ψ_U|ψ_V>)``. Symmetric
quantities are evaluated once per unordered index pair:

===========  ==========================  =========================================
category     circuits per time step      terms
===========  ==========================  =========================================
A            q(q+1)/2                    Re<∂_pψ|∂_qψ>, p ≤ q
C            q·p                         Re<∂_pψ|h_i|ψ>
dA           q·q(q+1)/2                  Re<∂²_{p,s}ψ|∂_qψ>, p ≤ s, all q
dC           p·q(q+1)                    Re<∂_pψ|h_i|∂_sψ> and Re<∂²_{p,s}ψ|h_i|ψ>, p ≤ s
===========  ==========================  =========================================

The direct term of ``∂C/∂θ_j`` reuses the C circuits and the ``dA``/``dC``
circuits do not depend on which θ is differentiated, so they are counted once
per step. Each Gibbs preparation ends with one measurement circuit, and the
analytic gradient adds ``2q`` π/2-shift evaluations.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterator

MODES = ("prep-only", "autodiff", "finite-diff")


@dataclass
class CircuitCounts:
    a_entries: int = 0
    c_entries: int = 0
    da_entries: int = 0
    dc_entries: int = 0
    shift_evaluations: int = 0
    measurements: int = 0

    @property
    def total(self) -> int:
        return (
            self.a_entries
            + self.c_entries
            + self.da_entries
            + self.dc_entries
            + self.shift_evaluations
            + self.measurements
        )

    def __add__(self, other: "CircuitCounts") -> "CircuitCounts":
        return CircuitCounts(**{k: v + getattr(other, k) for k, v in asdict(self).items()})

    def scaled(self, factor: int) -> "CircuitCounts":
        return CircuitCounts(**{k: v * factor for k, v in asdict(self).items()})

    def as_dict(self) -> dict:
        return {**asdict(self), "total": self.total}


# each circuit is described by (left insertions, right insertions, term index or None)


def a_circuits(q: int) -> Iterator[tuple]:
    for p in range(q):
        for r in range(p, q):
            yield (p,), (r,), None


def c_circuits(q: int, p_terms: int) -> Iterator[tuple]:
    for p in range(q):
        for i in range(p_terms):
            yield (p,), (), i


def da_circuits(q: int) -> Iterator[tuple]:
    for p in range(q):
        for s in range(p, q):
            for r in range(q):
                yield (p, s), (r,), None


def dc_circuits(q: int, p_terms: int) -> Iterator[tuple]:
    for i in range(p_terms):
        for p in range(q):
            for s in range(p, q):
                yield (p,), (s,), i
                yield (p, s), (), i


def _count(it) -> int:
    return sum(1 for _ in it)


def step_counts(q: int, p: int, track_theta: bool) -> CircuitCounts:
    """Circuits for one VarQITE time step, enumerated."""
    counts = CircuitCounts(a_entries=_count(a_circuits(q)), c_entries=_count(c_circuits(q, p)))
    if track_theta:
        counts.da_entries = _count(da_circuits(q))
        counts.dc_entries = _count(dc_circuits(q, p))
    return counts


def count_circuits(t: int, q: int, p: int, mode: str) -> CircuitCounts:
    """Instrumented tally for one loss gradient (or bare Gibbs preparation)."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    if min(t, q, p) < 1:
        raise ValueError("t, q and p must be positive")
    track = mode == "autodiff"
    prep = CircuitCounts()
    for _ in range(t):
        prep = prep + step_counts(q, p, track)
    prep.measurements += 1
    if mode == "autodiff":
        prep.shift_evaluations += 2 * q
    if mode == "finite-diff":
        # one run at θ plus one ε-shifted run per Hamiltonian parameter
        return prep.scaled(p + 1)
    return prep


def closed_form(t: int, q: int, p: int, mode: str) -> int:
    """Analytic total matching :func:`count_circuits`."""
    prep = t * (q * (q + 1) // 2 + q * p) + 1
    if mode == "prep-only":
        return prep
    if mode == "finite-diff":
        return (p + 1) * prep
    if mode == "autodiff":
        return prep + t * (q * q * (q + 1) // 2 + p * q * (q + 1)) + 2 * q
    raise ValueError(f"unknown mode {mode!r}")


def asymptotic_class(mode: str) -> str:
    return {
        "prep-only": "Θ(t·q·(q+p))",
        "autodiff": "Θ(t·q²·(q+p))",
        "finite-diff": "Θ(t·p·q·(q+p))",
    }[mode]
