"""Classical estimation on a small hidden Markov model.

The chain has hidden configurations ``x_0 .. x_N`` (``N = n_steps``).
Configuration ``x_k`` for ``k < N`` emits an observed symbol ``o_k`` and an
unobserved symbol ``u_k`` before moving to ``x_{k+1}``.  At step ``tau``
the past record is ``o_0 .. o_{tau-1}`` and the future record is
``o_tau .. o_{N-1}``.

Because everything is diagonal in the configuration basis, the
smoothed weak-value estimate equals the smoothed distribution and the
fidelity- and indicator-based estimators coincide.  Both statements are
checked here against brute-force enumeration of hidden paths.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.optimize

MAX_ENUM_STATES = 6
MAX_ENUM_STEPS = 8


class DegenerateMaximumError(ValueError):
    """Raised when the smoothed distribution has no unique maximum."""


@dataclass(frozen=True)
class DiscreteDist:
    """Probabilities over a finite configuration set."""

    probs: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or len(p) == 0:
            raise ValueError("probabilities must be a non-empty 1-D array")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and non-negative")
        if self.normalized and abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not one")
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return len(self.probs)

    @classmethod
    def from_weights(cls, w) -> "DiscreteDist":
        w = np.asarray(w, dtype=float)
        total = w.sum()
        if not total > 0:
            raise ValueError("observed sequence has zero probability")
        return cls(w / total)

    @classmethod
    def delta(cls, n: int, i: int) -> "DiscreteDist":
        p = np.zeros(n)
        p[i] = 1.0
        return cls(p)


def _stochastic(a, name: str, ndim: int = 2) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D")
    if np.any(a < 0) or np.any(np.abs(a.sum(axis=-1) - 1.0) > 1e-12):
        raise ValueError(f"rows of {name} must be probability vectors")
    return a


@dataclass(frozen=True)
class ToyHmm:
    """Hidden Markov testbed with observed and unobserved emissions.

    ``transition[i, j]`` is the probability of moving from i to j;
    ``obs_emission[i, o]`` and ``unobs_emission[i, u]`` are emission
    probabilities from configuration i.
    """

    transition: np.ndarray
    obs_emission: np.ndarray
    unobs_emission: np.ndarray
    initial: DiscreteDist
    n_steps: int

    def __post_init__(self):
        t = _stochastic(self.transition, "transition")
        n = t.shape[0]
        if t.shape != (n, n):
            raise ValueError("transition must be square")
        o = _stochastic(self.obs_emission, "obs_emission")
        u = _stochastic(self.unobs_emission, "unobs_emission")
        if o.shape[0] != n or u.shape[0] != n:
            raise ValueError("emission tables need one row per configuration")
        init = self.initial if isinstance(self.initial, DiscreteDist) else DiscreteDist(self.initial)
        if len(init) != n:
            raise ValueError("initial distribution has the wrong size")
        if not 1 <= n <= MAX_ENUM_STATES:
            raise ValueError(f"n_states must be in 1..{MAX_ENUM_STATES}")
        if not 1 <= self.n_steps <= MAX_ENUM_STEPS:
            raise ValueError(f"n_steps must be in 1..{MAX_ENUM_STEPS}")
        object.__setattr__(self, "transition", t)
        object.__setattr__(self, "obs_emission", o)
        object.__setattr__(self, "unobs_emission", u)
        object.__setattr__(self, "initial", init)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.obs_emission.shape[1]

    @classmethod
    def random(cls, rng: np.random.Generator, n_states: int = 3, n_steps: int = 5, n_obs: int = 2, n_unobs: int = 2) -> "ToyHmm":
        def rows(shape):
            return rng.dirichlet(np.ones(shape[1]), size=shape[0])

        return cls(
            rows((n_states, n_states)),
            rows((n_states, n_obs)),
            rows((n_states, n_unobs)),
            DiscreteDist(rng.dirichlet(np.ones(n_states))),
            n_steps,
        )

    def sample(self, rng: np.random.Generator):
        """Draw (hidden path, observed symbols, unobserved symbols)."""
        x = np.empty(self.n_steps + 1, dtype=int)
        o = np.empty(self.n_steps, dtype=int)
        u = np.empty(self.n_steps, dtype=int)
        x[0] = rng.choice(self.n_states, p=self.initial.probs)
        for k in range(self.n_steps):
            o[k] = rng.choice(self.n_symbols, p=self.obs_emission[x[k]])
            u[k] = rng.choice(self.unobs_emission.shape[1], p=self.unobs_emission[x[k]])
            x[k + 1] = rng.choice(self.n_states, p=self.transition[x[k]])
        return x, o, u

    def to_dict(self) -> dict:
        return {
            "transition": self.transition.tolist(),
            "obs_emission": self.obs_emission.tolist(),
            "unobs_emission": self.unobs_emission.tolist(),
            "initial": self.initial.probs.tolist(),
            "n_steps": self.n_steps,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ToyHmm":
        keys = {"transition", "obs_emission", "unobs_emission", "initial", "n_steps"}
        missing = keys - set(data)
        if missing:
            raise ValueError(f"missing keys: {sorted(missing)}")
        return cls(
            np.array(data["transition"]),
            np.array(data["obs_emission"]),
            np.array(data["unobs_emission"]),
            DiscreteDist(np.array(data["initial"])),
            int(data["n_steps"]),
        )

    @classmethod
    def load(cls, path) -> "ToyHmm":
        return cls.from_dict(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# generic estimators


def bme(dist: DiscreteDist, values) -> float:
    """Posterior mean of ``values`` (minimizes the expected square deviation)."""
    values = np.asarray(values, dtype=float)
    if values.shape != dist.probs.shape:
        raise ValueError("values and distribution differ in length")
    return float(dist.probs @ values)


def mle(dist: DiscreteDist) -> int:
    """Most probable configuration; ties go to the lowest index."""
    return int(np.argmax(dist.probs))


# --------------------------------------------------------------------------
# forward-backward


def _check_observed(hmm: ToyHmm, observed, tau: int | None = None) -> np.ndarray:
    o = np.asarray(observed, dtype=int)
    if o.shape != (hmm.n_steps,):
        raise ValueError(f"observed sequence must have {hmm.n_steps} symbols")
    if np.any(o < 0) or np.any(o >= hmm.n_symbols):
        raise ValueError("observed symbol out of range")
    if tau is not None and not 0 <= tau <= hmm.n_steps:
        raise ValueError(f"tau must be in 0..{hmm.n_steps}")
    return o


def forward(hmm: ToyHmm, observed) -> np.ndarray:
    """Rows ``P(x_tau, o_0 .. o_{tau-1})`` for tau = 0..N."""
    o = _check_observed(hmm, observed)
    a = np.empty((hmm.n_steps + 1, hmm.n_states))
    a[0] = hmm.initial.probs
    for k in range(hmm.n_steps):
        a[k + 1] = (a[k] * hmm.obs_emission[:, o[k]]) @ hmm.transition
    return a


def backward(hmm: ToyHmm, observed) -> np.ndarray:
    """Rows ``P(o_tau .. o_{N-1} | x_tau)`` for tau = 0..N."""
    o = _check_observed(hmm, observed)
    b = np.empty((hmm.n_steps + 1, hmm.n_states))
    b[-1] = 1.0
    for k in range(hmm.n_steps - 1, -1, -1):
        b[k] = hmm.obs_emission[:, o[k]] * (hmm.transition @ b[k + 1])
    return b


def classical_filtered(hmm: ToyHmm, observed, tau: int) -> DiscreteDist:
    _check_observed(hmm, observed, tau)
    return DiscreteDist.from_weights(forward(hmm, observed)[tau])


def classical_smoothed(hmm: ToyHmm, observed, tau: int) -> DiscreteDist:
    """Posterior of ``x_tau`` given the whole observed sequence."""
    _check_observed(hmm, observed, tau)
    return DiscreteDist.from_weights(forward(hmm, observed)[tau] * backward(hmm, observed)[tau])


def classical_swv(hmm: ToyHmm, observed, tau: int) -> DiscreteDist:
    """Smoothed weak-value estimate ``(E rho + rho E) / Tr(E rho + rho E)``
    built from the diagonal filtered state and diagonal retrodictive effect."""
    _check_observed(hmm, observed, tau)
    rho = np.diag(classical_filtered(hmm, observed, tau).probs)
    effect = np.diag(backward(hmm, observed)[tau])
    anti = effect @ rho + rho @ effect
    return DiscreteDist.from_weights(np.diag(anti))


def unique_argmax(dist: DiscreteDist, tol: float = 1e-12) -> int:
    p = dist.probs
    top = p.max()
    if np.sum(p >= top - tol) > 1:
        raise DegenerateMaximumError("smoothed distribution has several maxima")
    return int(np.argmax(p))


def expected_negative_fidelity(estimate: DiscreteDist, posterior: DiscreteDist) -> float:
    """Expected ``-F`` against a true configuration drawn from ``posterior``;
    the classical fidelity of ``q`` with a delta at x is ``q(x)``."""
    return -float(estimate.probs @ posterior.probs)


def expected_negative_indicator(estimate: DiscreteDist, posterior: DiscreteDist) -> float:
    """Expected ``-delta(estimate, true)``; only delta estimates can score."""
    p = estimate.probs
    if np.count_nonzero(p) != 1 or not np.isclose(p.max(), 1.0):
        return 0.0
    return -float(posterior.probs[int(np.argmax(p))])


def classical_nF_nE_estimators(hmm: ToyHmm, observed, tau: int) -> tuple[DiscreteDist, DiscreteDist]:
    """Minimizers of the expected negative fidelity and negative indicator.

    The fidelity optimum is found by a linear program over the simplex,
    the indicator optimum by scanning delta distributions.  Both must be
    the delta at the unique smoothed maximum; a tie raises
    :class:`DegenerateMaximumError`.
    """
    post = classical_smoothed(hmm, observed, tau)
    top = unique_argmax(post)
    n = len(post)
    lp = scipy.optimize.linprog(-post.probs, A_eq=np.ones((1, n)), b_eq=[1.0], bounds=[(0, 1)] * n, method="highs")
    if not lp.success:
        raise RuntimeError(f"linear program failed: {lp.message}")
    nf = DiscreteDist.delta(n, int(np.argmax(lp.x)))
    if not np.allclose(lp.x, nf.probs, atol=1e-9):
        raise DegenerateMaximumError("fidelity optimum is not a vertex")
    scores = [expected_negative_indicator(DiscreteDist.delta(n, i), post) for i in range(n)]
    ne = DiscreteDist.delta(n, int(np.argmin(scores)))
    if int(np.argmax(nf.probs)) != top or int(np.argmax(ne.probs)) != top:
        raise RuntimeError("optimizers disagree with the smoothed maximum")
    return nf, ne


# --------------------------------------------------------------------------
# brute-force oracle


def enumerate_paths(hmm: ToyHmm, observed, include_unobserved: bool = False):
    """Every hidden path with its joint probability with the observations.

    With ``include_unobserved`` every unobserved symbol sequence is also
    enumerated, so each row is a (path, unobserved record) pair.

    Returns
    -------
    paths : (P, N + 1) int array
    weights : (P,) float array
    records : (P, N) int array or None
    """
    o = _check_observed(hmm, observed)
    n, N = hmm.n_states, hmm.n_steps
    paths = np.array(list(itertools.product(range(n), repeat=N + 1)), dtype=int)
    w = hmm.initial.probs[paths[:, 0]].copy()
    for k in range(N):
        w *= hmm.obs_emission[paths[:, k], o[k]] * hmm.transition[paths[:, k], paths[:, k + 1]]
    if not include_unobserved:
        return paths, w, None
    m = hmm.unobs_emission.shape[1]
    records = np.array(list(itertools.product(range(m), repeat=N)), dtype=int).reshape(-1, N)
    pw = np.ones((len(paths), len(records)))
    for k in range(N):
        pw *= hmm.unobs_emission[paths[:, k][:, None], records[None, :, k]]
    pi = np.repeat(np.arange(len(paths)), len(records))
    ri = np.tile(np.arange(len(records)), len(paths))
    return paths[pi], (w[:, None] * pw).ravel(), records[ri]


def enumeration_posterior(hmm: ToyHmm, observed, tau: int, include_unobserved: bool = False) -> DiscreteDist:
    """Posterior of ``x_tau`` by summing the joint probability over all paths."""
    _check_observed(hmm, observed, tau)
    paths, w, _ = enumerate_paths(hmm, observed, include_unobserved)
    return DiscreteDist.from_weights(np.bincount(paths[:, tau], weights=w, minlength=hmm.n_states))


def enumeration_minimizers(posterior: DiscreteDist):
    """Delta candidates minimizing expected -F and expected -delta by exhaustion."""
    n = len(posterior)
    cands = [DiscreteDist.delta(n, i) for i in range(n)]
    nf = min(range(n), key=lambda i: expected_negative_fidelity(cands[i], posterior))
    ne = min(range(n), key=lambda i: expected_negative_indicator(cands[i], posterior))
    return cands[nf], cands[ne]


def check_equivalences(hmm: ToyHmm, observed, tau: int, tol: float = 1e-10) -> dict:
    """Compare forward-backward, SWV and the delta estimators with enumeration."""
    oracle = enumeration_posterior(hmm, observed, tau)
    smoothed = classical_smoothed(hmm, observed, tau)
    swv = classical_swv(hmm, observed, tau)
    out = {
        "smoothed_vs_enumeration": float(np.max(np.abs(smoothed.probs - oracle.probs))),
        "swv_vs_smoothed": float(np.max(np.abs(swv.probs - smoothed.probs))),
        "degenerate": False,
        "nf_equals_ne": None,
    }
    try:
        nf, ne = classical_nF_nE_estimators(hmm, observed, tau)
    except DegenerateMaximumError:
        out["degenerate"] = True
    else:
        ref_nf, ref_ne = enumeration_minimizers(oracle)
        out["nf_equals_ne"] = bool(
            np.array_equal(nf.probs, ne.probs) and np.array_equal(nf.probs, ref_nf.probs) and np.array_equal(ne.probs, ref_ne.probs)
        )
    out["ok"] = out["smoothed_vs_enumeration"] < tol and out["swv_vs_smoothed"] < tol and out["nf_equals_ne"] is not False
    return out


__all__ = [
    "DegenerateMaximumError",
    "DiscreteDist",
    "ToyHmm",
    "backward",
    "bme",
    "check_equivalences",
    "classical_filtered",
    "classical_nF_nE_estimators",
    "classical_smoothed",
    "classical_swv",
    "enumerate_paths",
    "enumeration_minimizers",
    "enumeration_posterior",
    "expected_negative_fidelity",
    "expected_negative_indicator",
    "forward",
    "mle",
]
