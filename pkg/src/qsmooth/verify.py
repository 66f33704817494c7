"""Verification suites shared by the command line and the test suite.

Each suite returns a :class:`SuiteResult` whose rows are individual
checks with the measured value, the threshold and the verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classical import ToyHmm, check_equivalences
from .core import BlochYZ, Params, angles_and_radii, trace_product
from .costs import cost_c6, cost_c7
from .fokker_planck import INITIAL_WIDTH, bloch_means
from .pipeline import PURE_ESTIMATORS, run_block
from .trajectory import chunk_generator, lindblad_solution, propagate_ostensible, weighted_mean_and_se


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""


@dataclass
class SuiteResult:
    name: str
    checks: list = field(default_factory=list)
    data: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def add(self, name, value, threshold, passed, detail=""):
        self.checks.append(Check(name, float(value), float(threshold), bool(passed), detail))

    def table(self) -> str:
        w = max(len(c.name) for c in self.checks) if self.checks else 10
        lines = [f"{self.name}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            tag = "pass" if c.passed else "FAIL"
            extra = f"  {c.detail}" if c.detail else ""
            lines.append(f"  {tag}  {c.name:<{w}}  value={c.value:.6g}  threshold={c.threshold:.6g}{extra}")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# Monte Carlo against the density pipeline


def mc_samples(params: Params, n_traj: int, probe_steps, seed: int, chunk: int = 5000, initial_width: float = 0.0):
    """Angles at the probe steps plus filtered and smoothed log-weights.

    The filtered weight at a probe is the no-jump likelihood accumulated
    so far; the smoothed weight is the likelihood of the whole block,
    including the final jump, which is proportional to ``1 + cos theta_T``.
    """
    n = params.n_steps
    steps = np.unique(np.append(np.asarray(probe_steps, dtype=int), n))
    thetas, logw = [], []
    for i, start in enumerate(range(0, n_traj, chunk)):
        m = min(chunk, n_traj - start)
        th, lw = propagate_ostensible(params, m, chunk_generator(seed, i), steps, n_steps=n, initial_width=initial_width)
        thetas.append(th)
        logw.append(lw)
    th = np.concatenate(thetas, axis=1)
    lw = np.concatenate(logw, axis=1)
    with np.errstate(divide="ignore"):
        final = lw[-1] + np.log1p(np.cos(th[-1]))
    idx = [int(np.searchsorted(steps, k)) for k in probe_steps]
    return th[idx], lw[idx], final


def mc_cross_check(
    params: Params | None = None,
    n_traj: int = 100_000,
    n_probes: int = 8,
    seed: int | None = None,
    n_se: float = 3.0,
    grid_n: int | None = 8192,
    mc_dt: float | None = 2.5e-4,
) -> SuiteResult:
    """Filtered and smoothed Bloch components: density pipeline against
    weighted ostensible Monte Carlo at evenly spaced probe times.

    Both methods carry a first-order discretization bias (grid spacing
    for the density, time step for the sampled map) that is larger than
    the Monte Carlo error at early times, when the distribution is narrow.
    ``grid_n`` and ``mc_dt`` refine each side; pass None to keep the
    values in ``params``.  The sampled trajectories start from the same
    Gaussian spread around the ground state as the density.
    """
    params = params or Params()
    seed = params.seed if seed is None else seed
    n = params.n_steps
    if n % n_probes:
        raise ValueError("the number of steps must be a multiple of n_probes")
    stride = n // n_probes
    pde_params = params if grid_n is None else params.replace(theta_grid_n=grid_n)
    block = run_block(pde_params, estimators=("q1",), store_every=stride, with_records=False)
    fy, fz = bloch_means(block.history.grid, block.history.normalized_values())
    sy, sz = block.tracks["q1"].y, block.tracks["q1"].z
    mc_params = params if mc_dt is None else params.replace(dt=mc_dt)
    times = np.arange(1, n_probes + 1) * stride * params.dt
    mc_steps = np.round(times / mc_params.dt).astype(int)
    th, lw, final = mc_samples(mc_params, n_traj, mc_steps, seed, initial_width=INITIAL_WIDTH)
    res = SuiteResult("mc-cross-check")
    rows = []
    for j, t in enumerate(times):
        k = j + 1
        for kind, ref, w in (("filtered", (fy[k], fz[k]), lw[j]), ("smoothed", (sy[k], sz[k]), final)):
            for comp, fn, r in (("y", np.sin, ref[0]), ("z", np.cos, ref[1])):
                mean, se = weighted_mean_and_se(fn(th[j]), w)
                z = abs(mean - r) / se if se > 0 else math.inf
                rows.append({"t": float(t), "kind": kind, "component": comp, "pde": float(r), "mc": mean, "se": se})
                res.add(f"{kind} {comp} t={t:.2f}", z, n_se, z <= n_se, f"pde={r:+.5f} mc={mean:+.5f} se={se:.1e}")
    res.data["rows"] = rows
    return res


# --------------------------------------------------------------------------
# Lindblad consistency


def lindblad_mc_error(params: Params, n_traj: int, seed: int, probe_steps) -> float:
    """RMS deviation of the jump-including ostensible ensemble from the
    master-equation solution over the probe times and both components."""
    th, lw = propagate_ostensible(params, n_traj, chunk_generator(seed, 0), probe_steps, with_jumps=True)
    w = np.exp(lw)
    ey, ez, _ = lindblad_solution(params, np.asarray(probe_steps) * params.dt)
    my = np.array([math.fsum(r) / n_traj for r in w * np.sin(th)])
    mz = np.array([math.fsum(r) / n_traj for r in w * np.cos(th)])
    return float(np.sqrt(np.mean(np.concatenate([(my - ey) ** 2, (mz - ez) ** 2]))))


def lindblad_scaling(
    params: Params | None = None,
    sizes=(1000, 4000, 16000),
    replicates: int = 32,
    seed: int = 2024,
    T: float = 1.0,
) -> tuple[float, np.ndarray]:
    """Fitted exponent of the replicate-averaged RMS error against N."""
    params = (params or Params()).replace(T=T)
    n = params.n_steps
    probes = np.linspace(0, n, 9)[1:].round().astype(int)
    errs = np.empty((len(sizes), replicates))
    for i, size in enumerate(sizes):
        for r in range(replicates):
            errs[i, r] = lindblad_mc_error(params, size, seed * 1000 + 100 * i + r, probes)
    rms = np.sqrt(np.mean(errs**2, axis=1))
    slope = np.polyfit(np.log(sizes), np.log(rms), 1)[0]
    return float(slope), rms


# --------------------------------------------------------------------------
# classical and structural suites


def classical_equivalence(n_instances: int = 200, seed: int = 7) -> SuiteResult:
    rng = np.random.default_rng(seed)
    res = SuiteResult("classical-equivalence")
    worst_fb = worst_swv = 0.0
    mismatched = degenerate = 0
    for _ in range(n_instances):
        hmm = ToyHmm.random(rng, int(rng.integers(2, 5)), int(rng.integers(1, 7)), int(rng.integers(2, 4)), 2)
        _, obs, _ = hmm.sample(rng)
        tau = int(rng.integers(0, hmm.n_steps + 1))
        out = check_equivalences(hmm, obs, tau)
        worst_fb = max(worst_fb, out["smoothed_vs_enumeration"])
        worst_swv = max(worst_swv, out["swv_vs_smoothed"])
        degenerate += out["degenerate"]
        mismatched += out["nf_equals_ne"] is False
    res.add("smoothed vs enumeration max-abs", worst_fb, 1e-10, worst_fb < 1e-10)
    res.add("swv vs smoothed max-abs", worst_swv, 1e-10, worst_swv < 1e-10)
    res.add("nF/nE disagreements", mismatched, 0, mismatched == 0, f"{degenerate} degenerate skipped")
    return res


def invariants(params: Params | None = None) -> SuiteResult:
    """Purity, normalization and positivity checks on a short block."""
    params = params or Params(T=1.0)
    block = run_block(params, estimators=("q1", "q2", "q3", "q5", "q6", "q8"))
    res = SuiteResult("invariants")
    for name in PURE_ESTIMATORS:
        if name in block.tracks:
            dev = float(np.max(np.abs(block.tracks[name].radius - 1.0)))
            res.add(f"{name} radius = 1", dev, 1e-12, dev < 1e-12)
    r1 = float(np.max(block.tracks["q1"].radius))
    res.add("smoothed radius <= 1", r1, 1.0, r1 <= 1.0 + 1e-12)
    rf = float(np.max(np.hypot(block.filtered.y, block.filtered.z)))
    res.add("filtered radius <= 1", rf, 1.0, rf <= 1.0 + 1e-9)
    mass = np.sum(block.smoothed, axis=1) * block.history.spacing
    dm = float(np.max(np.abs(mass - 1.0)))
    res.add("smoothed density mass", dm, 1e-10, dm < 1e-10)
    neg = float(-min(0.0, block.history.values.min()))
    res.add("density non-negative", neg, 0.0, neg == 0.0)
    e = block.effects
    viol = float(np.max(np.hypot(e.beta, e.zeta) - e.alpha))
    res.add("effect positivity", viol, 0.0, viol <= 1e-12)
    th, _ = angles_and_radii(block.tracks["q1"].y, block.tracks["q1"].z)
    d = float(np.max(np.abs(block.tracks["q2"].theta - th)))
    res.add("q2 angle = smoothed angle", d, 0.0, d == 0.0)
    u = np.linspace(-5, 5, 101)
    diff = float(np.max(np.abs(cost_c6(u, 0.7) - cost_c7(u, 0.7))))
    res.add("c6 = c7", diff, 0.0, diff == 0.0)
    rng = np.random.default_rng(params.seed)
    tp = []
    for _ in range(1000):
        a = rng.uniform(0, 2 * np.pi, 2)
        r = rng.uniform(0, 1, 2)
        x = trace_product(BlochYZ(r[0] * math.sin(a[0]), r[0] * math.cos(a[0])), BlochYZ(r[1] * math.sin(a[1]), r[1] * math.cos(a[1])))
        tp.append(x)
    bad = int(np.sum((np.array(tp) < 0) | (np.array(tp) > 1)))
    res.add("trace product in [0, 1]", bad, 0, bad == 0)
    return res


SUITES = {
    "mc-cross-check": mc_cross_check,
    "classical-equivalence": classical_equivalence,
    "invariants": invariants,
}
