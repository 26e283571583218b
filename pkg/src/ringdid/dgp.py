"""Synthetic data generator with closed-form oracles.

Units live at random distances from the treatment point; outcomes move
by a distance-decaying effect plus a distance-varying common trend plus
noise.  Every generated configuration has an exactly computable
population counterpart (ring contrast expectations, per-bin means, the
average effect over the affected region), so estimators can be checked
against truth rather than against each other.

All randomness flows through one ``numpy`` generator seeded from the
spec.  The draw order (distances, unit effects, period-0 noise,
period-1 noise, idiosyncratic effect, idiosyncratic trend, then the
period assignment for cross-sections) is part of the reproducibility
contract: two specs differing only in, say, the drift parameter see
identical draws for the shared pieces.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import expit

from .curve import Z95, aggregate_ate, tau_curve_panel, tau_curve_rc
from .data_model import Dataset, first_differences
from .errors import DataError, EstimationError, SpecError
from .ring import ring_estimate_panel, ring_estimate_rc

PANEL = "panel"
RC = "rc"

_QUAD_KW = dict(epsabs=1e-12, epsrel=1e-10, limit=200)


# ---------------------------------------------------------------------------
# distance laws


@dataclass(frozen=True)
class Uniform:
    """Distances uniform on [a, b]."""

    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise SpecError("uniform bounds must be finite")
        if self.a < 0 or self.b <= self.a:
            raise SpecError(f"need 0 <= a < b, got a={self.a}, b={self.b}")

    @property
    def support(self):
        return (self.a, self.b)

    @property
    def interior_ps(self):
        return ()

    def cdf(self, d):
        return np.clip((np.asarray(d, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def quantile(self, p):
        return self.a + np.asarray(p, dtype=float) * (self.b - self.a)

    def sample(self, rng, n):
        return rng.uniform(self.a, self.b, n)


@dataclass(frozen=True)
class QuantileTable:
    """Distance law given by a piecewise-linear quantile function.

    ``ps`` must run from 0 to 1 and ``qs`` must be strictly increasing,
    so the CDF is the piecewise-linear inverse of the table.
    """

    ps: tuple
    qs: tuple

    def __post_init__(self):
        ps = tuple(float(p) for p in self.ps)
        qs = tuple(float(q) for q in self.qs)
        object.__setattr__(self, "ps", ps)
        object.__setattr__(self, "qs", qs)
        if len(ps) != len(qs) or len(ps) < 2:
            raise SpecError("quantile table needs matching ps and qs with at least 2 rows")
        if ps[0] != 0.0 or ps[-1] != 1.0:
            raise SpecError("quantile table ps must start at 0 and end at 1")
        if any(b <= a for a, b in zip(ps, ps[1:])) or any(b <= a for a, b in zip(qs, qs[1:])):
            raise SpecError("quantile table ps and qs must be strictly increasing")
        if qs[0] < 0:
            raise SpecError("distances cannot be negative")

    @property
    def support(self):
        return (self.qs[0], self.qs[-1])

    @property
    def interior_ps(self):
        return self.ps[1:-1]

    def cdf(self, d):
        return np.interp(np.asarray(d, dtype=float), self.qs, self.ps)

    def quantile(self, p):
        return np.interp(np.asarray(p, dtype=float), self.ps, self.qs)

    def sample(self, rng, n):
        return self.quantile(rng.uniform(0.0, 1.0, n))


# ---------------------------------------------------------------------------
# effect and trend functions of distance


@dataclass(frozen=True)
class LinearDecay:
    """amplitude at the treatment point, linear to zero at the cutoff."""

    amplitude: float
    cutoff: float

    def __post_init__(self):
        if not math.isfinite(self.amplitude):
            raise SpecError("amplitude must be finite")
        if not self.cutoff > 0:
            raise SpecError(f"cutoff must be positive, got {self.cutoff}")

    @property
    def knots(self):
        return (self.cutoff,)

    def __call__(self, d):
        return self.amplitude * np.maximum(0.0, 1.0 - np.asarray(d, dtype=float) / self.cutoff)


@dataclass(frozen=True)
class TableFn:
    """Piecewise-linear function through (ds, vs) knots.

    Constant at ``vs[0]`` left of the first knot and zero beyond the
    last one, so a table that does not end at zero has a jump there.
    """

    ds: tuple
    vs: tuple

    def __post_init__(self):
        ds = tuple(float(x) for x in self.ds)
        vs = tuple(float(x) for x in self.vs)
        object.__setattr__(self, "ds", ds)
        object.__setattr__(self, "vs", vs)
        if len(ds) != len(vs) or len(ds) < 2:
            raise SpecError("table needs matching ds and vs with at least 2 rows")
        if any(b <= a for a, b in zip(ds, ds[1:])):
            raise SpecError("table ds must be strictly increasing")
        if not all(math.isfinite(v) for v in vs):
            raise SpecError("table values must be finite")

    @property
    def knots(self):
        return self.ds

    def __call__(self, d):
        return np.interp(np.asarray(d, dtype=float), self.ds, self.vs, left=self.vs[0], right=0.0)


@dataclass(frozen=True)
class Zero:
    @property
    def knots(self):
        return ()

    def __call__(self, d):
        return np.zeros_like(np.asarray(d, dtype=float))


@dataclass(frozen=True)
class Constant:
    value: float

    @property
    def knots(self):
        return ()

    def __call__(self, d):
        return np.full_like(np.asarray(d, dtype=float), self.value)


@dataclass(frozen=True)
class Linear:
    slope: float
    intercept: float = 0.0

    @property
    def knots(self):
        return ()

    def __call__(self, d):
        return self.slope * np.asarray(d, dtype=float) + self.intercept


# ---------------------------------------------------------------------------
# spec and generation


@dataclass(frozen=True)
class DgpSpec:
    """Complete description of a synthetic configuration.

    ``tau`` is the treatment effect as a function of distance, ``trend``
    the common outcome change.  ``rc_composition_drift`` tilts which
    units appear in which period of a repeated cross-section: positive
    drift makes high-``mu`` units near the treatment point more likely
    to be sampled after treatment, violating composition stability
    while keeping the period split 50/50 at every distance.
    """

    n: int
    distance_law: object
    tau: object
    trend: object = Zero()
    design: str = PANEL
    mu_mean: float = 0.0
    mu_sd: float = 1.0
    noise_sd: float = 1.0
    idio_te_sd: float = 0.0
    idio_trend_sd: float = 0.0
    rc_composition_drift: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise SpecError(f"n must be a positive integer, got {self.n!r}")
        if self.design not in (PANEL, RC):
            raise SpecError(f"design must be '{PANEL}' or '{RC}', got {self.design!r}")
        for name in ("mu_sd", "noise_sd", "idio_te_sd", "idio_trend_sd"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise SpecError(f"{name} must be finite and nonnegative, got {v}")
        if not math.isfinite(self.rc_composition_drift):
            raise SpecError("rc_composition_drift must be finite")
        if self.rc_composition_drift != 0.0:
            if self.design != RC:
                raise SpecError("rc_composition_drift only applies to the rc design")
            if self.mu_sd == 0:
                raise SpecError("rc_composition_drift needs mu_sd > 0 to have any effect")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise SpecError(f"seed must be a nonnegative integer, got {self.seed!r}")


def generate(spec: DgpSpec) -> Dataset:
    """Draw one synthetic dataset.

    Panel designs emit two rows per unit (period 0 then period 1, unit
    by unit); cross-sections emit one row per unit in its sampled
    period.  Unit ids are the integers 0..n-1.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    d = spec.distance_law.sample(rng, n)
    mu = spec.mu_mean + spec.mu_sd * rng.standard_normal(n)
    u0 = spec.noise_sd * rng.standard_normal(n)
    u1 = spec.noise_sd * rng.standard_normal(n)
    te = spec.idio_te_sd * rng.standard_normal(n)
    tr = spec.idio_trend_sd * rng.standard_normal(n)
    tau_d = spec.tau(d)
    lam_d = spec.trend(d)
    if spec.design == PANEL:
        y0 = mu + u0
        y1 = mu + tau_d + te + lam_d + tr + u1
        outcomes = np.empty(2 * n)
        outcomes[0::2] = y0
        outcomes[1::2] = y1
        return Dataset(
            unit_ids=np.repeat(np.arange(n), 2),
            periods=np.tile(np.array([0, 1]), n),
            outcomes=outcomes,
            distances=np.repeat(d, 2),
        )
    pick = rng.uniform(0.0, 1.0, n)
    if spec.rc_composition_drift != 0.0:
        z = (mu - spec.mu_mean) / spec.mu_sd
        prox = 1.0 - 2.0 * spec.distance_law.cdf(d)
        p1 = expit(spec.rc_composition_drift * z * prox)
    else:
        p1 = 0.5
    period = (pick < p1).astype(int)
    y = mu + (tau_d + te + lam_d + tr) * period + np.where(period == 1, u1, u0)
    return Dataset(
        unit_ids=np.arange(n),
        periods=period,
        outcomes=y,
        distances=d,
    )


# ---------------------------------------------------------------------------
# population quantities

# Everything the generator can produce is piecewise linear in distance,
# and distance is a piecewise-linear function of the uniform rank p, so
# conditional means reduce to 1-D integrals in p-space with kinks only
# at known break points.


def _knot_ps(law, fns):
    pts = set(law.interior_ps)
    lo, hi = law.support
    for fn in fns:
        for k in getattr(fn, "knots", ()):
            if lo < k < hi:
                pts.add(float(law.cdf(k)))
    return pts


def _conditional_mean(g, law, lo_p, hi_p, knot_ps):
    """E[g(D) | quantile rank of D in (lo_p, hi_p]]."""
    width = hi_p - lo_p
    inner = sorted(p for p in knot_ps if lo_p < p < hi_p)
    val, _ = quad(
        lambda p: float(g(law.quantile(p))),
        lo_p,
        hi_p,
        points=inner or None,
        **_QUAD_KW,
    )
    return val / width


def _h_tilt(a):
    """Standardized mean gap E[z | t=1] - E[z | t=0] under expit(a z) sampling."""
    if a == 0.0:
        return 0.0

    def f(z):
        return z * (expit(a * z) - 0.5) * math.exp(-0.5 * z * z)

    val, _ = quad(f, 0.0, np.inf, **_QUAD_KW)
    return 8.0 * val / math.sqrt(2.0 * math.pi)


def _composition_gap_fn(spec):
    """Per-distance mean-mu gap between period-1 and period-0 samples."""
    drift = spec.rc_composition_drift
    law = spec.distance_law

    def gap(d):
        prox = 1.0 - 2.0 * float(law.cdf(d))
        return spec.mu_sd * _h_tilt(drift * prox)

    return gap


@dataclass(frozen=True)
class RingOracle:
    te_diff: float
    trend_diff: float
    total: float


@dataclass(frozen=True)
class RcRingOracle:
    te_diff: float
    trend_diff: float
    composition_diff: float
    total: float


@dataclass(frozen=True)
class BinMeans:
    tau: np.ndarray
    trend: np.ndarray
    composition: np.ndarray


def _ring_ps(spec, rings):
    law = spec.distance_law
    p_t = float(law.cdf(rings.d_t))
    p_c = float(law.cdf(rings.d_c))
    if p_t <= 0.0 or p_c <= p_t:
        raise SpecError(
            f"rings ({rings.d_t}, {rings.d_c}) carry no probability mass under the distance law "
            f"with support {law.support}"
        )
    return p_t, p_c


def _ring_contrast(g, law, p_t, p_c, knot_ps):
    return _conditional_mean(g, law, 0.0, p_t, knot_ps) - _conditional_mean(
        g, law, p_t, p_c, knot_ps
    )


def oracle_ring_expectation(spec: DgpSpec, rings) -> RingOracle:
    """Population value of the two-ring contrast under a panel design.

    Splits the expectation into the true-effect difference between the
    rings and the trend difference; their sum is what the estimator
    converges to.
    """
    law = spec.distance_law
    p_t, p_c = _ring_ps(spec, rings)
    te = _ring_contrast(spec.tau, law, p_t, p_c, _knot_ps(law, [spec.tau]))
    tr = _ring_contrast(spec.trend, law, p_t, p_c, _knot_ps(law, [spec.trend]))
    return RingOracle(te_diff=te, trend_diff=tr, total=te + tr)


def oracle_rc_expectation(spec: DgpSpec, rings) -> RcRingOracle:
    """Population two-ring contrast for repeated cross-sections.

    Adds the composition term produced by ``rc_composition_drift``: the
    double difference picks up how much the mean of the unit effect
    shifts between periods, differentially by ring.
    """
    law = spec.distance_law
    p_t, p_c = _ring_ps(spec, rings)
    te = _ring_contrast(spec.tau, law, p_t, p_c, _knot_ps(law, [spec.tau]))
    tr = _ring_contrast(spec.trend, law, p_t, p_c, _knot_ps(law, [spec.trend]))
    if spec.rc_composition_drift == 0.0:
        comp = 0.0
    else:
        comp = _ring_contrast(_composition_gap_fn(spec), law, p_t, p_c, _knot_ps(law, []))
    return RcRingOracle(te_diff=te, trend_diff=tr, composition_diff=comp, total=te + tr + comp)


def oracle_bin_means(spec: DgpSpec, edges) -> BinMeans:
    """Population per-bin means at given distance edges.

    Bin j is the distance interval (edges[j-1], edges[j]], except the
    first bin which reaches down to the support minimum.  Returns the
    conditional means of the effect, the trend, and (for drifting
    cross-sections) the period composition gap, one entry per bin.
    """
    law = spec.distance_law
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2:
        raise SpecError("edges must be a 1-D array with at least 2 entries")
    if np.any(np.diff(edges) < 0):
        raise SpecError("edges must be nondecreasing")
    ps = law.cdf(edges).astype(float)
    ps[0] = 0.0
    L = len(edges) - 1
    tau_k = _knot_ps(law, [spec.tau])
    trend_k = _knot_ps(law, [spec.trend])
    comp_k = _knot_ps(law, [])
    gap = _composition_gap_fn(spec) if spec.rc_composition_drift != 0.0 else None
    tau = np.empty(L)
    trend = np.empty(L)
    comp = np.zeros(L)
    for j in range(L):
        lo, hi = ps[j], ps[j + 1]
        if hi <= lo:
            raise EstimationError(
                f"bin {j + 1} with edges ({edges[j]}, {edges[j + 1]}] has no probability mass"
            )
        tau[j] = _conditional_mean(spec.tau, law, lo, hi, tau_k)
        trend[j] = _conditional_mean(spec.trend, law, lo, hi, trend_k)
        if gap is not None:
            comp[j] = _conditional_mean(gap, law, lo, hi, comp_k)
    return BinMeans(tau=tau, trend=trend, composition=comp)


def oracle_tau_bar(spec: DgpSpec, cutoff=None) -> float:
    """Mean treatment effect over the affected region.

    With ``cutoff`` given, averages the effect over distances up to the
    cutoff.  Without it, averages over the region where the effect is
    strictly positive, found exactly from the piecewise-linear
    structure.  Raises when the region carries no probability mass
    (a zero effect has no affected region to average over).
    """
    law = spec.distance_law
    tau = spec.tau
    hi_p = 1.0 if cutoff is None else float(law.cdf(cutoff))
    brk = {0.0, hi_p}
    for p in _knot_ps(law, [tau]):
        if p < hi_p:
            brk.add(p)
    brk = sorted(brk)
    mass = 0.0
    integral = 0.0
    for a, b in zip(brk, brk[1:]):
        if b - a <= 1e-15:
            continue
        # endpoint values by linear extrapolation from interior samples,
        # robust to jumps exactly at the break points
        m = 0.5 * (a + b)
        q1 = a + 0.25 * (b - a)
        q3 = a + 0.75 * (b - a)
        fm = float(tau(law.quantile(m)))
        f1 = float(tau(law.quantile(q1)))
        f3 = float(tau(law.quantile(q3)))
        fa = 2.0 * f1 - fm
        fb = 2.0 * f3 - fm
        if cutoff is not None:
            mass += b - a
            integral += (b - a) * fm
        elif fa > 0.0 and fb > 0.0:
            mass += b - a
            integral += (b - a) * fm
        elif fa > 0.0 or fb > 0.0:
            root = a + (b - a) * fa / (fa - fb)
            if fa > 0.0:
                mass += root - a
                integral += 0.5 * (root - a) * fa
            else:
                mass += b - root
                integral += 0.5 * (b - root) * fb
    if mass <= 0.0:
        raise EstimationError(
            "undefined estimand: the affected region carries no probability mass"
        )
    return integral / mass


# ---------------------------------------------------------------------------
# monte carlo


@dataclass(frozen=True)
class TargetDraw:
    """One replication's estimate of one target, with its truth."""

    estimate: float
    se: float
    truth: float


@dataclass(frozen=True)
class McTarget:
    mean_estimate: float
    mean_truth: float
    bias: float
    rmse: float
    mc_se: float
    ci_coverage: float
    n: int


@dataclass(frozen=True)
class McReport:
    requested: int
    completed: int
    failures: int
    master_seed: int
    targets: dict
    draws: dict
    completed_reps: tuple


def replication_seed(master_seed: int, i: int) -> int:
    """Stable per-replication seed, independent of replication count."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(i,))
    return int(ss.generate_state(1, np.uint64)[0])


def monte_carlo(spec: DgpSpec, estimator, reps: int, master_seed=None) -> McReport:
    """Run ``estimator`` over ``reps`` independent datasets from ``spec``.

    ``estimator`` maps a Dataset to ``{target_name: TargetDraw}``.
    Replications where it raises a data or estimation error are counted
    as failures and excluded; configuration errors propagate.  Each
    replication's seed is derived from the master seed (default: the
    spec's own) and the replication index, so results depend only on
    the DgpSpec, the master seed, and ``reps`` -- never on scheduling.
    """
    if not isinstance(reps, (int, np.integer)) or reps < 2:
        raise SpecError(f"need at least 2 replications, got {reps!r}")
    if master_seed is None:
        master_seed = spec.seed
    if not isinstance(master_seed, (int, np.integer)) or master_seed < 0:
        raise SpecError(f"master seed must be a nonnegative integer, got {master_seed!r}")
    master_seed = int(master_seed)
    draws: dict[str, list[TargetDraw]] = {}
    failures = 0
    completed = 0
    completed_reps = []
    for i in range(reps):
        rep_spec = dataclasses.replace(spec, seed=replication_seed(master_seed, i))
        data = generate(rep_spec)
        try:
            result = estimator(data)
        except (DataError, EstimationError):
            failures += 1
            continue
        completed += 1
        completed_reps.append(i)
        for name, draw in result.items():
            draws.setdefault(name, []).append(draw)
    if completed == 0:
        raise EstimationError(f"all {reps} replications failed")
    targets = {}
    for name, ds in draws.items():
        est = np.array([t.estimate for t in ds])
        se = np.array([t.se for t in ds])
        truth = np.array([t.truth for t in ds])
        err = est - truth
        covered = np.abs(err) <= Z95 * se
        targets[name] = McTarget(
            mean_estimate=float(est.mean()),
            mean_truth=float(truth.mean()),
            bias=float(err.mean()),
            rmse=float(np.sqrt(np.mean(err**2))),
            mc_se=float(est.std(ddof=1) / math.sqrt(len(est))) if len(est) > 1 else float("nan"),
            ci_coverage=float(covered.mean()),
            n=len(est),
        )
    return McReport(
        requested=reps,
        completed=completed,
        failures=failures,
        master_seed=master_seed,
        targets=targets,
        draws={name: tuple(ds) for name, ds in draws.items()},
        completed_reps=tuple(completed_reps),
    )


def ring_estimator(spec: DgpSpec, rings):
    """Estimator closure for :func:`monte_carlo` targeting the ring contrast."""
    if spec.design == PANEL:
        truth = oracle_ring_expectation(spec, rings).total

        def run(data):
            est = ring_estimate_panel(first_differences(data), rings)
            return {"beta1": TargetDraw(est.beta1, est.se, truth)}

    else:
        truth = oracle_rc_expectation(spec, rings).total

        def run(data):
            est = ring_estimate_rc(data, rings)
            return {"beta1": TargetDraw(est.beta1, est.se, truth)}

    return run


def curve_estimator(spec: DgpSpec, d_c, L="auto", affected_cutoff="auto", per_bin=False):
    """Estimator closure targeting the aggregated effect (and, optionally,
    every bin of the curve against its own population mean at the
    realized edges)."""

    def run(data):
        if spec.design == PANEL:
            curve = tau_curve_panel(first_differences(data), d_c, L=L)
        else:
            curve = tau_curve_rc(data, d_c, L=L)
        agg = aggregate_ate(curve, affected_cutoff=affected_cutoff)
        truth_bar = oracle_tau_bar(spec, cutoff=agg.cutoff)
        out = {"tau_bar": TargetDraw(agg.tau_bar, agg.se, truth_bar)}
        if per_bin:
            edges = np.concatenate([[curve.edges_lo[0]], curve.edges_hi])
            bm = oracle_bin_means(spec, edges)
            anchor = bm.tau[-1] + bm.trend[-1] + bm.composition[-1]
            for j in range(curve.L - 1):
                truth_j = bm.tau[j] + bm.trend[j] + bm.composition[j] - anchor
                out[f"tau_bin_{j + 1:02d}"] = TargetDraw(
                    float(curve.tau_hat[j]), float(curve.se[j]), float(truth_j)
                )
            out["lambda_hat"] = TargetDraw(curve.lambda_hat, curve.lambda_se, float(anchor))
        return out

    return run
