"""Probabilistic limit laws: scale selection, per-box eigenvalues, the
centering level, rescaled point clouds, and the statistical test battery.

Statistical tests report p-values and effect sizes rather than hard gates:
the limit laws converge at log log speed, so desk-scale ensembles can only
be checked for calibrated trends, while synthetic clouds drawn from the
exact limit law calibrate the battery itself.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.stats

from . import lattice, operator
from .field import PotentialField, TailSpec, derive_seed, sample
from .lattice import ContinuumShape, LatticeDomain


@dataclass(frozen=True)
class ScalePlan:
    """Scales for the box coupling at a given L.

    R_L governs component size, N_L the box side; boxes of side N_L sit in a
    grid of pitch N_L + 1 anchored at the origin, and only boxes wholly
    inside the scaled domain count.  The defaults R_L = ceil((log log L)^2)
    and N_L = ceil((log L)^3) capped at L/4 honor the scale conditions at
    accessible L; the recorded ratios let reports flag how far a given run
    is from the asymptotic regime.
    """

    shape: ContinuumShape
    L: int
    d: int
    R_L: int
    N_L: int
    m_L: int
    origins: tuple
    ratios: dict

    def boxes(self) -> list[LatticeDomain]:
        return [
            lattice.integer_box(o, tuple(c + self.N_L - 1 for c in o))
            for o in self.origins
        ]

    def to_json(self):
        return {
            "L": self.L,
            "d": self.d,
            "R_L": self.R_L,
            "N_L": self.N_L,
            "m_L": self.m_L,
            "origins": [list(o) for o in self.origins],
            "ratios": self.ratios,
        }


def make_plan(
    shape: ContinuumShape,
    L: int,
    R_L: int | None = None,
    N_L: int | None = None,
    domain: LatticeDomain | None = None,
) -> ScalePlan:
    """Build the box plan for `shape` at scale L, with optional overrides."""
    if domain is None:
        domain = lattice.scale_domain(shape, L)
    d = shape.dim
    log_l = math.log(L)
    loglog_l = math.log(max(log_l, math.e * 1e-9))
    if R_L is None:
        R_L = max(1, math.ceil(max(loglog_l, 0.0) ** 2))
    if N_L is None:
        N_L = min(math.ceil(log_l**3), math.ceil(L / 4))
    if N_L < 1 or R_L < 1:
        raise ValueError("overrides must be positive")
    if math.log(N_L) >= log_l:
        raise ValueError("override rejected: need log N_L / log L < 1")
    pitch = N_L + 1
    bb = domain.bounding_box()
    origins = []
    grid_ranges = [
        range(math.floor(lo / pitch) - 1, math.ceil(hi / pitch) + 2)
        for lo, hi in zip(bb[0], bb[1])
    ]
    for cell in itertools.product(*grid_ranges):
        origin = tuple(c * pitch for c in cell)
        corner = tuple(c + N_L - 1 for c in origin)
        if any(c < lo or cc > hi for c, cc, lo, hi in zip(origin, corner, bb[0], bb[1])):
            continue
        box = lattice.integer_box(origin, corner)
        if all(s in domain for s in box.sites):
            origins.append(origin)
    origins.sort()
    m_L = len(origins)
    if m_L < 2:
        raise ValueError(f"m_L = {m_L} < 2: L too small for this plan")
    ratios = {
        "R_over_loglogL": R_L / loglog_l if loglog_l > 0 else math.inf,
        "N_over_R": N_L / R_L,
        "logN_over_logL": math.log(N_L) / log_l,
        "coverage": m_L * N_L**d / len(domain),
    }
    return ScalePlan(
        shape=shape, L=L, d=d, R_L=R_L, N_L=N_L, m_L=m_L,
        origins=tuple(origins), ratios=ratios,
    )


def box_eigenvalues(field: PotentialField, plan: ScalePlan) -> np.ndarray:
    """Principal Dirichlet eigenvalue in each plan box, in origin order.

    The boxes are disjoint, so these are i.i.d. across boxes under field
    resampling.
    """
    out = np.empty(plan.m_L)
    for i, box in enumerate(plan.boxes()):
        H = operator.assemble(box, field.restrict(box))
        out[i] = operator.top_eigs(H, 1).eigenvalues[0]
    return out


@dataclass(frozen=True)
class ALEstimate:
    """Monte Carlo estimate of the centering level a_L with bootstrap error."""

    value: float
    stderr: float
    n_mc: int
    target_prob: float

    def to_json(self):
        return {
            "value": self.value,
            "stderr": self.stderr,
            "n_mc": self.n_mc,
            "target_prob": self.target_prob,
        }


def _box_eigenvalue_sample(spec, N_L, d, n_mc, seed) -> np.ndarray:
    box = lattice.integer_box((0,) * d, (N_L - 1,) * d)
    vals = np.empty(n_mc)
    for i in range(n_mc):
        fld = sample(box, spec, derive_seed(seed, i))
        H = operator.assemble(box, fld)
        vals[i] = operator.top_eigs(H, 1).eigenvalues[0]
    return vals


def estimate_a_L(
    spec: TailSpec, plan: ScalePlan, n_mc: int, seed: int, n_bootstrap: int = 200
) -> ALEstimate:
    """The level whose exceedance probability by a box principal eigenvalue
    is (N_L / L)^d, estimated as an empirical Monte Carlo quantile."""
    p = (plan.N_L / plan.L) ** plan.d
    if n_mc * p < 10.0:
        raise ValueError(
            f"target quantile beyond MC resolution: need n_mc >= {math.ceil(10.0 / p)}"
        )
    vals = _box_eigenvalue_sample(spec, plan.N_L, plan.d, n_mc, seed)
    value = float(np.quantile(vals, 1.0 - p))
    rng = np.random.default_rng(derive_seed(seed, 0xB005))
    boot = np.empty(n_bootstrap)
    for b in range(n_bootstrap):
        boot[b] = np.quantile(rng.choice(vals, size=n_mc, replace=True), 1.0 - p)
    return ALEstimate(value=value, stderr=float(boot.std(ddof=1)), n_mc=n_mc, target_prob=p)


@dataclass(frozen=True)
class PointCloud:
    """Rescaled eigenvalue/center pairs of one sample.

    points[k] = (position in the continuum shape, height), where position is
    X_k / L and height is (lambda_k - a_L) * log|D_L| / rho; heights are
    nonincreasing.
    """

    points: tuple
    L: int
    a_L: float
    rho: float

    def heights(self) -> np.ndarray:
        return np.array([h for _, h in self.points])

    def positions(self) -> np.ndarray:
        return np.array([p for p, _ in self.points])

    def to_json(self):
        return {
            "L": self.L,
            "a_L": self.a_L,
            "rho": self.rho,
            "points": [[list(p), h] for p, h in self.points],
        }


def rescale(
    spectral: operator.SpectralResult, plan: ScalePlan, a_L: float, rho: float
) -> PointCloud:
    """Transform top-k eigenpairs into the point cloud tested against the
    Poisson limit."""
    if not math.isfinite(a_L):
        raise ValueError("a_L must be finite")
    log_dl = math.log(len(spectral.domain))
    points = []
    for lam, center in zip(spectral.eigenvalues, spectral.centers):
        pos = tuple(c / plan.L for c in center)
        height = (float(lam) - a_L) * log_dl / rho
        points.append((pos, height))
    return PointCloud(points=tuple(points), L=plan.L, a_L=a_L, rho=rho)


def sample_limit_clouds(
    n_clouds: int, k: int, shape: ContinuumShape, seed: int, L: int = 0
) -> list[PointCloud]:
    """Clouds drawn from the exact limit law: heights are -log of the partial
    sums of unit exponentials, positions i.i.d. uniform over the shape."""
    rng = np.random.default_rng(seed)
    lo, hi = shape.bounds()
    clouds = []
    for _ in range(n_clouds):
        w = np.cumsum(rng.exponential(size=k))
        heights = -np.log(w)
        positions = []
        while len(positions) < k:
            p = tuple(rng.uniform(a, b) for a, b in zip(lo, hi))
            if shape.contains(p):
                positions.append(p)
        clouds.append(
            PointCloud(
                points=tuple((p, float(h)) for p, h in zip(positions, heights)),
                L=L,
                a_L=0.0,
                rho=1.0,
            )
        )
    return clouds


def exp_increments(clouds) -> np.ndarray:
    """Pooled increments of W_k = e^{-height_k}; unit exponentials in the limit."""
    incs = []
    for cloud in clouds:
        w = np.exp(-cloud.heights())
        incs.append(np.diff(w, prepend=0.0))
    return np.concatenate(incs)


def _distance_correlation(x: np.ndarray, y: np.ndarray, n_perm: int, rng) -> tuple:
    """Permutation p-value for the distance correlation between x and y."""

    def centered(a):
        m = np.abs(a[:, None] - a[None, :])
        return m - m.mean(axis=0, keepdims=True) - m.mean(axis=1, keepdims=True) + m.mean()

    A = centered(x)
    B = centered(y)
    n = len(x)

    def dcor(Bm):
        dcov2 = (A * Bm).mean()
        vx = (A * A).mean()
        vy = (Bm * Bm).mean()
        if vx <= 0 or vy <= 0:
            return 0.0
        return math.sqrt(max(dcov2, 0.0) / math.sqrt(vx * vy))

    stat = dcor(B)
    exceed = 0
    for _ in range(n_perm):
        perm = rng.permutation(n)
        if dcor(B[np.ix_(perm, perm)]) >= stat:
            exceed += 1
    return stat, (1 + exceed) / (1 + n_perm)


@dataclass(frozen=True)
class PoissonTestReport:
    """Battery results: statistic and p-value per test.

    battery_pass applies a Bonferroni correction so the whole battery has
    the requested level.
    """

    tests: dict

    def battery_pass(self, level: float = 0.01) -> bool:
        per_test = level / max(len(self.tests), 1)
        return all(p >= per_test for _, p in self.tests.values())

    @property
    def ks_statistic(self) -> float:
        return self.tests["exp_increments_ks"][0]

    def to_json(self):
        return {name: {"statistic": s, "pvalue": p} for name, (s, p) in self.tests.items()}


def poisson_tests(
    clouds,
    level_windows=((0.0, math.inf), (-0.4, 0.0)),
    volume: float = 1.0,
    dcor_max_points: int = 300,
    dcor_permutations: int = 799,
    seed: int = 0,
) -> PoissonTestReport:
    """Test battery against the Poisson limit with intensity dx * e^{-h} dh.

    (a) KS of pooled W-increments against Exp(1); (b) counts in height
    windows against the Poisson law (windows must sit high enough that the
    top-k truncation is immaterial); (c) positions against uniform;
    (d) independence of position and height by a distance-correlation
    permutation test.
    """
    if len(clouds) < 100:
        raise ValueError("need an ensemble of at least 100 clouds")
    rng = np.random.default_rng(seed)
    tests = {}

    incs = exp_increments(clouds)
    ks = scipy.stats.kstest(incs, "expon")
    tests["exp_increments_ks"] = (float(ks.statistic), float(ks.pvalue))

    for w_lo, w_hi in level_windows:
        mean = volume * (math.exp(-w_lo) - (0.0 if math.isinf(w_hi) else math.exp(-w_hi)))
        counts = np.array(
            [int(np.sum((c.heights() > w_lo) & (c.heights() <= w_hi))) for c in clouds]
        )
        kmax = int(counts.max())
        pmf = scipy.stats.poisson.pmf(np.arange(kmax + 1), mean)
        observed = np.bincount(counts, minlength=kmax + 1).astype(float)
        expected = pmf * len(clouds)
        expected = np.append(expected, len(clouds) * (1.0 - pmf.sum()))
        observed = np.append(observed, 0.0)
        while len(expected) > 2 and expected[-2] < 5.0:
            expected[-2] += expected[-1]
            observed[-2] += observed[-1]
            expected, observed = expected[:-1], observed[:-1]
        chi2 = scipy.stats.chisquare(observed, expected * observed.sum() / expected.sum())
        name = f"window_counts_{w_lo:g}_{w_hi:g}"
        tests[name] = (float(chi2.statistic), float(chi2.pvalue))

    positions = np.concatenate([c.positions() for c in clouds], axis=0)
    n_bins = 10
    pv = []
    stat = 0.0
    for axis in range(positions.shape[1]):
        x = positions[:, axis]
        lo, hi = float(x.min()), float(x.max())
        hist, _ = np.histogram(x, bins=n_bins, range=(lo - 1e-12, hi + 1e-12))
        chi2 = scipy.stats.chisquare(hist)
        pv.append(float(chi2.pvalue))
        stat = max(stat, float(chi2.statistic))
    tests["position_uniformity"] = (stat, float(min(pv)))

    heights = np.concatenate([c.heights() for c in clouds])
    x0 = positions[:, 0]
    if len(x0) > dcor_max_points:
        pick = rng.choice(len(x0), size=dcor_max_points, replace=False)
        x0, heights = x0[pick], heights[pick]
    stat, pval = _distance_correlation(x0, heights, dcor_permutations, rng)
    tests["position_height_independence"] = (float(stat), float(pval))

    return PoissonTestReport(tests=tests)


def chi_gap_statistic(spectral: operator.SpectralResult, field: PotentialField) -> float:
    """max xi - lambda^(1): converges to the variational gap chi."""
    return field.max_value() - float(spectral.eigenvalues[0])


def localization_mass(spectral: operator.SpectralResult, k: int, r: int) -> float:
    """Squared eigenfunction mass within l1 radius r of the k-th center (k 1-based)."""
    if not 1 <= k <= spectral.k:
        raise ValueError("k beyond computed pairs")
    center = spectral.centers[k - 1]
    psi = spectral.vectors[:, k - 1]
    b = lattice.ball(center, r, within=spectral.domain)
    idx = [spectral.domain.rank(s) for s in b.sites]
    return float(np.sum(psi[idx] ** 2))


@dataclass(frozen=True)
class DecayFit:
    """Least-squares exponential fit of an eigenfunction profile.

    |psi(z)| ~ c1 * exp(-c2 * |z - X_k|) on the near region; far_slope is the
    separate slope beyond the near/far split (omitted when too few sites
    carry usable mass there).
    """

    c1: float
    c2: float
    far_slope: float | None
    far_omitted: bool
    n_near: int
    n_far: int

    def to_json(self):
        return {
            "c1": self.c1,
            "c2": self.c2,
            "far_slope": self.far_slope,
            "far_omitted": self.far_omitted,
            "n_near": self.n_near,
            "n_far": self.n_far,
        }


def decay_fit(
    spectral: operator.SpectralResult,
    k: int,
    dec=None,
    far_split: float | None = None,
    floor: float = 1e-280,
) -> DecayFit:
    """Fit log|psi_k| against l1 distance from the localization center.

    Sites inside the decomposition's components are excluded from the fit
    when `dec` is given (the decay law applies away from the carrier).  The
    near/far split defaults to log|D|, the scale beyond which the boosted
    rate applies.
    """
    if not 1 <= k <= spectral.k:
        raise ValueError("k beyond computed pairs")
    domain = spectral.domain
    psi = np.abs(spectral.vectors[:, k - 1])
    center = spectral.centers[k - 1]
    if far_split is None:
        far_split = math.log(len(domain)) / domain.dim
    keep = psi >= floor
    if dec is not None:
        for comp in dec.components:
            for s in comp.sites:
                keep[domain.rank(s)] = False
    all_dists = np.abs(domain.coords() - np.asarray(center, dtype=np.int64)).sum(axis=1)
    dists_arr = all_dists[keep].astype(np.float64)
    logs_arr = np.log(psi[keep])
    near = dists_arr < far_split
    if near.sum() < 2:
        raise ValueError("not enough sites for the near-region fit")
    slope, intercept = np.polyfit(dists_arr[near], logs_arr[near], 1)
    far = ~near
    if far.sum() >= 2:
        far_slope, _ = np.polyfit(dists_arr[far], logs_arr[far], 1)
        return DecayFit(
            c1=float(np.exp(intercept)),
            c2=float(-slope),
            far_slope=float(-far_slope),
            far_omitted=False,
            n_near=int(near.sum()),
            n_far=int(far.sum()),
        )
    return DecayFit(
        c1=float(np.exp(intercept)),
        c2=float(-slope),
        far_slope=None,
        far_omitted=True,
        n_near=int(near.sum()),
        n_far=int(far.sum()),
    )


def partition_stability_check(
    spec: TailSpec, N: int, R: int, a: float, n_mc: int, seed: int, c: float | None = None
) -> dict:
    """Monte Carlo check of the partition-stability inequality
    -log(1 - P(lambda_{B_N} >= a)) >= (1 - cR/N)(N/R)^d P(lambda_{B_R} >= a).

    With c = None the smallest admissible c is fitted and returned; with a
    given c the inequality is evaluated at Monte Carlo resolution.
    """
    d = 1
    vals_n = _box_eigenvalue_sample(spec, N, d, n_mc, seed)
    vals_r = _box_eigenvalue_sample(spec, R, d, n_mc, derive_seed(seed, 1))
    p_n = float(np.mean(vals_n >= a))
    p_r = float(np.mean(vals_r >= a))
    se_n = math.sqrt(max(p_n * (1 - p_n), 1.0 / n_mc) / n_mc)
    se_r = math.sqrt(max(p_r * (1 - p_r), 1.0 / n_mc) / n_mc)
    lhs = -math.log(max(1.0 - p_n, 1e-300))
    base = (N / R) ** d * p_r
    if c is None:
        fitted = 0.0 if lhs >= base else (1.0 - lhs / base) * N / R
        return {
            "p_N": p_n, "p_R": p_r, "se_N": se_n, "se_R": se_r,
            "lhs": lhs, "rhs_at_c0": base, "c_fitted": fitted,
        }
    rhs = (1.0 - c * R / N) * base
    rhs_err = (1.0 - c * R / N) * (N / R) ** d * se_r
    return {
        "p_N": p_n, "p_R": p_r, "se_N": se_n, "se_R": se_r,
        "lhs": lhs, "rhs": rhs, "rhs_stderr": rhs_err,
        "holds_within_mc": lhs >= rhs - 3.0 * (rhs_err + se_n / max(1.0 - p_n, 1e-12)),
    }


def max_order_check(
    spec: TailSpec,
    plan: ScalePlan,
    a_L: float,
    n_mc: int,
    seed: int,
    s_values=(-1.0, 0.0, 1.0),
) -> dict:
    """Tail ratio P(lambda_{B_{N_L}} >= a_L + s b_L) / (N_L/L)^d against e^{-s},
    with b_L = rho / (d log L); reported with Monte Carlo error bars."""
    d = plan.d
    b_L = spec.rho / (d * math.log(plan.L))
    vals = _box_eigenvalue_sample(spec, plan.N_L, d, n_mc, seed)
    target = (plan.N_L / plan.L) ** d
    out = {"b_L": b_L, "target_prob": target, "ratios": {}}
    for s in s_values:
        p = float(np.mean(vals >= a_L + s * b_L))
        se = math.sqrt(max(p * (1 - p), 1.0 / n_mc) / n_mc)
        out["ratios"][s] = {
            "prob": p,
            "stderr": se,
            "ratio": p / target,
            "expected": math.exp(-s),
        }
    return out
