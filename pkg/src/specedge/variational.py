"""The cost functionals L_C, L_{C,A} and the constrained eigenvalue problem
whose value is the asymptotic gap between the field maximum and the top
eigenvalue.

chi_C = -sup { lambda^(1)(Delta + phi) : sum_{x in C} e^{phi(x)/rho} <= 1 }

The supremum's stationarity condition couples the profile to the principal
eigenfunction, e^{phi/rho} = psi^2, which makes the fixed-point iteration
phi <- rho*log(psi^2) the natural solver: it keeps the constraint exactly
active at every step.  Uniqueness of the optimizer is open for small rho,
hence the multi-start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import operator
from .field import PotentialField
from .lattice import LatticeDomain

PHI_FLOOR_FACTOR = 50.0  # phi clamped below at -50*rho during iteration


@dataclass(frozen=True)
class Profile:
    """A potential profile phi on a finite support."""

    support: LatticeDomain
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (len(self.support),):
            raise ValueError("profile must assign one value per support site")
        if not np.all(np.isfinite(vals)):
            raise ValueError("profile values must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def to_json(self):
        return {
            "support": self.support.to_json(),
            "values": [float(v) for v in self.values],
        }


def ell(C: LatticeDomain, phi, rho: float) -> float:
    """L_C(phi) = sum_{x in C} e^{phi(x)/rho}, evaluated in log space."""
    vals = phi.values if isinstance(phi, Profile) else np.asarray(phi, dtype=np.float64)
    if vals.shape != (len(C),):
        raise ValueError("phi must be defined on C")
    with np.errstate(over="ignore"):  # the sum itself is stable; inf is the answer
        return float(np.exp(logsumexp(vals / rho)))


def ell_truncated(C: LatticeDomain, phi, rho: float, A: float) -> float:
    """Truncated functional: only terms with phi(x) >= -2A contribute."""
    if A < 0:
        raise ValueError("need A >= 0")
    vals = phi.values if isinstance(phi, Profile) else np.asarray(phi, dtype=np.float64)
    if vals.shape != (len(C),):
        raise ValueError("phi must be defined on C")
    if math.isinf(A):
        return ell(C, vals, rho)
    mask = vals >= -2.0 * A
    if not mask.any():
        return 0.0
    return float(np.exp(logsumexp(vals[mask] / rho)))


def eta(d: int, A: float) -> float:
    """The single-step truncation cost 2d(1 + A/4d)^{-1}."""
    if math.isinf(A):
        return 0.0
    return 2.0 * d / (1.0 + A / (4.0 * d))


def _principal(C: LatticeDomain, values: np.ndarray):
    H = operator.assemble(C, PotentialField.from_values(C, values))
    res = operator.top_eigs(H, 1)
    return float(res.eigenvalues[0]), res.vectors[:, 0]


@dataclass(frozen=True)
class ChiSolution:
    """Output of the constrained eigenvalue maximization on a finite support."""

    chi: float
    optimizer: Profile
    eigvec: np.ndarray
    iterations: int
    kkt_residual: float
    method: str
    trace: tuple

    def to_json(self):
        return {
            "chi": self.chi,
            "optimizer": self.optimizer.to_json(),
            "iterations": self.iterations,
            "kkt_residual": self.kkt_residual,
            "method": self.method,
            "trace": [float(t) for t in self.trace],
        }


def _normalize(phi: np.ndarray, rho: float) -> np.ndarray:
    """Constant shift putting the profile exactly on the constraint L = 1."""
    return phi - rho * logsumexp(phi / rho)


def _fixed_point(C, rho, phi0, tol, max_iter):
    """Fixed-point iteration with step halving on objective decrease.

    Returns (lambda, phi, psi, eigensolves, trace, converged)."""
    floor = -PHI_FLOOR_FACTOR * rho
    phi = _normalize(np.maximum(phi0, floor), rho)
    lam, psi = _principal(C, phi)
    solves = 1
    trace = [lam]
    for _ in range(max_iter):
        prop = _normalize(np.maximum(rho * np.log(np.maximum(psi**2, 1e-300)), floor), rho)
        step = 1.0
        while True:
            cand = _normalize(phi + step * (prop - phi), rho)
            lam_c, psi_c = _principal(C, cand)
            solves += 1
            if lam_c >= lam - 0.1 * tol or step <= 1.0 / 64.0:
                break
            step *= 0.5
        moved = abs(lam_c - lam)
        cycled = lam_c < lam - 10.0 * tol
        phi, lam, psi = cand, lam_c, psi_c
        trace.append(lam)
        if moved < tol:
            return lam, phi, psi, solves, trace, True
        if cycled:
            return lam, phi, psi, solves, trace, False
    return lam, phi, psi, solves, trace, False


def _projected_gradient(C, rho, phi0, tol, max_iter):
    """Ascent on lambda^(1)(Delta + phi) along the Hellmann-Feynman gradient
    psi^2, retracted onto the constraint surface by a constant shift."""
    floor = -PHI_FLOOR_FACTOR * rho
    phi = _normalize(np.maximum(phi0, floor), rho)
    lam, psi = _principal(C, phi)
    solves = 1
    trace = [lam]
    alpha = 1.0
    for _ in range(max_iter):
        improved = False
        while alpha > 1e-12:
            cand = _normalize(np.maximum(phi + alpha * psi**2, floor), rho)
            lam_c, psi_c = _principal(C, cand)
            solves += 1
            if lam_c > lam:
                gain = lam_c - lam
                phi, lam, psi = cand, lam_c, psi_c
                trace.append(lam)
                alpha *= 1.5
                improved = True
                if gain < tol:
                    return lam, phi, psi, solves, trace, True
                break
            alpha *= 0.5
        if not improved:
            return lam, phi, psi, solves, trace, True
    return lam, phi, psi, solves, trace, False


def _newton_polish(C, rho, phi, max_iter=40):
    """Newton refinement of the stationarity system psi^2 = e^{phi/rho}.

    The fixed point converges only algebraically near profile-symmetry
    breaking, so a few Newton steps on the reduced KKT residual take the
    output to machine precision.  Uses dense eigendecompositions; supports
    are small by construction.  Returns (phi, lam, psi, kkt, solves).
    """
    floor = -PHI_FLOOR_FACTOR * rho
    n = len(C)
    base = operator.assemble(
        C, PotentialField.from_values(C, np.zeros(n))
    ).matrix.toarray()
    best = None
    solves = 0
    for _ in range(max_iter):
        A = base + np.diag(phi)
        w, V = np.linalg.eigh(A)
        solves += 1
        lam = float(w[-1])
        psi = V[:, -1]
        if psi.sum() < 0:
            psi = -psi
        expphi = np.exp(phi / rho)
        G = psi**2 - expphi
        err = float(np.max(np.abs(G)))
        if best is None or err < best[3]:
            best = (phi.copy(), lam, psi.copy(), err, solves)
        if err < 1e-14:
            break
        if n == 1:
            phi = np.zeros(1)
            continue
        gap = lam - float(w[-2])
        if gap < 1e-9 * max(1.0, abs(lam)):
            break
        denom = lam - w[:-1]
        B = V[:, :-1] / denom
        S = B @ V[:, :-1].T
        dpsi2 = 2.0 * psi[:, None] * S * psi[None, :]
        J = dpsi2 - np.diag(expphi / rho)
        try:
            dphi = np.linalg.solve(J, -G)
        except np.linalg.LinAlgError:
            break
        scale = min(1.0, 3.0 / max(float(np.max(np.abs(dphi))), 1e-300))
        phi = _normalize(np.maximum(phi + scale * dphi, floor), rho)
    phi, lam, psi, err, _ = best
    return phi, lam, psi, err, solves


def solve_chi(
    C: LatticeDomain,
    rho: float,
    tol: float = 1e-12,
    max_iter: int = 400,
    n_random_starts: int = 3,
) -> ChiSolution:
    """Solve the constrained problem on C; chi = -best achievable eigenvalue.

    Multi-start (a delta profile at the most central site plus random
    simplex profiles); each start runs the fixed-point iteration, falls
    back to projected gradient ascent if the fixed point cycles, and ends
    with a Newton polish of the stationarity system.  The best objective
    wins.
    """
    if len(C) == 0:
        raise ValueError("support must be nonempty")
    n = len(C)
    d = C.dim
    coords = C.coords().astype(np.float64)
    centroid = coords.mean(axis=0)
    central = int(np.argmin(np.abs(coords - centroid).sum(axis=1)))
    starts = []
    w = np.full(n, 1e-6 / max(n - 1, 1))
    w[central] = 1.0 - 1e-6 if n > 1 else 1.0
    starts.append(rho * np.log(w))
    rng = np.random.default_rng(0xC415 + 1000 * n + d)
    for _ in range(n_random_starts):
        starts.append(rho * np.log(rng.dirichlet(np.ones(n))))

    best = None
    total_solves = 0
    fp_tol = max(tol, 1e-9)
    for phi0 in starts:
        lam, phi, psi, solves, trace, ok = _fixed_point(C, rho, phi0, fp_tol, max_iter)
        total_solves += solves
        method = "fixed-point"
        if not ok:
            lam, phi, psi, solves, trace2, _ = _projected_gradient(
                C, rho, phi, fp_tol, max_iter
            )
            total_solves += solves
            trace = trace + trace2
            method = "projected-gradient"
        phi_p, lam_p, psi_p, kkt_p, solves = _newton_polish(C, rho, phi)
        total_solves += solves
        if lam_p >= lam - 10.0 * fp_tol:
            lam, phi, psi = lam_p, phi_p, psi_p
            trace = list(trace) + [lam_p]
        if best is None or lam > best[0]:
            best = (lam, phi, psi, method, tuple(trace))

    lam, phi, psi, method, trace = best
    chi = -lam
    kkt = float(np.max(np.abs(np.exp(phi / rho) - psi**2)))
    if not (0.0 < chi <= 2.0 * d + 1e-9):
        raise RuntimeError(f"chi = {chi} outside (0, 2d]; solver failure")
    if abs(ell(C, phi, rho) - 1.0) > 1e-8:
        raise RuntimeError("constraint not active at the reported optimizer")
    return ChiSolution(
        chi=chi,
        optimizer=Profile(C, phi),
        eigvec=psi,
        iterations=total_solves,
        kkt_residual=kkt,
        method=method,
        trace=trace,
    )


@dataclass(frozen=True)
class ChiExtrapolation:
    """chi over nested l1 balls, extrapolated until the drop falls below tol."""

    chi: float
    error_bar: float
    radii: tuple
    values: tuple

    def to_json(self):
        return {
            "chi": self.chi,
            "error_bar": self.error_bar,
            "radii": list(self.radii),
            "values": [float(v) for v in self.values],
        }


def chi_infinite(
    rho: float, d: int, tol: float = 1e-3, n_max: int | None = None
) -> ChiExtrapolation:
    """Extrapolate chi over increasing l1 balls B_n until successive drops < tol.

    Returns the last value with the last drop as its error bar.  The radius
    budget defaults to what stays around a minute per (rho, d).
    """
    from . import lattice

    if n_max is None:
        n_max = {1: 14, 2: 4}.get(d, 2)
    origin = (0,) * d
    radii, values = [], []
    prev = None
    for n in range(0, n_max + 1):
        C = lattice.ball(origin, n)
        chi_n = solve_chi(C, rho, tol=min(1e-10, tol * 1e-3)).chi
        radii.append(n)
        values.append(chi_n)
        if prev is not None:
            drop = prev - chi_n
            if drop < -1e-8:
                raise RuntimeError("chi increased along nested balls; solver failure")
            if drop < tol:
                return ChiExtrapolation(chi_n, max(drop, 0.0), tuple(radii), tuple(values))
        prev = chi_n
    raise RuntimeError(
        f"chi extrapolation budget exceeded: drops still above {tol} at n = {n_max}"
    )


@dataclass(frozen=True)
class ImplicationResult:
    """Outcome of one deterministic implication check.

    status: "pass" (premise and conclusion hold), "vacuous" (premise fails),
    "fail" (premise holds, conclusion does not; a falsifying witness),
    "inapplicable" (a precondition on the parameters is violated).
    """

    status: str
    lhs: float
    rhs: float
    detail: dict

    @property
    def ok(self) -> bool:
        return self.status != "fail"

    def to_json(self):
        detail = {
            k: ([float(x) for x in v] if isinstance(v, np.ndarray) else v)
            for k, v in self.detail.items()
        }
        return {"status": self.status, "lhs": self.lhs, "rhs": self.rhs, "detail": detail}


def gap_implication_check(
    C: LatticeDomain, field: PotentialField, rho: float, K: float, chi_c: float | None = None
) -> ImplicationResult:
    """Spectral-gap implication: a gap of at most K at the top forces
    lambda1 - rho*log L_C(xi) <= -chi_C + K - rho*log 2."""
    if len(C) < 2:
        raise ValueError("need |C| >= 2")
    H = operator.assemble(C, field)
    lam = operator.dense_eigenvalues(H)
    lam1, lam2 = float(lam[0]), float(lam[1])
    if lam1 - lam2 > K:
        return ImplicationResult("vacuous", np.nan, np.nan, {"gap": lam1 - lam2, "K": K})
    if chi_c is None:
        chi_c = solve_chi(C, rho).chi
    lhs = lam1 - rho * math.log(ell(C, field.values, rho))
    rhs = -chi_c + K - rho * math.log(2.0)
    slack = 1e-9 * max(1.0, abs(lhs), abs(rhs))
    status = "pass" if lhs <= rhs + slack else "fail"
    return ImplicationResult(
        status,
        lhs,
        rhs,
        {"gap": lam1 - lam2, "K": K, "chi_C": chi_c, "values": field.values},
    )


def inclusion_check(
    C: LatticeDomain,
    field: PotentialField,
    rho: float,
    a: float,
    A: float,
    chi_c: float | None = None,
) -> ImplicationResult:
    """Large local eigenvalue forces truncated mass:
    lambda1 >= a implies L_{C,A}(xi - a - chi_C) >= e^{-eta(A)/rho}.

    Preconditions: A >= chi_C and A(1 + A/4d) >= 4d; A may be infinite, in
    which case the bound degenerates to L_C(xi - a - chi_C) >= 1.
    """
    d = C.dim
    if chi_c is None:
        chi_c = solve_chi(C, rho).chi
    if not (A >= chi_c and (math.isinf(A) or A * (1.0 + A / (4.0 * d)) >= 4.0 * d)):
        return ImplicationResult(
            "inapplicable", np.nan, np.nan, {"A": A, "chi_C": chi_c}
        )
    H = operator.assemble(C, field)
    lam1 = float(operator.top_eigs(H, 1).eigenvalues[0])
    if lam1 < a:
        return ImplicationResult("vacuous", np.nan, np.nan, {"lambda1": lam1, "a": a})
    lhs = math.exp(-eta(d, A) / rho)
    rhs = ell_truncated(C, field.values - a - chi_c, rho, A)
    slack = 1e-9 * max(1.0, abs(lhs))
    status = "pass" if rhs >= lhs - slack else "fail"
    return ImplicationResult(
        status,
        lhs,
        rhs,
        {"lambda1": lam1, "a": a, "A": A, "chi_C": chi_c, "values": field.values},
    )


def gap_mass_check(
    C: LatticeDomain,
    field: PotentialField,
    rho: float,
    a: float,
    a_prime: float,
    A: float,
    chi_c: float | None = None,
) -> ImplicationResult:
    """Small gap plus a high top eigenvalue force truncated mass at least u,
    log u = (a' - a - eta(A))/rho + (1/2) log 2.

    Requires A large: beyond the inclusion preconditions we also need the
    single-step truncation cost to control eligible second eigenvalues,
    A(1 + A/4d) >= 8d and A/2 >= (rho/2) log 2.
    """
    d = C.dim
    if len(C) < 2:
        raise ValueError("need |C| >= 2")
    if chi_c is None:
        chi_c = solve_chi(C, rho).chi
    large_enough = (
        A >= chi_c
        and A * (1.0 + A / (4.0 * d)) >= 8.0 * d
        and A >= rho * math.log(2.0)
    )
    if not large_enough:
        return ImplicationResult("inapplicable", np.nan, np.nan, {"A": A, "chi_C": chi_c})
    H = operator.assemble(C, field)
    lam = operator.dense_eigenvalues(H)
    lam1, lam2 = float(lam[0]), float(lam[1])
    if not (lam1 >= a_prime and lam1 - lam2 <= 0.5 * rho * math.log(2.0)):
        return ImplicationResult(
            "vacuous", np.nan, np.nan, {"lambda1": lam1, "gap": lam1 - lam2}
        )
    log_u = (a_prime - a - eta(d, A)) / rho + 0.5 * math.log(2.0)
    lhs = math.exp(log_u)
    rhs = ell_truncated(C, field.values - a - chi_c, rho, A)
    slack = 1e-9 * max(1.0, abs(lhs))
    status = "pass" if rhs >= lhs - slack else "fail"
    return ImplicationResult(
        status,
        lhs,
        rhs,
        {"lambda1": lam1, "gap": lam1 - lam2, "chi_C": chi_c, "values": field.values},
    )


def confinement_check(
    C: LatticeDomain,
    field: PotentialField,
    rho: float,
    a: float,
    A: float,
    delta: float,
    r: int,
    chi_c: float | None = None,
) -> ImplicationResult:
    """Profile confinement: near-optimal fields concentrate their high values.

    With A' = -(rho/2) log(2 sinh delta), A >= A' >= d + A0 (A0 the radius-one
    truncation fixed point) and eta(A)/rho <= delta, a field with
    L_{C,A}(xi - a - chi_C) <= e^delta and top eigenvalue at least
    a + 2d(1 + (A'-d)/2d)^{1-2r} has all its values above
    lambda1 - A' + chi_C within l1 radius c*r of one site, c = 2 e^{delta + 2A/rho}.
    """
    d = C.dim
    if r < 1:
        raise ValueError("need r >= 1")
    if chi_c is None:
        chi_c = solve_chi(C, rho).chi
    two_sinh = 2.0 * math.sinh(delta)
    if two_sinh >= 1.0:
        return ImplicationResult("inapplicable", np.nan, np.nan, {"delta": delta})
    a_prime = -0.5 * rho * math.log(two_sinh)
    a0 = 2.0 * d * (math.sqrt(5.0) - 1.0)
    if not (A >= a_prime >= d + a0 and eta(d, A) / rho <= delta):
        return ImplicationResult(
            "inapplicable", np.nan, np.nan, {"A": A, "A_prime": a_prime, "delta": delta}
        )
    H = operator.assemble(C, field)
    lam1 = float(operator.top_eigs(H, 1).eigenvalues[0])
    mass = ell_truncated(C, field.values - a - chi_c, rho, A)
    needed = a + 2.0 * d * (1.0 + (a_prime - d) / (2.0 * d)) ** (1 - 2 * r)
    if not (mass <= math.exp(delta) and lam1 >= needed):
        return ImplicationResult(
            "vacuous", np.nan, np.nan, {"mass": mass, "lambda1": lam1, "needed": needed}
        )
    c = 2.0 * math.exp(delta + 2.0 * A / rho)
    big = [s for s, v in zip(C.sites, field.values) if v > lam1 - a_prime + chi_c]
    diam = LatticeDomain(d, big).diameter() if big else 0
    lhs = float(diam)
    rhs = c * r
    status = "pass" if lhs <= rhs else "fail"
    return ImplicationResult(
        status,
        lhs,
        rhs,
        {"n_big": len(big), "lambda1": lam1, "chi_C": chi_c, "values": field.values},
    )
