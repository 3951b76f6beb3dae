"""Finite-size-scaling fits for failure-probability data.

Near the transition the failure probability depends on p and L only through
``x = (p - p_c0) * L**(1/nu0)``. The fits here expand that scaling function
to second order, ``A + B x + C x**2``, optionally adding a per-parity
finite-size offset ``D * L**(-1/mu)``, and minimise the weighted chi-square
with a damped Gauss-Newton (Levenberg-Marquardt) iteration started from a
grid of (p_c0, nu0) guesses.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .montecarlo import ASYMPTOTE, PfailPoint

PARITIES = ("even", "odd", "all")
NU_STARTS = (0.8, 1.0, 1.25, 1.5, 1.75)
MU_STARTS = (0.5, 1.0, 2.0)

MAX_ITER = 500
CHI2_RTOL = 1e-12
STEP_TOL = 1e-10


class FitInputError(ValueError):
    pass


class FitError(RuntimeError):
    def __init__(self, message: str, best_chi2: float):
        super().__init__(f"{message} (best chi2 {best_chi2:.6g})")
        self.best_chi2 = best_chi2


class ScalingProblem:
    """Weighted data plus the ansatz; evaluates predictions and Jacobians.

    Parameters are ordered ``p_c0, nu0, A, B, C`` followed by one
    ``(D, mu)`` pair per correction group (none for the plain ansatz).
    """

    def __init__(self, p, L, y, sigma, groups: Sequence[np.ndarray] = (), a_max: float = math.inf):
        # A is the scaling function's value at x = 0, confined to (0, a_max)
        self.a_max = a_max
        self.p = np.asarray(p, dtype=float)
        self.L = np.asarray(L, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.sigma = np.asarray(sigma, dtype=float)
        self.logL = np.log(self.L)
        self.groups = [np.asarray(g, dtype=bool) for g in groups]

    @property
    def n_params(self) -> int:
        return 5 + 2 * len(self.groups)

    def names(self, group_labels: Sequence[str] = ()) -> list[str]:
        out = ["p_c0", "nu0", "A", "B", "C"]
        labels = list(group_labels) or [str(i) for i in range(len(self.groups))]
        for lab in labels:
            out += [f"D_{lab}", f"mu_{lab}"]
        return out

    def scaling_variable(self, theta) -> np.ndarray:
        return (self.p - theta[0]) * self.L ** (1.0 / theta[1])

    def predict(self, theta) -> tuple[np.ndarray, np.ndarray]:
        with np.errstate(over="ignore", invalid="ignore"):
            return self._predict(theta)

    def _predict(self, theta) -> tuple[np.ndarray, np.ndarray]:
        pc, nu, A, B, C = theta[:5]
        s = self.L ** (1.0 / nu)
        x = (self.p - pc) * s
        f = A + B * x + C * x * x
        dfdx = B + 2 * C * x
        J = np.empty((self.p.size, self.n_params))
        J[:, 0] = -dfdx * s
        J[:, 1] = -dfdx * x * self.logL / (nu * nu)
        J[:, 2] = 1.0
        J[:, 3] = x
        J[:, 4] = x * x
        for g, mask in enumerate(self.groups):
            D, mu = theta[5 + 2 * g], theta[6 + 2 * g]
            t = np.where(mask, self.L ** (-1.0 / mu), 0.0)
            f = f + D * t
            J[:, 5 + 2 * g] = t
            J[:, 6 + 2 * g] = D * t * self.logL / (mu * mu)
        return f, J

    def valid(self, theta) -> bool:
        if not (theta[1] > 0 and np.all(np.isfinite(theta))):
            return False
        if not 0 < theta[2] < self.a_max:
            return False
        return all(theta[6 + 2 * g] > 0 for g in range(len(self.groups)))

    def chi2(self, theta) -> float:
        if not self.valid(theta):
            return math.inf
        f, _ = self.predict(theta)
        r = (self.y - f) / self.sigma
        return float(r @ r)

    def gradient(self, theta) -> np.ndarray:
        """Analytic gradient of chi-square."""
        f, J = self.predict(theta)
        r = (self.y - f) / self.sigma
        return -2.0 * (J / self.sigma[:, None]).T @ r

    def linear_start(self, pc: float, nu: float, mus: Sequence[float]) -> np.ndarray:
        """Fill in the linear parameters by weighted least squares."""
        theta = np.zeros(self.n_params)
        theta[0], theta[1] = pc, nu
        for g, mu in enumerate(mus):
            theta[6 + 2 * g] = mu
        _, J = self.predict(theta)
        lin = [2, 3, 4] + [5 + 2 * g for g in range(len(self.groups))]
        A = J[:, lin] / self.sigma[:, None]
        sol, *_ = np.linalg.lstsq(A, self.y / self.sigma, rcond=None)
        theta[lin] = sol
        hi = self.a_max if math.isfinite(self.a_max) else 1.0
        theta[2] = min(max(theta[2], 1e-3 * hi), (1 - 1e-3) * hi)
        return theta


@dataclass
class LMResult:
    theta: np.ndarray
    chi2: float
    iterations: int
    converged: bool


def levenberg_marquardt(problem: ScalingProblem, theta0: np.ndarray, max_iter: int = MAX_ITER) -> LMResult:
    theta = np.array(theta0, dtype=float)
    chi2 = problem.chi2(theta)
    if not math.isfinite(chi2):
        return LMResult(theta, chi2, 0, False)
    lam = 1e-3
    w = 1.0 / problem.sigma
    stall = 0
    for it in range(1, max_iter + 1):
        f, J = problem.predict(theta)
        Jw = J * w[:, None]
        rw = (problem.y - f) * w
        H = Jw.T @ Jw
        g = Jw.T @ rw
        diag = np.diag(H).copy()
        diag[diag <= 0] = 1.0
        while True:
            try:
                step = np.linalg.solve(H + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                trial = theta + step
                new_chi2 = problem.chi2(trial)
                if new_chi2 <= chi2:
                    break
            lam *= 10.0
            if lam > 1e16:
                return LMResult(theta, chi2, it, True)
        small_step = np.linalg.norm(step) < STEP_TOL * (1.0 + np.linalg.norm(theta))
        small_change = chi2 - new_chi2 <= CHI2_RTOL * max(chi2, 1e-300)
        theta, chi2 = trial, new_chi2
        lam = max(lam / 10.0, 1e-12)
        # one tiny step can come from heavy damping; two in a row is a stop
        stall = stall + 1 if (small_step or small_change) else 0
        if stall >= 2 or chi2 < 1e-28:
            return LMResult(theta, chi2, it, True)
    return LMResult(theta, chi2, max_iter, False)


@dataclass
class ScalingFit:
    model: str
    ansatz: str
    parity: str
    names: list[str]
    values: np.ndarray
    errors: np.ndarray
    chi2: float
    dof: int
    n_points: int
    sizes: list[int]
    bootstrap_errors: np.ndarray | None = None
    trace: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def error(self, name: str) -> float:
        return float(self.errors[self.names.index(name)])

    @property
    def p_c0(self) -> float:
        return self["p_c0"]

    @property
    def nu0(self) -> float:
        return self["nu0"]

    def to_json(self) -> dict:
        out = {
            "model": self.model,
            "ansatz": self.ansatz,
            "parity": self.parity,
            "parameters": {
                n: {"value": float(v), "error": float(e)} for n, v, e in zip(self.names, self.values, self.errors)
            },
            "chi2": self.chi2,
            "dof": self.dof,
            "points_used": self.n_points,
            "sizes": self.sizes,
            "optimizer": self.trace,
            "flags": self.flags,
        }
        if self.bootstrap_errors is not None:
            for n, e in zip(self.names, self.bootstrap_errors):
                out["parameters"][n]["bootstrap_error"] = float(e)
        return out


def _select(points: Sequence[PfailPoint], parity: str, l_min: int | None) -> list[PfailPoint]:
    if parity not in PARITIES:
        raise FitInputError(f"parity must be one of {PARITIES}, got {parity!r}")
    models = {pt.model for pt in points}
    if len(models) > 1:
        raise FitInputError(f"points mix models {sorted(models)}")
    sel = [pt for pt in points if parity == "all" or pt.parity == parity]
    if l_min is not None:
        sel = [pt for pt in sel if pt.L >= l_min]
    return sel


def _grid_step(ps: np.ndarray) -> float:
    u = np.unique(ps)
    return float(np.min(np.diff(u))) if u.size > 1 else 1e-3


def _start_centers(sel: Sequence[PfailPoint], parity: str) -> list[float]:
    """Crossing estimates used to seed p_c0: pooled, then per parity.

    Adjacent sizes of opposite parity can cross far from the per-parity
    crossings, so pooled data gets one center per parity as well.
    """
    subsets = [sel]
    if parity == "all":
        subsets += [[pt for pt in sel if pt.parity == par] for par in ("even", "odd")]
    out: list[float] = []
    for sub in subsets:
        if len({pt.L for pt in sub}) < 2:
            continue
        c = crossing_estimate(sub, quiet=True).p_c0
        if c is not None and all(abs(c - o) > 1e-9 for o in out):
            out.append(c)
    if not out:
        out.append(float(np.median([pt.p for pt in sel])))
    return out


def _fit(
    points: Sequence[PfailPoint],
    parity: str,
    corrected: bool,
    l_min: int | None,
    bootstrap: int,
    seed: int | None,
) -> ScalingFit:
    sel = _select(points, parity, l_min)
    if not sel:
        raise FitInputError("no points left after parity / size selection")
    sizes = sorted({pt.L for pt in sel})
    ps = np.array([pt.p for pt in sel])
    if len(sizes) < 2:
        raise FitInputError("need at least two distinct sizes to identify nu0")
    if len(np.unique(ps)) < 3:
        raise FitInputError("need at least three distinct p values")
    if corrected and len(sizes) < 4:
        raise FitInputError("the corrected ansatz needs at least four distinct sizes")
    model = sel[0].model

    L = np.array([pt.L for pt in sel], dtype=float)
    y = np.array([pt.pfail for pt in sel])
    sigma = np.array([pt.stderr for pt in sel])
    groups, labels = [], []
    if corrected:
        for lab in ("even", "odd"):
            mask = (L % 2 == 0) if lab == "even" else (L % 2 == 1)
            if parity in (lab, "all") and mask.any():
                if parity == "all" and len(np.unique(L[mask])) < 2:
                    raise FitInputError(f"pooled corrected fit needs two {lab} sizes")
                groups.append(mask)
                labels.append(lab)
    asym = ASYMPTOTE.get(model, math.inf)
    problem = ScalingProblem(ps, L, y, sigma, groups, a_max=asym)
    dof = len(sel) - problem.n_params
    if dof <= 0:
        raise FitInputError(f"{len(sel)} points cannot constrain {problem.n_params} parameters")

    flags = []
    if parity == "all":
        flags.append("pooled even and odd sizes")
        warnings.warn("fitting even and odd sizes together", stacklevel=3)

    centers = _start_centers(sel, parity)
    center = centers[0]
    step = _grid_step(ps)
    starts = []
    for c in centers:
        for k in (0, -1, 1, -2, 2):
            for nu in NU_STARTS:
                mu_sets = [[mu] * len(groups) for mu in MU_STARTS] if groups else [[]]
                for mus in mu_sets:
                    starts.append(problem.linear_start(c + k * step, nu, mus))
    if corrected:
        # the plain optimum with D = 0 is a feasible start, so the corrected
        # chi-square can never end above the quadratic one
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            plain = _fit(points, parity, False, l_min, 0, None)
        for mu in MU_STARTS:
            theta = np.concatenate([plain.values, np.tile([0.0, mu], len(groups))])
            starts.append(theta)

    best, n_conv, total_iter = None, 0, 0
    for theta0 in starts:
        res = levenberg_marquardt(problem, theta0)
        total_iter += res.iterations
        if not math.isfinite(res.chi2):
            continue
        n_conv += res.converged
        if best is None or res.chi2 < best.chi2:
            best = res
    if n_conv == 0:
        best_chi2 = best.chi2 if best is not None else min(problem.chi2(t) for t in starts)
        raise FitError("no multi-start converged", best_chi2)
    if not best.converged:
        # chi-square still falling at the iteration cap: typically (D, mu) sliding
        # along a direction where the correction mimics a log L drift
        flags.append("best start stopped at the iteration limit; parameters may be drifting")

    _, J = problem.predict(best.theta)
    Jw = J / sigma[:, None]
    curvature = Jw.T @ Jw
    try:
        cov = np.linalg.inv(curvature)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(curvature)
        flags.append("singular curvature; errors from pseudo-inverse")
    errors = np.sqrt(np.clip(np.diag(cov), 0.0, None))

    boot = None
    if bootstrap > 0:
        rng = np.random.default_rng(seed)
        reps = []
        for _ in range(bootstrap):
            noisy = ScalingProblem(ps, L, y + rng.normal(0.0, sigma), sigma, groups, a_max=asym)
            r = levenberg_marquardt(noisy, best.theta)
            if math.isfinite(r.chi2):
                reps.append(r.theta)
        if len(reps) > 1:
            boot = np.std(np.array(reps), axis=0, ddof=1)

    names = problem.names(labels)
    values = best.theta
    if not 0 < values[0] < 1:
        flags.append("p_c0 outside (0, 1)")
    if math.isfinite(asym) and min(values[2], asym - values[2]) < 1e-4 * asym:
        flags.append(f"A pinned at the edge of (0, {asym})")
    return ScalingFit(
        model=model,
        ansatz="corrected" if corrected else "quadratic",
        parity=parity,
        names=names,
        values=values,
        errors=errors,
        chi2=best.chi2,
        dof=dof,
        n_points=len(sel),
        sizes=sizes,
        bootstrap_errors=boot,
        trace={
            "starts": len(starts),
            "converged_starts": n_conv,
            "iterations": total_iter,
            "best_iterations": best.iterations,
            "crossing_start": center,
            "start_centers": centers,
        },
        flags=flags,
    )


def fit_quadratic(
    points: Sequence[PfailPoint],
    parity: str,
    *,
    l_min: int | None = None,
    bootstrap: int = 0,
    seed: int | None = None,
) -> ScalingFit:
    """Fit ``A + B x + C x**2`` with ``x = (p - p_c0) L**(1/nu0)``."""
    return _fit(points, parity, False, l_min, bootstrap, seed)


def fit_corrected(
    points: Sequence[PfailPoint],
    parity: str,
    *,
    l_min: int | None = None,
    bootstrap: int = 0,
    seed: int | None = None,
) -> ScalingFit:
    """Quadratic ansatz plus ``D * L**(-1/mu)``, one (D, mu) per parity used."""
    return _fit(points, parity, True, l_min, bootstrap, seed)


class SlopeEstimate(NamedTuple):
    nu0: float
    error: float
    slopes: dict


def _weighted_line(x, y, sigma):
    w = 1.0 / sigma**2
    X = np.stack([np.ones_like(x), x], axis=1)
    cov = np.linalg.inv(X.T @ (X * w[:, None]))
    coef = cov @ (X.T @ (w * y))
    return coef, cov


def slope_exponent(points: Sequence[PfailPoint], p_ref: float, *, window: float | None = None) -> SlopeEstimate:
    """nu0 from the growth of dP_fail/dp at ``p_ref`` with L.

    Per size, the slope comes from a weighted straight-line fit of P_fail
    against p over ``|p - p_ref| <= window``. By default the window is the
    widest one symmetric about ``p_ref`` inside that size's p range, which
    keeps the even (curvature) part of the curve out of the slope. ``log
    slope`` is then regressed on ``log L``; the inverse of that slope is
    returned with its propagated error.
    """
    by_L: dict[int, list[PfailPoint]] = {}
    for pt in points:
        by_L.setdefault(pt.L, []).append(pt)
    for L, pts in list(by_L.items()):
        ps = [pt.p for pt in pts]
        if not min(ps) <= p_ref <= max(ps):
            raise FitInputError(f"p grid at L={L} does not bracket p_ref={p_ref}")
        w = window if window is not None else min(p_ref - min(ps), max(ps) - p_ref)
        by_L[L] = [pt for pt in pts if abs(pt.p - p_ref) <= w + 1e-12]
    slopes = {}
    for L in sorted(by_L):
        pts = by_L[L]
        if len({pt.p for pt in pts}) < 2:
            continue
        coef, cov = _weighted_line(
            np.array([pt.p - p_ref for pt in pts]),
            np.array([pt.pfail for pt in pts]),
            np.array([pt.stderr for pt in pts]),
        )
        s, ds = coef[1], math.sqrt(cov[1, 1])
        if s <= 0:
            warnings.warn(f"non-positive slope at L={L}; size excluded", stacklevel=2)
            continue
        slopes[L] = (float(s), float(ds))
    if len(slopes) < 3:
        raise FitInputError(f"need slopes at three or more sizes, got {len(slopes)}")
    Ls = np.array(sorted(slopes), dtype=float)
    s = np.array([slopes[int(L)][0] for L in Ls])
    ds = np.array([slopes[int(L)][1] for L in Ls])
    sig = np.maximum(ds / s, 1e-12)
    coef, cov = _weighted_line(np.log(Ls), np.log(s), sig)
    k, dk = coef[1], math.sqrt(cov[1, 1])
    return SlopeEstimate(float(1.0 / k), float(dk / k**2), slopes)


class CrossingEstimate(NamedTuple):
    p_c0: float | None
    spread: float | None
    crossings: dict


def crossing_estimate(points: Sequence[PfailPoint], *, quiet: bool = False) -> CrossingEstimate:
    """Where P_fail curves of neighbouring sizes cross, by linear interpolation.

    For each adjacent pair of sizes the difference (larger minus smaller) is
    scanned for an upward sign change on the shared p values. When noise
    produces several, the one nearest the root of a weighted straight-line fit
    to the difference is kept. The median over pairs is returned with half
    the range as spread.
    """
    by_L: dict[int, dict[float, PfailPoint]] = {}
    for pt in points:
        by_L.setdefault(pt.L, {})[round(pt.p, 9)] = pt
    sizes = sorted(by_L)
    if len(sizes) < 2:
        raise FitInputError("crossings need at least two sizes")
    found = {}
    for L1, L2 in zip(sizes[:-1], sizes[1:]):
        common = sorted(set(by_L[L1]) & set(by_L[L2]))
        if len(common) < 2:
            if not quiet:
                warnings.warn(f"sizes {L1} and {L2} share fewer than two p values", stacklevel=2)
            continue
        p = np.array(common)
        d = np.array([by_L[L2][q].pfail - by_L[L1][q].pfail for q in common])
        sd = np.array([math.hypot(by_L[L2][q].stderr, by_L[L1][q].stderr) for q in common])
        cands = []
        for i in range(len(p) - 1):
            if d[i] == 0:
                cands.append(float(p[i]))
            elif d[i] < 0 < d[i + 1]:
                cands.append(float(p[i] + (p[i + 1] - p[i]) * (-d[i]) / (d[i + 1] - d[i])))
        if d[-1] == 0:
            cands.append(float(p[-1]))
        if not cands:
            if not quiet:
                warnings.warn(f"curves for L={L1} and L={L2} do not cross in range", stacklevel=2)
            continue
        if len(cands) > 1:
            coef, _ = _weighted_line(p, d, sd)
            target = -coef[0] / coef[1] if coef[1] > 0 else float(np.median(cands))
            cands.sort(key=lambda c: abs(c - target))
        found[(L1, L2)] = cands[0]
    if not found:
        if not quiet:
            warnings.warn("no crossings found", stacklevel=2)
        return CrossingEstimate(None, None, found)
    vals = np.array(list(found.values()))
    return CrossingEstimate(float(np.median(vals)), float((vals.max() - vals.min()) / 2), found)


def synthetic_points(
    model: str,
    sizes: Sequence[int],
    p_values: Sequence[float],
    *,
    p_c0: float,
    nu0: float,
    A: float,
    B: float,
    C: float,
    corrections: dict | None = None,
    stderr: float | Sequence[float] = 0.005,
    noise_rng: np.random.Generator | None = None,
    n_samples: int = 10_000,
) -> list[PfailPoint]:
    """Points drawn exactly from the ansatz, optionally with Gaussian noise.

    ``corrections`` maps "even"/"odd" to a (D, mu) pair.
    """
    out = []
    for L in sizes:
        for i, p in enumerate(p_values):
            x = (p - p_c0) * L ** (1.0 / nu0)
            y = A + B * x + C * x * x
            if corrections:
                D, mu = corrections.get("even" if L % 2 == 0 else "odd", (0.0, 1.0))
                y += D * L ** (-1.0 / mu)
            se = stderr if np.isscalar(stderr) else stderr[i]
            if noise_rng is not None:
                y += noise_rng.normal(0.0, se)
            out.append(PfailPoint(model, int(L), float(p), n_samples, int(round(y * n_samples)), float(y), float(se), 0))
    return out
