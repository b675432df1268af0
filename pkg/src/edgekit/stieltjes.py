"""Self-consistent Stieltjes transform of the deformed Marchenko-Pastur law.

m(z) is the unique upper-half-plane solution of

    m = 1 / ( -z + d^{-1} (1/M) sum_j sigma_j / (sigma_j m + 1) ),

and the density is recovered as rho(E) = pi^{-1} Im m(E + i eta0) for small
eta0.  The damped fixed-point map preserves Im m > 0 exactly, so the Herglotz
branch is kept by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainRejectionError
from .population import EdgeParams, PopulationSpectrum

DEFAULT_TOL = 1e-12
MAX_ITER = 20_000
_DAMPING_FLOOR = 1.0 / 64.0
_SINGULAR_EPS = 1e-14


@dataclass(frozen=True)
class StieltjesValue:
    m: complex
    residual: float
    iterations: int


@dataclass(frozen=True)
class DensityCurve:
    E: np.ndarray
    rho: np.ndarray  # non-negative; NaN marks per-point solver failure
    eta0: float

    def mass(self) -> float:
        ok = ~np.isnan(self.rho)
        return float(np.trapezoid(self.rho[ok], self.E[ok]))

    def to_csv(self, path) -> None:
        lines = ["E,rho"] + [f"{repr(float(e))},{repr(float(r))}" for e, r in zip(self.E, self.rho)]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _rhs(spec: PopulationSpectrum, z: np.ndarray, m: np.ndarray):
    """Fixed-point right side plus a mask of points with a near-singular denominator."""
    vals = spec._values[:, None]
    wts = spec._weights[:, None]
    denom = vals * m[None, :] + 1.0
    singular = np.min(np.abs(denom), axis=0) < _SINGULAR_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        integral = np.sum(wts * vals / denom, axis=0)
        rhs = 1.0 / (-z + integral / spec.d)
    return rhs, singular


def _damped_sweep(spec: PopulationSpectrum, z: np.ndarray, m: np.ndarray, tol: float,
                  max_iter: int):
    """Damped fixed-point loop from a given start.

    Damping lambda starts at 1, halves whenever a point's residual increases,
    floor 1/64.  A near-singular denominator sigma*m+1 skips the update for
    that point and halves its damping (stronger-damping retry).  Residuals are
    normalized by max(1, |m|): absolute in the O(1) regime, relative where |m|
    blows up (hard edge), where an absolute criterion would sit below machine
    precision.
    """
    m = m.copy()
    lam = np.ones(z.shape, dtype=float)
    res = np.full(z.shape, np.inf)
    iters = np.zeros(z.shape, dtype=int)
    active = np.ones(z.shape, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        za, ma = z[active], m[active]
        rhs, singular = _rhs(spec, za, ma)
        new_res = np.abs(rhs - ma) / np.maximum(1.0, np.abs(ma))
        lam_a = lam[active]
        worse = (new_res > res[active]) | singular
        lam_a[worse] = np.maximum(lam_a[worse] / 2.0, _DAMPING_FLOOR)
        # singular points: no damped step, just a tiny upward nudge so the
        # denominator sigma*m+1 leaves the 1e-14 neighbourhood of 0
        m_new = np.where(singular, ma + 1e-13j, (1.0 - lam_a) * ma + lam_a * rhs)
        new_res = np.where(singular, res[active], new_res)
        m[active] = m_new
        lam[active] = lam_a
        res[active] = new_res
        iters[active] += 1
        act = np.zeros(z.shape, dtype=bool)
        act[active] = new_res > tol
        active = act
    return m, res, iters


def _newton_polish(spec: PopulationSpectrum, z: np.ndarray, m: np.ndarray, tol: float,
                   max_iter: int = 100):
    """Newton finish on g(m) = m - RHS(m) from a near-root start.

    The fixed-point map is neutral in the bulk (|RHS'| = 1 - O(eta)), so plain
    iteration needs O(1/eta) passes; Newton converges quadratically from the
    ladder's output.  Steps are halved while they would leave the closed upper
    half-plane or grow the residual.
    """
    vals = spec._values[:, None]
    wts = spec._weights[:, None]
    m = m.copy()

    def g_and_slope(mm):
        denom = vals * mm[None, :] + 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            S = np.sum(wts * vals / denom, axis=0)
            Sp = -np.sum(wts * vals ** 2 / denom ** 2, axis=0)
            rhs = 1.0 / (-z + S / spec.d)
        return mm - rhs, 1.0 + (Sp / spec.d) * rhs ** 2

    g, gp = g_and_slope(m)
    res = np.abs(g) / np.maximum(1.0, np.abs(m))
    iters = np.zeros(z.shape, dtype=int)
    for _ in range(max_iter):
        active = res > tol
        if not active.any():
            break
        step = np.where(active, g / np.where(gp == 0, 1.0, gp), 0.0)
        trial = m - step
        for _ in range(40):
            g_t, gp_t = g_and_slope(trial)
            res_t = np.abs(g_t) / np.maximum(1.0, np.abs(trial))
            bad = active & ((trial.imag < 0.0) | (res_t > res) | ~np.isfinite(res_t))
            if not bad.any():
                break
            step = np.where(bad, step / 2.0, step)
            trial = np.where(bad, m - step, trial)
        take = active & (trial.imag >= 0.0) & np.isfinite(res_t) & (res_t <= res)
        m = np.where(take, trial, m)
        g = np.where(take, g_t, g)
        gp = np.where(take, gp_t, gp)
        new_res = np.where(take, res_t, res)
        stalled = active & ~take
        iters += active.astype(int)
        res = new_res
        if stalled.any() and not take.any():
            break  # no progress anywhere; report what we have
    return m, res, iters


def _iterate(spec: PopulationSpectrum, z: np.ndarray, tol: float, max_iter: int = MAX_ITER):
    """Solve the batch by warm-start continuation plus a Newton finish.

    The damped map started cold from -1/z can wander near the real axis
    (hard-edge points), so the Herglotz branch is tracked down a geometric eta
    ladder from eta = 1, where the map is strongly contracting, to the target
    eta of each point; every rung seeds the next and the whole batch moves
    together.  Newton then finishes to the requested tolerance; any point it
    leaves unconverged falls back to the damped sweep at the full budget.
    """
    z = np.asarray(z, dtype=complex)
    eta_target = z.imag
    rung = np.maximum(eta_target, 1.0)
    m = -1.0 / (z.real + 1j * rung)
    total_iters = np.zeros(z.shape, dtype=int)
    while True:
        final = np.all(rung <= eta_target)
        zz = z.real + 1j * rung
        m, res, iters = _damped_sweep(spec, zz, m, max(tol, 1e-8), 400)
        total_iters += iters
        if final:
            break
        rung = np.maximum(eta_target, rung / 4.0)
    m, res, iters = _newton_polish(spec, z, m, tol)
    total_iters += iters
    if np.any(res > tol):
        m, res, iters = _damped_sweep(spec, z, m, tol, max_iter)
        total_iters += iters
        if np.any(res > tol):
            m2, res2, iters2 = _newton_polish(spec, z, m, tol)
            better = res2 < res
            m, res = np.where(better, m2, m), np.where(better, res2, res)
            total_iters += iters2
    return m, np.asarray(res), total_iters


def solve_mfc(spec: PopulationSpectrum, z: complex, tol: float = DEFAULT_TOL,
              max_iter: int = MAX_ITER) -> StieltjesValue:
    """Solve the self-consistent equation at one spectral parameter.

    For Im z < 0 the anti-Herglotz branch is returned via conjugation symmetry
    m(conj z) = conj m(z).
    """
    if tol <= 0:
        raise DomainRejectionError("tolerance must be positive")
    z = complex(z)
    if z.imag == 0:
        raise DomainRejectionError("spectral parameter needs a nonzero imaginary part")
    conjugate = z.imag < 0
    zz = np.array([z.conjugate() if conjugate else z])
    m, res, iters = _iterate(spec, zz, tol, max_iter)
    if res[0] > tol:
        raise ConvergenceError(
            f"fixed point did not reach tol={tol:.1e} at z={z}: last residual {res[0]:.3e} "
            f"after {int(iters[0])} iterations"
        )
    out = complex(m[0].conjugate() if conjugate else m[0])
    if not conjugate and out.imag < 0:
        raise ConvergenceError(f"Herglotz violation at z={z}: Im m = {out.imag:.3e}")
    return StieltjesValue(m=out, residual=float(res[0]), iterations=int(iters[0]))


def solve_mfc_grid(spec: PopulationSpectrum, z: np.ndarray, tol: float = DEFAULT_TOL,
                   max_iter: int = MAX_ITER):
    """Batch solve; returns (m, residual, iterations) arrays. Non-converged points keep residual > tol."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise DomainRejectionError("grid solve requires Im z > 0 everywhere")
    return _iterate(spec, z, tol, max_iter)


def mp_reference(d: float, z: complex) -> complex:
    """Closed-form Marchenko-Pastur transform: root of z m^2 + (z + 1 - 1/d) m + 1 = 0 with Im m >= 0."""
    z = complex(z)
    a, b, c = z, z + 1.0 - 1.0 / d, 1.0
    disc = np.sqrt(complex(b * b - 4.0 * a * c))
    r1 = (-b + disc) / (2.0 * a)
    r2 = (-b - disc) / (2.0 * a)
    return r1 if r1.imag >= r2.imag else r2


def density(spec: PopulationSpectrum, grid, eta0: float = 1e-6,
            tol: float = DEFAULT_TOL) -> DensityCurve:
    """Reconstruct rho(E) = pi^{-1} Im m(E + i eta0) on a grid, clipped at 0.

    Per-point solver failures are marked NaN in the output and do not abort
    the rest of the grid.
    """
    if not (1e-8 <= eta0 <= 1e-2):
        raise DomainRejectionError(f"eta0 must lie in [1e-8, 1e-2], got {eta0}")
    grid = np.asarray(grid, dtype=float)
    z = grid + 1j * eta0
    m, res, _ = _iterate(spec, z, tol)
    rho = np.maximum(m.imag / np.pi, 0.0)
    rho[res > tol] = np.nan
    return DensityCurve(E=grid, rho=rho, eta0=eta0)


def edge_exponent_probe(spec: PopulationSpectrum, edge: EdgeParams,
                        window: tuple = (1e-4, 1e-2), n_points: int = 24,
                        eta0: float = 1e-8):
    """Least-squares fit of log rho against log(E_plus - E) just inside the edge.

    Returns (exponent, amplitude) with rho(E) ~ amplitude * (E_plus - E)^exponent;
    a square-root edge gives exponent near 1/2.  The window shrinks once if the
    density is non-positive somewhere in it.
    """
    if edge.margin <= 0:
        raise DomainRejectionError("edge exponent probe needs a subcritical spectrum")
    lo, hi = window
    for attempt in range(2):
        kappa = np.geomspace(lo, hi, n_points)
        curve = density(spec, edge.E_plus - kappa, eta0=eta0)
        rho = curve.rho
        if np.all(rho > 0) and not np.any(np.isnan(rho)):
            slope, logc = np.polyfit(np.log(kappa), np.log(rho), 1)
            return float(slope), float(np.exp(logc))
        lo, hi = lo * 10.0, hi  # shrink from the edge side, where eta smearing dominates
    raise ConvergenceError("edge window contains non-positive density values after shrinking")


def diagnostics_json(spec: PopulationSpectrum, z_values, tol: float = DEFAULT_TOL) -> str:
    """Per-point solver diagnostics as JSON records {E, eta, re_m, im_m, residual, iterations}."""
    records = []
    for z in np.asarray(z_values, dtype=complex):
        sol = solve_mfc(spec, complex(z), tol)
        records.append({
            "E": z.real, "eta": z.imag,
            "re_m": sol.m.real, "im_m": sol.m.imag,
            "residual": sol.residual, "iterations": sol.iterations,
        })
    return json.dumps(records, indent=2)
