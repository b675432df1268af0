"""Tracy-Widom cumulative distributions F1 and F2.

The Hastings-McLeod solution q of Painleve II (q'' = s q + 2 q^3, q ~ Ai(s) as
s -> +inf) yields

    F2(s) = exp( - int_s^inf (x - s) q(x)^2 dx ),
    F1(s) = exp( - (1/2) int_s^inf q(x) dx ) * sqrt(F2(s)).

q is a separatrix: marching it backwards in double precision departs near
s ~ -8 no matter how the right boundary data are refined, so the solver
integrates the IVP first and, when blow-up is detected, refines the boundary
data globally with a damped collocation sweep anchored on the left asymptote
q(s) = sqrt(-s/2)(1 + 1/(8 s^3) - 73/(128 s^6)).

The independent cross-check is the Airy-kernel Fredholm determinant
F2(s) = det(I - K_Ai) on L^2(s, inf), discretized by Gauss-Legendre Nystrom.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_simpson, simpson, solve_bvp, solve_ivp
from scipy.special import airy

from .errors import ConvergenceError, DomainRejectionError

BLOWUP_LIMIT = 1e6
_IVP_RTOL = 1e-10
_ASYMPTOTE_PAD = 4.0  # collocation extends this far left of s_min for the asymptotic anchor
_TAIL_UPPER = 18.0    # Airy tail integrals are truncated here (Ai(18)^2 ~ 1e-45)


def _ai(x):
    return airy(x)[0]


def _aip(x):
    return airy(x)[1]


@dataclass(frozen=True)
class PainleveSolution:
    grid: np.ndarray    # ascending s values
    q: np.ndarray
    qprime: np.ndarray

    def __call__(self, s):
        return np.interp(s, self.grid, self.q)


@dataclass(frozen=True)
class TWTable:
    grid: np.ndarray
    F1: np.ndarray
    F2: np.ndarray

    def cdf(self, beta: int) -> np.ndarray:
        if beta == 1:
            return self.F1
        if beta == 2:
            return self.F2
        raise DomainRejectionError(f"beta must be 1 or 2, got {beta}")

    def to_csv(self, path) -> None:
        lines = ["s,F1,F2"]
        lines += [f"{repr(float(s))},{repr(float(a))},{repr(float(b))}"
                  for s, a, b in zip(self.grid, self.F1, self.F2)]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @staticmethod
    def from_csv(path) -> "TWTable":
        rows = Path(path).read_text().strip().splitlines()[1:]
        data = np.array([[float(v) for v in row.split(",")] for row in rows])
        return TWTable(grid=data[:, 0], F1=data[:, 1], F2=data[:, 2])


def _left_asymptote(s):
    return np.sqrt(-s / 2.0) * (1.0 + 1.0 / (8.0 * s ** 3) - 73.0 / (128.0 * s ** 6))


def _collocation_sweep(s_left: float, s_max: float, ivp_sol=None):
    """Global boundary-data refinement: 4th-order collocation anchored on the
    left asymptote and Ai on the right, seeded from whatever the IVP produced."""

    def rhs(s, y):
        return np.vstack([y[1], s * y[0] + 2.0 * y[0] ** 3])

    def bc(ya, yb):
        return np.array([ya[0] - _left_asymptote(s_left), yb[0] - _ai(s_max)])

    mesh = np.linspace(s_left, s_max, 1600)
    guess = np.empty((2, mesh.size))
    if ivp_sol is not None:
        lo = max(ivp_sol.t.min(), s_left)
        inside = mesh >= lo
        guess[0, inside] = ivp_sol.sol(mesh[inside])[0]
        guess[1, inside] = ivp_sol.sol(mesh[inside])[1]
        guess[0, ~inside] = _left_asymptote(mesh[~inside])
        guess[1, ~inside] = np.gradient(_left_asymptote(mesh[~inside]), mesh[~inside]) if (~inside).sum() > 1 else 0.0
    else:
        neg = mesh < -0.5
        guess[0] = np.where(neg, np.sqrt(np.maximum(-mesh, 1.0) / 2.0), _ai(np.maximum(mesh, 0.0)))
        guess[1] = 0.0
    result = solve_bvp(rhs, bc, mesh, guess, tol=1e-11, max_nodes=400_000)
    if result.status != 0:
        raise ConvergenceError(f"persistent blow-up: collocation sweep failed ({result.message})")
    return result.sol


def hastings_mcleod(s_min: float = -10.0, s_max: float = 6.0, step: float = 0.005) -> PainleveSolution:
    """Hastings-McLeod solution on [s_min, s_max] sampled with the given step."""
    if s_max < 6.0:
        raise DomainRejectionError("s_max must be >= 6 so the Airy boundary data are in the decaying regime")
    if s_min > -10.0:
        raise DomainRejectionError("s_min must be <= -10 so both tails are resolved")
    if step <= 0:
        raise DomainRejectionError("step must be positive")

    def odes(s, y):
        return [y[1], s * y[0] + 2.0 * y[0] ** 3]

    def blow_up(s, y):
        return abs(y[0]) - BLOWUP_LIMIT

    blow_up.terminal = True
    ivp = solve_ivp(odes, [s_max, s_min], [_ai(s_max), _aip(s_max)], method="RK45",
                    rtol=_IVP_RTOL, atol=1e-14, dense_output=True, events=blow_up)
    grid = np.arange(0, int(round((s_max - s_min) / step)) + 1) * step + s_min
    grid[-1] = s_max

    departed = ivp.status == 1 or ivp.t[-1] > s_min
    if not departed:
        # departure can also be silent: compare against the far-left asymptote
        q_left = float(ivp.sol(s_min)[0])
        departed = abs(q_left / _left_asymptote(s_min) - 1.0) > 1e-3
    if departed:
        sol = _collocation_sweep(s_min - _ASYMPTOTE_PAD, s_max, ivp if ivp.t.size > 1 else None)
        vals = sol(grid)
    else:
        vals = ivp.sol(grid)
    q, qp = vals[0], vals[1]
    if np.any(q <= 0.0):
        raise ConvergenceError("Hastings-McLeod solve produced non-positive values")
    ratio = q[-1] / _ai(s_max)
    if abs(ratio - 1.0) > 1e-4:
        raise ConvergenceError(f"right boundary mismatch: q/Ai = {ratio:.8f} at s = {s_max}")
    return PainleveSolution(grid=grid, q=q, qprime=qp)


def _tail_nodes(s_max: float):
    x = np.linspace(s_max, _TAIL_UPPER, 600)
    return x, _ai(x)


def tw_cdf(beta: int, s: float, sol: PainleveSolution) -> float:
    """Evaluate F_beta at one point by composite Simpson on the stored grid.

    The integrals beyond the grid's right end are completed with Ai in place
    of q (they agree there to ~1e-9 by the boundary condition).
    """
    grid, q = sol.grid, sol.q
    if s < grid[0] - 1e-12 or s > grid[-1] + 1e-12:
        raise DomainRejectionError(f"s={s} outside the stored grid [{grid[0]}, {grid[-1]}]; extrapolation refused")
    mask = grid > s
    # anchor the quadrature exactly at s so off-grid evaluation points do not
    # drop the leading sliver of the integral
    x = np.concatenate([[s], grid[mask]])
    qx = np.concatenate([[np.interp(s, grid, q)], q[mask]])
    xt, ai_t = _tail_nodes(grid[-1])
    i2 = simpson((x - s) * qx ** 2, x=x) + simpson((xt - s) * ai_t ** 2, x=xt)
    f2 = float(np.exp(-i2))
    if beta == 2:
        return f2
    if beta == 1:
        i1 = simpson(qx, x=x) + simpson(ai_t, x=xt)
        return float(np.exp(-0.5 * i1) * np.sqrt(f2))
    raise DomainRejectionError(f"beta must be 1 or 2, got {beta}")


def tw_table(s_min: float = -10.0, s_max: float = 6.0, step: float = 0.01,
             sol: PainleveSolution | None = None) -> TWTable:
    """Tabulate F1 and F2 on a uniform grid (vectorized cumulative quadrature)."""
    if sol is None:
        sol = hastings_mcleod(min(s_min, -10.0), max(s_max, 6.0), step=min(step, 0.005))
    n = int(round((s_max - s_min) / step))
    grid = s_min + np.arange(0, n + 1) * step
    grid[-1] = s_max
    # cumulative Simpson antiderivatives on the solution grid, then interpolation;
    # int_s^inf (x-s) q^2 = J1(s) - s J2(s) with J1 = int_s^inf x q^2, J2 = int_s^inf q^2
    g, q = sol.grid, sol.q
    q2 = q ** 2
    xt, ai_t = _tail_nodes(g[-1])
    suffix = lambda f: simpson(f, x=g) - cumulative_simpson(f, x=g, initial=0.0)
    J0 = np.interp(grid, g, suffix(q)) + simpson(ai_t, x=xt)
    J1 = np.interp(grid, g, suffix(g * q2)) + simpson(xt * ai_t ** 2, x=xt)
    J2 = np.interp(grid, g, suffix(q2)) + simpson(ai_t ** 2, x=xt)
    F2 = np.exp(-(J1 - grid * J2))
    F1 = np.exp(-0.5 * J0) * np.sqrt(F2)
    return TWTable(grid=grid, F1=np.clip(F1, 0.0, 1.0), F2=np.clip(F2, 0.0, 1.0))


def airy_kernel_f2(s: float, n_nodes: int = 60, upper: float = 12.0) -> float:
    """Independent F2 oracle: Nystrom discretization of det(I - K_Ai) on L^2(s, inf)."""
    u, w = np.polynomial.legendre.leggauss(n_nodes)
    x = 0.5 * (u + 1.0) * (upper - s) + s
    ww = 0.5 * (upper - s) * w
    X, Y = np.meshgrid(x, x, indexing="ij")
    ax, apx = airy(x)[0], airy(x)[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        K = (ax[:, None] * apx[None, :] - apx[:, None] * ax[None, :]) / (X - Y)
    diag = np.arange(n_nodes)
    K[diag, diag] = apx ** 2 - x * ax ** 2
    A = np.sqrt(ww)[:, None] * K * np.sqrt(ww)[None, :]
    return float(np.linalg.det(np.eye(n_nodes) - A))


def cache_dir() -> Path:
    root = os.environ.get("EDGEKIT_CACHE")
    path = Path(root) if root else Path.home() / ".cache" / "edgekit"
    path.mkdir(parents=True, exist_ok=True)
    return path


def cached_tw_table(s_min: float = -10.0, s_max: float = 6.0, step: float = 0.01) -> TWTable:
    """Disk-cached table, keyed by the grid specification hash."""
    key = hashlib.sha256(f"tw:{s_min!r}:{s_max!r}:{step!r}".encode()).hexdigest()[:16]
    path = cache_dir() / f"tw_table_{key}.csv"
    if path.exists():
        return TWTable.from_csv(path)
    table = tw_table(s_min, s_max, step)
    table.to_csv(path)
    return table
