"""Sample covariance ensembles and edge-statistics Monte Carlo.

Replicate r of a run draws its data matrix from an independent counter-based
stream Philox(key=(seed, r)), so results are reproducible bit-for-bit and
independent of evaluation order or worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainRejectionError
from .population import EdgeParams, PopulationSpectrum, edge_params
from .stieltjes import solve_mfc

ENTRY_KINDS = ("gaussian", "rademacher", "skewed-two-point")


@dataclass(frozen=True)
class EntryDistribution:
    """Law of sqrt(N) x_ij: mean 0, variance 1, subexponential tail."""

    kind: str = "gaussian"
    vartheta: float = 2.0          # informational tail exponent tag
    p: float = 0.8                 # skewed-two-point only: weight of the positive atom

    def __post_init__(self):
        if self.kind not in ENTRY_KINDS:
            raise DomainRejectionError(f"unknown entry distribution {self.kind!r}")
        if self.vartheta <= 0:
            raise DomainRejectionError("vartheta must be positive")
        mean, var = self.closed_form_moments()
        if abs(mean) > 1e-14 or abs(var - 1.0) > 1e-14:
            raise DomainRejectionError(f"entry law must be standardized, got mean={mean}, var={var}")

    def closed_form_moments(self):
        if self.kind in ("gaussian", "rademacher"):
            return 0.0, 1.0
        if not (0.0 < self.p < 1.0):
            raise DomainRejectionError("skewed-two-point weight must lie in (0, 1)")
        a = np.sqrt((1.0 - self.p) / self.p)
        b = -np.sqrt(self.p / (1.0 - self.p))
        return self.p * a + (1.0 - self.p) * b, self.p * a * a + (1.0 - self.p) * b * b

    def third_moment(self) -> float:
        if self.kind == "gaussian":
            return 0.0
        if self.kind == "rademacher":
            return 0.0
        return (1.0 - 2.0 * self.p) / np.sqrt(self.p * (1.0 - self.p))

    def sample(self, rng: np.random.Generator, M: int, N: int) -> np.ndarray:
        """M x N matrix of independent entries with variance 1/N."""
        root_n = np.sqrt(N)
        if self.kind == "gaussian":
            return rng.standard_normal((M, N)) / root_n
        if self.kind == "rademacher":
            return (rng.integers(0, 2, size=(M, N)).astype(float) * 2.0 - 1.0) / root_n
        a = np.sqrt((1.0 - self.p) / self.p)
        b = -np.sqrt(self.p / (1.0 - self.p))
        return np.where(rng.random((M, N)) < self.p, a, b) / root_n


@dataclass(frozen=True)
class EnsembleConfig:
    N: int
    M: int
    spectrum: PopulationSpectrum
    entries: EntryDistribution = field(default_factory=EntryDistribution)
    replicates: int = 100
    k: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.spectrum.M != self.M or self.spectrum.N != self.N:
            raise DomainRejectionError(
                f"spectrum dimensions (M={self.spectrum.M}, N={self.spectrum.N}) "
                f"disagree with config (M={self.M}, N={self.N})")
        if not (1 <= self.k <= min(self.M, self.N)):
            raise DomainRejectionError(f"k={self.k} must lie in [1, min(M, N)]")
        if self.replicates < 1:
            raise DomainRejectionError("replicates must be positive")

    def to_json(self) -> str:
        return json.dumps({
            "N": self.N, "M": self.M,
            "spectrum_eigenvalues": [repr(float(v)) for v in self.spectrum.eigenvalues],
            "entries": {"kind": self.entries.kind, "vartheta": self.entries.vartheta,
                        "p": self.entries.p},
            "replicates": self.replicates, "k": self.k, "seed": self.seed,
        })

    @staticmethod
    def from_json(text: str) -> "EnsembleConfig":
        data = json.loads(text)
        spectrum = PopulationSpectrum(
            np.array([float(v) for v in data["spectrum_eigenvalues"]]), data["M"], data["N"])
        entries = EntryDistribution(**data["entries"])
        return EnsembleConfig(N=data["N"], M=data["M"], spectrum=spectrum, entries=entries,
                              replicates=data["replicates"], k=data["k"], seed=data["seed"])


@dataclass(frozen=True)
class EdgeSamples:
    """Rescaled top-k eigenvalues per replicate: s_i = gamma0 N^{2/3} (mu_i - E_plus)."""

    rows: np.ndarray            # (replicates, k), descending within each row
    raw: np.ndarray | None = None

    def column(self, i: int = 0) -> np.ndarray:
        return self.rows[:, i]

    def to_csv(self, path) -> None:
        k = self.rows.shape[1]
        lines = ["replicate," + ",".join(f"s{i + 1}" for i in range(k))]
        for r, row in enumerate(self.rows):
            lines.append(",".join([str(r)] + [repr(float(v)) for v in row]))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class KsReport:
    statistic: float
    n: int
    reference: str

    def to_json(self) -> str:
        return json.dumps({"statistic": self.statistic, "n": self.n, "reference": self.reference})


def replicate_rng(seed: int, replicate_index: int) -> np.random.Generator:
    """Counter-based stream for one replicate; order-independent across replicates."""
    key = np.array([seed, replicate_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_data_matrix(config: EnsembleConfig, replicate_index: int) -> np.ndarray:
    rng = replicate_rng(config.seed, replicate_index)
    return config.entries.sample(rng, config.M, config.N)


def top_eigenvalues(X: np.ndarray, spectrum: PopulationSpectrum, k: int,
                    validate: bool = False) -> np.ndarray:
    """Top k eigenvalues of X^* Sigma X (Sigma diagonal = spectrum eigenvalues).

    Works with whichever of the M x M / N x N symmetrizations is smaller; both
    share the nonzero spectrum.  With validate=True the top-k eigenpairs are
    recomputed with vectors and the residuals ||A v - lambda v|| checked
    against 1e-8 ||A||.
    """
    M, N = X.shape
    sig = spectrum.eigenvalues
    if sig.size != M:
        raise DomainRejectionError(f"spectrum has {sig.size} eigenvalues but X has {M} rows")
    if k > min(M, N):
        raise DomainRejectionError(f"k={k} exceeds min(M, N)={min(M, N)}")
    if M <= N:
        B = np.sqrt(sig)[:, None] * X
        A = B @ B.T
    else:
        A = (sig[:, None] * X).T @ X
    try:
        if validate:
            vals, vecs = np.linalg.eigh(A)
            norm = np.linalg.norm(A, 2)
            for j in range(1, k + 1):
                resid = np.linalg.norm(A @ vecs[:, -j] - vals[-j] * vecs[:, -j])
                if resid > 1e-8 * max(norm, 1e-300):
                    raise ConvergenceError(
                        f"eigenpair residual {resid:.3e} exceeds 1e-8*||A||={1e-8 * norm:.3e} "
                        f"(cond diag: ||A||={norm:.3e}, trace={np.trace(A):.3e})")
        else:
            vals = np.linalg.eigvalsh(A)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(
            f"symmetric eigensolver failed: {exc}; ||A||_F={np.linalg.norm(A):.3e}, "
            f"trace={np.trace(A):.3e}") from exc
    return vals[-k:][::-1].copy()


def rescale_edge(mus: np.ndarray, edge: EdgeParams, N: int) -> np.ndarray:
    return edge.gamma0 * N ** (2.0 / 3.0) * (np.asarray(mus, dtype=float) - edge.E_plus)


def _covariance_worker(args):
    config, rep = args
    X = sample_data_matrix(config, rep)
    return top_eigenvalues(X, config.spectrum, config.k)


def _parallel_rows(worker, jobs, threads: int) -> list:
    if threads <= 1:
        return [worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, jobs, chunksize=max(1, len(jobs) // (8 * threads))))


def run_monte_carlo(config: EnsembleConfig, threads: int = 1,
                    edge: EdgeParams | None = None) -> EdgeSamples:
    """Rescaled top-k edge samples over independent replicates.

    Failures propagate with the replicate index attached.  Results are a pure
    function of (config, seed) regardless of threads.
    """
    if edge is None:
        edge = edge_params(config.spectrum, require_subcritical=True)
    jobs = [(config, r) for r in range(config.replicates)]
    try:
        raw = np.array(_parallel_rows(_covariance_worker, jobs, threads))
    except ConvergenceError:
        # rerun serially to attribute the failing replicate
        for r in range(config.replicates):
            try:
                _covariance_worker((config, r))
            except ConvergenceError as exc:
                raise ConvergenceError(f"replicate {r}: {exc}") from exc
        raise
    return EdgeSamples(rows=rescale_edge(raw, edge, config.N), raw=raw)


def _goe_worker(args):
    N, k, seed, rep = args
    rng = replicate_rng(seed, rep)
    B = rng.standard_normal((N, N))
    A = (B + B.T) / np.sqrt(2.0 * N)
    vals = np.linalg.eigvalsh(A)
    return vals[-k:][::-1]


def sample_goe_top(N: int, k: int, replicates: int, seed: int, threads: int = 1) -> EdgeSamples:
    """GOE top-k rescaled by N^{2/3} (mu - 2); off-diagonal variance 1/N, diagonal 2/N."""
    jobs = [(N, k, seed, r) for r in range(replicates)]
    raw = np.array(_parallel_rows(_goe_worker, jobs, threads))
    return EdgeSamples(rows=N ** (2.0 / 3.0) * (raw - 2.0), raw=raw)


def null_case_edge(d: float) -> float:
    """Upper edge M_plus of the rescaled null law: gamma(inf) * (1+sqrt(d))^2 / d."""
    rd = np.sqrt(d)
    return rd * (1.0 + rd) ** (-4.0 / 3.0) * (1.0 + rd) ** 2 / d


def _null_w_worker(args):
    N, M, k, seed, rep = args
    rng = replicate_rng(seed, rep)
    d = N / M
    X = rng.standard_normal((M, N)) / np.sqrt(N)
    scale = np.sqrt(d) * (1.0 + np.sqrt(d)) ** (-4.0 / 3.0)
    if M <= N:
        A = scale * (X @ X.T)
    else:
        A = scale * (X.T @ X)
    return np.linalg.eigvalsh(A)[-k:][::-1]


def null_reference_W(N: int, M: int, replicates: int, seed: int, k: int = 1,
                     threads: int = 1) -> EdgeSamples:
    """Rescaled null-case samples N^{2/3} (mu_1^W - M_plus) for W = sqrt(d)(1+sqrt(d))^{-4/3} X^* X."""
    jobs = [(N, M, k, seed, r) for r in range(replicates)]
    raw = np.array(_parallel_rows(_null_w_worker, jobs, threads))
    return EdgeSamples(rows=N ** (2.0 / 3.0) * (raw - null_case_edge(N / M)), raw=raw)


def ks_statistic(samples: np.ndarray, table_grid: np.ndarray, cdf_column: np.ndarray,
                 reference: str = "tw") -> KsReport:
    """Exact one-sample Kolmogorov-Smirnov distance against a tabulated CDF."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 20:
        raise DomainRejectionError(f"need at least 20 samples, got {samples.size}")
    if np.any(np.diff(samples) < 0):
        raise DomainRejectionError("samples must be sorted ascending")
    if samples[-1] < table_grid[0] or samples[0] > table_grid[-1]:
        raise DomainRejectionError("samples have empty overlap with the reference grid")
    F = np.interp(samples, table_grid, cdf_column, left=0.0, right=1.0)
    n = samples.size
    i = np.arange(1, n + 1)
    stat = max(float(np.max(i / n - F)), float(np.max(F - (i - 1) / n)))
    return KsReport(statistic=stat, n=n, reference=reference)


def two_sample_ks(x: np.ndarray, y: np.ndarray) -> float:
    """Two-sample KS distance (exact sup over the pooled sample)."""
    x, y = np.sort(x), np.sort(y)
    pooled = np.concatenate([x, y])
    Fx = np.searchsorted(x, pooled, side="right") / x.size
    Fy = np.searchsorted(y, pooled, side="right") / y.size
    return float(np.max(np.abs(Fx - Fy)))


def smoothed_count(eigenvalues: np.ndarray, E: float, E_star: float, eta: float,
                   ell: float = 0.0):
    """Poisson-kernel smoothed count on [E + ell, E_star] and the exact count on (E, E_star].

    smoothed = (1/pi) sum_a [arctan((E_star - mu_a)/eta) - arctan((E + ell - mu_a)/eta)],
    the closed form of Tr chi_{[E+ell, E_star]} * theta_eta.  ell shifts only the
    smoothed endpoint (bracketing checks evaluate it at E +/- ell).
    """
    if not E < E_star:
        raise DomainRejectionError("need E < E_star")
    if eta <= 0:
        raise DomainRejectionError("eta must be positive")
    mu = np.asarray(eigenvalues, dtype=float)
    smoothed = float(np.sum(np.arctan((E_star - mu) / eta) - np.arctan((E + ell - mu) / eta)) / np.pi)
    exact = int(np.sum((mu > E) & (mu <= E_star)))
    return smoothed, exact


def local_law_probe(X: np.ndarray, spectrum: PopulationSpectrum, z: complex):
    """Entrywise and averaged Green-function deviations from m_fc, plus the control parameter Psi.

    G_Q = (X^* Sigma X - z)^{-1}; returns (max_ij |G_ij - delta_ij m_fc|,
    |m_Q - m_fc|, Psi(z)) with Psi = sqrt(Im m_fc / (N eta)) + 1/(N eta).
    """
    z = complex(z)
    if z.imag <= 0:
        raise DomainRejectionError("probe needs Im z > 0")
    M, N = X.shape
    Q = (spectrum.eigenvalues[:, None] * X).T @ X
    try:
        G = np.linalg.inv(Q - z * np.eye(N))
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"singular shift at z={z}: {exc}") from exc
    mhat = solve_mfc(spectrum, z).m
    dev = G - np.eye(N) * mhat
    max_entry_dev = float(np.max(np.abs(dev)))
    avg_dev = float(abs(np.trace(G) / N - mhat))
    psi = float(np.sqrt(max(mhat.imag, 0.0) / (N * z.imag)) + 1.0 / (N * z.imag))
    return max_entry_dev, avg_dev, psi
