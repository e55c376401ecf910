"""Randomized multivariate matrix pencil: node extraction by eigendecomposition.

Pipeline for samples f(k) of an exponential sum on {-n..n+1}^d:

    T[k,l] = f(k-l), Tshift[l][k,l] = f(k-l+e_l)   (k, l in {0..n}^d, lex order)
    T = U Sigma V*  (reduced SVD, rank M)
    S_l = U* Tshift[l] V Sigma^{-1}                (M x M, similar to diag of node coords)
    C_mu = sum_l conj(mu_l) S_l,  mu random on the complex unit sphere
    eigenvectors W of C_mu simultaneously diagonalize all S_l
    Z[j,l] = (W^{-1} S_l W)[j,j]  ->  t[j,l] = frac(-arg Z[j,l] / 2 pi)
    coefficients by least squares against all samples.

Convention note: with f(k) = sum_j c_j z_j^k and A[j,k] = z_j^k one gets
T = A^T diag(c) conj(A), so the pencil eigenvalues are the node coordinates
z_{j,l} themselves, not their conjugates. The single-spike tests pin this.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .model import ParameterSet, SampleTable, SeedLike, as_rng

__all__ = [
    "GridOrder",
    "Pencil",
    "RandomDirection",
    "ReconstructionResult",
    "ReconstructConfig",
    "PencilError",
    "ZeroDataError",
    "ClusteringError",
    "StageError",
    "assemble_pencil_matrices",
    "vandermonde",
    "reduced_svd_rank",
    "build_pencil",
    "sample_direction_and_combine",
    "eig_general",
    "simultaneous_diagonalize",
    "principal_log",
    "solve_coefficients",
    "reconstruct",
    "write_result_csv",
    "write_report",
]

DEFAULT_RANK_TOL = 1e-6
DEFAULT_GAP_TOL = 1e-6
DEFAULT_MAX_RETRIES = 8
ZERO_DATA_FLOOR = 1e-14
COND_WARN_LIMIT = 1e8


class PencilError(Exception):
    """Base class for numerical failures in the pencil pipeline."""


class ZeroDataError(PencilError):
    pass


class ClusteringError(PencilError):
    pass


class StageError(PencilError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}': {cause}")


@dataclass(frozen=True)
class GridOrder:
    """Fixed lexicographic ordering of the index set {0, ..., n}^d."""

    d: int
    n: int

    @property
    def N(self) -> int:
        return (self.n + 1) ** self.d

    def multi_indices(self) -> np.ndarray:
        """All indices as an (N, d) array in lexicographic order."""
        axes = [np.arange(self.n + 1)] * self.d
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)

    def index_of(self, k) -> int:
        k = np.asarray(k, dtype=int)
        if np.any(k < 0) or np.any(k > self.n):
            raise ValueError(f"{tuple(k)} not in {{0..{self.n}}}^{self.d}")
        pos = 0
        for l in range(self.d):
            pos = pos * (self.n + 1) + int(k[l])
        return pos


@dataclass
class Pencil:
    """Assembled pencil state: data matrices, truncated SVD, S matrices."""

    T: np.ndarray
    Tshift: List[np.ndarray]
    U: np.ndarray
    sigma: np.ndarray  # leading M singular values
    V: np.ndarray
    M: int
    S: List[np.ndarray]
    singular_values: np.ndarray  # full spectrum of T, nonincreasing
    rank_saturated: bool = False  # no drop found: M == N

    @classmethod
    def assemble(
        cls,
        samples: SampleTable,
        rank_tol: float = DEFAULT_RANK_TOL,
        M_override: Optional[int] = None,
    ) -> "Pencil":
        """Build the full pencil state from a sample table in one call."""
        order = GridOrder(d=samples.d, n=samples.n)
        T, Tshift = assemble_pencil_matrices(samples, order)
        U, sigma, V, M, svals = reduced_svd_rank(T, rank_tol=rank_tol, M_override=M_override)
        S = build_pencil(U, sigma, V, Tshift)
        return cls(
            T=T, Tshift=Tshift, U=U, sigma=sigma, V=V, M=M, S=S,
            singular_values=svals, rank_saturated=(M_override is None and M == T.shape[0]),
        )


@dataclass
class RandomDirection:
    """A sampled direction mu with the eigendecomposition of C_mu."""

    mu: np.ndarray
    lambdas: np.ndarray
    W: np.ndarray
    min_gap: float
    retries: int = 0


@dataclass
class ReconstructionResult:
    params: ParameterSet
    residual: float
    singular_values: np.ndarray
    M_detected: int
    mu_used: np.ndarray
    min_gap: float
    offdiag_max: float
    retries: int
    cond_W: float


@dataclass
class ReconstructConfig:
    rank_tol: float = DEFAULT_RANK_TOL
    M_override: Optional[int] = None
    gap_tol: float = DEFAULT_GAP_TOL
    max_retries: int = DEFAULT_MAX_RETRIES
    seed: SeedLike = None
    project_unit_modulus: bool = True


def assemble_pencil_matrices(samples: SampleTable, order: GridOrder):
    """Build T[k,l] = f(k-l) and Tshift[l][k,l] = f(k-l+e_l), lex-ordered.

    Raises KeyError naming the first absent multi-index if the table does not
    cover the required differences.
    """
    if samples.d != order.d:
        raise ValueError(f"samples have d={samples.d}, order has d={order.d}")
    K = order.multi_indices()
    D = K[:, None, :] - K[None, :, :]
    T = samples.value_array(D)
    Tshift = []
    for l in range(order.d):
        Dl = D.copy()
        Dl[..., l] += 1
        Tshift.append(samples.value_array(Dl))
    return T, Tshift


def vandermonde(z: np.ndarray, order: GridOrder) -> np.ndarray:
    """Multivariate Vandermonde A[j, k] = prod_l z[j,l]^k_l over the ordered grid."""
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    K = order.multi_indices()
    # (M, N, d) powers, multiplied over the last axis
    return np.prod(z[:, None, :] ** K[None, :, :], axis=2)


def reduced_svd_rank(
    T: np.ndarray,
    rank_tol: float = DEFAULT_RANK_TOL,
    M_override: Optional[int] = None,
):
    """Reduced SVD of T with rank detection by a relative singular-value cutoff.

    Returns (U, sigma, V, M, singular_values) with T ~= U @ diag(sigma) @ V*.
    M is M_override if given, otherwise the largest m with
    sigma_m >= rank_tol * sigma_1.
    """
    T = np.asarray(T)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ValueError("T must be square")
    N = T.shape[0]
    U_full, s, Vh_full = np.linalg.svd(T)
    if s[0] < ZERO_DATA_FLOOR:
        raise ZeroDataError("zero data: largest singular value below floor")
    if M_override is not None:
        if not 1 <= M_override <= N:
            raise ValueError(f"M override {M_override} outside 1..{N}")
        M = int(M_override)
        rank_saturated = False
    else:
        if not 0 < rank_tol < 1:
            raise ValueError("rank_tol must lie in (0, 1)")
        M = int(np.sum(s >= rank_tol * s[0]))
        rank_saturated = M == N
        if rank_saturated:
            warnings.warn(
                "no singular-value drop found (detected rank == N); "
                "the grid may be too small for the number of sources",
                stacklevel=2,
            )
    U = U_full[:, :M]
    V = Vh_full[:M].conj().T
    return U, s[:M].copy(), V, M, s


def build_pencil(U, sigma, V, Tshift) -> List[np.ndarray]:
    """S_l = U* Tshift[l] V Sigma^{-1}; each S_l is M x M."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("Sigma must be strictly positive")
    Uh = U.conj().T
    return [(Uh @ Tl @ V) / sigma[None, :] for Tl in Tshift]


def eig_general(C: np.ndarray):
    """Eigendecomposition of a general complex matrix, deterministically ordered.

    Eigenvalues are sorted by real part (ties by imaginary part) and the
    eigenvector columns are permuted to match, so repeated runs are stable.
    """
    C = np.asarray(C, dtype=complex)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("C must be square")
    try:
        lam, W = np.linalg.eig(C)
    except np.linalg.LinAlgError as exc:
        raise PencilError(
            f"eigendecomposition failed for a {C.shape[0]}x{C.shape[1]} matrix "
            f"(norm {np.linalg.norm(C):.3e}): {exc}"
        ) from exc
    orderidx = np.lexsort((lam.imag, lam.real))
    return lam[orderidx], W[:, orderidx]


def sample_direction_and_combine(
    S: Sequence[np.ndarray],
    seed: SeedLike = None,
    gap_tol: float = DEFAULT_GAP_TOL,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> RandomDirection:
    """Draw mu uniformly on the complex unit sphere and diagonalize C_mu.

    C_mu = sum_l conj(mu_l) S_l. A draw is accepted when the smallest
    eigenvalue gap exceeds gap_tol * (max |lambda| + 1); otherwise mu is
    resampled, up to max_retries draws in total. The directions for which
    C_mu has a repeated eigenvalue form a null set (a finite union of
    hyperplanes), so retries exhaust only for coinciding sources or
    insufficient sampling order.
    """
    d = len(S)
    M = S[0].shape[0]
    rng = as_rng(seed)
    best = None
    for attempt in range(max(1, max_retries)):
        g = rng.standard_normal(2 * d)
        mu = (g[:d] + 1j * g[d:]) / np.linalg.norm(g)
        C = sum(np.conj(mu[l]) * S[l] for l in range(d))
        lam, W = eig_general(C)
        if M == 1:
            return RandomDirection(mu=mu, lambdas=lam, W=W, min_gap=np.inf, retries=attempt)
        pair_gaps = np.abs(lam[:, None] - lam[None, :])
        min_gap = float(pair_gaps[~np.eye(M, dtype=bool)].min())
        cand = RandomDirection(mu=mu, lambdas=lam, W=W, min_gap=min_gap, retries=attempt)
        if min_gap >= gap_tol * (np.abs(lam).max() + 1.0):
            return cand
        if best is None or min_gap > best.min_gap:
            best = cand
    raise ClusteringError(
        "eigenvalue clustering: sources may coincide or n too small "
        f"(best min gap {best.min_gap:.3e} after {max_retries} draws)"
    )


def simultaneous_diagonalize(W: np.ndarray, S: Sequence[np.ndarray]):
    """Conjugate every S_l by W and read off the diagonals.

    Returns (Z, offdiag_max): Z[j, l] is the j-th diagonal entry of
    W^{-1} S_l W, and offdiag_max the worst off-diagonal magnitude relative
    to the Frobenius norm (how simultaneous the diagonalization truly is).
    """
    M = W.shape[0]
    cond = np.linalg.cond(W)
    if cond > COND_WARN_LIMIT:
        warnings.warn(f"ill-conditioned eigenvector matrix: cond(W) = {cond:.3e}", stacklevel=2)
    d = len(S)
    Z = np.empty((M, d), dtype=complex)
    offdiag_max = 0.0
    for l in range(d):
        try:
            Y = np.linalg.solve(W, S[l] @ W)
        except np.linalg.LinAlgError as exc:
            raise PencilError(f"eigenvector matrix numerically singular: {exc}") from exc
        Z[:, l] = np.diag(Y)
        if M > 1:
            off = Y - np.diag(np.diag(Y))
            offdiag_max = max(offdiag_max, float(np.abs(off).max() / np.linalg.norm(Y)))
    return Z, offdiag_max


def principal_log(Z: np.ndarray, project_unit_modulus: bool = True) -> np.ndarray:
    """Map node coordinates back to torus locations: t = frac(-arg(z) / 2 pi).

    With noise the eigenvalues drift off the unit circle; only their phase
    carries location information, so entries are projected to unit modulus
    first (toggleable, and irrelevant for the phase itself).
    """
    Z = np.asarray(Z, dtype=complex)
    if np.any(Z == 0):
        raise ValueError("zero entry in node matrix; cannot take the principal logarithm")
    if project_unit_modulus:
        Z = Z / np.abs(Z)
    return (-np.angle(Z) / (2 * np.pi)) % 1.0


def solve_coefficients(t_recovered: np.ndarray, samples: SampleTable):
    """Least-squares coefficients against every sampled index.

    Solves G c ~= f with G[k, j] = exp(-2 pi i <t_j, k>) over the full
    sampled box (more equations than the pencil strictly needs; identical
    solution on exact data, better conditioning with noise). Uses an
    orthogonal factorization, never the normal equations.
    """
    t_recovered = np.atleast_2d(np.asarray(t_recovered, dtype=float))
    M = t_recovered.shape[0]
    if M > 1:
        from .model import torus_distance

        dist = torus_distance(t_recovered[:, None, :], t_recovered[None, :, :])
        iu = np.triu_indices(M, 1)
        if dist[iu].min() == 0.0:
            warnings.warn("recovered locations contain an exact duplicate", stacklevel=2)
    K = samples.key_array()
    f = samples.values.reshape(-1)
    G = np.exp(-2j * np.pi * (K @ t_recovered.T))
    c, _, rank, _ = np.linalg.lstsq(G, f, rcond=None)
    if rank < M:
        raise PencilError(
            f"coincident recovered nodes: coefficient system has rank {rank} < {M}"
        )
    residual = float(np.linalg.norm(G @ c - f))
    return c, residual


def reconstruct(samples: SampleTable, config: Optional[ReconstructConfig] = None) -> ReconstructionResult:
    """Run the full pipeline on a sample table; deterministic for a fixed seed.

    Errors from individual stages are re-raised as StageError tagged with the
    stage name ('assemble', 'svd', 'pencil', 'direction', 'diagonalize',
    'principal-log', 'coefficients').
    """
    cfg = config or ReconstructConfig()
    order = GridOrder(d=samples.d, n=samples.n)

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc

    T, Tshift = stage("assemble", assemble_pencil_matrices, samples, order)
    U, sigma, V, M, svals = stage(
        "svd", reduced_svd_rank, T, rank_tol=cfg.rank_tol, M_override=cfg.M_override
    )
    S = stage("pencil", build_pencil, U, sigma, V, Tshift)
    direction = stage(
        "direction",
        sample_direction_and_combine,
        S,
        seed=cfg.seed,
        gap_tol=cfg.gap_tol,
        max_retries=cfg.max_retries,
    )
    Z, offdiag_max = stage("diagonalize", simultaneous_diagonalize, direction.W, S)
    t_rec = stage("principal-log", principal_log, Z, cfg.project_unit_modulus)
    c_rec, residual = stage("coefficients", solve_coefficients, t_rec, samples)
    params = ParameterSet(d=samples.d, M=M, t=t_rec, c=c_rec)
    return ReconstructionResult(
        params=params,
        residual=residual,
        singular_values=svals,
        M_detected=M,
        mu_used=direction.mu,
        min_gap=direction.min_gap,
        offdiag_max=offdiag_max,
        retries=direction.retries,
        cond_W=float(np.linalg.cond(direction.W)),
    )


def write_result_csv(path, result: ReconstructionResult):
    """Recovered parameters in the standard parameter-file format."""
    from .model import write_params_csv

    write_params_csv(path, result.params)


def write_report(path, result: ReconstructionResult, extra: Optional[dict] = None):
    """Sidecar diagnostics: spectrum, gap, off-diagonal residual, conditioning."""
    lines = [
        f"M_detected: {result.M_detected}",
        f"residual: {result.residual:.17g}",
        f"min_gap: {result.min_gap:.17g}",
        f"offdiag_max: {result.offdiag_max:.17g}",
        f"retries: {result.retries}",
        f"cond_W: {result.cond_W:.17g}",
        "mu_used: " + " ".join(f"{x.real:.17g}{x.imag:+.17g}j" for x in result.mu_used),
    ]
    if extra:
        lines += [f"{k}: {v}" for k, v in extra.items()]
    lines.append("singular_values:")
    lines += [f"  {s:.17g}" for s in result.singular_values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
