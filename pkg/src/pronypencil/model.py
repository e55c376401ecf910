"""Exponential-sum model: ground truth, sampling grids, noise.

The signal is f(k) = sum_j c_j exp(-2 pi i <t_j, k>) for integer k, with
locations t_j on the d-torus [0,1)^d and nonzero complex coefficients c_j.
Everything downstream (pencil assembly, microscopy simulation) consumes the
types defined here.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "ParameterSet",
    "SampleTable",
    "eval_exponential_sum",
    "sample_grid",
    "min_separation",
    "random_params",
    "add_noise",
    "torus_distance",
    "match_locations",
    "read_params_csv",
    "write_params_csv",
    "read_samples_csv",
    "write_samples_csv",
]


SeedLike = Union[None, int, np.random.Generator]


def as_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass
class ParameterSet:
    """Locations and coefficients of a sparse exponential sum.

    Attributes
    ----------
    d : int
        Ambient dimension.
    M : int
        Number of sources.
    t : ndarray, shape (M, d)
        Locations on the torus, every coordinate in [0, 1).
    c : ndarray, shape (M,), complex
        Coefficients.
    """

    d: int
    M: int
    t: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.t = np.atleast_2d(np.asarray(self.t, dtype=float))
        self.c = np.asarray(self.c, dtype=complex).reshape(-1)
        if self.t.shape != (self.M, self.d):
            raise ValueError(f"t has shape {self.t.shape}, expected ({self.M}, {self.d})")
        if self.c.shape != (self.M,):
            raise ValueError(f"c has shape {self.c.shape}, expected ({self.M},)")
        if np.any(self.t < 0) or np.any(self.t >= 1):
            raise ValueError("all location coordinates must lie in [0, 1)")

    def validate_strict(self):
        """Enforce the ground-truth invariants: distinct locations, nonzero c."""
        if np.any(self.c == 0):
            raise ValueError("coefficients must be nonzero")
        for i in range(self.M):
            for j in range(i + 1, self.M):
                if np.all(self.t[i] == self.t[j]):
                    raise ValueError(f"locations {i} and {j} coincide")
        return self

    @property
    def nodes(self) -> np.ndarray:
        """z_j = exp(-2 pi i t_j), componentwise; shape (M, d)."""
        return np.exp(-2j * np.pi * self.t)

    @classmethod
    def create(cls, t, c=None) -> "ParameterSet":
        t = np.atleast_2d(np.asarray(t, dtype=float))
        M, d = t.shape
        if c is None:
            c = np.ones(M)
        return cls(d=d, M=M, t=t, c=np.asarray(c, dtype=complex)).validate_strict()


@dataclass
class SampleTable:
    """Samples f(k) on the full index box {-n, ..., n+1}^d.

    Values are stored densely; entry k lives at array index k + n. The key
    set has cardinality (2n+2)^d by construction.
    """

    d: int
    n: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        shape = (2 * self.n + 2,) * self.d
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != shape:
            raise ValueError(f"values has shape {self.values.shape}, expected {shape}")

    @property
    def size(self) -> int:
        return self.values.size

    def in_range(self, k) -> bool:
        k = np.asarray(k, dtype=int)
        return bool(np.all(k >= -self.n) and np.all(k <= self.n + 1))

    def value(self, k) -> complex:
        k = np.asarray(k, dtype=int)
        if k.shape != (self.d,):
            raise ValueError(f"index must have length {self.d}")
        if not self.in_range(k):
            raise KeyError(f"multi-index {tuple(k)} outside the sampled box")
        return complex(self.values[tuple(k + self.n)])

    def value_array(self, ks: np.ndarray) -> np.ndarray:
        """Vectorized lookup for an (..., d) integer index array."""
        ks = np.asarray(ks, dtype=int)
        if np.any(ks < -self.n) or np.any(ks > self.n + 1):
            bad = ks[np.any((ks < -self.n) | (ks > self.n + 1), axis=-1)][0]
            raise KeyError(f"multi-index {tuple(bad)} outside the sampled box")
        idx = ks + self.n
        return self.values[tuple(idx[..., l] for l in range(self.d))]

    def keys(self) -> Iterator[tuple]:
        rng = range(-self.n, self.n + 2)
        for idx in np.ndindex(*self.values.shape):
            yield tuple(int(i) - self.n for i in idx)

    def key_array(self) -> np.ndarray:
        """All keys as an (N, d) array, in the dense storage order."""
        axes = [np.arange(-self.n, self.n + 2)] * self.d
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)

    def copy(self) -> "SampleTable":
        return SampleTable(self.d, self.n, self.values.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


def eval_exponential_sum(params: ParameterSet, k) -> complex:
    """Evaluate f(k) = sum_j c_j exp(-2 pi i <t_j, k>) at one integer index."""
    k = np.asarray(k, dtype=float).reshape(-1)
    if k.shape != (params.d,):
        raise ValueError(f"k must have length {params.d}")
    return complex(np.exp(-2j * np.pi * (params.t @ k)) @ params.c)


def sample_grid(params: ParameterSet, n: int) -> SampleTable:
    """Sample f on the box {-n, ..., n+1}^d.

    This is the index set needed to assemble the pencil matrices for order n
    (all differences k - l and k - l + e_l with k, l in {0..n}^d).
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    axes = [np.arange(-n, n + 2)] * params.d
    K = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, params.d)
    vals = np.exp(-2j * np.pi * (K @ params.t.T)) @ params.c
    return SampleTable(params.d, n, vals.reshape((2 * n + 2,) * params.d))


def min_separation(params: ParameterSet) -> float:
    """Minimum Euclidean distance between distinct nodes z_i, z_j.

    The nodes are z_j = exp(-2 pi i t_j) in C^d; this is the separation
    quantity that governs how large the sampling order n must be.
    """
    if params.M < 2:
        raise ValueError("separation undefined for fewer than two sources")
    z = params.nodes
    diff = z[:, None, :] - z[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    iu = np.triu_indices(params.M, 1)
    return float(dist[iu].min())


def random_params(
    M: int,
    d: int,
    seed: SeedLike = None,
    min_sep: Optional[float] = None,
    c_magnitude: Union[float, tuple] = 1.0,
    c_phase: Optional[tuple] = None,
    max_tries: int = 1000,
) -> ParameterSet:
    """Draw M uniform locations on [0,1)^d, optionally enforcing a node separation.

    Coefficients default to 1; pass a (lo, hi) magnitude range and/or a phase
    range (radians) for random complex coefficients. Deterministic for a
    fixed seed.
    """
    if M < 1 or d < 1:
        raise ValueError("require M >= 1 and d >= 1")
    rng = as_rng(seed)
    for _ in range(max_tries):
        t = rng.random((M, d))
        if isinstance(c_magnitude, tuple):
            mag = rng.uniform(c_magnitude[0], c_magnitude[1], M)
        else:
            mag = np.full(M, float(c_magnitude))
        if c_phase is not None:
            phase = rng.uniform(c_phase[0], c_phase[1], M)
            c = mag * np.exp(1j * phase)
        else:
            c = mag.astype(complex)
        params = ParameterSet(d=d, M=M, t=t, c=c)
        if min_sep is None or M < 2 or min_separation(params) >= min_sep:
            return params.validate_strict()
    raise ValueError(
        f"could not draw {M} sources with node separation >= {min_sep} "
        f"in {max_tries} tries"
    )


def add_noise(target, snr: float, seed: SeedLike = None):
    """Add Gaussian noise scaled so that ||signal||_2 / ||noise||_2 == snr exactly.

    For a SampleTable the noise is complex (independent real Gaussians on the
    real and imaginary parts); for image arrays it is real, matching noise
    added in the spatial domain. Returns an object of the same type; the
    input is not modified.

    Note: noise on sample tables is an extension for synthetic stress tests;
    the physical experiments corrupt the image, not the Fourier data.
    """
    if snr <= 0:
        raise ValueError("snr must be positive")
    rng = as_rng(seed)
    # local import: microscopy depends on this module
    from .microscopy import ImageGrid

    if isinstance(target, SampleTable):
        signal_norm = np.linalg.norm(target.values)
        if signal_norm == 0:
            raise ValueError("cannot scale noise against an all-zero signal")
        eps = rng.standard_normal(target.values.shape) + 1j * rng.standard_normal(
            target.values.shape
        )
        eps *= signal_norm / (snr * np.linalg.norm(eps))
        return SampleTable(target.d, target.n, target.values + eps)
    if isinstance(target, ImageGrid):
        signal_norm = np.linalg.norm(target.pixels)
        if signal_norm == 0:
            raise ValueError("cannot scale noise against an all-zero signal")
        eps = rng.standard_normal(target.pixels.shape)
        eps *= signal_norm / (snr * np.linalg.norm(eps))
        return ImageGrid(target.d, target.P, target.pixels + eps)
    raise TypeError(f"unsupported target type {type(target).__name__}")


def torus_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance on the torus between location arrays (..., d)."""
    delta = np.abs(np.asarray(a, float) - np.asarray(b, float))
    delta = np.minimum(delta, 1.0 - delta)
    return np.sqrt((delta ** 2).sum(axis=-1))


def match_locations(t_true: np.ndarray, t_rec: np.ndarray):
    """Optimally pair recovered locations with ground truth.

    Returns (perm, errors) where t_rec[perm[j]] matches t_true[j] and errors
    are the per-pair torus distances. Raises if the counts differ (the
    recovered model order does not match).
    """
    t_true = np.atleast_2d(t_true)
    t_rec = np.atleast_2d(t_rec)
    if t_true.shape != t_rec.shape:
        raise ValueError(
            f"cannot match {t_rec.shape[0]} recovered against {t_true.shape[0]} true locations"
        )
    cost = torus_distance(t_true[:, None, :], t_rec[None, :, :])
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty_like(cols)
    perm[rows] = cols
    return perm, cost[rows, cols]


# ---------------------------------------------------------------------------
# CSV formats
#
# Parameter file: header t1,...,td,c_re,c_im ; one row per source.
# Sample table:   header k1,...,kd,re,im ; one row per index.
# ---------------------------------------------------------------------------

_FLOAT_FMT = "%.17g"


def write_params_csv(path, params: ParameterSet):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"t{l+1}" for l in range(params.d)] + ["c_re", "c_im"])
        for j in range(params.M):
            row = [_FLOAT_FMT % x for x in params.t[j]]
            row += [_FLOAT_FMT % params.c[j].real, _FLOAT_FMT % params.c[j].imag]
            w.writerow(row)


def read_params_csv(path, strict: bool = True) -> ParameterSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty parameter file")
    header = [h.strip() for h in rows[0]]
    if header[-2:] != ["c_re", "c_im"] or not header[0].startswith("t"):
        raise ValueError(f"{path}: expected header t1,...,td,c_re,c_im")
    d = len(header) - 2
    t, c = [], []
    for row in rows[1:]:
        if not row:
            continue
        vals = [float(x) for x in row]
        t.append(vals[:d])
        c.append(complex(vals[d], vals[d + 1]))
    params = ParameterSet(d=d, M=len(t), t=np.array(t), c=np.array(c))
    return params.validate_strict() if strict else params


def write_samples_csv(path, table: SampleTable):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"k{l+1}" for l in range(table.d)] + ["re", "im"])
        ks = table.key_array()
        vals = table.values.reshape(-1)
        for k, v in zip(ks, vals):
            w.writerow([str(int(x)) for x in k] + [_FLOAT_FMT % v.real, _FLOAT_FMT % v.imag])


def read_samples_csv(path) -> SampleTable:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty sample file")
    header = [h.strip() for h in rows[0]]
    if header[-2:] != ["re", "im"] or not header[0].startswith("k"):
        raise ValueError(f"{path}: expected header k1,...,kd,re,im")
    d = len(header) - 2
    entries = {}
    for row in rows[1:]:
        if not row:
            continue
        k = tuple(int(x) for x in row[:d])
        if k in entries:
            raise ValueError(f"{path}: duplicate index {k}")
        entries[k] = complex(float(row[d]), float(row[d + 1]))
    kmax = max(max(k) for k in entries)
    n = kmax - 1
    if n < 0:
        raise ValueError(f"{path}: index range does not match a sampling box")
    shape = (2 * n + 2,) * d
    values = np.zeros(shape, dtype=complex)
    seen = np.zeros(shape, dtype=bool)
    for k, v in entries.items():
        if any(x < -n or x > n + 1 for x in k):
            raise ValueError(f"{path}: index {k} outside the box {{-{n},...,{n+1}}}^{d}")
        idx = tuple(x + n for x in k)
        values[idx] = v
        seen[idx] = True
    if not seen.all():
        missing = np.argwhere(~seen)[0] - n
        raise ValueError(f"{path}: missing index {tuple(int(x) for x in missing)}")
    return SampleTable(d, n, values)
