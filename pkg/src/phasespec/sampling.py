"""Deterministic point sources and the signed-mixture expectation estimator.

The corrected density splits into two non-negative components,

    mu = (1 + d/2) H - (d/2) Sbar,      Sbar = (1/d) sum_j S_j,

both exactly sampleable for branch mixtures: H draws the branch center plus
sqrt(h) times 2d standard normals; Sbar additionally replaces one uniformly
chosen plane by a polar draw whose squared radius is 2h times a Gamma(2, 1)
variate.  The estimator averages the observable over each component stream
and combines the means with the signed weights above.

Reproducibility contract
------------------------
A :class:`PointSource` emits uniform points in (0, 1)^dimension addressed by
absolute index.  Pseudo-random streams use the counter-based philox4x64
generator (period 2^256): point indices are grouped into fixed chunks of
``CHUNK_SIZE`` and chunk c is generated with key (seed, c), so any
sub-range of the stream is a pure function of (seed, index) alone.  Halton
streams use element indices skip + leap * i with one prime base per
coordinate.  The estimator consumes indices [0, n_husimi) for the Husimi
component and [n_husimi, n) for the Hermite component, accumulates per-chunk
partial sums, and reduces them over a fixed pairwise tree, so results are
bit-identical for any worker count.

Per-sample uniform coordinate layout (dimension 2d + 2):

    column 0        branch pick
    column 1        plane pick (Hermite component only)
    column 2        polar angle (Hermite) / first Gaussian coordinate (Husimi)
    column 3        radial quantile (Hermite) / second Gaussian coordinate
    columns 4..     remaining Gaussian coordinates

For the Husimi component columns 2 .. 2d+1 map through the inverse normal
CDF to the q offsets (first d) then the p offsets (last d).  For the Hermite
component columns 4 .. d+2 are the q offsets of the planes other than the
picked one in ascending order, and columns d+3 .. 2d+1 the matching p
offsets.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .core import GaussianState, PhasePoint, state_norm2
from .densities import CrossTermPolicy, hermite_mixture_many, husimi_many
from .exceptions import NonFiniteResultError, NonNegligibleCrossTermsError
from .observables import Observable

__all__ = [
    "CHUNK_SIZE",
    "DEFAULT_MAX_HALTON_DIM",
    "halton_points",
    "inverse_normal_cdf",
    "gamma2_cdf",
    "gamma2_inverse_cdf",
    "PointSource",
    "ComponentSample",
    "EstimatorResult",
    "sample_component",
    "estimate_expectation",
]

CHUNK_SIZE = 32768
DEFAULT_MAX_HALTON_DIM = 64
_TINY_UNIFORM = 2.0**-54


def _first_primes(n: int) -> np.ndarray:
    """The first n primes by sieve."""
    if n < 1:
        raise ValueError("n must be >= 1")
    # n-th prime is below n (log n + log log n) for n >= 6.
    bound = 15 if n < 6 else int(n * (np.log(n) + np.log(np.log(n)))) + 10
    sieve = np.ones(bound + 1, dtype=bool)
    sieve[:2] = False
    for i in range(2, int(bound**0.5) + 1):
        if sieve[i]:
            sieve[i * i :: i] = False
    primes = np.flatnonzero(sieve)
    while primes.size < n:
        bound *= 2
        sieve = np.ones(bound + 1, dtype=bool)
        sieve[:2] = False
        for i in range(2, int(bound**0.5) + 1):
            if sieve[i]:
                sieve[i * i :: i] = False
        primes = np.flatnonzero(sieve)
    return primes[:n]


def _radical_inverse(indices: np.ndarray, base: int) -> np.ndarray:
    """Radical inverse of integer indices in the given base.

    The digit reversal is accumulated as an exact integer numerator and
    divided once by base^K, so every value is the correctly rounded double
    of the exact rational.
    """
    idx = np.asarray(indices, dtype=np.int64)
    if np.any(idx < 0):
        raise ValueError("indices must be non-negative")
    hi = int(idx.max(initial=0))
    ndigits = 1
    while base**ndigits <= hi:
        ndigits += 1
    num = np.zeros_like(idx)
    rem = idx.copy()
    for _ in range(ndigits):
        num = num * base + rem % base
        rem //= base
    return num / float(base**ndigits)


def halton_points(n: int, dim: int, skip: int, leap: int = 1, max_dim: int | None = None) -> np.ndarray:
    """Elements skip, skip+leap, ..., of the Halton sequence in (0, 1)^dim.

    Coordinate i uses the van der Corput radical inverse in the i-th prime
    base.  Element index 0 is the degenerate all-zero point, so callers
    should use skip >= 1.

    Parameters
    ----------
    n : int
        Number of points.
    dim : int
        Number of coordinates; bounded by ``max_dim`` (default 64) to guard
        against accidentally huge prime bases.  Pass a larger ``max_dim``
        explicitly for high-dimensional runs.
    skip : int
        Index of the first element (>= 1 recommended).
    leap : int
        Stride between consecutive element indices.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    limit = DEFAULT_MAX_HALTON_DIM if max_dim is None else int(max_dim)
    if dim > limit:
        raise ValueError(
            f"Halton dimension {dim} exceeds the prime-table bound {limit}; "
            "pass max_dim explicitly to allow it"
        )
    if n < 0 or skip < 0 or leap < 1:
        raise ValueError("need n >= 0, skip >= 0, leap >= 1")
    primes = _first_primes(dim)
    indices = skip + leap * np.arange(n, dtype=np.int64)
    out = np.empty((n, dim))
    for i, b in enumerate(primes):
        out[:, i] = _radical_inverse(indices, int(b))
    return out


def inverse_normal_cdf(u):
    """Standard normal quantile Phi^-1(u) for u in the open interval (0, 1).

    Backed by scipy's ndtri, which is accurate to machine precision over
    [1e-15, 1 - 1e-15]; validated against an error-function bisection oracle
    in the tests.
    """
    arr = np.asarray(u, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError("inverse_normal_cdf requires 0 < u < 1")
    out = ndtri(arr)
    return float(out) if np.isscalar(u) or arr.ndim == 0 else out


def gamma2_cdf(x):
    """CDF F(x) = 1 - (1 + x) e^{-x} of the unit-scale Gamma(2) distribution,
    evaluated in cancellation-safe form."""
    x = np.asarray(x, dtype=float)
    return -np.expm1(-x) - x * np.exp(-x)


def gamma2_inverse_cdf(u):
    """Inverse of ``gamma2_cdf`` for u in (0, 1), by safeguarded Newton.

    Converges to relative error below 1e-10 across (0, 1); the iteration is
    bracketed, so it cannot escape [0, oo).
    """
    scalar = np.isscalar(u) or np.asarray(u).ndim == 0
    arr = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError("gamma2_inverse_cdf requires 0 < u < 1")
    # Initial guess: F(x) ~ x^2/2 near 0; 1 - F(x) ~ (1+x)e^{-x} in the tail.
    small = np.sqrt(2.0 * arr)
    t = -np.log1p(-arr)
    large = t + np.log1p(t)
    x = np.where(arr < 0.35, small, large)
    lo = np.zeros_like(arr)
    hi = np.full_like(arr, 2.0)
    while True:
        grow = gamma2_cdf(hi) < arr
        if not np.any(grow):
            break
        hi[grow] *= 2.0
    x = np.clip(x, lo, hi)
    for _ in range(80):
        f = gamma2_cdf(x) - arr
        lo = np.where(f < 0.0, x, lo)
        hi = np.where(f > 0.0, x, hi)
        step = f / np.maximum(x * np.exp(-x), 1e-300)
        x_new = x - step
        bad = (x_new <= lo) | (x_new >= hi)
        x_new = np.where(bad, 0.5 * (lo + hi), x_new)
        done = np.abs(x_new - x) <= 1e-13 * np.maximum(x_new, 1e-300)
        x = x_new
        if np.all(done):
            break
    return float(x[0]) if scalar else x


@dataclass(frozen=True)
class PointSource:
    """A reproducible stream of uniform points in (0, 1)^dimension.

    ``kind='pseudo-random'`` uses philox4x64 with per-chunk keys (seed, c)
    as documented in the module docstring; exact zeros in a chunk are
    replaced by 2^-54 so downstream quantile transforms stay finite.
    ``kind='halton'`` uses element indices skip + leap * i.
    """

    dimension: int
    kind: str = "pseudo-random"
    seed: int = 0
    skip: int = 1000
    leap: int = 1

    def __post_init__(self):
        if self.kind not in ("pseudo-random", "halton"):
            raise ValueError(f"unknown point source kind {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.skip < 1 or self.leap < 1:
            raise ValueError("need skip >= 1 and leap >= 1")

    @property
    def deterministic(self) -> bool:
        return self.kind == "halton"

    @property
    def generator_id(self) -> str:
        if self.kind == "halton":
            return f"halton(dim={self.dimension},skip={self.skip},leap={self.leap})"
        return f"philox4x64(seed={self.seed},key=(seed,chunk),chunk_size={CHUNK_SIZE})"

    def _chunk(self, c: int) -> np.ndarray:
        if self.kind == "halton":
            return halton_points(
                CHUNK_SIZE,
                self.dimension,
                skip=self.skip + self.leap * c * CHUNK_SIZE,
                leap=self.leap,
                max_dim=self.dimension,
            )
        key = np.array([self.seed, c], dtype=np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key))
        block = gen.random((CHUNK_SIZE, self.dimension))
        block[block == 0.0] = _TINY_UNIFORM
        return block

    def uniform_block(self, start: int, count: int) -> np.ndarray:
        """Points with absolute stream indices start .. start+count-1."""
        if start < 0 or count < 0:
            raise ValueError("start and count must be non-negative")
        parts = []
        c = start // CHUNK_SIZE
        while c * CHUNK_SIZE < start + count:
            block = self._chunk(c)
            lo = max(start - c * CHUNK_SIZE, 0)
            hi = min(start + count - c * CHUNK_SIZE, CHUNK_SIZE)
            parts.append(block[lo:hi])
            c += 1
        if not parts:
            return np.empty((0, self.dimension))
        return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class ComponentSample:
    """A phase-space draw from one component density."""

    point: PhasePoint
    component: str
    branch: int
    plane: Optional[int] = None   # 1-based, Hermite component only


def _branch_probabilities(state: GaussianState) -> np.ndarray:
    w = np.abs(state.coefficients) ** 2
    return w / w.sum()


def _require_negligible(state: GaussianState, policy: CrossTermPolicy) -> None:
    worst = policy.max_offdiagonal_damping(state)
    if worst >= policy.threshold:
        raise NonNegligibleCrossTermsError(
            f"cross terms non-negligible: max pair damping {worst:.3e} >= "
            f"threshold {policy.threshold:.3e}; branch-mixture sampling would "
            "be biased.  Use CrossTermPolicy(mode='exact') for importance-"
            "weighted estimation (d <= 3) or separate the branches."
        )


def _component_arrays(state: GaussianState, component: str, start: int, count: int, source: PointSource):
    """Draw ``count`` samples with stream indices starting at ``start``.

    Returns (Q, P, branch, plane) arrays; plane is -1 for the Husimi
    component and 0-based otherwise.
    """
    d, h = state.dim, state.h
    if source.dimension != 2 * d + 2:
        raise ValueError(f"point source dimension must be {2 * d + 2}, got {source.dimension}")
    u = source.uniform_block(start, count)
    probs = _branch_probabilities(state)
    cum = np.cumsum(probs)
    branch = np.minimum(
        np.searchsorted(cum, u[:, 0], side="right"), state.n_branches - 1
    )
    Qc = state.centers_q[branch]
    Pc = state.centers_p[branch]
    sqrt_h = np.sqrt(h)
    if component == "husimi":
        g = ndtri(u[:, 2 : 2 * d + 2])
        Q = Qc + sqrt_h * g[:, :d]
        P = Pc + sqrt_h * g[:, d:]
        plane = np.full(count, -1, dtype=np.int64)
        return Q, P, branch, plane
    if component != "hermite-mixture":
        raise ValueError(f"unknown component {component!r}")
    plane = np.minimum((u[:, 1] * d).astype(np.int64), d - 1)
    theta = 2.0 * np.pi * u[:, 2]
    radius = np.sqrt(2.0 * h * gamma2_inverse_cdf(u[:, 3]))
    qoff = np.empty((count, d))
    poff = np.empty((count, d))
    if d > 1:
        g = ndtri(u[:, 4 : 2 * d + 2])
        cols = np.arange(d)[None, :]
        others = cols != plane[:, None]
        qoff[others] = (sqrt_h * g[:, : d - 1]).ravel()
        poff[others] = (sqrt_h * g[:, d - 1 :]).ravel()
    rows = np.arange(count)
    qoff[rows, plane] = radius * np.cos(theta)
    poff[rows, plane] = radius * np.sin(theta)
    return Qc + qoff, Pc + poff, branch, plane


def sample_component(
    state: GaussianState,
    component: str,
    n: int,
    source: PointSource | None = None,
    policy: CrossTermPolicy | None = None,
) -> list[ComponentSample]:
    """Draw n samples from the Husimi or Hermite-mixture component density.

    ``component`` is 'husimi' or 'hermite-mixture'.  The branch is picked
    with probability |c_k|^2 / sum |c_l|^2, which is exact only when the
    cross terms are negligible; under the default neglect policy the call
    refuses states with a branch pair above the threshold.
    """
    if policy is None:
        policy = CrossTermPolicy(mode="neglect")
    if source is None:
        source = PointSource(dimension=2 * state.dim + 2)
    if policy.mode == "neglect":
        _require_negligible(state, policy)
    Q, P, branch, plane = _component_arrays(state, component, 0, n, source)
    out = []
    for i in range(n):
        out.append(
            ComponentSample(
                point=PhasePoint(Q[i], P[i]),
                component=component,
                branch=int(branch[i]),
                plane=None if plane[i] < 0 else int(plane[i]) + 1,
            )
        )
    return out


@dataclass(frozen=True)
class EstimatorResult:
    """Expectation estimate with its component breakdown.

    ``value = (1 + d/2) mean_husimi - (d/2) mean_hermite`` for the mu method
    and ``value = mean_husimi`` for the husimi method.  ``stderr`` combines
    the per-component sample variances for pseudo-random sources; Halton
    sources are deterministic and report stderr 0 with ``deterministic``
    set.
    """

    value: float
    stderr: float
    n_husimi: int
    n_hermite: int
    mean_husimi: float
    mean_hermite: Optional[float]
    method: str
    deterministic: bool
    generator: str


def _chunk_ranges(start: int, stop: int):
    """Split [start, stop) on the absolute CHUNK_SIZE grid."""
    out = []
    s = start
    while s < stop:
        e = min(((s // CHUNK_SIZE) + 1) * CHUNK_SIZE, stop)
        out.append((s, e))
        s = e
    return out


def _pairwise_reduce(parts: list[np.ndarray]) -> np.ndarray:
    """Deterministic pairwise-tree sum of per-chunk accumulators."""
    items = list(parts)
    if not items:
        return np.zeros(3)
    while len(items) > 1:
        items = [
            items[i] + items[i + 1] if i + 1 < len(items) else items[i]
            for i in range(0, len(items), 2)
        ]
    return items[0]


def _proposal_husimi(state: GaussianState, Q, P) -> np.ndarray:
    """Branch-mixture proposal pdf for the Husimi component."""
    h, d = state.h, state.dim
    probs = _branch_probabilities(state)
    dq = Q[:, None, :] - state.centers_q[None, :, :]
    dp = P[:, None, :] - state.centers_p[None, :, :]
    r2 = np.sum(dq * dq + dp * dp, axis=-1)
    dens = (2.0 * np.pi * h) ** (-d) * np.exp(-r2 / (2.0 * h))
    return dens @ probs


def _proposal_hermite(state: GaussianState, Q, P) -> np.ndarray:
    """Branch-mixture proposal pdf for the Hermite-mixture component."""
    h, d = state.h, state.dim
    probs = _branch_probabilities(state)
    dq = Q[:, None, :] - state.centers_q[None, :, :]
    dp = P[:, None, :] - state.centers_p[None, :, :]
    plane_r2 = dq * dq + dp * dp
    r2 = np.sum(plane_r2, axis=-1)
    radial = np.mean(plane_r2, axis=-1) / (2.0 * h)
    dens = (2.0 * np.pi * h) ** (-d) * radial * np.exp(-r2 / (2.0 * h))
    return dens @ probs


def estimate_expectation(
    state: GaussianState,
    A: Observable,
    method: str = "mu",
    n: int = 100_000,
    source: PointSource | None = None,
    split: float = 0.5,
    policy: CrossTermPolicy | None = None,
    workers: int = 1,
) -> EstimatorResult:
    """Estimate the normalized expectation of A in ``state`` by sampling.

    ``method='mu'`` runs the two-stream signed estimator with ``round(n *
    split)`` Husimi points and the rest Hermite points; ``method='husimi'``
    averages A over n Husimi samples only (first-order accurate).

    Under the default neglect policy the estimate is normalized by the
    branch weight total, which equals the state norm up to the policy's
    guaranteed-negligible cross terms, so A = 1 yields exactly 1.  Under
    ``CrossTermPolicy(mode='exact')`` (d <= 3) every sample is importance
    weighted by exact-density / proposal and the estimate is normalized by
    the exact state norm, which keeps small-separation superpositions
    unbiased.

    Results are bit-identical across ``workers`` settings: chunking and the
    reduction tree depend only on (n, split).
    """
    if method not in ("mu", "husimi"):
        raise ValueError("method must be 'mu' or 'husimi'")
    if n < 2:
        raise ValueError("n must be >= 2")
    if policy is None:
        policy = CrossTermPolicy(mode="neglect")
    if source is None:
        source = PointSource(dimension=2 * state.dim + 2)
    d = state.dim
    if source.dimension != 2 * d + 2:
        raise ValueError(f"point source dimension must be {2 * d + 2}")

    exact_mode = policy.mode == "exact"
    if exact_mode:
        if d > 3:
            raise ValueError(
                "exact-policy importance weighting is a d <= 3 diagnostic; "
                "use the neglect policy for high dimensions"
            )
        norm = state_norm2(state)
    else:
        _require_negligible(state, policy)

    if method == "mu":
        if not 0.0 < split < 1.0:
            raise ValueError("split must lie strictly between 0 and 1")
        n_h = min(max(int(round(n * split)), 1), n - 1)
        plan = [("husimi", 0, n_h), ("hermite-mixture", n_h, n)]
    else:
        n_h = n
        plan = [("husimi", 0, n)]

    def run_chunk(component: str, s: int, e: int) -> np.ndarray:
        Q, P, _, _ = _component_arrays(state, component, s, e - s, source)
        vals = A.evaluate(Q, P)
        if exact_mode:
            if component == "husimi":
                target = husimi_many(state, Q, P)
                proposal = _proposal_husimi(state, Q, P)
            else:
                target = hermite_mixture_many(state, Q, P)
                proposal = _proposal_hermite(state, Q, P)
            vals = vals * target / (proposal * norm)
        return np.array([e - s, np.sum(vals), np.sum(vals * vals)])

    tasks = [(comp, s, e) for comp, lo, hi in plan for s, e in _chunk_ranges(lo, hi)]
    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda t: run_chunk(*t), tasks))
    else:
        results = [run_chunk(*t) for t in tasks]

    stats: dict[str, np.ndarray] = {}
    for comp, _, _ in plan:
        parts = [r for (c, _, _), r in zip(tasks, results) if c == comp]
        stats[comp] = _pairwise_reduce(parts)

    def moments(acc: np.ndarray) -> tuple[int, float, float]:
        count = int(acc[0])
        mean = acc[1] / count
        var = max(acc[2] / count - mean * mean, 0.0) * count / max(count - 1, 1)
        return count, mean, var

    cnt_h, mean_h, var_h = moments(stats["husimi"])
    if method == "mu":
        cnt_s, mean_s, var_s = moments(stats["hermite-mixture"])
        w_h, w_s = 1.0 + d / 2.0, d / 2.0
        value = w_h * mean_h - w_s * mean_s
        variance = w_h**2 * var_h / cnt_h + w_s**2 * var_s / cnt_s
        mean_hermite: Optional[float] = mean_s
        n_hermite = cnt_s
    else:
        value = mean_h
        variance = var_h / cnt_h
        mean_hermite = None
        n_hermite = 0
    stderr = 0.0 if source.deterministic else float(np.sqrt(variance))
    if not np.isfinite(value):
        raise NonFiniteResultError(
            f"estimate of {A.label!r} is not finite (value={value!r})"
        )
    return EstimatorResult(
        value=float(value),
        stderr=stderr,
        n_husimi=cnt_h,
        n_hermite=n_hermite,
        mean_husimi=float(mean_h),
        mean_hermite=None if mean_hermite is None else float(mean_hermite),
        method=method,
        deterministic=source.deterministic,
        generator=source.generator_id,
    )
