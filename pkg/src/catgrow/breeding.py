"""Two-copy growing of QHD data on a virtual 50:50 beam splitter.

The sample-level procedure combines consecutive outcomes ``a, b`` into
``(a + b)/sqrt(2)`` and ``(a - b)/sqrt(2)`` and keeps the first whenever
``|(a - b)/sqrt(2)|^2 < nbar``.  The exact counterpart acts on density
matrices: interfere two copies on a beam splitter ``U`` with
``U|a, b> = |(a+b)/sqrt2, (a-b)/sqrt2>`` for coherent inputs, then herald
the second port with the Fock-diagonal POVM element of the acceptance disc.

Two-mode density matrices use the composite index ``k = m * dim + n``
(first mode major).
"""

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
from scipy.special import gammainc, gammaln

from .errors import DegenerateHeraldingError, DomainError
from .sampler import SampleSet

SQRT_HALF = np.sqrt(0.5)


@dataclass
class BreedingConfig:
    nbar: float = 1.3
    steps: int = 1
    thresholds: list = None

    def __post_init__(self):
        if self.nbar < 0:
            raise DomainError("nbar must be >= 0")
        if self.steps < 1:
            raise DomainError("steps must be >= 1")
        if self.thresholds is not None:
            self.thresholds = [float(t) for t in self.thresholds]
            if len(self.thresholds) < self.steps or min(self.thresholds) < 0:
                raise DomainError("need one non-negative threshold per step")

    def threshold(self, step):
        """Threshold for 0-based ``step``."""
        if self.thresholds is not None:
            return self.thresholds[step]
        return self.nbar


@dataclass
class BreedingStats:
    input_count: int
    pair_count: int
    accepted_count: int
    nbar: float = 0.0
    empty: bool = False

    @property
    def acceptance_fraction(self):
        return self.accepted_count / self.pair_count if self.pair_count else 0.0

    def as_dict(self):
        return {
            "input_count": self.input_count,
            "pair_count": self.pair_count,
            "accepted_count": self.accepted_count,
            "acceptance_fraction": self.acceptance_fraction,
            "nbar": self.nbar,
            "empty": self.empty,
        }


def virtual_bs(a, b):
    """50:50 combination of two phase-space points: returns (plus, minus)."""
    return (a + b) * SQRT_HALF, (a - b) * SQRT_HALF


def breed_step(samples, nbar, keep_minus=False):
    """One growing step on consecutive disjoint pairs ``(2j, 2j+1)``.

    Returns ``(out, stats)``.  ``out`` holds the plus-port values of the
    accepted pairs in pair order.  With ``keep_minus`` the matching
    minus-port values are stored in ``out.extra["minus"]``.
    """
    if samples.count < 2:
        raise DomainError(f"need at least 2 samples to breed, got {samples.count}")
    pts = samples.points
    pairs = pts.size // 2
    plus, minus = virtual_bs(pts[0 : 2 * pairs : 2], pts[1 : 2 * pairs : 2])
    mask = minus.real**2 + minus.imag**2 < nbar
    out = SampleSet(
        plus[mask],
        seed=samples.seed,
        source=samples.source,
        generation=samples.generation + 1,
        workers=samples.workers,
    )
    if keep_minus:
        out.extra["minus"] = minus[mask]
    stats = BreedingStats(samples.count, pairs, int(mask.sum()), float(nbar))
    if stats.accepted_count == 0:
        stats.empty = True
        warnings.warn(f"breeding step at nbar={nbar} accepted no pairs", RuntimeWarning)
    return out, stats


def breed_iterate(samples, config):
    """Apply ``config.steps`` growing steps; list of ``(SampleSet, BreedingStats)``.

    Stops early (with a warning) once a generation has fewer than two samples.
    """
    results = []
    current = samples
    for step in range(config.steps):
        if current.count < 2:
            warnings.warn(
                f"stopping after {step} step(s): generation {current.generation} "
                f"has {current.count} sample(s)",
                RuntimeWarning,
            )
            break
        current, stats = breed_step(current, config.threshold(step))
        results.append((current, stats))
    return results


def herald_povm_weights(nbar, dim):
    """Diagonal of the acceptance POVM, gamma_n = P(n+1, nbar) for n < dim."""
    if nbar < 0:
        raise DomainError("nbar must be >= 0")
    n = np.arange(dim)
    if np.isinf(nbar):
        return np.ones(dim)
    return gammainc(n + 1, nbar)


@lru_cache(maxsize=None)
def bs_block(total):
    """Matrix ``B[m, p] = <m, N-m|U|p, N-p>`` for total photon number ``N``.

    The integer part of the binomial expansion of
    ``(a'+b')^p (a'-b')^q`` is accumulated exactly in Python integers, so
    there is no cancellation; the factorial prefactor is applied in log
    space.
    """
    N = total
    B = np.zeros((N + 1, N + 1))
    lf = gammaln(np.arange(N + 1) + 1.0)
    m = np.arange(N + 1)
    # coefficients of t^m in (1+t)^p (1-t)^(N-p), starting from p = 0;
    # (t-1)^q = (-1)^q (1-t)^q supplies the column sign
    poly = np.array([comb(N, k) * (-1) ** k for k in range(N + 1)], dtype=object)
    for p in range(N + 1):
        if p:
            # multiply by (1+t), divide by (1-t)
            poly = np.cumsum(poly + np.concatenate(([0], poly[:-1])))
        c = np.array([float(v) for v in poly])
        nz = c != 0
        logmag = (
            0.5 * (lf[m] + lf[N - m] - lf[p] - lf[N - p]) - 0.5 * N * np.log(2.0)
        )
        sign = np.sign(c[nz]) * (-1) ** (N - p)
        B[nz, p] = sign * np.exp(logmag[nz] + np.log(np.abs(c[nz])))
    return B


def bs_unitary(dim, out_dim=None):
    """Map from two-mode inputs (``dim``^2) to outputs (``out_dim``^2).

    With ``out_dim >= 2*dim - 1`` the map is an isometry; a smaller
    ``out_dim`` drops output components beyond the truncation.
    """
    out_dim = dim if out_dim is None else out_dim
    U = np.zeros((out_dim * out_dim, dim * dim))
    for p in range(dim):
        for q in range(dim):
            N = p + q
            B = bs_block(N)
            for m in range(min(N, out_dim - 1) + 1):
                n = N - m
                if n < out_dim:
                    U[m * out_dim + n, p * dim + q] = B[m, p]
    return U


def bs_two_mode(rho1, rho2, out_dim=None):
    """Two-mode output U (rho1 x rho2) U^dagger of the 50:50 beam splitter."""
    rho1 = np.asarray(rho1, dtype=complex)
    rho2 = np.asarray(rho2, dtype=complex)
    if rho1.shape != rho2.shape:
        raise DomainError(f"dimension mismatch {rho1.shape} vs {rho2.shape}")
    U = bs_unitary(rho1.shape[0], out_dim)
    return U @ np.kron(rho1, rho2) @ U.T


def partial_trace_second(sigma, dim):
    return np.trace(np.asarray(sigma).reshape(dim, dim, dim, dim), axis1=1, axis2=3)


def breed_oracle(rho, nbar, out_dim=None):
    """Exact heralded output of the two-copy growing step.

    Returns ``(rho_out, success)`` where
    ``rho_out = Tr_2[U (rho x rho) U^dag (I x E)] / success`` and ``E`` is
    diagonal with :func:`herald_povm_weights`.  The result lives in
    ``out_dim`` (default ``2*dim - 1``, which loses nothing).

    The computation runs over pairs of photon-number blocks so the
    two-mode matrix is never formed.
    """
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    full = 2 * d - 1
    gamma = herald_povm_weights(nbar, full)
    out = np.zeros((full, full), dtype=complex)
    cols = [np.arange(max(0, N - d + 1), min(N, d - 1) + 1) for N in range(full)]
    blocks = [bs_block(N)[:, c] for N, c in enumerate(cols)]
    for N in range(full):
        pN = cols[N]
        for M in range(N, full):
            pM = cols[M]
            R = rho[np.ix_(pN, pM)] * rho[np.ix_(N - pN, M - pM)]
            X = blocks[N] @ R @ blocks[M].T
            k = min(N, M) + 1
            n = np.arange(k)
            val = gamma[n] * X[N - n, M - n]
            out[N - n, M - n] += val
            if M != N:
                out[M - n, N - n] += val.conj()
    success = float(np.trace(out).real)
    if success < 1e-12:
        raise DegenerateHeraldingError(f"heralding success {success:.3g} below 1e-12")
    out /= success
    out = 0.5 * (out + out.conj().T)
    if out_dim is not None:
        out = out[:out_dim, :out_dim]
    return out, success


def breed_oracle_chain(rho, config, trim=1e-13):
    """Apply :func:`breed_oracle` for each configured step.

    Returns a list of ``(rho_out, success)``.  Trailing Fock levels whose
    total population is below ``trim`` are cropped between steps to keep
    the block computation small.
    """
    results = []
    for step in range(config.steps):
        rho, p = breed_oracle(rho, config.threshold(step))
        pops = np.real(np.diagonal(rho))
        tail = np.cumsum(pops[::-1])[::-1]
        keep = max(2, int(np.searchsorted(-tail, -trim)))
        rho = rho[:keep, :keep]
        results.append((rho, p))
    return results
