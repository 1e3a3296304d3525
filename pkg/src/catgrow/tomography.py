"""Maximum-likelihood density-matrix reconstruction from QHD samples.

Each outcome ``alpha_i`` is an element ``|alpha_i><alpha_i|/pi`` of the
heterodyne POVM.  The reconstruction ascends the mean log-likelihood with
the damped fixed-point iteration

    R = (1/N) sum_i |alpha_i><alpha_i| / <alpha_i|rho|alpha_i>
    rho <- normalize((1 - d) rho + d R rho R / Tr(R rho R))

starting from the maximally mixed state.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalSupportError
from .fock import coherent_amplitudes

log = logging.getLogger(__name__)

CHUNK = 1 << 16
MAX_BACKTRACK = 30


@dataclass
class ReconstructionConfig:
    dim: int = 12
    max_iters: int = 2000
    rel_tol: float = 1e-8
    dilution: float = 0.5
    bins: int = 0  # >0: bin samples on a bins x bins grid before iterating
    check_every_step: bool = False

    def __post_init__(self):
        if self.dim < 2:
            raise DomainError("dim must be >= 2")
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise DomainError("rel_tol must be > 0")
        if not 0 < self.dilution <= 1:
            raise DomainError("dilution must lie in (0, 1]")


@dataclass
class ReconstructionResult:
    rho: np.ndarray
    loglik_trace: list
    iterations: int
    converged: bool
    backtracks: int = 0
    extra: dict = field(default_factory=dict)


class Likelihood:
    """Heterodyne likelihood of a fixed sample set in a fixed truncation.

    Coherent amplitudes of all samples are computed once.  ``weights``
    lets binned data reuse the same code (bin centres with counts).
    """

    def __init__(self, points, dim, weights=None):
        points = np.asarray(points, dtype=complex).reshape(-1)
        if points.size == 0:
            raise DomainError("empty sample set")
        self.dim = dim
        self.amps = coherent_amplitudes(points, dim)
        if weights is None:
            self.weights = None
            self.total = float(points.size)
        else:
            self.weights = np.asarray(weights, dtype=float)
            self.total = float(self.weights.sum())

    @classmethod
    def from_samples(cls, samples, dim, bins=0):
        pts = getattr(samples, "points", samples)
        if not bins:
            return cls(pts, dim)
        centres, counts = bin_samples(pts, bins)
        return cls(centres, dim, weights=counts)

    def probabilities(self, rho):
        """<alpha_i|rho|alpha_i> for every sample (without the 1/pi)."""
        rho = np.asarray(rho, dtype=complex)
        out = np.empty(self.amps.shape[0])
        for s in range(0, out.size, CHUNK):
            c = self.amps[s : s + CHUNK]
            out[s : s + CHUNK] = np.einsum("im,im->i", c.conj(), c @ rho.T).real
        bad = np.flatnonzero(out <= 0)
        if bad.size:
            raise NumericalSupportError(
                f"sample {bad[0]} has probability {out[bad[0]]:.3g} <= 0; "
                f"truncation dim={self.dim} is probably too small",
                index=int(bad[0]),
            )
        return out

    def mean_loglik(self, probs):
        terms = np.log(probs / np.pi)
        if self.weights is None:
            return float(terms.sum() / self.total)
        return float(np.dot(self.weights, terms) / self.total)

    def r_operator(self, probs):
        w = 1.0 / probs
        if self.weights is not None:
            w = w * self.weights
        R = np.zeros((self.dim, self.dim), dtype=complex)
        for s in range(0, probs.size, CHUNK):
            c = self.amps[s : s + CHUNK]
            R += c.T @ (c.conj() * w[s : s + CHUNK, None])
        R /= self.total
        return 0.5 * (R + R.conj().T)


def bin_samples(points, bins):
    """Square-grid binning: (bin centres, counts) of the occupied bins.

    Replacing each sample by its bin centre biases the likelihood at the
    scale of the bin width; use only for very large sample sets.
    """
    pts = np.asarray(points, dtype=complex)
    h = 1.01 * max(np.abs(pts.real).max(), np.abs(pts.imag).max())
    edges = np.linspace(-h, h, bins + 1)
    counts, _, _ = np.histogram2d(pts.real, pts.imag, bins=[edges, edges])
    centres = 0.5 * (edges[1:] + edges[:-1])
    ix, iy = np.nonzero(counts)
    return centres[ix] + 1j * centres[iy], counts[ix, iy]


def log_likelihood(rho, samples):
    """Mean log-likelihood (1/N) sum_i ln(<alpha_i|rho|alpha_i>/pi)."""
    rho = np.asarray(rho, dtype=complex)
    lik = Likelihood.from_samples(samples, rho.shape[0])
    return lik.mean_loglik(lik.probabilities(rho))


def _update(rho, R, dilution):
    cand = R @ rho @ R
    cand /= np.trace(cand).real
    new = (1.0 - dilution) * rho + dilution * cand
    new = 0.5 * (new + new.conj().T)
    return new / np.trace(new).real


def maxlik_step(rho, samples, dilution=0.5):
    """One damped R rho R update of ``rho`` for the given samples."""
    if not 0 < dilution <= 1:
        raise DomainError("dilution must lie in (0, 1]")
    rho = np.asarray(rho, dtype=complex)
    lik = samples if isinstance(samples, Likelihood) else Likelihood.from_samples(
        samples, rho.shape[0]
    )
    R = lik.r_operator(lik.probabilities(rho))
    return _update(rho, R, dilution)


def maxlik_reconstruct(samples, config=None, rho0=None, callback=None):
    """Iterate :func:`maxlik_step` from the maximally mixed state.

    Stops when the relative change of the mean log-likelihood drops below
    ``config.rel_tol`` or after ``config.max_iters`` updates.  An update
    that would lower the likelihood is retried with the mixing weight
    halved, so the recorded trace never decreases.
    """
    config = config or ReconstructionConfig()
    count = len(samples.points) if hasattr(samples, "points") else len(samples)
    if count < 100:
        raise DomainError(f"need at least 100 samples, got {count}")
    if count < 10_000:
        warnings.warn(f"only {count} samples; reconstruction will be noisy", RuntimeWarning)
    dim = config.dim
    lik = Likelihood.from_samples(samples, dim, bins=config.bins)
    rho = np.eye(dim, dtype=complex) / dim if rho0 is None else np.asarray(rho0, complex)
    probs = lik.probabilities(rho)
    L = lik.mean_loglik(probs)
    trace = [L]
    converged = False
    backtracks = 0
    it = 0
    while it < config.max_iters:
        R = lik.r_operator(probs)
        d = config.dilution
        for _ in range(MAX_BACKTRACK):
            new = _update(rho, R, d)
            new_probs = lik.probabilities(new)
            new_L = lik.mean_loglik(new_probs)
            if new_L >= L:
                break
            d *= 0.5
            backtracks += 1
        else:
            # no ascent direction left at machine precision
            converged = True
            break
        it += 1
        rel = abs(new_L - L) / max(abs(L), 1e-300)
        rho, probs, L = new, new_probs, new_L
        trace.append(L)
        if config.check_every_step:
            from .fock import check_density

            check_density(rho)
        if callback is not None:
            callback(it, rho, L)
        if rel < config.rel_tol:
            converged = True
            break
    log.debug("maxlik: %d iterations, L=%.10f, converged=%s", it, L, converged)
    return ReconstructionResult(rho, trace, it, converged, backtracks)
