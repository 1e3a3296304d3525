"""Husimi Q-function evaluation and QHD (heterodyne) sample generation.

Random numbers come from numpy's PCG64 bit generator.  A run with
``seed`` and ``workers`` spawns ``workers`` child streams with
``numpy.random.SeedSequence(seed).spawn(workers)``; worker ``k`` draws
samples ``k*count//workers`` .. ``(k+1)*count//workers`` and the parts are
concatenated in worker order.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EnvelopeError
from .fock import coherent_amplitudes

RNG_ALGORITHM = "numpy PCG64 / SeedSequence.spawn"

COV_INFLATION = 1.5
ENVELOPE_MARGIN = 1.2
SEARCH_SIGMAS = 5.0
SEARCH_POINTS = 161


@dataclass
class SampleSet:
    """Ordered QHD outcomes ``alpha = x + i y`` with provenance."""

    points: np.ndarray
    seed: int = 0
    source: str = ""
    generation: int = 0
    workers: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=complex).reshape(-1)
        if self.generation < 0:
            raise DomainError("generation must be >= 0")

    @classmethod
    def from_xy(cls, x, y, **meta):
        x = np.asarray(x, float)
        pts = np.empty(x.shape, dtype=complex)
        pts.real = x
        pts.imag = y
        return cls(pts, **meta)

    @property
    def count(self):
        return self.points.size

    @property
    def x(self):
        return self.points.real

    @property
    def y(self):
        return self.points.imag

    def __len__(self):
        return self.points.size

    @property
    def meta(self):
        return {
            "seed": self.seed,
            "source": self.source,
            "generation": self.generation,
            "count": self.count,
            "workers": self.workers,
        }


def q_values(rho, alpha):
    """Q(alpha) = <alpha|rho|alpha>/pi for an array of points.

    Uses the exact Fock amplitudes of |alpha> up to the truncation of
    ``rho`` without renormalizing them, so the result integrates to
    ``Tr rho``.
    """
    rho = np.asarray(rho, dtype=complex)
    alpha = np.asarray(alpha, dtype=complex)
    c = coherent_amplitudes(alpha.reshape(-1), rho.shape[0])
    # <alpha|rho|alpha> = sum_mn conj(c_m) rho_mn c_n
    val = np.einsum("im,im->i", c.conj(), c @ rho.T).real
    return np.maximum(val, 0.0).reshape(alpha.shape) / np.pi


def q_value(rho, alpha):
    return float(q_values(rho, complex(alpha)))


def q_moments(rho):
    """Mean (complex) and 2x2 covariance of the Q distribution of ``rho``.

    Anti-normal ordering gives E[alpha] = <a>, E[alpha^2] = <a^2> and
    E[|alpha|^2] = <n> + 1.
    """
    rho = np.asarray(rho, dtype=complex)
    dim = rho.shape[0]
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    mean = np.trace(a @ rho)
    a2 = np.trace(a @ a @ rho)
    n = np.real(np.trace(a.conj().T @ a @ rho))
    e_xx = (2 * a2.real + 2 * (n + 1)) / 4
    e_yy = (-2 * a2.real + 2 * (n + 1)) / 4
    e_xy = a2.imag / 2
    cov = np.array(
        [
            [e_xx - mean.real**2, e_xy - mean.real * mean.imag],
            [e_xy - mean.real * mean.imag, e_yy - mean.imag**2],
        ]
    )
    return mean, cov


class _Envelope:
    """Gaussian proposal g and constant M with Q <= M g verified on a grid."""

    def __init__(self, rho):
        mean, cov = q_moments(rho)
        self.mean = np.array([mean.real, mean.imag])
        self.cov = COV_INFLATION * cov
        self.chol = np.linalg.cholesky(self.cov)
        self.inv = np.linalg.inv(self.cov)
        self.norm = 1.0 / (2 * np.pi * np.sqrt(np.linalg.det(self.cov)))
        self.rho = rho
        sd = np.sqrt(np.diag(self.cov))
        gx = self.mean[0] + np.linspace(-SEARCH_SIGMAS, SEARCH_SIGMAS, SEARCH_POINTS) * sd[0]
        gy = self.mean[1] + np.linspace(-SEARCH_SIGMAS, SEARCH_SIGMAS, SEARCH_POINTS) * sd[1]
        X, Y = np.meshgrid(gx, gy)
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        ratio = q_values(rho, pts[:, 0] + 1j * pts[:, 1]) / self.pdf(pts)
        self.M = ENVELOPE_MARGIN * ratio.max()

    def pdf(self, pts):
        d = pts - self.mean
        return self.norm * np.exp(-0.5 * np.einsum("ij,jk,ik->i", d, self.inv, d))

    def draw(self, rng, count, chunk=65536):
        """Return ``count`` accepted samples and the number of proposals used."""
        out = []
        have = 0
        proposed = 0
        while have < count:
            z = rng.standard_normal((chunk, 2))
            pts = self.mean + z @ self.chol.T
            u = rng.random(chunk)
            q = q_values(self.rho, pts[:, 0] + 1j * pts[:, 1])
            bound = self.M * self.pdf(pts)
            bad = q > bound
            if bad.any():
                i = int(np.argmax(bad))
                raise EnvelopeError(
                    f"Q={q[i]:.4g} exceeds envelope {bound[i]:.4g} at "
                    f"({pts[i, 0]:.3f}, {pts[i, 1]:.3f}); M={self.M:.4g}"
                )
            keep = pts[u * bound < q]
            out.append(keep)
            have += len(keep)
            proposed += chunk
        acc = np.concatenate(out)[:count]
        return acc[:, 0] + 1j * acc[:, 1], proposed


def sample_q(rho, count, seed, workers=1, source="", stats=None):
    """Draw ``count`` i.i.d. samples from the Q function of ``rho``.

    Rejection sampling against an inflated Gaussian matched to the Q
    moments of ``rho``.  Output is bit-identical for fixed
    ``(rho, count, seed, workers)``.  If ``stats`` is a dict it receives the
    envelope constant and the empirical acceptance rate.
    """
    count = int(count)
    if count < 1:
        raise DomainError("count must be >= 1")
    rho = np.asarray(rho, dtype=complex)
    env = _Envelope(rho)
    streams = np.random.SeedSequence(int(seed)).spawn(workers)
    bounds = [k * count // workers for k in range(workers + 1)]

    def work(k):
        rng = np.random.Generator(np.random.PCG64(streams[k]))
        return env.draw(rng, bounds[k + 1] - bounds[k])

    if workers == 1:
        parts = [work(0)]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(work, range(workers)))
    points = np.concatenate([p[0] for p in parts])
    if stats is not None:
        proposed = sum(p[1] for p in parts)
        stats.update(envelope=env.M, acceptance_rate=count / proposed)
    return SampleSet(points, seed=int(seed), source=source, generation=0, workers=workers)


def empirical_moments(samples):
    """Unbiased sample mean (complex) and 2x2 covariance of (x, y)."""
    pts = samples.points if isinstance(samples, SampleSet) else np.asarray(samples)
    if pts.size < 2:
        raise DomainError("need at least two samples for moments")
    xy = np.stack([pts.real, pts.imag])
    mean = xy.mean(axis=1)
    # shifting by the first sample keeps identical samples at exactly zero spread
    return {"mean": complex(mean[0], mean[1]), "covariance": np.cov(xy - xy[:, :1], ddof=1)}
