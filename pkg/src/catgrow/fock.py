"""Truncated Fock-space states, channels and scalar metrics.

States are plain numpy arrays: a pure state is a complex vector of length
``dim`` indexed by photon number, a density matrix is a complex
``(dim, dim)`` array.  All functions return new arrays and never modify
their inputs.

Phase-space convention: ``alpha = x + i y`` with ``x = Re<a>`` and
``y = Im<a>``.  The vacuum has Wigner variance 1/4 and Husimi variance 1/2
per axis.
"""

import warnings

import numpy as np
from scipy.special import gammaln

from .errors import DegenerateInputError, DomainError, TruncationWarning

NORM_TOL = 1e-10
LEAK_THRESHOLD = 0.999


def _finish(coeffs, name):
    """Renormalize a truncated expansion, warning if it leaked."""
    norm2 = float(np.vdot(coeffs, coeffs).real)
    if norm2 < LEAK_THRESHOLD:
        warnings.warn(
            f"{name}: only {norm2:.6f} of the norm fits in dim={coeffs.size}",
            TruncationWarning,
            stacklevel=3,
        )
    return coeffs / np.sqrt(norm2)


def _check_dim(dim, minimum=1):
    if int(dim) != dim or dim < minimum:
        raise DomainError(f"dim must be an integer >= {minimum}, got {dim}")
    return int(dim)


def basis(n, dim):
    """Number state |n> in a ``dim``-dimensional truncation."""
    dim = _check_dim(dim)
    if not 0 <= n < dim:
        raise DomainError(f"n={n} outside truncation dim={dim}")
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return v


def coherent_amplitudes(alpha, dim):
    """Exact (unrenormalized) Fock amplitudes <n|alpha> for n < dim.

    ``alpha`` may be a scalar or an array; the photon-number axis is last.
    The recurrence ``c_n = c_{n-1} alpha / sqrt(n)`` avoids factorials.
    """
    alpha = np.asarray(alpha, dtype=complex)
    out = np.empty(alpha.shape + (dim,), dtype=complex)
    out[..., 0] = np.exp(-0.5 * np.abs(alpha) ** 2)
    for n in range(1, dim):
        out[..., n] = out[..., n - 1] * alpha / np.sqrt(n)
    return out


def coherent_state(alpha, dim):
    """Coherent state |alpha>, renormalized inside the truncation."""
    dim = _check_dim(dim)
    return _finish(coherent_amplitudes(complex(alpha), dim), "coherent_state")


def squeezed_vacuum(r, dim):
    """Squeezed vacuum with reduced variance along the y quadrature.

    ``c_{2m} = (tanh r)^m sqrt((2m)!) / (2^m m!) / sqrt(cosh r)``.  The
    positive sign of ``tanh r`` puts the squeezing on y, so the
    anti-squeezed axis (and any cat made from it) lies along x.
    """
    dim = _check_dim(dim, 2)
    r = float(r)
    t = np.tanh(r)
    if not abs(t) < 1:
        raise DomainError(f"squeeze parameter r={r} not finite")
    c = np.zeros(dim, dtype=complex)
    m = np.arange((dim + 1) // 2)
    logmag = 0.5 * gammaln(2 * m + 1) - m * np.log(2.0) - gammaln(m + 1)
    if t == 0:
        c[0] = 1.0
    else:
        c[2 * m] = np.sign(t) ** m * np.exp(
            m * np.log(abs(t)) + logmag - 0.5 * np.log(np.cosh(r))
        )
    return _finish(c, "squeezed_vacuum")


def odd_cat(alpha, dim):
    """Odd cat state N(|alpha> - |-alpha>) with real ``alpha > 0``."""
    dim = _check_dim(dim)
    alpha = float(alpha)
    if alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    if alpha == 0:
        raise DegenerateInputError("odd cat with alpha = 0 is the zero vector")
    c = coherent_amplitudes(alpha, dim)
    c[0::2] = 0.0
    c *= 2.0 * odd_cat_norm(alpha)
    return _finish(c, "odd_cat")


def odd_cat_norm(alpha):
    """Normalization constant [2(1 - exp(-2 alpha^2))]^(-1/2)."""
    return 1.0 / np.sqrt(2.0 * (1.0 - np.exp(-2.0 * alpha**2)))


def even_cat(alpha, dim):
    """Even cat state N(|alpha> + |-alpha>), renormalized in the truncation."""
    dim = _check_dim(dim)
    c = coherent_amplitudes(complex(alpha), dim)
    c[1::2] = 0.0
    c *= 2.0 / np.sqrt(2.0 * (1.0 + np.exp(-2.0 * abs(alpha) ** 2)))
    return _finish(c, "even_cat")


def subtract_photon(state):
    """Apply the annihilation operator and renormalize."""
    state = np.asarray(state, dtype=complex)
    n = np.arange(1, state.size)
    out = np.zeros_like(state)
    out[:-1] = np.sqrt(n) * state[1:]
    norm2 = float(np.vdot(out, out).real)
    if norm2 < 1e-300:
        raise DegenerateInputError("photon subtraction annihilated the state")
    return out / np.sqrt(norm2)


def density_from_pure(state):
    """Projector |psi><psi|."""
    state = np.asarray(state, dtype=complex)
    return np.outer(state, state.conj())


def check_density(rho, trace_tol=1e-9, herm_tol=1e-10, eig_tol=-1e-9):
    """Raise ``ValueError`` unless ``rho`` is a valid normalized density matrix."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 1:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise ValueError(f"not Hermitian: max deviation {herm:.3g}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"trace {tr!r} differs from 1")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lo < eig_tol:
        raise ValueError(f"negative eigenvalue {lo:.3g}")
    return rho


def apply_loss(rho, eta):
    """Pure-loss channel with transmissivity ``eta``.

    Kraus operators ``A_k = sum_n sqrt(C(n,k) eta^(n-k) (1-eta)^k) |n-k><n|``,
    applied elementwise as
    ``rho'_{mn} = sum_k sqrt(C(m+k,k) C(n+k,k)) eta^((m+n)/2) (1-eta)^k rho_{m+k,n+k}``.
    """
    eta = float(eta)
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"transmissivity must lie in (0, 1], got {eta}")
    rho = np.asarray(rho, dtype=complex)
    if eta == 1.0:
        return rho.copy()
    dim = rho.shape[0]
    n = np.arange(dim)
    out = np.zeros_like(rho)
    log_eta, log_loss = np.log(eta), np.log1p(-eta)
    for k in range(dim):
        m = n[: dim - k]
        # log sqrt(C(m+k, k))
        lb = 0.5 * (gammaln(m + k + 1) - gammaln(m + 1) - gammaln(k + 1))
        lw = lb + 0.5 * m * log_eta
        w = np.exp(lw[:, None] + lw[None, :] + k * log_loss)
        out[: dim - k, : dim - k] += w * rho[k:, k:]
    return out


def fidelity(rho, psi):
    """Fidelity <psi|rho|psi> of a state with a pure target."""
    rho = np.asarray(rho)
    psi = np.asarray(psi)
    if rho.shape != (psi.size, psi.size):
        raise DomainError(f"dimension mismatch: rho {rho.shape} vs psi {psi.size}")
    return float(np.vdot(psi, rho @ psi).real)


def mean_photon_number(rho):
    diag = np.real(np.diagonal(rho))
    return float(np.dot(np.arange(diag.size), diag))


def parity(rho):
    """Expectation value of (-1)^n."""
    diag = np.real(np.diagonal(rho))
    signs = 1.0 - 2.0 * (np.arange(diag.size) % 2)
    return float(np.dot(signs, diag))


def purity(rho):
    rho = np.asarray(rho)
    return float(np.vdot(rho, rho).real)


def n_qc_from_squeeze(beta):
    """Quantum-correlated photon number (beta + 1/beta)/4 - 1/2 of a squeeze factor."""
    beta = float(beta)
    if not beta > 0:
        raise DomainError(f"squeeze factor must be positive, got {beta}")
    return (beta + 1.0 / beta) / 4.0 - 0.5


def squeeze_factor(r):
    """Variance ratio beta = exp(2r) for squeeze parameter r."""
    return float(np.exp(2.0 * r))


def hilbert_schmidt_distance(rho, sigma):
    d = np.asarray(rho) - np.asarray(sigma)
    return float(np.sqrt(np.vdot(d, d).real))


def embed(rho, dim):
    """Zero-pad (or crop) a density matrix to a new truncation."""
    rho = np.asarray(rho, dtype=complex)
    out = np.zeros((dim, dim), dtype=complex)
    k = min(dim, rho.shape[0])
    out[:k, :k] = rho[:k, :k]
    return out
