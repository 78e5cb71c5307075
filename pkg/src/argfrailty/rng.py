"""Random streams and samplers for the model's nonstandard distributions.

Everything here is exact (no approximate samplers): gamma / inverse-gamma
draws, truncated gamma via inverse-CDF or tilted rejection, the discrete
Bessel distribution arising as the conditional law of a Poisson latent
between two gamma variables, and the noncentral gamma transition built by
Poisson compounding.  All draws flow through a seedable stream so that
identical seeds reproduce identical sequences and parallel work can fork
disjoint substreams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sp


class ParameterError(ValueError):
    """A distribution parameter lies outside its domain."""


class DegenerateTruncationError(ValueError):
    """The truncation interval carries no usable probability mass."""

    def __init__(self, mass, lo, hi):
        self.mass = float(mass)
        super().__init__(
            f"truncation interval ({lo!r}, {hi!r}) carries probability mass "
            f"{self.mass:.3e}, below machine tolerance"
        )


class RandomStream:
    """Seedable random stream with deterministic, disjoint forking.

    Wraps a PCG64 generator seeded through a ``SeedSequence``: the same
    seed always reproduces the same draw sequence, and :meth:`fork`
    yields independent substreams whose outputs do not overlap, so
    chains and per-location work can run in parallel reproducibly.
    """

    def __init__(self, seed=None, _seq=None):
        self._seq = _seq if _seq is not None else np.random.SeedSequence(seed)
        self.seed = self._seq.entropy
        self.gen = np.random.Generator(np.random.PCG64(self._seq))

    def fork(self, n):
        """Return ``n`` independent substreams with disjoint output."""
        return [RandomStream(_seq=s) for s in self._seq.spawn(n)]

    def __repr__(self):
        return f"RandomStream(seed={self.seed})"


def as_generator(rng):
    """Accept a RandomStream or a bare numpy Generator."""
    if isinstance(rng, RandomStream):
        return rng.gen
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RandomStream or numpy Generator, got {type(rng)!r}")


# ---------------------------------------------------------------------------
# gamma / inverse gamma


def sample_gamma(shape, rate, rng, size=None):
    """Draw from Gamma(shape, rate) with density b^a x^(a-1) e^(-bx) / Gamma(a).

    Mean is shape/rate and variance shape/rate**2.
    """
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(shape <= 0) or np.any(rate <= 0):
        raise ParameterError("gamma shape and rate must be positive")
    return as_generator(rng).standard_gamma(shape, size=size) / rate


def sample_inverse_gamma(shape, scale, rng, size=None):
    """Draw from InvGamma(shape, scale); the reciprocal of a Gamma(shape, scale).

    Mean is scale/(shape-1) for shape > 1.
    """
    shape = np.asarray(shape, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if np.any(shape <= 0) or np.any(scale <= 0):
        raise ParameterError("inverse-gamma shape and scale must be positive")
    return scale / as_generator(rng).standard_gamma(shape, size=size)


# ---------------------------------------------------------------------------
# truncated gamma

# Below this interval mass the inverse-CDF route loses too much precision
# and we switch to one-sided tilted rejection.
_TRUNC_CDF_MIN_MASS = 1e-6
# Interval mass below this is indistinguishable from an empty interval.
_TRUNC_DEGENERATE_MASS = 1e-280


@dataclass(frozen=True)
class TruncGammaParams:
    """Gamma(shape, rate) restricted to the open interval (lo, hi)."""

    shape: float
    rate: float
    lo: float = 0.0
    hi: float = math.inf

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ParameterError("truncated-gamma shape and rate must be positive")
        if not (0 <= self.lo < self.hi):
            raise ParameterError(f"invalid truncation interval ({self.lo}, {self.hi})")

    def sample(self, rng, size=None):
        return sample_truncated_gamma(self.shape, self.rate, self.lo, self.hi, rng, size=size)


def _trunc_gamma_rejection(shape, rate, lo, hi, gen, n):
    """Tilted-rejection draws for intervals with negligible CDF mass.

    Proposes from an exponential tilt anchored at the interval endpoint
    nearest the mode (or uniformly when the mode lies inside), accepting
    with the exact density ratio.  A shape below one with lo = 0 puts
    the integrable singularity inside the interval, so that case
    proposes from the power law x^(shape-1) directly.  Valid for
    arbitrarily thin slivers.
    """
    mode = (shape - 1.0) / rate if shape > 1 else 0.0
    span = hi - lo

    def log_kernel(x):
        return sp.xlogy(shape - 1.0, x) - rate * x

    out = np.empty(n)
    filled = 0
    power_law = shape < 1 and lo == 0.0
    if power_law:
        slope = anchor = None
    elif lo >= mode:  # right tail, density decreasing
        slope = -rate + ((shape - 1.0) / lo if shape >= 1 and lo > 0 else 0.0)
        anchor = lo
    elif hi <= mode:  # left flank, density increasing
        slope = (shape - 1.0) / hi - rate
        anchor = hi
    else:  # mode interior: near-flat sliver, uniform proposal
        slope = 0.0
        anchor = mode
    for _ in range(100000):
        if filled >= n:
            break
        k = n - filled
        u = gen.random(k)
        if power_law:
            x = hi * u ** (1.0 / shape)
            log_acc = -rate * x
        else:
            if slope == 0.0:
                x = lo + u * span
            else:
                # inverse CDF of the tilted exponential restricted to (lo, hi)
                ehi = -np.expm1(slope * span) if slope < 0 else np.expm1(slope * span)
                if slope < 0:
                    x = lo + np.log1p(-u * ehi) / slope
                else:
                    x = lo + np.log1p(u * ehi) / slope
            log_acc = log_kernel(x) - log_kernel(anchor) - slope * (x - anchor)
        acc = np.log(gen.random(k)) < log_acc
        take = x[acc]
        out[filled : filled + take.size] = take
        filled += take.size
    if filled < n:
        raise RuntimeError("truncated-gamma rejection failed to terminate")
    return out


def sample_truncated_gamma(shape, rate, lo, hi, rng, size=None):
    """Draw from Gamma(shape, rate) restricted to (lo, hi).

    Uses the inverse regularized-incomplete-gamma CDF when the interval
    carries mass >= 1e-6, and one-sided exponential-tilt rejection for
    thinner truncations; draws are strictly inside the interval.

    Raises
    ------
    DegenerateTruncationError
        If the interval mass is below machine tolerance.
    """
    params = TruncGammaParams(float(shape), float(rate), float(lo), float(hi))
    shape, rate, lo, hi = params.shape, params.rate, params.lo, params.hi
    gen = as_generator(rng)
    n = 1 if size is None else int(np.prod(size))

    plo = sp.gammainc(shape, rate * lo)
    phi = sp.gammainc(shape, rate * hi) if np.isfinite(hi) else 1.0
    if plo < 0.5:
        mass = phi - plo
    else:  # better accuracy in the upper tail
        qlo = sp.gammaincc(shape, rate * lo)
        qhi = sp.gammaincc(shape, rate * hi) if np.isfinite(hi) else 0.0
        mass = qlo - qhi

    if mass >= _TRUNC_CDF_MIN_MASS:
        u = gen.random(n)
        if plo < 0.5:
            x = sp.gammaincinv(shape, plo + u * mass) / rate
        else:
            x = sp.gammainccinv(shape, qhi + u * mass) / rate
    elif mass > _TRUNC_DEGENERATE_MASS:
        x = _trunc_gamma_rejection(shape, rate, lo, hi, gen, n)
    else:
        raise DegenerateTruncationError(mass, lo, hi)

    # inverse-CDF rounding can land exactly on a bound; nudge inward
    np.clip(x, np.nextafter(lo, hi), np.nextafter(hi, lo), out=x)
    if size is None:
        return float(x[0])
    return x.reshape(size)


# ---------------------------------------------------------------------------
# Bessel distribution


@dataclass(frozen=True)
class BesselParams:
    """Order nu > -1 and argument a > 0 of the discrete Bessel law.

    pmf(n) = (a/2)^(2n+nu) / (I_nu(a) Gamma(n+nu+1) n!), n = 0, 1, ...
    """

    nu: float
    a: float

    def __post_init__(self):
        if not (self.nu > -1):
            raise ParameterError(f"Bessel order must exceed -1, got {self.nu}")
        if not (self.a >= 0 and np.isfinite(self.a)):
            raise ParameterError(f"Bessel argument must be finite and >= 0, got {self.a}")

    def sample(self, rng, size=None):
        return sample_bessel(self.nu, self.a, rng, size=size)

    def pmf(self, n):
        return bessel_pmf(n, self.nu, self.a)


def _log_iv_series(nu, a):
    """log I_nu(a) by log-sum-exp over the defining series, windowed at its peak.

    Covers the regime where the exponentially scaled Bessel underflows
    (large nu with modest a); there the series peaks at a small index.
    """
    lam = 0.25 * a * a
    peak = max(0.0, math.floor((math.sqrt(nu * nu + 4.0 * lam) - nu) / 2.0))
    width = int(12.0 * math.sqrt(peak + 8.0) + 30.0)
    lo = max(0, int(peak) - width)
    k = np.arange(lo, int(peak) + width + 1, dtype=float)
    terms = (2.0 * k + nu) * math.log(a / 2.0) - sp.gammaln(k + 1.0) - sp.gammaln(k + nu + 1.0)
    return float(sp.logsumexp(terms))


def log_bessel_iv(nu, a):
    """log of the modified Bessel function I_nu(a), overflow-safe.

    Evaluates through the exponentially scaled Bessel so arguments far
    beyond the ~700 overflow point of I_nu stay finite, with a windowed
    series fallback where the scaled form underflows.
    """
    nu = np.asarray(nu, dtype=float)
    a = np.asarray(a, dtype=float)
    scaled = sp.ive(nu, a)
    with np.errstate(divide="ignore"):
        out = np.where(scaled > 0, np.log(np.where(scaled > 0, scaled, 1.0)) + a, -np.inf)
    bad = ~np.isfinite(out) & (a > 0)
    if np.any(bad):
        flat = np.broadcast_to(out, np.broadcast_shapes(nu.shape, a.shape)).copy()
        nub = np.broadcast_to(nu, flat.shape)
        ab = np.broadcast_to(a, flat.shape)
        idx = np.argwhere(~np.isfinite(flat) & (ab > 0))
        for ix in map(tuple, idx):
            flat[ix] = _log_iv_series(float(nub[ix]), float(ab[ix]))
        out = flat
    if out.ndim == 0:
        return float(out)
    return out


def bessel_logpmf(n, nu, a):
    """Log pmf of the Bessel(nu, a) distribution, computed in log space."""
    params = BesselParams(float(nu), float(a))
    nu, a = params.nu, params.a
    n = np.asarray(n)
    valid = (n >= 0) & (n == np.floor(n))
    nn = np.where(valid, n, 0).astype(float)
    if a == 0:
        out = np.where(nn == 0, 0.0, -np.inf)
    else:
        out = (
            (2.0 * nn + nu) * math.log(a / 2.0)
            - log_bessel_iv(nu, a)
            - sp.gammaln(nn + nu + 1.0)
            - sp.gammaln(nn + 1.0)
        )
    out = np.where(valid, out, -np.inf)
    if out.ndim == 0:
        return float(out)
    return out


def bessel_pmf(n, nu, a):
    """pmf of the Bessel(nu, a) distribution; never NaN for valid parameters."""
    return np.exp(bessel_logpmf(n, nu, a))


# Poisson-rate threshold under which pmf(0) equals 1 to double precision.
_BESSEL_ZERO_LAMBDA = 1e-12
# Above this rate the mode-centered rejection beats sequential inversion.
_BESSEL_INVERSION_MAX_LAMBDA = 30.0


def _bessel_inversion(nu, a, lam, gen):
    """CDF-scan inversion from zero; exact while the running sum resolves.

    The mass at zero is the reciprocal of the confluent series
    0F1(nu+1; lam), built with the same cheap term recurrence the scan
    uses, so no special functions enter at all.  Bounded setup because
    lam stays modest on this path (the series cannot overflow).
    Returns (draws, unfinished_index); unfinished cells (accumulated
    roundoff stragglers) are the caller's to finish exactly.
    """
    n = nu.size
    out = np.zeros(n, dtype=np.int64)
    norm = np.ones(n)
    term = np.ones(n)
    cap = int(lam.max() + 12.0 * np.sqrt(lam.max() + 4.0) + 60.0)
    for k in range(1, cap + 1):
        term *= lam / (k * (k + nu))
        norm += term
        if term.max() < 1e-18:
            break
    p = 1.0 / norm
    u = gen.random(n)
    pending = np.flatnonzero(u >= p)
    p = p[pending]
    cum = p.copy()
    u = u[pending]
    nu = nu[pending]
    lam = lam[pending]
    for k in range(1, cap + 1):
        if pending.size == 0:
            break
        p *= lam / (k * (k + nu))
        cum += p
        done = u < cum
        if done.any():
            out[pending[done]] = k
            keep = ~done
            pending = pending[keep]
            p = p[keep]
            cum = cum[keep]
            u = u[keep]
            nu = nu[keep]
            lam = lam[keep]
    return out, pending


def _bessel_rejection(nu, a, gen):
    """Mode-centered rejection under the discrete log-concave envelope.

    Uniform body plus exponential tails around the mode; acceptance is
    the exact pmf ratio, and the expected number of proposals per draw
    is bounded uniformly in (nu, a).
    """
    loghalf = np.log(a / 2.0)
    mode = np.floor((np.sqrt(nu * nu + a * a) - nu) / 2.0)
    np.clip(mode, 0.0, None, out=mode)
    lgmode = sp.gammaln(mode + 1.0) + sp.gammaln(mode + nu + 1.0)
    log_p0 = (2.0 * mode + nu) * loghalf - log_bessel_iv(nu, a) - lgmode
    p0 = np.exp(log_p0)
    w = 1.0 + p0 / 2.0

    res = np.empty(nu.size, dtype=np.int64)
    pending = np.arange(nu.size)
    for _ in range(10000):
        if pending.size == 0:
            return res
        k = pending.size
        p0_p = p0[pending]
        w_p = w[pending]
        u = gen.random(k)
        in_box = u * (1.0 + w_p) < w_p
        y = np.empty(k)
        nb = int(in_box.sum())
        if nb:
            y[in_box] = (2.0 * gen.random(nb) - 1.0) * (w_p[in_box] / p0_p[in_box])
        nt = k - nb
        if nt:
            tail = ~in_box
            mag = (w_p[tail] + gen.standard_exponential(nt)) / p0_p[tail]
            y[tail] = np.where(gen.random(nt) < 0.5, -mag, mag)
        step = np.rint(y)
        prop = mode[pending] + step
        valid = prop >= 0
        safe = np.where(valid, prop, 0.0)
        log_ratio = (
            2.0 * step * loghalf[pending]
            - sp.gammaln(safe + 1.0)
            - sp.gammaln(safe + nu[pending] + 1.0)
            + lgmode[pending]
        )
        excess = np.maximum(0.0, p0_p * np.abs(y) - w_p)
        with np.errstate(divide="ignore"):
            acc = valid & (np.log(gen.random(k)) < log_ratio + excess)
        res[pending[acc]] = prop[acc].astype(np.int64)
        pending = pending[~acc]
    raise RuntimeError("Bessel rejection sampler failed to terminate")


def _sample_bessel_many(nu, a, gen):
    """Vectorized exact Bessel draws: inversion for modest rates, rejection else."""
    nu = np.asarray(nu, dtype=float)
    a = np.asarray(a, dtype=float)
    out = np.zeros(nu.shape, dtype=np.int64)
    flat = out.reshape(-1)
    nu_f = nu.reshape(-1)
    a_f = a.reshape(-1)

    lam = 0.25 * a_f * a_f
    inv = np.flatnonzero((lam > _BESSEL_ZERO_LAMBDA) & (lam <= _BESSEL_INVERSION_MAX_LAMBDA))
    rej = np.flatnonzero(lam > _BESSEL_INVERSION_MAX_LAMBDA)
    if inv.size:
        draws, leftover = _bessel_inversion(nu_f[inv], a_f[inv], lam[inv], gen)
        flat[inv] = draws
        if leftover.size:
            held = inv[leftover]
            flat[held] = _bessel_rejection(nu_f[held], a_f[held], gen)
    if rej.size:
        flat[rej] = _bessel_rejection(nu_f[rej], a_f[rej], gen)
    return out


def sample_bessel(nu, a, rng, size=None):
    """Draw from the Bessel(nu, a) distribution (exact rejection sampler).

    An argument of zero collapses all mass onto zero and returns 0.
    """
    BesselParams(float(nu), float(a))
    gen = as_generator(rng)
    if size is None:
        return int(_sample_bessel_many(np.array([nu]), np.array([a]), gen)[0])
    n = int(np.prod(size))
    draws = _sample_bessel_many(np.full(n, float(nu)), np.full(n, float(a)), gen)
    return draws.reshape(size)


# ---------------------------------------------------------------------------
# noncentral gamma


def sample_noncentral_gamma(alpha, c, lam, rng, size=None):
    """Draw from the noncentral gamma: Gamma(alpha + Z, rate 1/c), Z ~ Poisson(lam).

    Mean is (alpha + lam) * c and variance (alpha + 2 lam) * c**2.
    """
    alpha = float(alpha)
    c = float(c)
    lam = np.asarray(lam, dtype=float)
    if not alpha > 1:
        raise ParameterError(f"shape parameter must exceed 1, got {alpha}")
    if not c > 0:
        raise ParameterError(f"scale parameter must be positive, got {c}")
    if np.any(lam < 0):
        raise ParameterError("noncentrality must be nonnegative")
    gen = as_generator(rng)
    z = gen.poisson(lam, size=size)
    draws = gen.standard_gamma(alpha + z) * c
    if size is None and lam.ndim == 0:
        return float(draws)
    return draws


def noncentral_gamma_logpdf(x, alpha, c, lam):
    """Log density of the noncentral gamma with shape alpha, scale c, rate lam.

    Closed form in terms of the modified Bessel function of order
    alpha - 1; reduces to the Gamma(alpha, rate 1/c) density at lam = 0.
    """
    alpha = float(alpha)
    c = float(c)
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if not (alpha > 1 and c > 0) or np.any(lam < 0):
        raise ParameterError("invalid noncentral-gamma parameters")
    s = lam * c
    central = -alpha * math.log(c) - sp.gammaln(alpha) + sp.xlogy(alpha - 1.0, x) - x / c
    if np.all(lam == 0):
        out = np.where(x > 0, central, -np.inf)
    else:
        arg = 2.0 * np.sqrt(x * s) / c
        noncentral = (
            0.5 * (alpha - 1.0) * (np.log(x) - np.log(np.where(s > 0, s, 1.0)))
            - math.log(c)
            - (x + s) / c
            + log_bessel_iv(alpha - 1.0, arg)
        )
        out = np.where(x > 0, np.where(s > 0, noncentral, central), -np.inf)
    if out.ndim == 0:
        return float(out)
    return out
