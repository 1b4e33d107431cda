"""Doppler spectra, channel covariances, and stationary fading synthesis.

The spectral model lives on the normalized frequency interval (-1/2, 1/2].
A bathtub spectrum with normalized maximum Doppler F describes isotropic
scattering; its autocorrelation is J0(2*pi*F*v). Flat bands model band-limited
interference, and sampled spectra carry arbitrary nonnegative eigenvalue
profiles on the P-point grid.

Sign convention (matters only for spectra without even symmetry): the
autocorrelation is r(v) = integral S(xi) exp(+2j*pi*xi*v) dxi, equivalently
r(v) = E[h(n+v) conj(h(n))], so a positive-frequency tone has a positively
rotating autocorrelation. Covariances pair as E[h h^H](l, l') = r(l - l').
"""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .bessel import j0
from .quadrature import oscillatory_nodes

log = logging.getLogger(__name__)

# support detection threshold, relative to the largest eigenvalue
EIGENVALUE_FLOOR_REL = 1e-10
# warn when clamping negative eigenvalues moves more than this fraction of P
CLAMP_WARN_FRACTION = 1e-3


def clarke_autocorrelation(max_doppler, lag):
    """Autocorrelation J0(2*pi*F*v) of the isotropic-scattering channel.

    Parameters
    ----------
    max_doppler : float
        Normalized maximum Doppler frequency F = f_D / f_s, in (0, 1/2].
    lag : int, float or array
        Lag v in slots (even function of v).
    """
    _check_max_doppler(max_doppler)
    return j0(2.0 * np.pi * max_doppler * np.asarray(lag, dtype=float))


def clarke_psd(max_doppler, xi):
    """Bathtub spectral density at normalized frequency xi in (-1/2, 1/2].

    Returns (1/pi)/sqrt(F^2 - xi^2) inside the band, 0 outside, and inf at
    the band edges where the density is singular.
    """
    _check_max_doppler(max_doppler)
    x = np.asarray(xi, dtype=float)
    _check_frequency_domain(x)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.zeros_like(x)
    inside = np.abs(x) < max_doppler
    out[inside] = 1.0 / (np.pi * np.sqrt(max_doppler**2 - x[inside] ** 2))
    out[np.abs(x) == max_doppler] = np.inf
    return float(out[0]) if scalar else out


def flat_psd(band, power, xi):
    """Uniform spectral density of total `power` on the closed `band`."""
    lo, hi = band
    _check_band(lo, hi)
    if power < 0:
        raise ValueError("power must be nonnegative")
    x = np.asarray(xi, dtype=float)
    _check_frequency_domain(x)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.where((x >= lo) & (x <= hi), power / (hi - lo), 0.0)
    return float(out[0]) if scalar else out


def _check_max_doppler(F):
    if not 0.0 < F <= 0.5:
        raise ValueError(f"normalized max Doppler must be in (0, 1/2], got {F}")


def _check_band(lo, hi):
    # lo = -1/2 is admitted for the full band: that endpoint is the same circle
    # point as +1/2 and carries no mass
    if not (-0.5 <= lo < hi <= 0.5):
        raise ValueError(f"band must satisfy -1/2 <= lo < hi <= 1/2, got [{lo}, {hi}]")


def _check_frequency_domain(x):
    if np.any(x <= -0.5) or np.any(x > 0.5):
        raise ValueError("normalized frequency must lie in (-1/2, 1/2]")


def grid_frequencies(P):
    """DFT bin frequencies p/P wrapped into (-1/2, 1/2], in DFT order."""
    xi = np.arange(P) / P
    return np.where(xi > 0.5, xi - 1.0, xi)


@dataclass(frozen=True)
class DopplerSpectrum:
    """Normalized power spectral density of a stationary channel process.

    One of three kinds: "clarke" (bathtub of half-width `max_doppler`),
    "flat" (uniform on `band`), or "sampled" (arbitrary nonnegative values on
    a uniform grid in DFT order). `power` is the total process power.
    """

    kind: str
    max_doppler: float | None = None
    band: tuple[float, float] | None = None
    samples: tuple[float, ...] | None = None
    power: float = 1.0

    def __post_init__(self):
        if self.power < 0:
            raise ValueError("power must be nonnegative")
        if self.kind == "clarke":
            _check_max_doppler(self.max_doppler)
        elif self.kind == "flat":
            _check_band(*self.band)
        elif self.kind == "sampled":
            vals = np.asarray(self.samples, dtype=float)
            if vals.ndim != 1 or vals.size < 2:
                raise ValueError("sampled spectrum needs a 1-D grid of length >= 2")
            if np.any(vals < 0):
                raise ValueError("sampled spectrum values must be nonnegative")
        else:
            raise ValueError(f"unknown spectrum kind {self.kind!r}")

    @classmethod
    def clarke(cls, max_doppler, power=1.0):
        return cls(kind="clarke", max_doppler=float(max_doppler), power=float(power))

    @classmethod
    def flat_band(cls, lo, hi, power=1.0):
        return cls(kind="flat", band=(float(lo), float(hi)), power=float(power))

    @classmethod
    def sampled(cls, values):
        values = np.asarray(values, dtype=float)
        # mean of the grid values is the total power (Riemann sum of the PSD)
        return cls(kind="sampled", samples=tuple(values), power=float(values.mean()))

    def psd(self, xi):
        """Spectral density at normalized frequency xi."""
        if self.kind == "clarke":
            return self.power * clarke_psd(self.max_doppler, xi)
        if self.kind == "flat":
            return flat_psd(self.band, self.power, xi)
        vals = np.asarray(self.samples)
        N = vals.size
        x = np.atleast_1d(np.asarray(xi, dtype=float))
        _check_frequency_domain(x)
        idx = np.rint(np.mod(x, 1.0) * N).astype(int) % N
        out = vals[idx]
        return float(out[0]) if np.ndim(xi) == 0 else out

    def autocorrelation(self, lag):
        """Autocorrelation at (possibly fractional) lags; r(0) = power."""
        v = np.asarray(lag, dtype=float)
        if self.kind == "clarke":
            return self.power * j0(2.0 * np.pi * self.max_doppler * v)
        if self.kind == "flat":
            lo, hi = self.band
            return self.power * np.exp(1j * np.pi * (lo + hi) * v) * np.sinc((hi - lo) * v)
        vals = np.asarray(self.samples)
        xi = grid_frequencies(vals.size)
        return (vals[None, :] @ np.exp(2j * np.pi * np.outer(v, xi).T)).ravel() / vals.size

    def support(self):
        """Closed frequency interval(s) carrying power, as (lo, hi) pairs."""
        if self.power == 0:
            return []
        if self.kind == "clarke":
            return [(-self.max_doppler, self.max_doppler)]
        if self.kind == "flat":
            return [self.band]
        vals = np.asarray(self.samples)
        xi = np.sort(grid_frequencies(vals.size)[vals > EIGENVALUE_FLOOR_REL * max(vals.max(), 1e-300)])
        if xi.size == 0:
            return []
        return [(float(xi.min()), float(xi.max()))]

    def sample_eigenvalues(self, P):
        """PSD samples on the P-point grid (the large-P eigenvalue picture).

        Bins hit exactly by a singular bathtub edge get the bin-averaged mass
        instead of the (infinite) pointwise value.
        """
        xi = grid_frequencies(P)
        if self.kind == "clarke":
            F = self.max_doppler
            lam = np.zeros(P)
            inside = np.abs(xi) < F
            lam[inside] = self.power / (np.pi * np.sqrt(F**2 - xi[inside] ** 2))
            edge = np.abs(np.abs(xi) - F) < 1e-15
            if edge.any():
                for i in np.nonzero(edge)[0]:
                    lam[i] = P * self.band_mass(xi[i] - 0.5 / P, xi[i] + 0.5 / P)
            return lam
        if self.kind == "flat":
            lo, hi = self.band
            return np.where((xi >= lo) & (xi <= hi), self.power / (hi - lo), 0.0)
        vals = np.asarray(self.samples)
        if vals.size != P:
            raise ValueError(f"sampled spectrum has grid size {vals.size}, not {P}")
        return vals.copy()

    def band_mass(self, a, b):
        """Integral of the PSD over [a, b] (closed-form per kind)."""
        if self.kind == "clarke":
            F = self.max_doppler
            a = np.clip(a, -F, F)
            b = np.clip(b, -F, F)
            if b <= a:
                return 0.0
            return self.power * (np.arcsin(b / F) - np.arcsin(a / F)) / np.pi
        if self.kind == "flat":
            lo, hi = self.band
            width = max(0.0, min(b, hi) - max(a, lo))
            return self.power * width / (hi - lo)
        vals = np.asarray(self.samples)
        xi = grid_frequencies(vals.size)
        return float(vals[(xi >= a) & (xi <= b)].sum()) / vals.size

    def synthesis_nodes(self, max_lag):
        """Quadrature of the spectral measure: frequencies and amplitudes.

        Returns (xi_q, amp_q) with sum_q amp_q^2 * exp(2j*pi*xi_q*v) matching
        the autocorrelation to near machine precision for all |v| <= max_lag.
        The bathtub singularity is removed by the arcsine substitution
        xi = F*sin(theta), under which the spectral measure is uniform.
        """
        if self.kind == "clarke":
            F = self.max_doppler
            theta, w = oscillatory_nodes(-np.pi / 2, np.pi / 2, 2 * np.pi * F * max_lag)
            return F * np.sin(theta), np.sqrt(self.power * w / np.pi)
        if self.kind == "flat":
            lo, hi = self.band
            xi, w = oscillatory_nodes(lo, hi, 2 * np.pi * max_lag)
            return xi, np.sqrt(self.power * w / (hi - lo))
        vals = np.asarray(self.samples)
        return grid_frequencies(vals.size), np.sqrt(vals / vals.size)


@dataclass(frozen=True)
class AutocorrelationSequence:
    """Autocorrelation values at lags 0..P-1 plus the generating spectrum."""

    values: np.ndarray
    spectrum: DopplerSpectrum | None = None

    @property
    def r0(self):
        return float(np.real(self.values[0]))

    def __len__(self):
        return len(self.values)


@dataclass
class ChannelCovariance:
    """Toeplitz covariance of P successive channel samples plus its circulant picture.

    The Toeplitz matrix has entries R[l, l'] = r(l' - l). The circulant
    approximation wraps the autocorrelation tail into the first column; its
    eigenvalues (the DFT of that column) are stored clamped to >= 0 so they
    can drive synthesis.
    """

    P: int
    acf: AutocorrelationSequence

    @property
    def spectrum(self):
        return self.acf.spectrum

    @property
    def r0(self):
        return self.acf.r0

    @cached_property
    def circulant_column(self):
        if self.spectrum is not None and self.spectrum.kind == "sampled":
            # the sampled grid is already the circulant eigenbasis; its
            # autocorrelation is P-periodic and wrapping would double-count
            return np.fft.ifft(np.asarray(self.spectrum.samples, dtype=float))
        r = np.asarray(self.acf.values)
        c = r.astype(complex).copy()
        # column entry l is r(l) plus the wrapped tail r(l - P) = conj(r(P-l))
        c[1:] = r[1:] + np.conj(r[:0:-1])
        return c

    @cached_property
    def eigenvalues(self):
        lam = np.fft.fft(self.circulant_column).real
        clamped = np.clip(lam, 0.0, None)
        mass = float(clamped.sum() - lam.sum())
        if mass >= CLAMP_WARN_FRACTION * self.P:
            log.warning(
                "clamping negative circulant eigenvalues moved %.3g of mass "
                "(%.2e per slot) for P=%d", mass, mass / self.P, self.P,
            )
        return clamped

    @cached_property
    def clamp_mass(self):
        lam = np.fft.fft(self.circulant_column).real
        return float(np.clip(lam, 0.0, None).sum() - lam.sum())

    def toeplitz(self):
        """Materialize the exact P x P Toeplitz covariance E[h h^H]."""
        r = np.asarray(self.acf.values, dtype=complex)
        idx = np.arange(self.P)
        d = idx[:, None] - idx[None, :]  # l - l'
        out = np.where(d >= 0, r[np.abs(d)], np.conj(r[np.abs(d)]))
        return out

    def circulant(self):
        """Materialize the circulant approximation."""
        from scipy.linalg import circulant

        return circulant(self.circulant_column)


def build_covariance(spectrum, P):
    """Covariance of P successive samples of a process with the given spectrum."""
    if P < 2:
        raise ValueError("observation length P must be >= 2")
    if spectrum.kind == "sampled" and len(spectrum.samples) != P:
        raise ValueError("sampled spectrum grid size must equal P")
    values = np.asarray(spectrum.autocorrelation(np.arange(P)))
    acf = AutocorrelationSequence(values=values, spectrum=spectrum)
    return ChannelCovariance(P=P, acf=acf)


@dataclass(frozen=True)
class FadingRealization:
    """P time samples x M antennas of a stationary complex-Gaussian channel."""

    samples: np.ndarray
    seed: object
    spectrum: DopplerSpectrum | None
    method: str

    @property
    def P(self):
        return self.samples.shape[0]

    @property
    def M(self):
        return self.samples.shape[1]


def complex_normal(rng, shape):
    """Standard circular complex Gaussians, unit variance per entry."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def synthesize_realization(cov, M, seed, method="exact"):
    """Draw M independent antenna processes with the covariance's statistics.

    method="exact" uses a quadrature of the spectral measure, so the samples
    carry the exact Toeplitz second-order statistics (to ~1e-12). It needs the
    generating spectrum. method="circulant" scales white spectral coefficients
    by the square roots of the clamped circulant eigenvalues and inverse-DFTs;
    it is exact for the circulant model only: for autocorrelations that decay
    slowly relative to P (bathtub spectra with F*P of order 10) the wrapped
    tail visibly distorts the realized lags.
    """
    rng = np.random.default_rng(seed)
    if method == "exact":
        if cov.spectrum is None:
            raise ValueError("exact synthesis needs the generating spectrum")
        if cov.spectrum.kind == "sampled":
            method = "circulant"  # the sampled grid *is* the circulant model
    if method == "exact":
        samples = _spectral_synthesis(cov.spectrum, cov.P, M, rng)
    elif method == "circulant":
        g = complex_normal(rng, (cov.P, M))
        samples = np.sqrt(cov.P) * np.fft.ifft(np.sqrt(cov.eigenvalues)[:, None] * g, axis=0)
    else:
        raise ValueError(f"unknown synthesis method {method!r}")
    return FadingRealization(samples=samples, seed=seed, spectrum=cov.spectrum, method=method)


def _spectral_synthesis(spectrum, length, M, rng, node_chunk=512):
    xi, amp = spectrum.synthesis_nodes(max_lag=length - 1)
    g = complex_normal(rng, (xi.size, M))
    n = np.arange(length)
    out = np.zeros((length, M), dtype=complex)
    for start in range(0, xi.size, node_chunk):
        sl = slice(start, start + node_chunk)
        phases = np.exp(2j * np.pi * np.outer(n, xi[sl]))
        out += phases @ (amp[sl, None] * g[sl])
    return out
