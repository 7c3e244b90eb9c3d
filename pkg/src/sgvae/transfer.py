"""Transfer-operator ground state of the thermal sine-Gordon phase field.

The operator acting on 2pi-periodic functions of the relative phase is

    K = (1/lambda_T) * (-2 d^2/dphi^2 - (Q^2/4) (cos(phi) - 1))

and is diagonalised in the plane-wave basis exp(i k phi), k = -K..K, where it
is real symmetric tridiagonal. Its ground state Psi0 fixes the single-point
phase density |Psi0|^2 and the drift of the equivalent Ito process.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import constants
from .errors import ConfigError, SolverError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SgParams:
    """Dimensionless coupling Q and thermal coherence length lambda_T (um)."""

    Q: float
    lambda_T: float

    def __post_init__(self):
        if not (self.Q >= 0.0) or not math.isfinite(self.Q):
            raise ConfigError(f"Q must be finite and >= 0, got {self.Q!r}")
        if not (self.lambda_T > 0.0) or not math.isfinite(self.lambda_T):
            raise ConfigError(f"lambda_T must be finite and > 0, got {self.lambda_T!r}")

    @property
    def D(self) -> float:
        """Diffusion constant, 1/um."""
        return 2.0 / self.lambda_T

    @property
    def l_J(self) -> float:
        """Josephson length in um (infinite at Q = 0)."""
        return math.inf if self.Q == 0 else self.lambda_T / self.Q


@dataclass(frozen=True)
class PhysicalParams:
    J: float  # tunnel coupling, 1/s
    n: float  # linear density, 1/um
    T: float  # temperature, K
    m: float = constants.M_RB87  # atomic mass, kg

    def __post_init__(self):
        for name in ("J", "n", "T", "m"):
            value = getattr(self, name)
            if not (value > 0.0) or not math.isfinite(value):
                raise ConfigError(f"{name} must be finite and > 0, got {value!r}")


def josephson_length(p: PhysicalParams) -> float:
    """l_J = sqrt(hbar / (4 m J)) in um."""
    return math.sqrt(constants.HBAR / (4.0 * p.m * p.J)) / constants.UM


def thermal_coherence_length(p: PhysicalParams) -> float:
    """lambda_T = 2 hbar^2 n / (m k_B T) in um."""
    n_si = p.n / constants.UM
    return 2.0 * constants.HBAR**2 * n_si / (p.m * constants.K_B * p.T) / constants.UM


def params_from_physical(p: PhysicalParams) -> SgParams:
    lam = thermal_coherence_length(p)
    return SgParams(Q=lam / josephson_length(p), lambda_T=lam)


def _tridiagonal(params: SgParams, K: int):
    k = np.arange(-K, K + 1, dtype=np.float64)
    q2 = params.Q**2
    diag = (2.0 * k**2 + q2 / 4.0) / params.lambda_T
    off = np.full(2 * K, -q2 / 8.0 / params.lambda_T)
    return diag, off


def build_operator(params: SgParams, K: int) -> np.ndarray:
    """Dense (2K+1)x(2K+1) matrix of the transfer operator in the plane-wave basis."""
    if K < 8:
        raise ConfigError(f"truncation order K must be >= 8, got {K}")
    diag, off = _tridiagonal(params, K)
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


@dataclass(frozen=True, eq=False)
class GroundState:
    """Psi0(phi) = sum_k coeffs[k + K] exp(i k phi), normalised to int |Psi0|^2 = 1."""

    Q: float
    coeffs: np.ndarray
    eigenvalue: float
    K: int

    def _orders(self):
        # Even symmetry: Psi0 = c0 + 2 sum_{k>0} c_k cos(k phi).
        return np.arange(1, self.K + 1, dtype=np.float64), self.coeffs[self.K + 1:]

    def psi(self, phi):
        phi = np.asarray(phi, dtype=np.float64)
        k, c = self._orders()
        out = np.full(phi.shape, self.coeffs[self.K])
        if c.size:
            out = out + 2.0 * np.cos(np.multiply.outer(phi, k)) @ c
        return out

    def on_grid(self, G: int):
        """(Psi0, Psi0') at phi_j = -pi + 2 pi j / G via FFT; requires G > 2K."""
        if G <= 2 * self.K:
            raise ConfigError(f"grid size {G} too small for truncation order K={self.K}")
        k = np.arange(-self.K, self.K + 1)
        a = np.zeros(G, dtype=np.complex128)
        sgn = np.where(k % 2 == 0, 1.0, -1.0)
        a[k % G] = self.coeffs * sgn
        psi = (np.fft.ifft(a) * G).real
        a[k % G] = 1j * k * self.coeffs * sgn
        dpsi = (np.fft.ifft(a) * G).real
        return psi, dpsi

    def dpsi(self, phi):
        phi = np.asarray(phi, dtype=np.float64)
        k, c = self._orders()
        if not c.size:
            return np.zeros(phi.shape)
        return -2.0 * np.sin(np.multiply.outer(phi, k)) @ (k * c)


def _lowest_eigenpair(params: SgParams, K: int):
    diag, off = _tridiagonal(params, K)
    try:
        w, v = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise SolverError(f"tridiagonal eigensolver failed at K={K}: {exc}") from exc
    vec = v[:, 0]
    lam = float(w[0])
    resid = diag * vec - lam * vec
    resid[:-1] += off * vec[1:]
    resid[1:] += off * vec[:-1]
    res = float(np.max(np.abs(resid)))
    if not np.isfinite(res) or res > 1e-8 * max(1.0, abs(lam), float(np.max(np.abs(diag)))):
        raise SolverError(f"ground state did not converge at K={K}", residual=res)
    return lam, vec


def ground_state(params: SgParams, K: int = 64, tol: float = 1e-12, max_K: int = 4096) -> GroundState:
    """Lowest eigenpair with adaptive doubling of K until the Fourier tail is below tol."""
    if K < 8:
        raise ConfigError(f"truncation order K must be >= 8, got {K}")
    while True:
        lam, vec = _lowest_eigenpair(params, K)
        vec = 0.5 * (vec + vec[::-1])
        if vec.sum() < 0:
            vec = -vec
        vec = vec / np.linalg.norm(vec)
        tail = max(abs(vec[0]), abs(vec[-1])) / np.max(np.abs(vec))
        if tail < tol:
            break
        if 2 * K > max_K:
            raise SolverError(f"Fourier tail {tail:.2e} above tol {tol:.0e} at K={K}")
        K *= 2
    return GroundState(Q=params.Q, coeffs=vec / math.sqrt(TWO_PI), eigenvalue=lam, K=K)


@functools.lru_cache(maxsize=4096)
def cached_ground_state(Q: float) -> GroundState:
    """Ground state keyed on Q alone; the eigenvector does not depend on lambda_T."""
    return ground_state(SgParams(Q=Q, lambda_T=1.0))


def stationary_density(gs: GroundState, phi):
    return gs.psi(phi) ** 2


def log_psi_derivative(gs: GroundState, phi):
    """d/dphi ln Psi0(phi)."""
    return gs.dpsi(phi) / gs.psi(phi)


def drift(gs: GroundState, params: SgParams, phi, sign: int | None = None):
    """Ito drift A(phi) in rad/um: sign * 2D * Psi0'/Psi0.

    ``sign`` defaults to the value selected by the stationary-density check
    (see :func:`sgvae.sampler.drift_sign`).
    """
    if sign is None:
        from .sampler import drift_sign

        sign = drift_sign()
    return sign * 2.0 * params.D * log_psi_derivative(gs, phi)


def coherence_of_Q(gs: GroundState) -> float:
    """<cos phi> under |Psi0|^2, from the Fourier coefficients."""
    c = gs.coeffs
    return float(TWO_PI * np.dot(c[:-1], c[1:]))
