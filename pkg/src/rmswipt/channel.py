"""Planar-array steering vectors, Rician channels, and covariance errors."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ._checks import as_rng, check_channel_matrix
from .scenario import ScenarioConfig, UserGeometry, sample_user_positions

__all__ = [
    "ChannelSet",
    "upa_steering",
    "rician_channel",
    "covariance",
    "sample_error_matrix",
    "sample_error_traces",
    "draw_channel_set",
]


def upa_steering(geometry: UserGeometry, elements_x: int, elements_z: int,
                 spacing: float, wavelength: float) -> np.ndarray:
    """Steering vector of an elements_x-by-elements_z planar array.

    Kronecker product of the two phase ramps; entry (nx-1)*Nz + nz pairs
    ramp step nx along the horizontal axis with step nz along the
    vertical one. Every entry has unit magnitude.
    """
    sin_v = np.sin(geometry.aod_vertical)
    phase = -2j * np.pi * spacing / wavelength * sin_v
    ramp_x = np.exp(phase * np.cos(geometry.aod_horizontal) * np.arange(elements_x))
    ramp_z = np.exp(phase * np.sin(geometry.aod_horizontal) * np.arange(elements_z))
    return np.kron(ramp_x, ramp_z)


def rician_channel(geometry: UserGeometry, config: ScenarioConfig, rng=None) -> np.ndarray:
    """One Rician channel draw toward a user.

    Large-scale gain beta*(d/d0)^(-alpha) at d0 = 1 m, line-of-sight part
    from the steering vector, and i.i.d. standard complex Gaussian
    scatter. Channels are quasi-static: one draw per experiment.
    """
    rng = as_rng(rng)
    n = config.num_elements
    kappa = config.rician_factor
    los = upa_steering(geometry, config.elements_x, config.elements_z,
                       config.element_spacing, config.wavelength)
    nlos = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    gain = config.reference_gain * geometry.distance ** (-config.pathloss_exponent)
    if np.isinf(kappa):
        mix = los
    else:
        mix = np.sqrt(kappa / (kappa + 1.0)) * los + np.sqrt(1.0 / (kappa + 1.0)) * nlos
    return np.sqrt(gain) * mix


def covariance(h: np.ndarray) -> np.ndarray:
    """Rank-one channel covariance h h^H."""
    h = np.asarray(h, dtype=complex).ravel()
    return np.outer(h, h.conj())


def sample_error_matrix(n: int, error_variance: float, rng=None, size=None) -> np.ndarray:
    """Hermitian covariance-error draw(s).

    Diagonal entries are real N(0, error_variance); entries above the
    diagonal are circularly-symmetric complex Gaussians whose real and
    imaginary parts each carry half the variance, mirrored below by
    conjugation. With ``size`` given, returns a (size, n, n) batch.
    """
    if error_variance < 0:
        raise ValueError("error_variance must be >= 0")
    rng = as_rng(rng)
    batch = 1 if size is None else int(size)
    std = np.sqrt(error_variance)
    out = np.zeros((batch, n, n), dtype=complex)
    idx = np.triu_indices(n, k=1)
    diag = std * rng.standard_normal((batch, n))
    off = (std / np.sqrt(2.0)) * (
        rng.standard_normal((batch, len(idx[0])))
        + 1j * rng.standard_normal((batch, len(idx[0])))
    )
    out[:, np.arange(n), np.arange(n)] = diag
    out[:, idx[0], idx[1]] = off
    out[:, idx[1], idx[0]] = off.conj()
    return out[0] if size is None else out


def sample_error_traces(coeff, error_variance: float, rng=None,
                        size: int = 1) -> np.ndarray:
    """Samples of trace(error @ coeff) for Hermitian ``coeff``.

    Consumes the generator stream in the same block order as
    :func:`sample_error_matrix` (diagonal, off-diagonal real, off-diagonal
    imaginary), so the returned traces match the materialized-matrix path
    draw for draw; only matrix assembly is skipped.
    """
    if error_variance < 0:
        raise ValueError("error_variance must be >= 0")
    rng = as_rng(rng)
    coeff = np.asarray(coeff, dtype=complex)
    n = coeff.shape[0]
    std = np.sqrt(error_variance)
    iu = np.triu_indices(n, k=1)
    w_diag = coeff.diagonal().real
    lower = coeff[iu[1], iu[0]]  # entry (m, n) for each pair n < m
    diag = std * rng.standard_normal((size, n))
    re = rng.standard_normal((size, len(iu[0])))
    im = rng.standard_normal((size, len(iu[0])))
    return (diag @ w_diag
            + np.sqrt(2.0) * std * (re @ lower.real - im @ lower.imag))


@dataclass(frozen=True)
class ChannelSet:
    """Per-user channel vectors with their rank-one covariances."""

    channels: np.ndarray  # (K, N) complex
    error_variance: float = 0.0
    covariances: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        H = check_channel_matrix(self.channels)
        object.__setattr__(self, "channels", H)
        cov = np.stack([covariance(h) for h in H])
        object.__setattr__(self, "covariances", cov)
        if self.error_variance < 0:
            raise ValueError("error_variance must be >= 0")

    @property
    def num_users(self) -> int:
        return self.channels.shape[0]

    @property
    def num_elements(self) -> int:
        return self.channels.shape[1]

    def dump(self, path) -> None:
        """Write channels to CSV (user, element, re, im) for regression use."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user", "element", "re", "im"])
            for k in range(self.num_users):
                for n in range(self.num_elements):
                    hkn = self.channels[k, n]
                    writer.writerow([k, n, repr(hkn.real), repr(hkn.imag)])

    @classmethod
    def load(cls, path, error_variance: float = 0.0) -> "ChannelSet":
        rows = []
        with open(path) as fh:
            for row in csv.DictReader(fh):
                rows.append((int(row["user"]), int(row["element"]),
                             float(row["re"]), float(row["im"])))
        K = max(r[0] for r in rows) + 1
        N = max(r[1] for r in rows) + 1
        H = np.zeros((K, N), dtype=complex)
        for k, n, re, im in rows:
            H[k, n] = re + 1j * im
        return cls(H, error_variance)


def draw_channel_set(config: ScenarioConfig, rng=None) -> ChannelSet:
    """Sample user geometry and one quasi-static channel per user."""
    rng = as_rng(config.rng_seed if rng is None else rng)
    users = sample_user_positions(config, rng)
    H = np.stack([rician_channel(g, config, rng) for g in users])
    return ChannelSet(H, config.error_variance)
