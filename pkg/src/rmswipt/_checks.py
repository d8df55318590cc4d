"""Input-validation helpers shared across the package."""
from __future__ import annotations

import numpy as np

__all__ = [
    "as_rng",
    "check_channel_matrix",
    "check_hermitian",
    "check_psd",
    "check_probability",
    "check_is_fitted",
]


def as_rng(seed_or_rng) -> np.random.Generator:
    """Coerce an int seed, Generator, or None into a Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def check_channel_matrix(H, num_users=None, num_elements=None) -> np.ndarray:
    """Validate a (K, N) complex channel matrix and return it as ndarray."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2:
        raise ValueError(f"channel matrix must be 2-D (users x elements), got shape {H.shape}")
    if num_users is not None and H.shape[0] != num_users:
        raise ValueError(f"expected {num_users} users, got {H.shape[0]}")
    if num_elements is not None and H.shape[1] != num_elements:
        raise ValueError(f"expected {num_elements} elements, got {H.shape[1]}")
    if not np.all(np.isfinite(H.real)) or not np.all(np.isfinite(H.imag)):
        raise ValueError("channel matrix contains non-finite entries")
    return H


def check_hermitian(X, name="matrix", tol=1e-10) -> np.ndarray:
    """Validate Hermitian symmetry up to ``tol`` (relative) and return ndarray."""
    X = np.asarray(X, dtype=complex)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"{name} must be square, got shape {X.shape}")
    scale = max(np.linalg.norm(X), 1.0)
    if np.linalg.norm(X - X.conj().T) > tol * scale:
        raise ValueError(f"{name} is not Hermitian within tolerance {tol}")
    return X


def check_psd(X, name="matrix", tol=1e-8) -> np.ndarray:
    """Validate that a Hermitian matrix has eigenvalues >= -tol*||X||."""
    X = check_hermitian(X, name=name)
    w = np.linalg.eigvalsh(X)
    floor = -tol * max(np.linalg.norm(X), 1e-300)
    if w.min() < floor:
        raise ValueError(f"{name} is not positive semidefinite (min eig {w.min():.3e})")
    return X


def check_probability(value: float, name: str, *, open_interval=False) -> float:
    value = float(value)
    lo_ok = value > 0 if open_interval else value >= 0
    hi_ok = value < 1 if open_interval else value <= 1
    if not (lo_ok and hi_ok):
        bounds = "(0, 1)" if open_interval else "[0, 1]"
        raise ValueError(f"{name} must lie in {bounds}, got {value}")
    return value


def check_is_fitted(estimator, attribute="coeff_matrix_"):
    if getattr(estimator, attribute, None) is None:
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )
