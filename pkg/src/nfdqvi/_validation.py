"""Small input-checking helpers used across the package."""

import numpy as np

from .exceptions import ConfigError, ShapeError


def as_vector(value, name, size=None, *, allow_inf=False):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1:
        raise ConfigError(f"expected a vector, got shape {arr.shape}", name)
    if size is not None and arr.shape[0] != size:
        raise ConfigError(f"expected length {size}, got {arr.shape[0]}", name)
    bad = np.isnan(arr) if allow_inf else ~np.isfinite(arr)
    if bad.any():
        raise ConfigError("entries must be finite", name)
    return arr


def as_matrix(value, name, shape=None):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ConfigError(f"expected a matrix, got shape {arr.shape}", name)
    if shape is not None:
        rows, cols = shape
        if (rows is not None and arr.shape[0] != rows) or (
            cols is not None and arr.shape[1] != cols
        ):
            raise ConfigError(f"expected shape {shape}, got {arr.shape}", name)
    if not np.all(np.isfinite(arr)):
        raise ConfigError("entries must be finite", name)
    return arr


def as_samples(values, n_nodes, name="samples"):
    """Return ``values`` as a float array of shape (n_nodes, d)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != n_nodes:
        raise ShapeError(
            f"{name}: expected {n_nodes} samples on the grid, got shape {arr.shape}"
        )
    return arr


def check_positive(value, name, *, strict=True):
    value = float(value)
    if not np.isfinite(value) or value < 0 or (strict and value == 0):
        raise ConfigError(f"must be {'positive' if strict else 'nonnegative'}, got {value}", name)
    return value


def spectral_norm(mat):
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.size == 0:
        return 0.0
    return float(np.linalg.norm(mat, 2))


def min_sym_eig(mat):
    mat = np.asarray(mat, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (mat + mat.T))[0])
