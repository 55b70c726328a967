import numpy as np
from sklearn.utils import check_array


def check_spins(X, n_sites: int | None = None, balanced: bool = False) -> np.ndarray:
    """Validate a ``(n_samples, n_sites)`` array of +-1 spins and return it as int8.

    A single configuration is promoted to a batch of one.
    """
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=None, ensure_2d=True, ensure_all_finite=True)
    if not np.all(np.isin(X, (-1, 1))):
        raise ValueError("spin configurations must contain only +1 and -1")
    if n_sites is not None and X.shape[1] != n_sites:
        raise ValueError(f"expected {n_sites} spins per configuration, got {X.shape[1]}")
    if balanced and np.any(X.sum(axis=1) != 0):
        raise ValueError("configurations must have zero total magnetization")
    return X.astype(np.int8)


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
