from __future__ import annotations

import warnings

import numpy as np


class ConstantColumnWarning(RuntimeWarning):
    pass


def pearson_matrix(X, names=None):
    """Pearson correlations between columns of ``X``.

    A constant column correlates 0 with everything else (with a warning);
    the diagonal is always 1.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError(f"need an N x D matrix with N >= 2, got shape {X.shape}")
    centered = X - X.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", centered, centered))
    const = norms == 0
    if const.any():
        which = [names[i] if names else str(i) for i in np.flatnonzero(const)]
        warnings.warn(f"constant column(s) {', '.join(which)}: correlation set to 0", ConstantColumnWarning)
    safe = np.where(const, 1.0, norms)
    corr = (centered.T @ centered) / np.outer(safe, safe)
    corr[const, :] = 0.0
    corr[:, const] = 0.0
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def correlation_long(corr, names):
    """``(row, column, value)`` triples for plotting."""
    return [(names[i], names[j], float(corr[i, j])) for i in range(len(names)) for j in range(len(names))]
