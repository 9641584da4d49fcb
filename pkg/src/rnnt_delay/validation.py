"""Input checks shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np

from .exceptions import ShapeMismatch


def check_features(x, name="features", feature_dim=None) -> np.ndarray:
    """A finite ``(T, F)`` float array with ``T >= 1``."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D (T, F), got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ShapeMismatch(f"{name} has no frames")
    if feature_dim is not None and arr.shape[1] != feature_dim:
        raise ShapeMismatch(f"{name} has {arr.shape[1]} features, expected {feature_dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def check_labels(y, vocab_size=None, blank_id=0, name="labels") -> np.ndarray:
    """A 1-D integer array with no blank and every id below ``vocab_size``."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ShapeMismatch(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise ValueError(f"{name} must be integers")
    arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise ValueError(f"{name} contains negative ids")
    if np.any(arr == blank_id):
        raise ValueError(f"{name} contains the blank id {blank_id}")
    if vocab_size is not None and np.any(arr >= vocab_size):
        raise ValueError(f"{name} contains ids >= vocab size {vocab_size}")
    return arr


def check_times(times, num_labels, num_frames, name="token_times") -> np.ndarray:
    """Non-decreasing frame indices in ``[0, num_frames)``, one per label."""
    arr = np.asarray(times, dtype=np.int64).reshape(-1)
    if arr.size != num_labels:
        raise ShapeMismatch(f"{name} has {arr.size} entries for {num_labels} labels")
    if arr.size and (arr.min() < 0 or arr.max() >= num_frames):
        raise ValueError(f"{name} must lie in [0, {num_frames})")
    if np.any(np.diff(arr) < 0):
        raise ValueError(f"{name} must be non-decreasing")
    return arr


def check_sequences(X, y=None, feature_dim=None, vocab_size=None, blank_id=0):
    """Validate parallel lists of feature matrices and label sequences."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = [X]
    X = list(X)
    if not X:
        raise ValueError("need at least one sequence")
    feats = []
    for i, x in enumerate(X):
        feats.append(check_features(x, f"X[{i}]", feature_dim))
        feature_dim = feats[0].shape[1]
    if y is None:
        return feats, None
    y = list(y)
    if len(y) != len(feats):
        raise ShapeMismatch(f"{len(feats)} feature sequences but {len(y)} label sequences")
    labels = [check_labels(l, vocab_size, blank_id, f"y[{i}]") for i, l in enumerate(y)]
    return feats, labels
