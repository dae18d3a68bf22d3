"""Axis-angle rotation helpers (Rodrigues exp map and its left Jacobian)."""

from __future__ import annotations

import numpy as np


def hat(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64).reshape(3)
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def exp(w: np.ndarray) -> np.ndarray:
    """Rotation matrix for an axis-angle vector; exp(0) is exactly I."""
    w = np.asarray(w, dtype=np.float64).reshape(3)
    theta2 = float(w @ w)
    W = hat(w)
    if theta2 < 1e-16:
        # second-order series keeps orthogonality error ~ theta^3
        return np.eye(3) + W + 0.5 * (W @ W)
    theta = np.sqrt(theta2)
    return (np.eye(3) + (np.sin(theta) / theta) * W
            + ((1.0 - np.cos(theta)) / theta2) * (W @ W))


def left_jacobian(w: np.ndarray) -> np.ndarray:
    """J_l such that exp(w + dw) ~ exp((J_l dw)^) exp(w) for small dw."""
    w = np.asarray(w, dtype=np.float64).reshape(3)
    theta2 = float(w @ w)
    W = hat(w)
    if theta2 < 1e-16:
        return np.eye(3) + 0.5 * W + (W @ W) / 6.0
    theta = np.sqrt(theta2)
    return (np.eye(3) + ((1.0 - np.cos(theta)) / theta2) * W
            + ((theta - np.sin(theta)) / (theta2 * theta)) * (W @ W))


def hat_many(v: np.ndarray) -> np.ndarray:
    """Batched hat: (..., 3) -> (..., 3, 3) skew matrices."""
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape + (3,))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def exp_many(w: np.ndarray) -> np.ndarray:
    """Batched exp: (n, 3) axis-angle -> (n, 3, 3) rotations."""
    w = np.asarray(w, dtype=np.float64).reshape(-1, 3)
    out = np.empty((len(w), 3, 3))
    for i in range(len(w)):
        out[i] = exp(w[i])
    return out
