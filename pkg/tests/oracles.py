"""Brute-force reference implementations, coded separately from the package."""
import numpy as np


def brute_normals(points, window):
    """Per-pixel total-least-squares plane normal over the clipped window, oriented to +Z."""
    rows, cols, _ = points.shape
    h = window // 2
    out = np.zeros_like(points)
    for i in range(rows):
        for j in range(cols):
            nb = points[max(i - h, 0) : i + h + 1, max(j - h, 0) : j + h + 1].reshape(-1, 3)
            q = nb - nb.mean(axis=0)
            _, _, vt = np.linalg.svd(q, full_matrices=False)
            n = vt[-1]
            if n[2] < 0:
                n = -n
            out[i, j] = n / np.linalg.norm(n)
    return out


def brute_curvature(points, normals):
    """Central-difference inner products along i and j; zero on the border."""
    rows, cols, _ = points.shape
    ki = np.zeros((rows, cols))
    kj = np.zeros((rows, cols))
    for i in range(1, rows - 1):
        for j in range(1, cols - 1):
            ki[i, j] = sum((points[i + 1, j, k] - points[i - 1, j, k]) * (normals[i + 1, j, k] - normals[i - 1, j, k]) for k in range(3))
            kj[i, j] = sum((points[i, j + 1, k] - points[i, j - 1, k]) * (normals[i, j + 1, k] - normals[i, j - 1, k]) for k in range(3))
    return ki, kj


def smooth_grid(rng, rows=32, cols=28, pitch=0.5):
    """Random smooth surface: a few Gaussian bumps and dimples plus a gentle tilt."""
    x = (np.arange(rows) - rows / 2) * pitch
    y = (np.arange(cols) - cols / 2) * pitch
    X, Y = np.meshgrid(x, y, indexing="ij")
    Z = rng.uniform(-0.1, 0.1) * X + rng.uniform(-0.1, 0.1) * Y
    for _ in range(rng.integers(1, 4)):
        cx, cy = rng.uniform(-4, 4, 2)
        s = rng.uniform(2.0, 5.0)
        Z = Z + rng.uniform(-4, 4) * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * s * s))
    return np.stack([X, Y, Z], axis=-1)


def disc_mask(n, radius):
    c = (n - 1) / 2.0
    I, J = np.mgrid[0:n, 0:n]
    return (I - c) ** 2 + (J - c) ** 2 <= radius**2
