"""Shared oracles and random-case generators for the test suite."""

import numpy as np

from orient3d.geometry import aoa_many, random_rotation


def central_diff(func, X, h=1e-6):
    """Central finite-difference gradient of a scalar function of an array."""
    X = np.asarray(X, dtype=float)
    G = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        E = np.zeros_like(X)
        E[idx] = h
        G[idx] = (func(X + E) - func(X - E)) / (2 * h)
    return G


def rel_err(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-300))


def random_links(rng, n_bs=2, dmin=10.0, dmax=100.0):
    """UE and BSs in general position: uniform directions, distances in [dmin, dmax]."""
    ue = rng.uniform(-50, 50, 3)
    dirs = rng.standard_normal((n_bs, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    return ue, ue + dirs * rng.uniform(dmin, dmax, (n_bs, 1))


def well_posed_case(rng, n_bs=2, min_sin=0.1):
    """Random truth and links away from the azimuth pole and from collinear pairs."""
    while True:
        R = random_rotation(rng)
        ue, bs = random_links(rng, n_bs)
        el, _ = aoa_many(R, ue, bs)
        d = bs - ue
        d /= np.linalg.norm(d, axis=1)[:, None]
        ok = np.all(np.sin(el) > min_sin)
        for i in range(n_bs):
            for j in range(i + 1, n_bs):
                ok &= np.linalg.norm(np.cross(d[i], d[j])) > min_sin
        if ok:
            return R, ue, bs


def stacked_angles(R, ue, bs):
    el, az = aoa_many(R, ue, bs)
    return np.column_stack([el, az]).ravel()
