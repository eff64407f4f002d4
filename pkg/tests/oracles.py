"""Reference implementations written independently of the package code."""

import itertools
import math

import numpy as np


def hand_mos(snr, clip, sr):
    a = min(1, max(0, (snr - 5) / 30))
    b = min(1, max(0, 1 - 50 * clip))
    if sr < 0.4:
        c = sr / 0.4
    elif sr > 0.95:
        c = (1 - sr) / 0.05
    else:
        c = 1.0
    return 1 + 4 * (0.6 * a + 0.25 * b + 0.15 * c)


def brute_force_cohort(features: np.ndarray, k: int):
    """Plain-Python z-score and exhaustive diameter search."""
    n, d = features.shape
    mu = [sum(features[i, j] for i in range(n)) / n for j in range(d)]
    sd = [math.sqrt(sum((features[i, j] - mu[j]) ** 2 for i in range(n)) / n) for j in range(d)]
    z = [[(features[i, j] - mu[j]) / sd[j] if sd[j] > 0 else 0.0 for j in range(d)] for i in range(n)]
    best, best_d = None, math.inf
    for combo in itertools.combinations(range(n), k):
        diam = max(math.dist(z[a], z[b]) for a, b in itertools.combinations(combo, 2))
        if diam < best_d - 1e-12:
            best, best_d = combo, diam
    return best, best_d


def planted_features(seed: int = 11):
    """Twelve feature rows; rows 3..8 form a tight cluster far from the rest."""
    rng = np.random.default_rng(seed)
    centre = np.array([22.0, 1.5, 3.5, 10.0])
    tight = centre + rng.uniform(-0.1, 0.1, (6, 4))
    loose = centre + rng.choice([-1, 1], (6, 4)) * rng.uniform(4, 9, (6, 4)) * np.arange(1, 7)[:, None] / 3
    return np.vstack([loose[:3], tight, loose[3:]])
