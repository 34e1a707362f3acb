"""Shared test utilities: independent oracles and small instance builders.

The oracles deliberately avoid the library's computational strategy: sums are
accumulated term by term, density powers are formed directly (in 50-digit
mpmath arithmetic where precision matters), and matrix algebra uses explicit
loops. They exist to cross-check the vectorized log-domain implementations.
"""

import mpmath as mp
import numpy as np

from dgwr.data import SpatialDataset

mp.mp.dps = 50


def norm_pdf_mp(y, mu, sigma2):
    y, mu, sigma2 = mp.mpf(y), mp.mpf(mu), mp.mpf(sigma2)
    return mp.exp(-((y - mu) ** 2) / (2 * sigma2)) / mp.sqrt(2 * mp.pi * sigma2)


def wls_oracle(X, y, w):
    """Weighted least squares by explicit normal equations."""
    p = X.shape[1]
    A = np.zeros((p, p))
    b = np.zeros(p)
    for j in range(X.shape[0]):
        A += w[j] * np.outer(X[j], X[j])
        b += w[j] * X[j] * y[j]
    return np.linalg.solve(A, b)


def wls_sigma2_oracle(X, y, w, beta):
    num = 0.0
    for j in range(X.shape[0]):
        num += w[j] * (y[j] - X[j] @ beta) ** 2
    return num / w.sum()


def objective_oracle(y, X, w, beta, sigma2, gamma):
    """Divergence objective, term by term in 50-digit arithmetic."""
    gamma = mp.mpf(gamma)
    total = mp.mpf(0)
    for j in range(len(y)):
        mu = mp.mpf(0)
        for k in range(X.shape[1]):
            mu += mp.mpf(X[j, k]) * mp.mpf(beta[k])
        total += mp.mpf(w[j]) * norm_pdf_mp(y[j], mu, sigma2) ** gamma
    s2 = mp.mpf(sigma2)
    return float(mp.log(total) / gamma + gamma / (2 * (1 + gamma)) * mp.log(s2))


def loglik_oracle(y, X, w, beta, sigma2):
    total = mp.mpf(0)
    for j in range(len(y)):
        mu = mp.mpf(0)
        for k in range(X.shape[1]):
            mu += mp.mpf(X[j, k]) * mp.mpf(beta[k])
        total += mp.mpf(w[j]) * mp.log(norm_pdf_mp(y[j], mu, sigma2))
    return float(total)


def rcv_oracle(y, mus, sigma2s, gamma):
    """Leave-one-out score assembled by hand from given per-location fits."""
    gamma = mp.mpf(gamma)
    total = mp.mpf(0)
    s2sum = mp.mpf(0)
    for i in range(len(y)):
        total += norm_pdf_mp(y[i], mus[i], sigma2s[i]) ** gamma
        s2sum += mp.mpf(sigma2s[i])
    return float(mp.log(total) / gamma + gamma / (2 * (1 + gamma)) * mp.log(s2sum))


def hscore_oracle(residuals, sigma2s, gamma):
    """Gamma-selection score assembled by hand from residuals and variances."""
    gamma = mp.mpf(gamma)
    total = mp.mpf(0)
    for r, s2 in zip(residuals, sigma2s):
        r, s2 = mp.mpf(r), mp.mpf(s2)
        w = norm_pdf_mp(r, 0, s2) ** gamma
        total += (2 * (gamma * r**2 - s2) * w + r**2 * w**2) / s2**2
    return float(total)


def sandwich_oracle(X, y, w, beta, sigma2, gamma):
    """Sandwich covariance by explicit loops and mpmath inversion."""
    n, p = X.shape
    gamma = mp.mpf(gamma)
    s2 = mp.mpf(sigma2)
    J = mp.matrix(p, p)
    I = mp.matrix(p, p)
    for j in range(n):
        mu = mp.mpf(0)
        for k in range(p):
            mu += mp.mpf(X[j, k]) * mp.mpf(beta[k])
        r = mp.mpf(y[j]) - mu
        phi_g = norm_pdf_mp(y[j], mu, s2) ** gamma
        cj = mp.mpf(w[j]) * phi_g * (gamma * r**2 / s2 - 1)
        ci = mp.mpf(w[j]) ** 2 * phi_g**2 * r**2
        for a in range(p):
            for b in range(p):
                J[a, b] += cj * mp.mpf(X[j, a]) * mp.mpf(X[j, b])
                I[a, b] += ci * mp.mpf(X[j, a]) * mp.mpf(X[j, b])
    Jinv = J**-1
    V = Jinv * I * Jinv
    return np.array([[float(V[a, b]) for b in range(p)] for a in range(p)])


def make_instance(rng, n=50, p=3, noise=0.5, contam_frac=0.0, shift=8.0):
    """Random planar dataset with linear signal and optional mean-shift outliers."""
    coords = rng.uniform(0.0, 1.0, (n, 2))
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    beta = rng.normal(size=p)
    y = X @ beta + rng.normal(0.0, noise, n)
    if contam_frac > 0:
        k = max(1, int(round(contam_frac * n)))
        idx = rng.choice(n, size=k, replace=False)
        y[idx] += shift
    return SpatialDataset(coords, X, y)
