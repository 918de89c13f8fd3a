"""Slow, literal reference computations that the library is checked against.

None of these reuse library code paths: the state-space oracle builds the
full joint Gaussian, the sandwich oracle sums outer products one row at a
time with an explicit inverse, and the correlation oracle uses the
standard library.
"""
import statistics

import mpmath
import numpy as np


def joint_gaussian_state_space(z, H, A, B, sigma2, m0, P0):
    """Mean/cov of (beta_1..T, z_1..T) and the conditional moments of beta given z.

    Returns ``(post_mean, post_var, loglik, filtered_mean, filtered_var)``.
    """
    z = np.asarray(z, dtype=float)
    H = np.asarray(H, dtype=float)
    T = z.size
    mu = np.array([A ** (t + 1) * m0 for t in range(T)])
    C = np.zeros((T, T))
    for t in range(T):
        for u in range(T):
            c = A ** (t + 1) * A ** (u + 1) * P0
            for s in range(1, min(t, u) + 2):
                c += A ** (t + 1 - s) * A ** (u + 1 - s) * B
            C[t, u] = c
    D = np.diag(H)
    S_bz = C @ D
    S_zz = D @ C @ D + sigma2 * np.eye(T)
    resid = z - H * mu
    post_mean = mu + S_bz @ np.linalg.solve(S_zz, resid)
    post_cov = C - S_bz @ np.linalg.solve(S_zz, S_bz.T)
    sign, logdet = np.linalg.slogdet(S_zz)
    assert sign > 0
    loglik = -0.5 * (T * np.log(2 * np.pi) + logdet + resid @ np.linalg.solve(S_zz, resid))
    f_mean, f_var = [], []
    for t in range(1, T + 1):
        Szz = S_zz[:t, :t]
        Sbz = S_bz[t - 1, :t]
        f_mean.append(mu[t - 1] + Sbz @ np.linalg.solve(Szz, resid[:t]))
        f_var.append(C[t - 1, t - 1] - Sbz @ np.linalg.solve(Szz, Sbz))
    return post_mean, np.diag(post_cov), float(loglik), np.array(f_mean), np.array(f_var)


def sandwich_literal(X, e, kind="HC1", lags=0):
    X = np.asarray(X, dtype=float)
    e = np.asarray(e, dtype=float)
    n, k = X.shape
    xtx = np.zeros((k, k))
    for i in range(n):
        xtx += np.outer(X[i], X[i])
    bread = np.linalg.inv(xtx)
    meat = np.zeros((k, k))
    for i in range(n):
        meat += e[i] ** 2 * np.outer(X[i], X[i])
    if kind == "HC1":
        meat *= n / (n - k)
    else:
        for j in range(1, lags + 1):
            w = 1 - j / (lags + 1)
            for t in range(j, n):
                meat += w * e[t] * e[t - j] * (np.outer(X[t], X[t - j]) + np.outer(X[t - j], X[t]))
    return bread @ meat @ bread


def ccf_brute(x, y, max_lag):
    """Correlation of (x[t], y[t+k]) over explicit index pairs."""
    n = len(x)
    out = {}
    for k in range(-max_lag, max_lag + 1):
        pairs = [(x[t], y[t + k]) for t in range(n) if 0 <= t + k < n]
        a, b = zip(*pairs)
        out[k] = statistics.correlation([float(v) for v in a], [float(v) for v in b])
    return out


def t_two_sided_p(t, dof):
    """Two-sided p-value by quadrature of the Student-t density."""
    mpmath.mp.dps = 30
    nu = mpmath.mpf(dof)
    c = mpmath.gamma((nu + 1) / 2) / (mpmath.sqrt(nu * mpmath.pi) * mpmath.gamma(nu / 2))
    tail = mpmath.quad(lambda s: c * (1 + s * s / nu) ** (-(nu + 1) / 2), [abs(t), mpmath.inf])
    return float(2 * tail)


def ln_ratio(a, b):
    mpmath.mp.dps = 50
    return float(mpmath.log(mpmath.mpf(b) / mpmath.mpf(a)))


def joint_gaussian_state_space_mp(z, H, A, B, sigma2, m0, P0, dps=40):
    """:func:`joint_gaussian_state_space` in extended precision.

    Needed for the diffuse prior (``P0 = 1e6``), where the double-precision
    joint build loses about ``log10(P0)`` digits to cancellation.
    Returns ``(post_mean, post_var, loglik)`` as floats.
    """
    mp = mpmath.mp
    mp.dps = dps
    T = len(z)
    A, B, s2, m0, P0 = (mpmath.mpf(float(v)) for v in (A, B, sigma2, m0, P0))
    z = [mpmath.mpf(float(v)) for v in z]
    H = [mpmath.mpf(float(v)) for v in H]
    mu = [A ** (t + 1) * m0 for t in range(T)]
    C = mpmath.matrix(T, T)
    for t in range(T):
        for u in range(T):
            c = A ** (t + 1) * A ** (u + 1) * P0
            for s in range(1, min(t, u) + 2):
                c += A ** (t + 1 - s) * A ** (u + 1 - s) * B
            C[t, u] = c
    S_bz = mpmath.matrix(T, T)
    S_zz = mpmath.matrix(T, T)
    for t in range(T):
        for u in range(T):
            S_bz[t, u] = C[t, u] * H[u]
            S_zz[t, u] = H[t] * C[t, u] * H[u] + (s2 if t == u else 0)
    resid = mpmath.matrix([z[t] - H[t] * mu[t] for t in range(T)])
    inv = S_zz ** -1
    w = inv * resid
    gain = S_bz * inv
    post_mean = [float(mu[t] + (S_bz[t, :] * w)[0]) for t in range(T)]
    post_var = [float(C[t, t] - (gain[t, :] * S_bz[t, :].T)[0]) for t in range(T)]
    quad = (resid.T * w)[0]
    loglik = -(T * mpmath.log(2 * mpmath.pi) + mpmath.log(mpmath.det(S_zz)) + quad) / 2
    return np.array(post_mean), np.array(post_var), float(loglik)
