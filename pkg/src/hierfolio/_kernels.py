"""Hot inner loops, each in a numba flavour (``*_nb``) and a numpy flavour (``*_np``).

The public names at the bottom pick one per call via :func:`hierfolio._accel.dispatch`.
Both flavours must agree to floating-point noise; ``tests/test_kernels.py`` checks that.
"""
import numpy as np
from scipy.signal import lfilter

from ._accel import dispatch, njit

# --------------------------------------------------------------------------- k-means


@njit
def _lloyd_nb(X, centroids, max_iter):
    n, d = X.shape
    k = centroids.shape[0]
    c = centroids.copy()
    labels = np.full(n, -1, dtype=np.int64)
    history = np.empty(max_iter + 1)
    n_hist = 0
    for it in range(max_iter):
        changed = False
        for i in range(n):
            best = 0
            best_d = np.inf
            for j in range(k):
                s = 0.0
                for f in range(d):
                    diff = X[i, f] - c[j, f]
                    s += diff * diff
                if s < best_d:
                    best_d = s
                    best = j
            if labels[i] != best:
                labels[i] = best
                changed = True
        # objective for these labels against the centroids that produced them
        obj = 0.0
        for i in range(n):
            for f in range(d):
                diff = X[i, f] - c[labels[i], f]
                obj += diff * diff
        history[n_hist] = obj
        n_hist += 1
        if not changed and it > 0:
            break
        counts = np.zeros(k, dtype=np.int64)
        sums = np.zeros((k, d))
        for i in range(n):
            counts[labels[i]] += 1
            for f in range(d):
                sums[labels[i], f] += X[i, f]
        for j in range(k):
            if counts[j] > 0:
                for f in range(d):
                    c[j, f] = sums[j, f] / counts[j]
        for j in range(k):
            if counts[j] == 0:
                # re-seed from the point farthest from its centroid, taken from a cluster of size > 1
                far = -1
                far_d = -1.0
                for i in range(n):
                    if counts[labels[i]] < 2:
                        continue
                    s = 0.0
                    for f in range(d):
                        diff = X[i, f] - c[labels[i], f]
                        s += diff * diff
                    if s > far_d:
                        far_d = s
                        far = i
                if far >= 0:
                    old = labels[far]
                    counts[old] -= 1
                    for f in range(d):
                        sums[old, f] -= X[far, f]
                        c[old, f] = sums[old, f] / counts[old]
                        c[j, f] = X[far, f]
                    labels[far] = j
                    counts[j] = 1
    obj = 0.0
    for i in range(n):
        for f in range(d):
            diff = X[i, f] - c[labels[i], f]
            obj += diff * diff
    history[n_hist] = obj
    n_hist += 1
    return labels, c, history[:n_hist]


def _lloyd_np(X, centroids, max_iter):
    """Lloyd iterations. Returns labels, centroids and the objective after every assignment."""
    n = X.shape[0]
    k = centroids.shape[0]
    c = centroids.copy()
    labels = np.full(n, -1, dtype=np.int64)
    history = []
    for it in range(max_iter):
        d2 = ((X[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        changed = bool(np.any(new != labels))
        labels = new
        history.append(float(((X - c[labels]) ** 2).sum()))
        if not changed and it > 0:
            break
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j] > 0:
                c[j] = X[labels == j].mean(axis=0)
        for j in np.flatnonzero(counts == 0):
            resid = ((X - c[labels]) ** 2).sum(axis=1)
            resid[counts[labels] < 2] = -1.0
            far = int(np.argmax(resid))
            if resid[far] < 0:
                continue
            old = labels[far]
            labels[far] = j
            counts[old] -= 1
            counts[j] = 1
            c[old] = X[labels == old].mean(axis=0)
            c[j] = X[far]
    history.append(float(((X - c[labels]) ** 2).sum()))
    return labels, c, np.array(history)


# --------------------------------------------------------------------------- ledger


@njit
def _group_costs_nb(lam, p, f_prev, f_new, w_prev, w_new, intra_prev, in1, basis1, basis2, cs):
    m = w_prev.shape[0]
    s1 = 0.0
    s2 = 0.0
    for j in range(m):
        w = w_prev[j] + lam * (w_new[j] - w_prev[j])
        if in1[j]:
            s1 += w
        else:
            s2 += w
    risky = p * (1.0 - (f_prev + lam * (f_new - f_prev)))
    tot = s1 + s2
    g1 = risky * s1 / tot if tot > 0 else 0.0
    g2 = risky * s2 / tot if tot > 0 else 0.0
    d1 = 0.0
    d2 = 0.0
    for j in range(m):
        w = w_prev[j] + lam * (w_new[j] - w_prev[j])
        if in1[j]:
            d1 += abs(intra_prev[j] - (w / s1 if s1 > 0 else 0.0))
        else:
            d2 += abs(intra_prev[j] - (w / s2 if s2 > 0 else 0.0))
    return g1, g2, cs * basis1 * d1, cs * basis2 * d2


@njit
def _feasible_scale_nb(p, f_prev, f_new, w_prev, w_new, intra_prev, in1, basis1, basis2, cs, iters):
    g1, g2, c1, c2 = _group_costs_nb(1.0, p, f_prev, f_new, w_prev, w_new, intra_prev, in1, basis1, basis2, cs)
    if g1 - c1 >= 0.0 and g2 - c2 >= 0.0:
        return 1.0
    lo = 0.0
    hi = 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        g1, g2, c1, c2 = _group_costs_nb(mid, p, f_prev, f_new, w_prev, w_new, intra_prev, in1, basis1, basis2, cs)
        if g1 - c1 >= 0.0 and g2 - c2 >= 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12:
            break
    return lo


def group_costs(lam, p, f_prev, f_new, w_prev, w_new, intra_prev, in1, basis1, basis2, cs):
    """Group capitals and costs ``(g1, g2, cost1, cost2)`` at trade scale ``lam``.

    Cost is ``cs * basis_i * ||intra_prev_i - intra_i(lam)||_1`` on intra-group weights.
    """
    w = w_prev + lam * (w_new - w_prev)
    s1, s2 = float(w[in1].sum()), float(w[~in1].sum())
    risky = p * (1.0 - (f_prev + lam * (f_new - f_prev)))
    tot = s1 + s2
    g1 = risky * s1 / tot if tot > 0 else 0.0
    g2 = risky * s2 / tot if tot > 0 else 0.0
    i1 = np.where(in1, w, 0.0) / s1 if s1 > 0 else np.zeros_like(w)
    i2 = np.where(~in1, w, 0.0) / s2 if s2 > 0 else np.zeros_like(w)
    c1 = cs * basis1 * float(np.abs(intra_prev - i1)[in1].sum())
    c2 = cs * basis2 * float(np.abs(intra_prev - i2)[~in1].sum())
    return g1, g2, c1, c2


def _feasible_scale_np(p, f_prev, f_new, w_prev, w_new, intra_prev, in1, basis1, basis2, cs, iters):
    """Largest trade scale in [0, 1] keeping both groups' post-cost capital non-negative (bisection)."""

    def ok(lam):
        g1, g2, c1, c2 = group_costs(lam, p, f_prev, f_new, w_prev, w_new, intra_prev, in1, basis1, basis2, cs)
        return g1 - c1 >= 0.0 and g2 - c2 >= 0.0

    if ok(1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12:
            break
    return lo


# --------------------------------------------------------------------------- baselines


@njit
def _log_wealth_nb(B, X):
    S, m = B.shape
    T = X.shape[0]
    out = np.zeros(S)
    for s in range(S):
        acc = 0.0
        for t in range(T):
            v = 0.0
            for j in range(m):
                v += B[s, j] * X[t, j]
            acc += np.log(v)
        out[s] = acc
    return out


def _log_wealth_np(B, X):
    """Natural-log wealth of each constant-rebalanced portfolio row of ``B`` over relatives ``X`` (T x m)."""
    if X.shape[0] == 0:
        return np.zeros(B.shape[0])
    return np.log(B @ X.T).sum(axis=1)


@njit
def _corn_match_nb(X, w, rho):
    T, m = X.shape
    out = np.zeros(T, dtype=np.bool_)
    if T < w + 1:
        return out
    L = w * m
    cur = np.empty(L)
    for a in range(w):
        for j in range(m):
            cur[a * m + j] = X[T - w + a, j]
    mc = cur.mean()
    vc = 0.0
    for q in range(L):
        vc += (cur[q] - mc) ** 2
    for i in range(w, T):
        # window X[i-w:i], followed by X[i]
        mh = 0.0
        for a in range(w):
            for j in range(m):
                mh += X[i - w + a, j]
        mh /= L
        cov = 0.0
        vh = 0.0
        for a in range(w):
            for j in range(m):
                h = X[i - w + a, j] - mh
                cov += h * (cur[a * m + j] - mc)
                vh += h * h
        if vc > 0 and vh > 0:
            if cov / np.sqrt(vc * vh) >= rho:
                out[i] = True
    return out


def _corn_match_np(X, w, rho):
    """Flag times ``i`` whose preceding ``w`` relatives correlate with the latest ``w`` at >= ``rho``."""
    T, m = X.shape
    out = np.zeros(T, dtype=bool)
    if T < w + 1:
        return out
    cur = X[T - w:].ravel()
    idx = np.arange(w, T)
    hist = np.stack([X[i - w:i].ravel() for i in idx])
    hc = hist - hist.mean(axis=1, keepdims=True)
    cc = cur - cur.mean()
    vc = (cc * cc).sum()
    vh = (hc * hc).sum(axis=1)
    good = (vh > 0) & (vc > 0)
    corr = np.full(len(idx), -np.inf)
    corr[good] = (hc[good] @ cc) / np.sqrt(vc * vh[good])
    out[idx] = corr >= rho
    return out


@njit
def _log_optimal_nb(X, iters):
    k, m = X.shape
    b = np.full(m, 1.0 / m)
    for _ in range(iters):
        g = np.zeros(m)
        for i in range(k):
            v = 0.0
            for j in range(m):
                v += b[j] * X[i, j]
            for j in range(m):
                g[j] += X[i, j] / v
        s = 0.0
        for j in range(m):
            b[j] *= g[j] / k
            s += b[j]
        for j in range(m):
            b[j] /= s
    return b


def _log_optimal_np(X, iters):
    """Cover's multiplicative fixed-point iteration for the log-optimal portfolio on relatives ``X``."""
    k, m = X.shape
    b = np.full(m, 1.0 / m)
    for _ in range(iters):
        b = b * (X / (X @ b)[:, None]).mean(axis=0)
        b /= b.sum()
    return b


# --------------------------------------------------------------------------- OU noise


@njit
def _ou_trace_nb(x0, theta, sigma, normals):
    N, d = normals.shape
    out = np.empty((N, d))
    x = x0.copy()
    for i in range(N):
        for j in range(d):
            x[j] = x[j] + theta * (0.0 - x[j]) + sigma * normals[i, j]
            out[i, j] = x[j]
    return out


def _ou_trace_np(x0, theta, sigma, normals):
    """OU path ``x <- x + theta*(0 - x) + sigma*eps`` as a first-order IIR filter over the shocks."""
    a = 1.0 - theta
    zi = (a * np.asarray(x0, dtype=float))[None, :]
    out, _ = lfilter([sigma], [1.0, -a], normals, axis=0, zi=zi)
    return out


lloyd = dispatch(_lloyd_nb, _lloyd_np)
feasible_scale = dispatch(_feasible_scale_nb, _feasible_scale_np)
log_wealth = dispatch(_log_wealth_nb, _log_wealth_np)
corn_match = dispatch(_corn_match_nb, _corn_match_np)
log_optimal = dispatch(_log_optimal_nb, _log_optimal_np)
ou_trace = dispatch(_ou_trace_nb, _ou_trace_np)
