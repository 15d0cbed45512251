"""Compiled inner loops. Everything here is a pure function of its arguments."""

import numpy as np
from numba import njit

UNDERFLOW_FLOOR = 2.0**-60


@njit(cache=True, nogil=True)
def tmap(x, gamma):
    if x < 0.5:
        y = x + x * (2.0 * x) ** gamma
        return 1.0 if y > 1.0 else y
    return 2.0 * x - 1.0


@njit(cache=True, nogil=True)
def tmap_derivative(x, gamma):
    if x < 0.5:
        return 1.0 + (1.0 + gamma) * (2.0 * x) ** gamma
    return 2.0


@njit(cache=True, nogil=True)
def left_inverse(y, gamma, tol, max_iter):
    """Solve x + x (2x)^gamma = y on [0, 1/2]; returns (x, iterations or -1)."""
    if y <= 0.0:
        return 0.0, 0
    if y >= 1.0:
        return 0.5, 0
    lo = 0.0
    hi = 0.5
    # x (1 + (2x)^g) = y  =>  x <= y and x >= y / 2 on [0, 1/2]
    x = y / (1.0 + (2.0 * y) ** gamma)
    for it in range(1, max_iter + 1):
        fx = x + x * (2.0 * x) ** gamma - y
        if fx > 0.0:
            hi = x
        else:
            lo = x
        dfx = 1.0 + (1.0 + gamma) * (2.0 * x) ** gamma
        step = fx / dfx
        xn = x - step
        if xn <= lo or xn >= hi:
            xn = 0.5 * (lo + hi)
            step = x - xn
        x = xn
        if abs(step) <= tol or hi - lo <= tol:
            return x, it
    return x, -1


@njit(cache=True, nogil=True)
def left_inverse_many(ys, gamma, tol, max_iter):
    out = np.empty(ys.shape[0])
    for i in range(ys.shape[0]):
        x, it = left_inverse(ys[i], gamma, tol, max_iter)
        if it < 0:
            return out, i
        out[i] = x
    return out, -1


@njit(cache=True, nogil=True)
def tmap_many(xs, gamma):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = tmap(xs[i], gamma)
    return out


@njit(cache=True, nogil=True)
def forward_orbit(x0, gamma, burn_in, n, floor):
    """Iterate from x0; returns (values, index of first sub-floor iterate or -1).

    Index -2 - k flags an underflow during burn-in step k.
    """
    x = x0
    for k in range(burn_in):
        x = tmap(x, gamma)
        if 0.0 < x < floor:
            return np.empty(0), -2 - k
    out = np.empty(n)
    for k in range(n):
        x = tmap(x, gamma)
        if 0.0 < x < floor:
            return out, k
        out[k] = x
    return out, -1


@njit(cache=True, nogil=True)
def density_at(x, gamma, mids, phi):
    """Pointwise density x^-gamma * phi(x), phi interpolated linearly between bin midpoints."""
    m = mids.shape[0]
    if x <= mids[0]:
        p = phi[0]
    elif x >= mids[m - 1]:
        p = phi[m - 1]
    else:
        j = np.searchsorted(mids, x) - 1
        w = (x - mids[j]) / (mids[j + 1] - mids[j])
        p = (1.0 - w) * phi[j] + w * phi[j + 1]
    return p * x ** (-gamma)


@njit(cache=True, nogil=True)
def backward_chain(x0, uniforms, gamma, mids, phi, tol, max_iter, max_dev):
    """Reversed chain driven by the transfer kernel.

    Returns (values, p_left per step, status). status: -1 ok, k >= 0 means the
    renormalisation at step k deviated by more than max_dev, -2 - k means the
    inverse solver failed at step k.
    """
    n = uniforms.shape[0]
    out = np.empty(n)
    pleft = np.empty(n)
    out[0] = x0
    pleft[0] = np.nan
    x = x0
    for k in range(1, n):
        yl, it = left_inverse(x, gamma, tol, max_iter)
        if it < 0:
            return out, pleft, -2 - k
        yr = 0.5 * (x + 1.0)
        hx = density_at(x, gamma, mids, phi)
        if yl > 0.0:
            wl = density_at(yl, gamma, mids, phi) / tmap_derivative(yl, gamma)
        else:
            wl = 0.0
        wr = density_at(yr, gamma, mids, phi) / 2.0
        total = wl + wr
        if abs(total / hx - 1.0) > max_dev:
            return out, pleft, k
        pl = wl / total
        pleft[k] = pl
        if uniforms[k] < pl:
            x = yl
        else:
            x = yr
        out[k] = x
    return out, pleft, -1


@njit(cache=True, nogil=True)
def _observe(x, bp, vals):
    if bp.shape[0] == 0:
        return x
    j = np.searchsorted(bp, x, side="right") - 1
    if j >= bp.shape[0] - 1:
        return vals[bp.shape[0] - 1]
    w = (x - bp[j]) / (bp[j + 1] - bp[j])
    return (1.0 - w) * vals[j] + w * vals[j + 1]


@njit(cache=True, nogil=True)
def lagged_moments(x0, gamma, burn_in, n, lags, n_blocks, floor, bp, vals):
    """Stream g(orbit) and accumulate per-block lagged pair sums.

    g interpolates linearly through (bp, vals); empty bp means identity.
    Pair (y_i, y_{i+k}) is assigned to block floor(i * n_blocks / n).
    Returns arrays (sxy, sx, sy, cnt) of shape (n_blocks, len(lags)) and a status.
    """
    nl = lags.shape[0]
    maxlag = 0
    for j in range(nl):
        if lags[j] > maxlag:
            maxlag = lags[j]
    size = maxlag + 1
    ring = np.zeros(size)
    sxy = np.zeros((n_blocks, nl))
    sx = np.zeros((n_blocks, nl))
    sy = np.zeros((n_blocks, nl))
    cnt = np.zeros((n_blocks, nl))
    x = x0
    for k in range(burn_in):
        x = tmap(x, gamma)
    for i in range(n):
        x = tmap(x, gamma)
        if 0.0 < x < floor:
            return sxy, sx, sy, cnt, i
        y = _observe(x, bp, vals)
        ring[i % size] = y
        for j in range(nl):
            lag = lags[j]
            if i >= lag:
                lead = i - lag
                yl = ring[lead % size]
                b = (lead * n_blocks) // n
                sxy[b, j] += yl * y
                sx[b, j] += yl
                sy[b, j] += y
                cnt[b, j] += 1.0
    return sxy, sx, sy, cnt, -1


@njit(cache=True, nogil=True)
def partial_sum_norms(values, ranks, a_vals, c):
    """||sum_{i<=k} (1{x_i <= t} - F(t))||_{L2(dt)} for every prefix k.

    ``ranks`` are positions of ``values`` in sorted order; ``a_vals[i]`` is the
    integral of F over [x_i, 1]; ``c`` is the integral of F^2 over [0, 1].
    """
    n = values.shape[0]
    tree_cnt = np.zeros(n + 1)
    tree_sum = np.zeros(n + 1)
    out = np.empty(n)
    sq = 0.0
    sum_a = 0.0
    total_sum = 0.0
    for k in range(n):
        xk = values[k]
        r = ranks[k] + 1
        # prefix over ranks <= r: previous values not exceeding xk
        cnt_le = 0.0
        sum_le = 0.0
        j = r
        while j > 0:
            cnt_le += tree_cnt[j]
            sum_le += tree_sum[j]
            j -= j & (-j)
        cnt_gt = k - cnt_le
        sum_gt = total_sum - sum_le
        cross = cnt_le * (1.0 - xk) + cnt_gt - sum_gt - sum_a - k * a_vals[k] + k * c
        self_term = (1.0 - xk) - 2.0 * a_vals[k] + c
        sq += 2.0 * cross + self_term
        out[k] = np.sqrt(sq) if sq > 0.0 else 0.0
        j = r
        while j <= n:
            tree_cnt[j] += 1.0
            tree_sum[j] += xk
            j += j & (-j)
        sum_a += a_vals[k]
        total_sum += xk
    return out



@njit(cache=True, nogil=True)
def piecewise_integrals(xs, edges, cdf_edges):
    """Walk the merged breakpoints of F_n - F without materialising them.

    ``xs`` must be sorted. Returns (int G^2 dt, int |G| dt, sup |G|) where
    G = F_n - F, F_n right-continuous and F piecewise linear on ``edges``.
    """
    n = xs.shape[0]
    m = edges.shape[0] - 1
    inv_n = 1.0 / n
    i = 0
    while i < n and xs[i] <= 0.0:
        i += 1
    j = 0
    t0 = 0.0
    sq = 0.0
    ab = 0.0
    sup = 0.0
    while j < m:
        e1 = edges[j + 1]
        t1 = xs[i] if i < n and xs[i] < e1 else e1
        if t1 > t0:
            w = edges[j + 1] - edges[j]
            slope = (cdf_edges[j + 1] - cdf_edges[j]) / w if w > 0.0 else 0.0
            fn = i * inv_n
            g0 = fn - (cdf_edges[j] + slope * (t0 - edges[j]))
            g1 = fn - (cdf_edges[j] + slope * (t1 - edges[j]))
            L = t1 - t0
            sq += L * (g0 * g0 + g0 * g1 + g1 * g1) / 3.0
            a0 = abs(g0)
            a1 = abs(g1)
            if g0 * g1 >= 0.0:
                ab += 0.5 * L * (a0 + a1)
            else:
                ab += 0.5 * L * (g0 * g0 + g1 * g1) / (a0 + a1)
            if a0 > sup:
                sup = a0
            if a1 > sup:
                sup = a1
        t0 = t1
        if t1 == e1:
            j += 1
        while i < n and xs[i] <= t0:
            i += 1
        # the jump at t0 itself
        if j < m:
            w = edges[j + 1] - edges[j]
            slope = (cdf_edges[j + 1] - cdf_edges[j]) / w if w > 0.0 else 0.0
            g = i * inv_n - (cdf_edges[j] + slope * (t0 - edges[j]))
            if abs(g) > sup:
                sup = abs(g)
    return sq, ab, sup


@njit(cache=True, nogil=True)
def gauss_seidel_stationary(indptr, indices, data, pi, tol, max_sweeps):
    """Solve pi = P^T pi by Gauss-Seidel sweeps in ascending index order.

    ``(indptr, indices, data)`` is P^T in CSR form, so row j lists the
    transitions into state j. Returns (pi, sweeps used or -1, last L1 change).
    """
    m = pi.shape[0]
    diff = np.inf
    for sweep in range(1, max_sweeps + 1):
        diff = 0.0
        for j in range(m):
            acc = 0.0
            diag = 0.0
            for p in range(indptr[j], indptr[j + 1]):
                i = indices[p]
                if i == j:
                    diag = data[p]
                else:
                    acc += data[p] * pi[i]
            new = acc / (1.0 - diag)
            diff += abs(new - pi[j])
            pi[j] = new
        s = pi.sum()
        pi /= s
        diff /= s
        if diff < tol:
            return pi, sweep, diff
    return pi, -1, diff


@njit(cache=True, nogil=True)
def weighted_row_sup(W, F, w):
    """sum_i w_i max_j |W_ij - F_j|."""
    total = 0.0
    for i in range(W.shape[0]):
        s = 0.0
        for j in range(W.shape[1]):
            a = abs(W[i, j] - F[j])
            if a > s:
                s = a
        total += w[i] * s
    return total
