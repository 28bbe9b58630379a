"""Hot numeric kernels: log-det rates, waterfilling, capped-PSD ascent,
successive-cancellation sweeps, and best-response fixed points.

Every kernel is written in a numba-compilable subset of numpy.  When the
environment variable ``MACCOOP_BACKEND`` is unset or ``"numba"`` (and
numba imports), kernels are JIT-compiled with ``@njit(cache=True)``;
setting ``MACCOOP_BACKEND=numpy`` selects the identical source as plain
numpy, which is the reference fallback path.  ``benchmarks/bench_kernels.py``
times the two side by side.

Kernels never raise domain errors; they return status flags and the
wrappers in :mod:`maccoop.capacity` / :mod:`maccoop.equilibrium` turn
those into exceptions.  All inputs are float64 and are not mutated.
"""

from __future__ import annotations

import os

import numpy as np

BACKEND = "numpy"
_env = os.environ.get("MACCOOP_BACKEND", "numba").strip().lower()
if _env not in ("numpy", "numba"):
    raise RuntimeError(f"MACCOOP_BACKEND must be 'numba' or 'numpy', got {_env!r}")
if _env == "numba":
    try:
        from numba import njit as _njit
    except ImportError:  # fall back silently; capacity of both paths is identical
        _njit = None
    if _njit is not None:
        BACKEND = "numba"


def _jit(fn):
    if BACKEND == "numba":
        return _njit(cache=True)(fn)
    return fn


@_jit
def sym(a):
    """Symmetrize; eigen / cholesky routines want exact symmetry."""
    return 0.5 * (a + a.T)


@_jit
def logdet_ratio(n0, h, q, j):
    """log det(N0 I + H Q H^T + J) - log det(N0 I + J), natural log.

    Assumes q and j are PSD and n0 > 0; tiny negative results are
    rounded up to zero (the exact value is nonnegative).
    """
    m = h.shape[0]
    base = n0 * np.eye(m) + j
    sig = h @ q @ h.T
    _, ld1 = np.linalg.slogdet(sym(base + sig))
    _, ld0 = np.linalg.slogdet(sym(base))
    r = ld1 - ld0
    if r < 0.0:
        r = 0.0
    return r


@_jit
def waterfill(h, noise_cov, p_total):
    """Rate-optimal covariance under a trace budget.

    Maximizes log det(noise_cov + H Q H^T) - log det(noise_cov) over
    Q >= 0 with tr(Q) <= p_total by waterfilling across the eigenmodes
    of the noise-whitened channel.  noise_cov must be positive definite.

    Returns (q, rate) with q of shape (w, w).
    """
    m, w = h.shape
    q = np.zeros((w, w))
    if p_total <= 0.0:
        return q, 0.0
    ell = np.linalg.cholesky(sym(noise_cov))
    white = np.linalg.solve(ell, np.ascontiguousarray(h))
    _, s, vt = np.linalg.svd(white, full_matrices=False)
    r = s.shape[0]
    gains = s * s
    if gains[0] <= 0.0:
        return q, 0.0
    npos = 0
    for i in range(r):
        if gains[i] > 1e-15 * gains[0]:
            npos += 1
    # water level: largest active set k with mu_k above the weakest
    # included mode's inverse gain (gains sorted descending by svd)
    inv_cum = 0.0
    mu = 0.0
    k_active = 0
    for k in range(1, npos + 1):
        inv_cum += 1.0 / gains[k - 1]
        mu_try = (p_total + inv_cum) / k
        if mu_try > 1.0 / gains[k - 1]:
            mu = mu_try
            k_active = k
    powers = np.zeros(r)
    rate = 0.0
    for i in range(k_active):
        powers[i] = mu - 1.0 / gains[i]
        rate += np.log(gains[i] * mu)  # = log(1 + gains*power)
    q = (vt.T * powers) @ vt
    return sym(q), rate


@_jit
def project_capped_psd(v, caps, tol, max_iter):
    """Dykstra projection of v onto {Q PSD} intersect {diag(Q) <= caps}."""
    x = sym(v)
    p = np.zeros_like(x)
    qc = np.zeros_like(x)
    w = x.shape[0]
    for _ in range(max_iter):
        # PSD projection of x + p
        evals, evecs = np.linalg.eigh(sym(x + p))
        clipped = np.maximum(evals, 0.0)
        y = (evecs * clipped) @ evecs.T
        p = x + p - y
        # diagonal-cap projection of y + q
        xn = sym(y + qc)
        for i in range(w):
            if xn[i, i] > caps[i]:
                xn[i, i] = caps[i]
        qc = y + qc - xn
        gap = 0.0
        for i in range(w):
            for jj in range(w):
                d1 = xn[i, jj] - x[i, jj]
                d2 = xn[i, jj] - y[i, jj]
                a1 = abs(d1)
                a2 = abs(d2)
                if a1 > gap:
                    gap = a1
                if a2 > gap:
                    gap = a2
        x = xn
        if gap <= tol:
            break
    return x


@_jit
def pa_maximize(h, noise_cov, caps, q0, tol, max_iter, dyk_tol, dyk_iter):
    """Rate maximization under per-antenna power caps.

    Projected gradient ascent on f(Q) = log det(noise_cov + H Q H^T)
    with backtracking line search; feasibility (PSD, diag <= caps) kept
    by Dykstra projection.  The objective never decreases.  Convergence
    is declared when the unit-step proximal residual
    ||Q - proj(Q + grad f(Q))||_F drops to ``tol``.

    For a single receive antenna the optimum is sign-matched rank-one
    beamforming at full caps and is returned in closed form.

    Returns (q, rate, residual, iterations, converged).
    """
    m, w = h.shape
    if m == 1:
        hv = h[0]
        s = np.empty(w)
        amp = 0.0
        for jj in range(w):
            root = np.sqrt(caps[jj])
            if hv[jj] < 0.0:
                s[jj] = -root
            else:
                s[jj] = root
            amp += abs(hv[jj]) * root
        q = s.reshape(w, 1) @ s.reshape(1, w)
        rate = np.log(1.0 + amp * amp / noise_cov[0, 0])
        return q, rate, 0.0, 0, True

    _, ld_noise = np.linalg.slogdet(sym(noise_cov))
    q = project_capped_psd(sym(q0), caps, dyk_tol, dyk_iter)
    _, ld = np.linalg.slogdet(sym(noise_cov + h @ q @ h.T))
    f = ld - ld_noise
    step = 1.0
    resid = np.inf
    for it in range(1, max_iter + 1):
        cov = sym(noise_cov + h @ q @ h.T)
        grad = sym(h.T @ np.linalg.solve(cov, np.ascontiguousarray(h)))
        probe = project_capped_psd(q + grad, caps, dyk_tol, dyk_iter)
        resid = np.sqrt(np.sum((q - probe) * (q - probe)))
        if resid <= tol:
            return q, f, resid, it, True
        step = min(step * 2.0, 1e6)
        moved = False
        while step > 1e-16:
            cand = project_capped_psd(q + step * grad, caps, dyk_tol, dyk_iter)
            _, ldc = np.linalg.slogdet(sym(noise_cov + h @ cand @ h.T))
            fc = ldc - ld_noise
            if fc >= f:
                shift = np.sqrt(np.sum((cand - q) * (cand - q)))
                q = cand
                f = fc
                if shift > 1e-15:
                    moved = True
                break
            step *= 0.5
        if not moved:
            return q, f, resid, it, resid <= tol
    return q, f, resid, max_iter, False


@_jit
def block_response(h, noise, mode, p_sum, caps, q0, pa_tol, pa_iter, dyk_tol, dyk_iter):
    """One coalition's rate-optimal covariance against a noise covariance."""
    if mode == 0:
        q, rate = waterfill(h, noise, p_sum)
        return q, rate, True
    q, rate, _, _, conv = pa_maximize(h, noise, caps, q0, pa_tol, pa_iter, dyk_tol, dyk_iter)
    return q, rate, conv


@_jit
def sic_backward(n0, m, h_cat, offs, mode, p_blk, caps_cat, q0_cat,
                 pa_tol, pa_iter, dyk_tol, dyk_iter):
    """Exact equilibrium of the fixed-order cancellation game.

    Blocks are listed in decoding order (first decoded first).  A block's
    rate depends only on later-decoded blocks, so one backward sweep is an
    exact equilibrium: the last block optimizes against noise alone and
    each earlier block against noise plus the later blocks' interference.

    Returns (q_cat, utilities, ok) with q_cat a (W, W) block-diagonal
    stack aligned with ``offs``.
    """
    nblk = offs.shape[0] - 1
    w_all = h_cat.shape[1]
    q_cat = np.zeros((w_all, w_all))
    utils = np.zeros(nblk)
    ok = True
    eye = np.eye(m)
    jmat = np.zeros((m, m))
    for idx in range(nblk - 1, -1, -1):
        lo = offs[idx]
        hi = offs[idx + 1]
        h = np.ascontiguousarray(h_cat[:, lo:hi])
        noise = n0 * eye + jmat
        q0 = np.ascontiguousarray(q0_cat[lo:hi, lo:hi])
        qb, rate, conv = block_response(h, noise, mode, p_blk[idx], caps_cat[lo:hi],
                                        q0, pa_tol, pa_iter, dyk_tol, dyk_iter)
        if not conv:
            ok = False
        q_cat[lo:hi, lo:hi] = qb
        utils[idx] = rate
        jmat = sym(jmat + h @ qb @ h.T)
    return q_cat, utils, ok


@_jit
def sud_fixed_point(n0, m, h_cat, offs, mode, p_blk, caps_cat, q0_cat,
                    damping, tol, max_rounds, pa_tol, pa_iter, dyk_tol, dyk_iter):
    """Damped simultaneous best response for the full-interference game.

    Each round every block computes its best response to the current
    interference of all others, then moves ``damping`` of the way there.
    Convergence is declared when the largest per-block utility change in
    a round falls below ``tol``.

    Returns (q_cat, utilities, rounds, converged, last_delta).
    """
    nblk = offs.shape[0] - 1
    w_all = h_cat.shape[1]
    eye = np.eye(m)
    q_cat = q0_cat.copy()
    grams = np.zeros((nblk, m, m))
    for i in range(nblk):
        lo = offs[i]
        hi = offs[i + 1]
        h = np.ascontiguousarray(h_cat[:, lo:hi])
        grams[i] = h @ np.ascontiguousarray(q_cat[lo:hi, lo:hi]) @ h.T
    utils = np.zeros(nblk)
    prev = np.full(nblk, -1.0)
    delta = np.inf
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        total = np.zeros((m, m))
        for i in range(nblk):
            total = total + grams[i]
        ok_all = True
        new_q = q_cat.copy()
        for i in range(nblk):
            lo = offs[i]
            hi = offs[i + 1]
            h = np.ascontiguousarray(h_cat[:, lo:hi])
            noise = sym(n0 * eye + total - grams[i])
            q0 = np.ascontiguousarray(q_cat[lo:hi, lo:hi])
            br, _, conv = block_response(h, noise, mode, p_blk[i], caps_cat[lo:hi],
                                         q0, pa_tol, pa_iter, dyk_tol, dyk_iter)
            if not conv:
                ok_all = False
            new_q[lo:hi, lo:hi] = (1.0 - damping) * q0 + damping * br
        q_cat = new_q
        for i in range(nblk):
            lo = offs[i]
            hi = offs[i + 1]
            h = np.ascontiguousarray(h_cat[:, lo:hi])
            grams[i] = h @ np.ascontiguousarray(q_cat[lo:hi, lo:hi]) @ h.T
        total = np.zeros((m, m))
        for i in range(nblk):
            total = total + grams[i]
        delta = 0.0
        for i in range(nblk):
            noise = sym(n0 * eye + total - grams[i])
            _, ld1 = np.linalg.slogdet(sym(noise + grams[i]))
            _, ld0 = np.linalg.slogdet(noise)
            v = ld1 - ld0
            if v < 0.0:
                v = 0.0
            d = abs(v - prev[i])
            if d > delta:
                delta = d
            utils[i] = v
            prev[i] = v
        if rounds > 1 and delta < tol and ok_all:
            converged = True
            break
    return q_cat, utils, rounds, converged, delta


@_jit
def single_rx_table(rgs_mat, slot, gain2, p_sum, amp, mode, n0):
    """Closed-form utilities for every partition, single receive antenna.

    ``rgs_mat`` holds one restricted growth string per row; ``slot[u]``
    is user u's base decoding position.  A block's received power is
    (sum of member gains^2)(sum of member budgets) under a trace budget
    (mode 0) or (sum of member |h| sqrt(cap) amplitudes)^2 under antenna
    caps (mode 1); blocks decode at their latest member's slot and each
    utility is the log ratio of cumulative undecoded power.

    Returns a (rows, K) array; column j is block j's utility (canonical
    block labels), NaN where partition b has fewer than j+1 blocks.
    """
    rows, k = rgs_mat.shape
    out = np.full((rows, k), np.nan)
    g = np.zeros(k)
    p = np.zeros(k)
    a = np.zeros(k)
    pos = np.zeros(k)
    power = np.zeros(k)
    for b in range(rows):
        nblk = 0
        for j in range(k):
            g[j] = 0.0
            p[j] = 0.0
            a[j] = 0.0
            pos[j] = -1.0
        for u in range(k):
            j = rgs_mat[b, u]
            if j + 1 > nblk:
                nblk = j + 1
            g[j] += gain2[u]
            p[j] += p_sum[u]
            a[j] += amp[u]
            if slot[u] > pos[j]:
                pos[j] = slot[u]
        for j in range(nblk):
            if mode == 0:
                power[j] = g[j] * p[j]
            else:
                power[j] = a[j] * a[j]
        order = np.argsort(pos[:nblk])
        undecoded = 0.0
        for t in range(nblk - 1, -1, -1):
            j = order[t]
            out[b, j] = np.log((n0 + undecoded + power[j]) / (n0 + undecoded))
            undecoded += power[j]
    return out


def single_rx_table_numpy(rgs_mat, slot, gain2, p_sum, amp, mode, n0):
    """Vectorized numpy twin of :func:`single_rx_table` (reference path)."""
    rows, k = rgs_mat.shape
    onehot = rgs_mat[:, :, None] == np.arange(k)[None, None, :]  # (rows, user, label)
    g = np.einsum("buj,u->bj", onehot, gain2)
    p = np.einsum("buj,u->bj", onehot, p_sum)
    a = np.einsum("buj,u->bj", onehot, amp)
    power = g * p if mode == 0 else a * a
    exists = onehot.any(axis=1)
    pos = np.where(onehot, slot[None, :, None], -np.inf).max(axis=1)
    pos = np.where(exists, pos, np.inf)  # empty labels sort last, power 0
    order = np.argsort(pos, axis=1)
    power_sorted = np.take_along_axis(power, order, axis=1)
    after = np.cumsum(power_sorted[:, ::-1], axis=1)[:, ::-1] - power_sorted
    vals = np.log((n0 + after + power_sorted) / (n0 + after))
    out = np.empty_like(vals)
    np.put_along_axis(out, order, vals, axis=1)
    return np.where(exists, out, np.nan)
