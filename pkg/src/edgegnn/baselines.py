"""Sum-rate objectives and classical solvers for scheduling, power control and precoding.

Conventions: ``alpha[..., j, k]`` is the gain from transmitter j to receiver k;
``H[..., n, k]`` is the channel from antenna n to user k and ``V[..., n, k]`` the
precoder of user k.  Every function accepts optional leading batch dims.
"""

from __future__ import annotations

import itertools

import numpy as np

from edgegnn.errors import ContractError, DimensionError, DomainError, SizeError

EXHAUSTIVE_MAX_K = 20
TIE_RTOL = 1e-10


def _check_noise(sigma2):
    if np.any(np.asarray(sigma2) <= 0):
        raise DomainError("noise power must be positive")


def _check_square(alpha):
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim < 2 or alpha.shape[-1] != alpha.shape[-2]:
        raise DimensionError(f"channel gains must be square, got {alpha.shape}")
    return alpha


def link_rates(x, alpha, p, sigma2) -> np.ndarray:
    """Per-link rates log2(1 + SINR_k); ``x`` may be soft."""
    _check_noise(sigma2)
    alpha = _check_square(alpha)
    tx = np.asarray(x, dtype=np.float64) * np.asarray(p, dtype=np.float64)
    try:
        tx = np.broadcast_to(tx, np.broadcast_shapes(tx.shape, alpha.shape[:-1]))
    except ValueError as exc:
        raise DimensionError(f"schedule/power {tx.shape} does not match gains {alpha.shape}") from exc
    direct = np.diagonal(alpha, axis1=-2, axis2=-1)
    signal = tx * direct
    received = np.einsum("...j,...jk->...k", tx, alpha)
    return np.log2(1.0 + signal / (received - signal + sigma2))


def sumrate_ls(x, alpha, p, sigma2):
    return link_rates(x, alpha, p, sigma2).sum(axis=-1)


def sumrate_pc(p, alpha, sigma2):
    return link_rates(1.0, alpha, p, sigma2).sum(axis=-1)


def precoding_rates(V, H, sigma2) -> np.ndarray:
    _check_noise(sigma2)
    V, H = np.asarray(V), np.asarray(H)
    if V.shape[-2:] != H.shape[-2:]:
        raise DimensionError(f"V {V.shape} and H {H.shape} differ")
    G = np.abs(np.conj(np.swapaxes(H, -1, -2)) @ V) ** 2  # G[k, j] = |h_k^H v_j|^2
    signal = np.diagonal(G, axis1=-2, axis2=-1)
    return np.log2(1.0 + signal / (G.sum(axis=-1) - signal + sigma2))


def sumrate_pr(V, H, sigma2):
    return precoding_rates(V, H, sigma2).sum(axis=-1)


def all_schedules(K: int) -> np.ndarray:
    """Every binary schedule of length K in lexicographic order, shape (2**K, K)."""
    return np.array(list(itertools.product((0.0, 1.0), repeat=K)))


def exhaustive_ls(alpha, p, sigma2):
    """Optimal schedule by enumeration.

    Ties (within 1e-10 relative) go to the schedule with more active links,
    then to the lexicographically smallest one.
    """
    alpha = _check_square(alpha)
    K = alpha.shape[-1]
    if K > EXHAUSTIVE_MAX_K:
        raise SizeError(f"exhaustive search limited to K <= {EXHAUSTIVE_MAX_K}, got {K}")
    batch = alpha.shape[:-2]
    a = alpha.reshape((-1, K, K))
    pp = np.broadcast_to(np.asarray(p, dtype=np.float64), batch + (K,)).reshape(-1, K)
    X = all_schedules(K)
    counts = X.sum(axis=1)
    best_x = np.empty((a.shape[0], K))
    best_r = np.empty(a.shape[0])
    for b in range(a.shape[0]):
        r = sumrate_ls(X, a[b], pp[b], sigma2)
        top = r.max()
        cand = np.flatnonzero(r >= top - TIE_RTOL * abs(top))
        cand = cand[counts[cand] == counts[cand].max()]
        best_x[b] = X[cand[0]]
        best_r[b] = r[cand[0]]
    return best_x.reshape(batch + (K,)), best_r.reshape(batch)


def fp_ls_soft(alpha, p, sigma2, iters: int = 100):
    """Soft activations in [0, 1] from the fractional-programming iteration."""
    if iters < 1:
        raise ContractError("iters must be >= 1")
    _check_noise(sigma2)
    alpha = _check_square(alpha)
    K = alpha.shape[-1]
    g = np.swapaxes(alpha, -1, -2)  # g[k, j]: gain at receiver k from transmitter j
    g_diag = np.diagonal(g, axis1=-2, axis2=-1)
    g_cross = g * (1.0 - np.eye(K))
    pw = np.broadcast_to(np.asarray(p, dtype=np.float64), alpha.shape[:-2] + (K,))
    x = np.ones(alpha.shape[:-2] + (K,))
    for _ in range(iters):
        px = x * pw
        num = g_diag * px
        z = num / (np.einsum("...kj,...j->...k", g_cross, px) + sigma2)
        y = np.sqrt(num * (z + 1.0)) / (np.einsum("...kj,...j->...k", g, px) + sigma2)
        den = np.einsum("...jk,...j->...k", g, y * y) * pw
        x = np.minimum((y * np.sqrt((z + 1.0) * g_diag * pw) / den) ** 2, 1.0)
    return x


def fp_ls(alpha, p, sigma2, iters: int = 100, threshold: float = 0.5):
    """Fractional-programming link scheduling with a hard threshold on exit."""
    return (fp_ls_soft(alpha, p, sigma2, iters) >= threshold).astype(np.float64)


def _converged(hist_prev, hist_new, tol):
    return np.abs(hist_new - hist_prev) <= tol * np.maximum(np.abs(hist_prev), 1e-300)


def wmmse_pc(alpha, p_max, sigma2, iters: int = 100, tol: float = 1e-6, return_history: bool = False):
    """Scalar WMMSE power control starting from full power.

    Samples in a batch stop updating individually once their relative sum-rate
    change drops below ``tol``, so batched and single-instance calls agree.
    """
    if iters < 1:
        raise ContractError("iters must be >= 1")
    _check_noise(sigma2)
    alpha = _check_square(alpha)
    K = alpha.shape[-1]
    shape = alpha.shape[:-2] + (K,)
    vmax = np.sqrt(np.broadcast_to(np.asarray(p_max, dtype=np.float64), shape))
    direct = np.sqrt(np.diagonal(alpha, axis1=-2, axis2=-1))
    v = vmax.copy()
    obj = sumrate_pc(v * v, alpha, sigma2)
    history = [obj]
    active = np.ones(obj.shape, dtype=bool)
    for _ in range(iters):
        rx = np.einsum("...j,...jk->...k", v * v, alpha) + sigma2
        u = direct * v / rx
        w = 1.0 / (1.0 - u * direct * v)
        den = np.einsum("...kj,...j->...k", alpha, w * u * u)
        v_new = np.clip(w * u * direct / den, 0.0, vmax)
        v = np.where(active[..., None], v_new, v)
        new = sumrate_pc(v * v, alpha, sigma2)
        active = active & ~_converged(obj, new, tol)
        obj = new
        history.append(obj)
        if not np.any(active):
            break
    p = np.minimum(v * v, np.asarray(p_max, dtype=np.float64))
    if return_history:
        return p, np.stack(history, axis=-1)
    return p


def _power_for_mu(c2, lam, mu):
    return np.sum(c2 / (lam + mu[..., None]) ** 2, axis=-1)


def wmmse_precoding(H, p_max, sigma2, iters: int = 100, tol: float = 1e-6, return_history: bool = False,
                    ridge: float = 1e-12):
    """Multi-user MISO WMMSE with exact power-constrained transmit update.

    The Lagrange multiplier of the trace constraint is found by bisection on
    the eigen-decomposition of the weighted receive covariance.
    """
    if iters < 1:
        raise ContractError("iters must be >= 1")
    _check_noise(sigma2)
    H = np.asarray(H, dtype=np.complex128)
    single = H.ndim == 2
    if single:
        H = H[None]
    B, N, K = H.shape
    P = np.broadcast_to(np.asarray(p_max, dtype=np.float64), (B,)).copy()
    Hh = np.conj(np.swapaxes(H, -1, -2))  # (B, K, N), row k is h_k^H

    V = H * np.sqrt(P / np.sum(np.abs(H) ** 2, axis=(-2, -1)))[:, None, None]
    obj = sumrate_pr(V, H, sigma2)
    history = [obj]
    active = np.arange(B)
    eye = np.eye(N)
    for _ in range(iters):
        Ha, Va, Pa = H[active], V[active], P[active]
        G = Hh[active] @ Va  # G[k, j] = h_k^H v_j
        own = np.diagonal(G, axis1=-2, axis2=-1)
        tot = np.sum(np.abs(G) ** 2, axis=-1) + sigma2
        u = own / tot
        w = 1.0 / np.maximum(1.0 - np.real(np.conj(u) * own), 1e-300)
        A = (Ha * (w * np.abs(u) ** 2)[:, None, :]) @ np.conj(np.swapaxes(Ha, -1, -2))
        A = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2))) + ridge * eye
        lam, U = np.linalg.eigh(A)
        lam = np.maximum(lam, ridge)
        C = np.conj(np.swapaxes(U, -1, -2)) @ (Ha * (w * u)[:, None, :])
        c2 = np.sum(np.abs(C) ** 2, axis=-1)  # (b, N)
        mu = np.zeros(len(active))
        need = np.flatnonzero(_power_for_mu(c2, lam, mu) > Pa)
        if need.size:
            c2n, lamn, Pn = c2[need], lam[need], Pa[need]
            lo = np.zeros(need.size)
            hi = np.sqrt(np.sum(c2n, axis=-1) / Pn)
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                over = _power_for_mu(c2n, lamn, mid) > Pn
                lo = np.where(over, mid, lo)
                hi = np.where(over, hi, mid)
            mu[need] = hi
        V_new = U @ (C / (lam + mu[:, None])[:, :, None])
        power = np.sum(np.abs(V_new) ** 2, axis=(-2, -1))
        V_new *= np.sqrt(np.minimum(1.0, Pa / power))[:, None, None]
        V[active] = V_new
        obj = obj.copy()
        new = sumrate_pr(V_new, Ha, sigma2)
        done = _converged(obj[active], new, tol)
        obj[active] = new
        history.append(obj)
        active = active[~done]
        if active.size == 0:
            break
    hist = np.stack(history, axis=-1)
    if single:
        V, hist = V[0], hist[0]
    if return_history:
        return V, hist
    return V
