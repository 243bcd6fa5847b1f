"""Compiled inner loop of the Khachiyan / Wolfe-Atwood MVEE solver.

Works on the lifted points q_i = (p_i, 1) in d+1 dimensions. Weights ``u``
live on an active subset; the caller verifies the certificate against the
full cloud.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _lifted_inverse(Q, u):
    n, m = Q.shape
    X = np.zeros((m, m))
    for i in range(n):
        if u[i] == 0.0:
            continue
        for a in range(m):
            qa = u[i] * Q[i, a]
            for b in range(m):
                X[a, b] += qa * Q[i, b]
    return np.linalg.inv(X)


@njit(cache=True, nogil=True, fastmath=True)
def quad_forms(Q, Xi):
    n, m = Q.shape
    M = np.empty(n)
    for i in range(n):
        s = 0.0
        for a in range(m):
            t = 0.0
            for b in range(m):
                t += Xi[a, b] * Q[i, b]
            s += Q[i, a] * t
        M[i] = s
    return M


@njit(cache=True, nogil=True)
def wolfe_atwood(Q, u, tol, max_iter):
    """Drive ``u`` to a (1+tol)-optimal design on the rows of ``Q``.

    Returns ``(u, iterations, gap)``; gap = max(M)/(d+1) - 1 at exit.
    """
    n, m = Q.shape
    dd = float(m)
    Xi = _lifted_inverse(Q, u)
    M = quad_forms(Q, Xi)
    Xq = np.empty(m)
    it = 0
    gap = 0.0
    while True:
        j = 0
        mj = M[0]
        k = -1
        mk = 1e300
        for i in range(n):
            if M[i] > mj:
                mj = M[i]
                j = i
            if u[i] > 0.0 and M[i] < mk:
                mk = M[i]
                k = i
        gap = mj / dd - 1.0
        away_gap = 1.0 - mk / dd
        if (gap <= tol and away_gap <= tol) or it >= max_iter:
            break
        if gap >= away_gap:
            step = (mj - dd) / (dd * (mj - 1.0))
            idx = j
            mm = mj
        else:
            step = (mk - dd) / (dd * (mk - 1.0))
            lim = -u[k] / (1.0 - u[k])
            if step < lim:
                step = lim
            idx = k
            mm = mk
        for a in range(m):
            s = 0.0
            for b in range(m):
                s += Xi[a, b] * Q[idx, b]
            Xq[a] = s
        c = step / (1.0 - step + step * mm)
        inv = 1.0 / (1.0 - step)
        for a in range(m):
            for b in range(m):
                Xi[a, b] = (Xi[a, b] - c * Xq[a] * Xq[b]) * inv
        for i in range(n):
            t = 0.0
            for a in range(m):
                t += Q[i, a] * Xq[a]
            M[i] = (M[i] - c * t * t) * inv
        for i in range(n):
            u[i] *= 1.0 - step
        u[idx] += step
        if u[idx] < 1e-300:
            u[idx] = 0.0
        it += 1
        # refresh against drift of the rank-one updates
        if it % 200 == 0:
            Xi = _lifted_inverse(Q, u)
            M = quad_forms(Q, Xi)
    return u, it, gap


@njit(cache=True, nogil=True)
def _logdet_weights(Q, u):
    n, m = Q.shape
    X = np.zeros((m, m))
    for i in range(n):
        if u[i] == 0.0:
            continue
        for a in range(m):
            for b in range(m):
                X[a, b] += u[i] * Q[i, a] * Q[i, b]
    sign, ld = np.linalg.slogdet(X)
    if sign <= 0:
        return -np.inf
    return ld


@njit(cache=True, nogil=True)
def newton_polish(Q, u, tol, max_iter):
    """Active-set Newton on the support weights of a near-optimal design.

    Solves the equality-constrained Newton system for log det X(u) on the
    points with positive weight, drops points whose weight reaches zero and
    re-admits the worst violator with a small weight. Returns
    ``(u, iterations, gap, ok)``; ``ok`` is False when the Newton system
    became singular and the caller should fall back to first-order steps.
    """
    n, m = Q.shape
    dd = float(m)
    it = 0
    gap = np.inf
    while it < max_iter:
        it += 1
        Xi = _lifted_inverse(Q, u)
        M = quad_forms(Q, Xi)
        sup = np.flatnonzero(u > 0.0)
        s = len(sup)
        gap = M.max() / dd - 1.0
        sup_dev = 0.0
        for i in sup:
            dev = abs(M[i] / dd - 1.0)
            if dev > sup_dev:
                sup_dev = dev
        if gap <= tol and sup_dev <= tol:
            return u, it, gap, True
        if sup_dev <= tol:
            # support is optimal for itself; admit the worst outsider
            j = np.argmax(M)
            u *= 1.0 - 1e-3
            u[j] += 1e-3
            continue
        limit = m * (m + 1) // 2
        if s > limit:
            # an optimal design exists on at most m(m+1)/2 points; keep the
            # heaviest support points
            order = np.argsort(-u[sup])
            for a in order[limit:]:
                u[sup[a]] = 0.0
            u /= u.sum()
            continue
        K = np.empty((s, s))
        for a in range(s):
            for b in range(s):
                t = 0.0
                for p in range(m):
                    for r in range(m):
                        t += Q[sup[a], p] * Xi[p, r] * Q[sup[b], r]
                K[a, b] = t
        KKT = np.zeros((s + 1, s + 1))
        rhs = np.zeros(s + 1)
        for a in range(s):
            for b in range(s):
                KKT[a, b] = -K[a, b] * K[a, b]
            KKT[a, s] = 1.0
            KKT[s, a] = 1.0
            rhs[a] = -K[a, a]
        if abs(np.linalg.det(KKT)) < 1e-300:
            return u, it, gap, False
        sol = np.linalg.solve(KKT, rhs)
        du = sol[:s]
        alpha = 1.0
        hit = -1
        for a in range(s):
            if du[a] < 0.0 and u[sup[a]] + alpha * du[a] <= 0.0:
                alpha = -u[sup[a]] / du[a]
                hit = a
        f0 = _logdet_weights(Q, u)
        trial = u.copy()
        for _ in range(30):
            for a in range(s):
                trial[sup[a]] = u[sup[a]] + alpha * du[a]
            if hit >= 0 and alpha == -u[sup[hit]] / du[hit]:
                trial[sup[hit]] = 0.0
            for a in range(s):
                if trial[sup[a]] < 0.0:
                    trial[sup[a]] = 0.0
            trial /= trial.sum()
            if _logdet_weights(Q, trial) >= f0 - 1e-14:
                break
            alpha *= 0.5
        u = trial
    return u, it, gap, gap <= tol


@njit(cache=True, nogil=True, fastmath=True)
def _point_forms(P, Xi, M):
    # q^T Xi q with q = (p, 1), without materializing the lifted cloud
    n, d = P.shape
    for i in range(n):
        s = Xi[d, d]
        for a in range(d):
            pa = P[i, a]
            s += 2.0 * pa * Xi[a, d]
            t = 0.0
            for b in range(d):
                t += Xi[a, b] * P[i, b]
            s += pa * t
        M[i] = s


@njit(cache=True, nogil=True)
def fit_core(P, dirs, tol, max_iter, coarse_tol, rank_tol, small, max_new, newton_iter):
    """Whole MVEE fit; returns ``(status, center, A, iterations, gap, support)``.

    status 0 = converged, 1 = rank deficient, 2 = iteration budget spent.
    """
    n, d = P.shape
    m = d + 1
    center = np.zeros(d)
    A = np.zeros((d, d))
    mean = np.zeros(d)
    for i in range(n):
        for a in range(d):
            mean[a] += P[i, a]
    mean /= n
    S = np.zeros((d, d))
    for i in range(n):
        for a in range(d):
            da = P[i, a] - mean[a]
            for b in range(d):
                S[a, b] += da * (P[i, b] - mean[b])
    S /= n
    lam = np.linalg.eigvalsh(S)
    if n < m or lam[-1] <= 0.0:
        return 1, center, A, 0, np.inf, 0
    if lam[0] / lam[-1] < rank_tol:
        ridge = 1e-12 * lam[-1]
        if (lam[0] + ridge) / (lam[-1] + ridge) < rank_tol:
            return 1, center, A, 0, np.inf, 0

    in_active = np.zeros(n, dtype=np.bool_)
    if n <= small:
        in_active[:] = True
    else:
        # extreme points along fixed directions of the whitened cloud; the
        # mean shift does not move an argmax, so project the raw points
        G = np.linalg.cholesky(np.linalg.inv(S)) @ dirs.T
        nd = dirs.shape[0]
        hi = np.empty(nd)
        lo = np.empty(nd)
        arg_hi = np.zeros(nd, dtype=np.int64)
        arg_lo = np.zeros(nd, dtype=np.int64)
        for k in range(nd):
            z = 0.0
            for a in range(d):
                z += P[0, a] * G[a, k]
            hi[k] = z
            lo[k] = z
        for i in range(1, n):
            for k in range(nd):
                z = 0.0
                for a in range(d):
                    z += P[i, a] * G[a, k]
                if z > hi[k]:
                    hi[k] = z
                    arg_hi[k] = i
                elif z < lo[k]:
                    lo[k] = z
                    arg_lo[k] = i
        for k in range(nd):
            in_active[arg_hi[k]] = True
            in_active[arg_lo[k]] = True
    active = np.flatnonzero(in_active)
    u = np.full(len(active), 1.0 / len(active))
    total = 0
    gap = np.inf
    M = np.empty(n)
    while True:
        Qa = np.ones((len(active), m))
        Qa[:, :d] = P[active]
        u, it, _ = wolfe_atwood(Qa, u, max(tol, coarse_tol), max_iter - total)
        total += it
        if tol < coarse_tol and total < max_iter:
            un, it, _, ok = newton_polish(Qa, u.copy(), tol, newton_iter)
            total += it
            if ok:
                u = un
            else:
                u, it, _ = wolfe_atwood(Qa, u, tol, max(max_iter - total, 0))
                total += it
        _point_forms(P, _lifted_inverse(Qa, u), M)
        gap = M.max() / m - 1.0
        if gap <= tol or total >= max_iter:
            break
        thr = m * (1.0 + tol)
        cand = np.flatnonzero((M > thr) & ~in_active)
        if len(cand) == 0:
            break
        if len(cand) > max_new:
            order = np.argsort(-M[cand])
            cand = cand[order[:max_new]]
        for i in cand:
            in_active[i] = True
        active = np.concatenate((active, cand))
        u = np.concatenate((u, np.zeros(len(cand))))

    Pa = P[active]
    for i in range(len(active)):
        for a in range(d):
            center[a] += u[i] * Pa[i, a]
    Sig = np.zeros((d, d))
    for i in range(len(active)):
        for a in range(d):
            da = Pa[i, a] - center[a]
            for b in range(d):
                Sig[a, b] += u[i] * da * (Pa[i, b] - center[b])
    A = np.linalg.inv(Sig) / d
    qmax = 0.0
    for i in range(n):
        s = 0.0
        for a in range(d):
            t = 0.0
            for b in range(d):
                t += A[a, b] * (P[i, b] - center[b])
            s += (P[i, a] - center[a]) * t
        if s > qmax:
            qmax = s
    As = np.empty((d, d))
    for a in range(d):
        for b in range(d):
            As[a, b] = 0.5 * (A[a, b] + A[b, a]) / qmax
    support = 0
    for i in range(len(u)):
        if u[i] > 0.0:
            support += 1
    status = 0 if gap <= tol else 2
    return status, center, As, total, max(gap, 0.0), support
