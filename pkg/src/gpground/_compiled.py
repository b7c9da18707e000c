"""Compiled objective/gradient for the segment MAP problem.

Mirrors ``opt._evaluate_reference`` loop for loop; matrices here are at most a
few dozen rows, where a hand-rolled Cholesky beats LAPACK call overhead.
"""
import math
from types import FunctionType

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)
OK, SINGULAR, OUT_OF_DOMAIN = 0, 1, 2


@njit(cache=True, nogil=True)
def _cholesky(A, C):
    n = A.shape[0]
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= C[j, k] * C[j, k]
        if not s > 0.0:
            return False
        d = math.sqrt(s)
        C[j, j] = d
        for i in range(j + 1, n):
            s = A[i, j]
            for k in range(j):
                s -= C[i, k] * C[j, k]
            C[i, j] = s / d
        for i in range(j):
            C[i, j] = 0.0
    return True


@njit(cache=True, nogil=True)
def robust_cholesky_nb(A):
    n = A.shape[0]
    C = np.zeros((n, n))
    for jitter in (0.0, 1e-10, 1e-8, 1e-6):
        B = A.copy()
        for i in range(n):
            B[i, i] += jitter
        if _cholesky(B, C):
            return C, True
    return C, False


@njit(cache=True, nogil=True)
def _solve_lower(C, b):
    n = C.shape[0]
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= C[i, k] * y[k]
        y[i] = s / C[i, i]
    return y


@njit(cache=True, nogil=True)
def _solve_upper_t(C, y):
    n = C.shape[0]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= C[k, i] * x[k]
        x[i] = s / C[i, i]
    return x


@njit(cache=True, nogil=True)
def cho_solve_nb(C, b):
    return _solve_upper_t(C, _solve_lower(C, b))


@njit(cache=True, nogil=True)
def _inverse(C):
    n = C.shape[0]
    Cinv = np.zeros((n, n))
    for j in range(n):
        Cinv[j, j] = 1.0 / C[j, j]
        for i in range(j + 1, n):
            s = 0.0
            for k in range(j, i):
                s -= C[i, k] * Cinv[k, j]
            Cinv[i, j] = s / C[i, i]
    return Cinv.T @ Cinv


@njit(cache=True, nogil=True)
def evaluate_nb(x, z, d2rr, d2rs, d2ss, l_min, l_max, lo, hi, with_gradient):
    n = z.shape[0]
    k = d2ss.shape[0]
    g = np.zeros(x.shape[0])
    for i in range(5):
        if not (lo <= x[i] <= hi):
            return OUT_OF_DOMAIN, math.inf, g
    llo = math.log(l_min) - 1e-12
    lhi = math.log(l_max) + 1e-12
    for j in range(k):
        if not (llo <= x[5 + j] <= lhi):
            return OUT_OF_DOMAIN, math.inf, g
    sf = math.exp(x[0])
    sn = math.exp(x[1])
    sfb = math.exp(x[2])
    slb = math.exp(x[3])
    snb = math.exp(x[4])
    lbar = x[5:]

    sfb2 = sfb * sfb
    c = -0.5 / (slb * slb)
    Kss = np.empty((k, k))
    for a in range(k):
        Kss[a, a] = sfb2
        for b in range(a):
            v = sfb2 * math.exp(c * d2ss[a, b])
            Kss[a, b] = v
            Kss[b, a] = v
    B = Kss.copy()
    for a in range(k):
        B[a, a] += snb * snb
    CB, ok = robust_cholesky_nb(B)
    if not ok:
        return SINGULAR, math.inf, g
    beta = cho_solve_nb(CB, lbar)
    Krs = np.empty((n, k))
    for i in range(n):
        for b in range(k):
            Krs[i, b] = sfb2 * math.exp(c * d2rs[i, b])
    mu = Krs @ beta
    L = np.empty(n)
    inside = np.empty(n, dtype=np.bool_)
    for i in range(n):
        lr = math.exp(mu[i])
        inside[i] = l_min < lr < l_max
        L[i] = min(max(lr, l_min), l_max)

    K = np.empty((n, n))
    S = np.empty((n, n))
    sf2 = sf * sf
    for i in range(n):
        S[i, i] = 2.0 * L[i] * L[i]
        K[i, i] = sf2
        for j in range(i):
            s = L[i] * L[i] + L[j] * L[j]
            v = sf2 * math.sqrt(2.0 * L[i] * L[j] / s) * math.exp(-d2rr[i, j] / s)
            S[i, j] = s
            S[j, i] = s
            K[i, j] = v
            K[j, i] = v
    A = K.copy()
    for i in range(n):
        A[i, i] += sn * sn
    CA, ok = robust_cholesky_nb(A)
    if not ok:
        return SINGULAR, math.inf, g
    alpha = cho_solve_nb(CA, z)

    logdet = 0.0
    for i in range(n):
        logdet += 2.0 * math.log(CA[i, i])
    for a in range(k):
        logdet += 2.0 * math.log(CB[a, a])
    f = 0.5 * (z @ alpha + lbar @ beta + logdet + (n + k) * LOG_2PI)
    if not math.isfinite(f):
        return OUT_OF_DOMAIN, math.inf, g
    if not with_gradient:
        return OK, f, g

    WA = _inverse(CA)
    for i in range(n):
        for j in range(n):
            WA[i, j] -= alpha[i] * alpha[j]
    WB = _inverse(CB)
    for a in range(k):
        for b in range(k):
            WB[a, b] -= beta[a] * beta[b]

    g0 = 0.0
    trA = 0.0
    g_mu = np.zeros(n)
    for i in range(n):
        trA += WA[i, i]
        Li = L[i]
        Gi = 0.0
        for j in range(n):
            wk = WA[i, j] * K[i, j]
            g0 += wk
            s = S[i, j]
            Gi += wk * (0.5 / Li - Li / s + 2.0 * d2rr[i, j] * Li / (s * s))
        if inside[i]:
            g_mu[i] = Gi * Li
    g[0] = g0
    g[1] = sn * sn * trA

    h = cho_solve_nb(CB, Krs.T @ g_mu)
    for a in range(k):
        g[5 + a] = beta[a] + h[a]

    Krs_beta = Krs @ beta
    Kss_beta = Kss @ beta
    inv_l2 = 1.0 / (slb * slb)
    dKrs_beta = (Krs * d2rs) @ beta * inv_l2
    dKss = Kss * d2ss * inv_l2
    dKss_beta = dKss @ beta
    trWB = 0.0
    sWK = 0.0
    sWdK = 0.0
    for a in range(k):
        trWB += WB[a, a]
        for b in range(k):
            sWK += WB[a, b] * Kss[a, b]
            sWdK += WB[a, b] * dKss[a, b]
    g[2] = 2.0 * (g_mu @ Krs_beta) - 2.0 * (h @ Kss_beta) + sWK
    g[3] = g_mu @ dKrs_beta - h @ dKss_beta + 0.5 * sWdK
    g[4] = -2.0 * snb * snb * (h @ beta) + snb * snb * trWB
    return OK, f, g


@njit(cache=True, nogil=True)
def ns_cross(rq, Lq, r, L, sf):
    out = np.empty((rq.shape[0], r.shape[0]))
    for i in range(rq.shape[0]):
        for j in range(r.shape[0]):
            s = Lq[i] * Lq[i] + L[j] * L[j]
            d = rq[i] - r[j]
            out[i, j] = sf * sf * math.sqrt(2.0 * Lq[i] * L[j] / s) * math.exp(-d * d / s)
    return out


@njit(cache=True, nogil=True)
def _norm(v):
    return math.sqrt(v @ v)


def _scg_core(args, x0, max_iterations, gtol, sigma0, lambda_init, rtol):
    """Compiled twin of ``opt.scg``; the global ``_FG(x, *args)`` returns ``(status, f, g)``.

    Returns ``(x, trace, n_trace, iterations, evaluations, code)``; ``code``:
    0 max iterations, 1 gradient tolerance, 2 relative change, 3 direction
    vanished, 4 curvature probe failed, 5 scale saturated, -1 bad start.
    """
    x = x0.copy()
    nparams = x.shape[0]
    trace = np.empty(max_iterations + 1)
    status, fold, gnew = _FG(x, *args)
    evals = 1
    if status != 0 or not math.isfinite(fold):
        return x, trace, 0, 0, evals, -1
    trace[0] = fold
    nt = 1
    if _norm(gnew) < gtol:
        return x, trace, nt, 0, evals, 1
    lam = lambda_init
    lam_min = 1e-15
    lam_max = 1e100
    d = -gnew
    gold = gnew
    success = True
    nsuccess = 0
    mu = 0.0
    kappa = 0.0
    theta = 0.0
    code = 0
    it = 0
    eps = 2.220446049250313e-16
    while it < max_iterations:
        it += 1
        if success:
            mu = d @ gnew
            if mu >= 0:
                d = -gnew
                mu = d @ gnew
            kappa = d @ d
            if kappa < eps:
                code = 3
                break
            sigma = sigma0 / math.sqrt(kappa)
            status, fp, gplus = _FG(x + sigma * d, *args)
            evals += 1
            if status != 0 or not math.isfinite(fp):
                status, fm, gminus = _FG(x - sigma * d, *args)
                evals += 1
                if status != 0 or not math.isfinite(fm):
                    code = 4
                    break
                theta = d @ (gnew - gminus) / sigma
            else:
                theta = d @ (gplus - gnew) / sigma
        delta = theta + lam * kappa
        if delta <= 0:
            delta = lam * kappa
            lam = lam - theta / kappa
        step = -mu / delta
        xnew = x + step * d
        status, fnew, gtrial = _FG(xnew, *args)
        evals += 1
        if status == 0 and math.isfinite(fnew):
            ratio = 2.0 * (fnew - fold) / (step * mu)
        else:
            ratio = -math.inf
        if ratio >= 0:
            success = True
            nsuccess += 1
            x = xnew
            rel = abs(fold - fnew) <= rtol * abs(fold)
            fold = fnew
            gold = gnew
            gnew = gtrial
            trace[nt] = fnew
            nt += 1
            if _norm(gnew) < gtol:
                code = 1
                break
            if rel:
                code = 2
                break
        else:
            success = False
        if ratio < 0.25:
            lam = min(4.0 * lam, lam_max)
            if lam >= lam_max:
                code = 5
                break
        if ratio > 0.75:
            lam = max(0.5 * lam, lam_min)
        if nsuccess == nparams:
            d = -gnew
            nsuccess = 0
        elif success:
            gamma = ((gold - gnew) @ gnew) / mu
            d = gamma * d - gnew
    return x, trace, nt, it, evals, code


@njit(cache=True, nogil=True)
def segment_fg(x, z, d2rr, d2rs, d2ss, l_min, l_max, lo, hi):
    return evaluate_nb(x, z, d2rr, d2rs, d2ss, l_min, l_max, lo, hi, True)


_FG = segment_fg
# _scg_core resolves _FG at compile time; binding it to segment_fg here keeps
# the per-segment optimizer in numba's on-disk cache
scg_segment_nb = njit(cache=True, nogil=True)(_scg_core)
_specialized = {}


def scg_nb(fg, args, x0, max_iterations, gtol, sigma0, lambda_init, rtol):
    """Run the compiled optimizer on any jitted ``fg(x, *args) -> (status, f, g)``.

    Returns ``(x, trace, n_trace, iterations, evaluations, code)``.
    """
    fn = _specialized.get(fg)
    if fn is None:
        code = _scg_core.__code__
        fn = njit(nogil=True)(FunctionType(code, {**globals(), "_FG": fg}, code.co_name))
        _specialized[fg] = fn
    return fn(args, x0, max_iterations, gtol, sigma0, lambda_init, rtol)
