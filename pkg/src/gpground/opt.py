"""MAP training of one segment: objective, analytic gradient, SCG optimizer.

Parameter vector layout (all unconstrained reals)::

    [log sf, log sn, log sf_bar, log sl_bar, log sn_bar, l_bar_1 .. l_bar_k]

where ``l_bar`` are the latent log length-scale targets at the support
locations. The objective is the negative log posterior

    0.5 * [z' A^-1 z + log|A| + l_bar' B^-1 l_bar + log|B| + (n + k) log 2 pi]

with ``A = K(r, r) + sn^2 I`` built from length-scales exp(mu), mu being the
latent posterior mean at the training radii, and ``B = Kbar + sn_bar^2 I``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .errors import GroundSegError, NonFinite, NonFiniteStart, SingularMatrix
from ._compiled import OUT_OF_DOMAIN, SINGULAR, evaluate_nb, scg_nb, scg_segment_nb
from .gp import robust_cholesky

LOG_2PI = math.log(2 * math.pi)
LOG_PARAM_BOUNDS = (math.log(1e-4), math.log(1e4))
N_HYPER = 5
HYPER_NAMES = ("log_sigma_f", "log_sigma_n", "log_sigma_f_bar", "log_sigma_l_bar", "log_sigma_n_bar")


@dataclass
class Theta:
    log_sigma_f: float
    log_sigma_n: float
    log_sigma_f_bar: float
    log_sigma_l_bar: float
    log_sigma_n_bar: float
    l_bar: np.ndarray

    def to_vector(self):
        return np.concatenate(([self.log_sigma_f, self.log_sigma_n, self.log_sigma_f_bar,
                                self.log_sigma_l_bar, self.log_sigma_n_bar],
                               np.asarray(self.l_bar, float)))

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, float)
        return cls(*(float(v) for v in x[:N_HYPER]), l_bar=x[N_HYPER:].copy())

    @property
    def sigmas(self):
        return {n[4:]: math.exp(getattr(self, n)) for n in HYPER_NAMES}

    def coordinate_names(self):
        return list(HYPER_NAMES) + [f"l_bar_{j}" for j in range(len(self.l_bar))]


@dataclass(frozen=True)
class ScgOptions:
    max_iterations: int = 100
    gradient_tolerance: float = 1e-5
    initial_sigma_scg: float = 1e-4
    lambda_init: float = 1e-6
    relative_tolerance: float = 1e-9

    def __post_init__(self):
        if not (self.max_iterations > 0 and self.gradient_tolerance > 0
                and self.initial_sigma_scg > 0 and self.lambda_init > 0):
            raise ValueError("ScgOptions values must be positive")


@dataclass
class SegmentProblem:
    """Training data of one segment as seen by the optimizer.

    ``z`` is already centered; ``support_r`` are the latent pseudo-input
    locations whose targets live in the parameter vector.
    """

    r: np.ndarray
    z: np.ndarray
    support_r: np.ndarray
    l_min: float = 0.5
    l_max: float = 50.0
    _d2_rr: np.ndarray = field(init=False, repr=False)
    _d2_rs: np.ndarray = field(init=False, repr=False)
    _d2_ss: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.r = np.asarray(self.r, float)
        self.z = np.asarray(self.z, float)
        self.support_r = np.asarray(self.support_r, float)
        self._d2_rr = (self.r[:, None] - self.r[None, :]) ** 2
        self._d2_rs = (self.r[:, None] - self.support_r[None, :]) ** 2
        self._d2_ss = (self.support_r[:, None] - self.support_r[None, :]) ** 2

    @property
    def n(self):
        return self.r.shape[0]

    @property
    def n_support(self):
        return self.support_r.shape[0]


def initial_theta(problem: SegmentProblem, l_bar) -> Theta:
    """Data-scaled starting point for the optimizer."""
    sf = max(float(np.std(problem.z)), 1e-2)
    extent = float(problem.r.max() - problem.r.min()) if problem.n else 1.0
    sl = max(extent / 3.0, 1e-2)
    l_bar = np.clip(np.asarray(l_bar, float), math.log(problem.l_min), math.log(problem.l_max))
    return Theta(math.log(sf), math.log(0.05), 0.0, math.log(sl), math.log(0.1), l_bar)


def _as_vector(theta):
    return theta.to_vector() if isinstance(theta, Theta) else np.asarray(theta, float)


def _in_domain(x, problem):
    lo, hi = LOG_PARAM_BOUNDS
    if not np.all(np.isfinite(x)):
        return False
    if np.any(x[:N_HYPER] < lo) or np.any(x[:N_HYPER] > hi):
        return False
    lb = x[N_HYPER:]
    return not (np.any(lb < math.log(problem.l_min) - 1e-12) or np.any(lb > math.log(problem.l_max) + 1e-12))


def _evaluate_reference(x, problem: SegmentProblem, with_gradient=True):
    """Plain numpy objective and gradient (reference for the compiled path)."""
    if x.shape[0] != N_HYPER + problem.n_support:
        raise ValueError(f"parameter vector has length {x.shape[0]}, "
                         f"expected {N_HYPER + problem.n_support}")
    if not _in_domain(x, problem):
        raise NonFinite("parameters outside the admissible box")
    sf, sn, sfb, slb, snb = np.exp(x[:N_HYPER])
    lbar = x[N_HYPER:]
    n, k = problem.n, problem.n_support

    # latent process
    Kss = sfb**2 * np.exp(-0.5 * problem._d2_ss / slb**2)
    B = Kss + snb**2 * np.eye(k)
    CB, _ = robust_cholesky(B)
    beta = cho_solve((CB, True), lbar, check_finite=False)
    Krs = sfb**2 * np.exp(-0.5 * problem._d2_rs / slb**2)
    mu = Krs @ beta
    Lraw = np.exp(mu)
    L = np.clip(Lraw, problem.l_min, problem.l_max)

    # height process
    L2 = L * L
    S = L2[:, None] + L2[None, :]
    E = np.exp(-problem._d2_rr / S)
    K = sf**2 * np.sqrt(2.0 * L[:, None] * L[None, :] / S) * E
    A = K + sn**2 * np.eye(n)
    CA, _ = robust_cholesky(A)
    alpha = cho_solve((CA, True), problem.z, check_finite=False)

    f = 0.5 * (problem.z @ alpha + 2.0 * np.log(np.diag(CA)).sum()
               + lbar @ beta + 2.0 * np.log(np.diag(CB)).sum() + (n + k) * LOG_2PI)
    if not np.isfinite(f):
        raise NonFinite("objective is not finite")
    if not with_gradient:
        return f, None

    WA = cho_solve((CA, True), np.eye(n), check_finite=False) - np.outer(alpha, alpha)
    WB = cho_solve((CB, True), np.eye(k), check_finite=False) - np.outer(beta, beta)
    g = np.empty_like(x)
    g[0] = np.sum(WA * K)
    g[1] = sn**2 * np.trace(WA)

    # d log k_ij / d L_i; zero on the diagonal
    Li = L[:, None]
    Q = 0.5 / Li - Li / S + 2.0 * problem._d2_rr * Li / (S * S)
    G = np.sum(WA * K * Q, axis=1)
    inside = (Lraw > problem.l_min) & (Lraw < problem.l_max)
    g_mu = np.where(inside, G * L, 0.0)

    h = cho_solve((CB, True), Krs.T @ g_mu, check_finite=False)
    g[N_HYPER:] = beta + h

    Kss_beta = Kss @ beta
    g[2] = 2.0 * (g_mu @ (Krs @ beta)) - 2.0 * (h @ Kss_beta) + np.sum(WB * Kss)
    dKrs = Krs * problem._d2_rs / slb**2
    dKss = Kss * problem._d2_ss / slb**2
    g[3] = g_mu @ (dKrs @ beta) - h @ (dKss @ beta) + 0.5 * np.sum(WB * dKss)
    g[4] = -2.0 * snb**2 * (h @ beta) + snb**2 * np.trace(WB)
    return f, g


def _evaluate(x, problem: SegmentProblem, with_gradient=True):
    if x.shape[0] != N_HYPER + problem.n_support:
        raise ValueError(f"parameter vector has length {x.shape[0]}, "
                         f"expected {N_HYPER + problem.n_support}")
    status, f, g = evaluate_nb(x, problem.z, problem._d2_rr, problem._d2_rs, problem._d2_ss,
                               problem.l_min, problem.l_max, *LOG_PARAM_BOUNDS, with_gradient)
    if status == SINGULAR:
        raise SingularMatrix("covariance factorization failed after maximum jitter")
    if status == OUT_OF_DOMAIN:
        raise NonFinite("parameters outside the admissible box or objective not finite")
    return f, (g if with_gradient else None)


def objective(theta, problem: SegmentProblem) -> float:
    """Negative log posterior of one segment (to be minimized)."""
    return _evaluate(_as_vector(theta), problem, with_gradient=False)[0]


def gradient(theta, problem: SegmentProblem) -> np.ndarray:
    """Analytic gradient of :func:`objective`, in the parameter-vector layout."""
    return _evaluate(_as_vector(theta), problem)[1]


def objective_and_gradient(theta, problem: SegmentProblem):
    return _evaluate(_as_vector(theta), problem)


def fd_gradient(theta, problem=None, step=1e-6, fun=None):
    """Central finite-difference gradient.

    ``fun`` overrides the segment objective with any scalar function of the
    vector (``problem`` is then ignored).
    """
    x = _as_vector(theta).astype(float)
    if fun is None:
        def fun(v):
            return objective(v, problem)
    g = np.empty_like(x)
    for i in range(x.shape[0]):
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (fun(xp) - fun(xm)) / (2.0 * step)
    return g


def relative_error(a, b, floor=1e-3):
    """Coordinate-wise ``|a - b| / max(|a|, |b|, floor)``."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


@dataclass
class ScgResult:
    x: np.ndarray
    fun: float
    trace: list
    iterations: int
    evaluations: int
    message: str


def scg(fun_and_grad, x0, opts: ScgOptions = ScgOptions()) -> ScgResult:
    """Scaled conjugate gradient minimization (Moller's algorithm, no line search).

    ``fun_and_grad(x)`` returns ``(f, g)``; it may raise GroundSegError or
    return a non-finite ``f`` to reject a trial point. ``trace`` holds the
    objective after every accepted step, starting with ``f(x0)``.
    """
    evals = 0

    def safe(x):
        nonlocal evals
        evals += 1
        try:
            f, g = fun_and_grad(x)
        except (GroundSegError, FloatingPointError, np.linalg.LinAlgError):
            return math.inf, None
        if not np.isfinite(f) or g is None or not np.all(np.isfinite(g)):
            return math.inf, None
        return float(f), np.asarray(g, float)

    x = np.asarray(x0, float).copy()
    nparams = x.shape[0]
    fold, gnew = safe(x)
    if not np.isfinite(fold):
        raise NonFiniteStart("objective is not finite at the starting point")
    trace = [fold]
    if np.linalg.norm(gnew) < opts.gradient_tolerance:
        return ScgResult(x, fold, trace, 0, evals, "gradient tolerance")

    lam, lam_min, lam_max = opts.lambda_init, 1e-15, 1e100
    d = -gnew
    gold = gnew
    success, nsuccess = True, 0
    mu = kappa = theta = 0.0
    message = "max iterations"
    it = 0
    for it in range(1, opts.max_iterations + 1):
        if success:
            mu = d @ gnew
            if mu >= 0:
                d = -gnew
                mu = d @ gnew
            kappa = d @ d
            if kappa < np.finfo(float).eps:
                message = "search direction vanished"
                break
            sigma = opts.initial_sigma_scg / math.sqrt(kappa)
            _, gplus = safe(x + sigma * d)
            if gplus is None:
                _, gminus = safe(x - sigma * d)
                if gminus is None:
                    message = "curvature probe failed"
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
        fnew, gtrial = safe(xnew)
        ratio = 2.0 * (fnew - fold) / (step * mu) if np.isfinite(fnew) else -math.inf

        if ratio >= 0:
            success = True
            nsuccess += 1
            x = xnew
            rel = abs(fold - fnew) <= opts.relative_tolerance * abs(fold)
            fold = fnew
            gold, gnew = gnew, gtrial
            trace.append(fnew)
            if np.linalg.norm(gnew) < opts.gradient_tolerance:
                message = "gradient tolerance"
                break
            if rel:
                message = "relative objective change"
                break
        else:
            success = False

        if ratio < 0.25:
            lam = min(4.0 * lam, lam_max)
            if lam >= lam_max:
                message = "scale parameter saturated"
                break
        if ratio > 0.75:
            lam = max(0.5 * lam, lam_min)

        if nsuccess == nparams:
            d = -gnew
            nsuccess = 0
        elif success:
            gamma = ((gold - gnew) @ gnew) / mu
            d = gamma * d - gnew
    return ScgResult(x, fold, trace, it, evals, message)


SCG_MESSAGES = {
    0: "max iterations",
    1: "gradient tolerance",
    2: "relative objective change",
    3: "search direction vanished",
    4: "curvature probe failed",
    5: "scale parameter saturated",
}


def scg_compiled(fg, args, x0, opts: ScgOptions = ScgOptions()) -> ScgResult:
    """Run the compiled SCG on a numba-jitted ``fg(x, *args) -> (status, f, g)``."""
    x, trace, nt, it, evals, code = scg_nb(fg, args, np.asarray(x0, float), opts.max_iterations,
                                           opts.gradient_tolerance, opts.initial_sigma_scg,
                                           opts.lambda_init, opts.relative_tolerance)
    return _scg_result(x, trace, nt, it, evals, code)


def _scg_result(x, trace, nt, it, evals, code):
    if code < 0:
        raise NonFiniteStart("objective is not finite at the starting point")
    return ScgResult(x, float(trace[nt - 1]), trace[:nt].tolist(), it, evals, SCG_MESSAGES[code])


def scg_minimize(problem: SegmentProblem, theta0, opts: ScgOptions = ScgOptions(), result=False):
    """Train one segment; returns ``(Theta, trace)``.

    Accepted steps never increase the objective, so the final point is the
    best one seen. ``result=True`` returns the full ScgResult instead.
    """
    x, trace, nt, it, evals, code = scg_segment_nb(
        (problem.z, problem._d2_rr, problem._d2_rs, problem._d2_ss, float(problem.l_min),
         float(problem.l_max), *LOG_PARAM_BOUNDS), _as_vector(theta0).astype(float), opts.max_iterations,
        opts.gradient_tolerance, opts.initial_sigma_scg, opts.lambda_init, opts.relative_tolerance)
    res = _scg_result(x, trace, nt, it, evals, code)
    return res if result else (Theta.from_vector(res.x), res.trace)


def random_problem(rng, n, k):
    """Random small segment and a parameter point away from every bound.

    Heights follow a smooth profile plus noise; support locations are a
    random subset of the training radii; targets lie in [log 1, log 20].
    """
    n = max(int(n), 2)
    k = min(max(int(k), 1), n)
    r = np.sort(rng.uniform(1.0, 40.0, n))
    while np.any(np.diff(r) < 1e-3):
        r = np.sort(rng.uniform(1.0, 40.0, n))
    z = 0.3 * np.sin(r / rng.uniform(3.0, 8.0)) + rng.normal(0.0, 0.05, n)
    z = z - np.median(z)
    support = np.sort(rng.choice(r, size=k, replace=False))
    problem = SegmentProblem(r, z, support)
    theta = initial_theta(problem, rng.uniform(0.0, math.log(20.0), k))
    x = theta.to_vector()
    x[:N_HYPER] += rng.normal(0.0, 0.3, N_HYPER)
    return problem, Theta.from_vector(x)


def gradcheck(seed=0, sizes=(4, 8, 12, 15), count=20, max_support=6, step=1e-6, corrupt=False):
    """Compare analytic and central-difference gradients on random segments.

    Returns one dict per parameter coordinate per problem. ``corrupt`` adds a
    deliberate error to the analytic gradient (negative control).
    """
    rng = np.random.default_rng(seed)
    rows = []
    for case in range(count):
        n = sizes[case % len(sizes)]
        problem, theta = random_problem(rng, n, rng.integers(1, min(max_support, n) + 1))
        analytic = gradient(theta, problem)
        if corrupt:
            analytic = analytic * 1.01 + 1e-3
        numeric = fd_gradient(theta, problem, step)
        err = relative_error(analytic, numeric)
        for name, a, f, e in zip(theta.coordinate_names(), analytic, numeric, err):
            rows.append({"case": case, "n": problem.n, "n_support": problem.n_support,
                         "coordinate": name, "analytic": float(a), "numeric": float(f),
                         "relative_error": float(e)})
    return rows
