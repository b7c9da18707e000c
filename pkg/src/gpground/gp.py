"""Kernels and posterior algebra for the height GP and the latent length-scale GP.

The height process uses the non-stationary kernel

    k(r_i, r_j) = sf^2 (L_i^2)^(1/4) (L_j^2)^(1/4) ((L_i^2 + L_j^2)/2)^(-1/2)
                  * exp(-(r_i - r_j)^2 / (L_i^2 + L_j^2))

with point-wise length-scales L, which come from the posterior mean of a
zero-mean squared-exponential GP over log length-scales.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular

from ._compiled import ns_cross
from .errors import DomainError, SingularMatrix

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)


@dataclass(frozen=True)
class HeightKernelParams:
    sigma_f: float
    sigma_n: float

    def __post_init__(self):
        if not (self.sigma_f > 0 and self.sigma_n > 0):
            raise DomainError("sigma_f and sigma_n must be positive")


@dataclass(frozen=True)
class LatentKernelParams:
    sigma_f_bar: float
    sigma_l_bar: float
    sigma_n_bar: float

    def __post_init__(self):
        if not (self.sigma_f_bar > 0 and self.sigma_l_bar > 0 and self.sigma_n_bar > 0):
            raise DomainError("latent kernel parameters must be positive")


def ns_kernel(r_i, r_j, L_i, L_j, sigma_f):
    """Non-stationary covariance; broadcasts over array arguments."""
    L_i, L_j = np.asarray(L_i, float), np.asarray(L_j, float)
    if np.any(L_i <= 0) or np.any(L_j <= 0) or not sigma_f > 0:
        raise DomainError("length-scales and sigma_f must be positive")
    s = L_i * L_i + L_j * L_j
    d = np.asarray(r_i, float) - np.asarray(r_j, float)
    return sigma_f**2 * np.sqrt(2.0 * L_i * L_j / s) * np.exp(-d * d / s)


def ns_gram(ra, rb, La, Lb, sigma_f):
    """Cross-covariance matrix, shape (len(ra), len(rb))."""
    ra, rb = np.asarray(ra, float), np.asarray(rb, float)
    return ns_kernel(ra[:, None], rb[None, :], np.asarray(La)[:, None], np.asarray(Lb)[None, :], sigma_f)


def se_kernel(a, b, params: LatentKernelParams):
    d = np.asarray(a, float) - np.asarray(b, float)
    return params.sigma_f_bar**2 * np.exp(-0.5 * d * d / params.sigma_l_bar**2)


def se_gram(a, b, params: LatentKernelParams):
    return se_kernel(np.asarray(a, float)[:, None], np.asarray(b, float)[None, :], params)


def robust_cholesky(A):
    """Lower Cholesky factor of ``A + jitter*I``, escalating jitter 1e-10 -> 1e-6.

    Returns ``(factor, jitter)``; raises SingularMatrix past the last rung.
    """
    if not np.all(np.isfinite(A)):
        raise SingularMatrix("matrix has non-finite entries")
    eye = np.eye(A.shape[0])
    for jitter in JITTER_LADDER:
        try:
            return cholesky(A + jitter * eye if jitter else A, lower=True, check_finite=False), jitter
        except LinAlgError:
            continue
    raise SingularMatrix(f"Cholesky failed with jitter up to {JITTER_LADDER[-1]:g}")


def chol_solve(C, b):
    return solve_triangular(C.T, solve_triangular(C, b, lower=True, check_finite=False),
                            lower=False, check_finite=False)


@dataclass
class LatentModel:
    support_r: np.ndarray
    support_l: np.ndarray
    params: LatentKernelParams
    chol_B: np.ndarray
    beta: np.ndarray

    @classmethod
    def fit(cls, support_r, support_l, params: LatentKernelParams):
        support_r = np.asarray(support_r, float)
        support_l = np.asarray(support_l, float)
        if support_r.shape[0] == 0:
            raise DomainError("latent support set is empty")
        B = se_gram(support_r, support_r, params) + params.sigma_n_bar**2 * np.eye(support_r.shape[0])
        C, _ = robust_cholesky(B)
        return cls(support_r, support_l, params, C, chol_solve(C, support_l))

    def predict(self, queries):
        return se_gram(np.atleast_1d(queries), self.support_r, self.params) @ self.beta


def latent_predict(support, queries, params: LatentKernelParams):
    """Posterior mean of the log length-scale process at ``queries``.

    ``support`` is a SupportSet or an ``(r_bar, l_bar)`` pair. The result stays
    in log space.
    """
    if hasattr(support, "l"):
        sr, sl = support.r, support.l
    else:
        sr, sl = support
    return LatentModel.fit(sr, sl, params).predict(queries)


def clamp_length_scale(log_l, l_min=0.5, l_max=50.0):
    return np.clip(np.exp(log_l), l_min, l_max)


@dataclass
class Posterior:
    mean: np.ndarray
    variance: np.ndarray


@dataclass
class GroundModel:
    """Trained height GP for one segment.

    ``z`` holds the centered training heights; ``z_offset`` is added back to
    every prediction.
    """

    r: np.ndarray
    z: np.ndarray
    z_offset: float
    L: np.ndarray
    height: HeightKernelParams
    chol_A: np.ndarray
    alpha: np.ndarray
    latent: LatentModel
    l_min: float = 0.5
    l_max: float = 50.0

    @classmethod
    def fit(cls, r, z, height: HeightKernelParams, latent: LatentModel,
            z_offset=0.0, l_min=0.5, l_max=50.0):
        r = np.asarray(r, float)
        zc = np.asarray(z, float) - z_offset
        L = clamp_length_scale(latent.predict(r), l_min, l_max)
        A = ns_gram(r, r, L, L, height.sigma_f) + height.sigma_n**2 * np.eye(r.shape[0])
        C, _ = robust_cholesky(A)
        return cls(r, zc, float(z_offset), L, height, C, chol_solve(C, zc), latent, l_min, l_max)

    def length_scales(self, query_r):
        return clamp_length_scale(self.latent.predict(query_r), self.l_min, self.l_max)


def height_posterior(model: GroundModel, query_r, query_L=None) -> Posterior:
    """Predictive mean and variance of the ground height at ``query_r``.

    ``query_L`` defaults to the latent-process length-scales at the queries.
    """
    query_r = np.atleast_1d(np.asarray(query_r, float))
    if query_L is None:
        query_L = model.length_scales(query_r)
    query_L = np.ascontiguousarray(np.broadcast_to(np.asarray(query_L, float), query_r.shape))
    Ks = ns_cross(query_r, query_L, model.r, model.L, model.height.sigma_f)
    mean = Ks @ model.alpha + model.z_offset
    v = solve_triangular(model.chol_A, Ks.T, lower=True, check_finite=False)
    var = model.height.sigma_f**2 - np.einsum("ij,ij->j", v, v)
    return Posterior(mean, np.maximum(var, 0.0))
