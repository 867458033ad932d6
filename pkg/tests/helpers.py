"""Shared fixtures and independent reference implementations used as oracles."""

from __future__ import annotations

import numpy as np

from rare_sampler import (AugmentedInput, EmbeddingPool, EvaluationLog, FidelityConfig,
                          GpHyperparams, acquisition_J, fit_posterior)
from rare_sampler.gp import mf_kernel_matrix, noise_variances
from rare_sampler.pool import gather_points


def random_problem(rng, n_points=30, dim=2, n_train=8, n_levels=2, gamma=None,
                   jitter=1e-6, spread=1.0):
    """A random pool, log, and fitted posterior for property tests."""
    pool = EmbeddingPool(rng.standard_normal((n_points, dim)) * spread)
    hyper = GpHyperparams(
        lengthscales=rng.uniform(0.5, 2.0, dim),
        signal_var=rng.uniform(0.5, 2.0),
        fid_lengthscales=rng.uniform(0.5, 2.0, (n_levels - 1, dim)),
        fid_signal_var=rng.uniform(0.05, 0.3, n_levels - 1),
        fid_noise_var=rng.uniform(0.005, 0.05, n_levels - 1),
        jitter=jitter,
    )
    log = EvaluationLog()
    chosen = rng.choice(n_points, size=n_train, replace=False)
    for i in chosen:
        lvl = int(rng.integers(0, n_levels))
        log.append(AugmentedInput(int(i), lvl), float(rng.standard_normal()), 1)
    if gamma is None:
        gamma = float(np.quantile(log.value_array, 0.3)) if n_train else 0.0
    state = fit_posterior(pool, log, hyper, gamma)
    return pool, log, hyper, state


def dense_posterior_oracle(pool, log, hyper, q_points, q_levels):
    """Posterior mean/variance through plain dense solves (no Cholesky reuse)."""
    pts, lvls = gather_points(pool, log.inputs)
    y_mean, y_std = log.normalization()
    y = (log.value_array - y_mean) / y_std
    K = mf_kernel_matrix(pts, lvls, pts, lvls, hyper)
    K[np.diag_indices_from(K)] += noise_variances(lvls, hyper)
    Kinv = np.linalg.inv(K)
    Kq = mf_kernel_matrix(q_points, q_levels, pts, lvls, hyper)
    from rare_sampler.gp import prior_variances
    prior = prior_variances(q_levels, hyper)
    mu = Kq @ Kinv @ y
    var = prior - np.einsum("ij,jk,ik->i", Kq, Kinv, Kq)
    return mu * y_std + y_mean, np.maximum(var, 0.0) * y_std**2


def naive_select_batch(state, pool, candidates, costs, targets, budget):
    """From-scratch greedy selection: refactorizes the conditioning covariance
    for every candidate at every step via acquisition_J."""
    pending: list[AugmentedInput] = []
    out = []
    total = 0.0
    remaining = list(zip(candidates, np.asarray(costs, dtype=float)))
    j_cur = acquisition_J(state, pool, pending, targets)
    while total < budget and remaining:
        best = None
        for cand, cost in remaining:
            j_new = acquisition_J(state, pool, pending + [cand], targets)
            value = min(j_new - j_cur, 0.0) / cost
            key = (value, cand.point_index, cand.level)
            if best is None or key < best[0]:
                best = (key, cand, cost, j_new)
        key, cand, cost, j_new = best
        pending.append(cand)
        out.append((cand, min(j_new - j_cur, 0.0), cost))
        j_cur = j_new
        total += cost
        remaining = [(c, co) for c, co in remaining if c != cand]
    return out


def simulate_conditioned_posteriors(state, pool, pending, n_draws, rng):
    """Sample future observations at the pending inputs and return, per draw,
    the updated posterior mean at every pool point together with the fixed
    updated covariance (the GP variance does not depend on the draws)."""
    mp, ml = gather_points(pool, pending)
    A = state.cross_cov_norm(mp, ml, mp, ml)
    A[np.diag_indices_from(A)] += noise_variances(ml, state.hyper)
    n = pool.n_points
    lv0 = np.zeros(n, dtype=np.intp)
    cross = state.cross_cov_norm(pool.points, lv0, mp, ml)        # N x m
    mu0, _ = state.mean_var_norm(pool.points, lv0)
    mu_pending, _ = state.mean_var_norm(mp, ml)
    G = cross @ np.linalg.inv(A)                                   # N x m
    L = np.linalg.cholesky(A)
    draws = mu_pending[None, :] + rng.standard_normal((n_draws, len(pending))) @ L.T
    mu_new = mu0[None, :] + (draws - mu_pending[None, :]) @ G.T    # draws x N
    cov0 = state.cross_cov_norm(pool.points, lv0, pool.points, lv0)
    cov_new = cov0 - G @ cross.T
    return mu_new, cov_new
