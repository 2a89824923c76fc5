"""Posterior summaries: shrinkage decomposition, credible intervals, weights.

Conditioned on the variances Omega = (local variances, global variances,
sampling variances), the conditional posterior mean of each area mean
decomposes as

    E(mu_i | y, Omega) = phi_i * ybar_i + (1 - phi_i) * ybar_w

with, per draw,

    A_i     = lam_i * tau2_sq                 across-area variability
    s2_ij   = v_ij + a_ij                     collapsed source variance
    h2_i    = 1 / sum_j (1 / s2_ij)           within-area variability
    phi_i   = A_i / (A_i + h2_i)              overall shrinkage factor
    ybar_i  = sum_j (y_ij/s2_ij) / sum_j (1/s2_ij)
    ybar_w  = sum_i (ybar_i/(A_i+h2_i)) / sum_i (1/(A_i+h2_i))

(`s2`/`h2` are deliberate renames: the symbols usually written for them
collide with the mixing variables and the grand mean used elsewhere.)
For the one-source variant the decomposition degenerates to the classic
two-level form with s2_i = v_i.

Quantile convention: equal-tailed intervals use linear interpolation of
order statistics (numpy default). Fixed so that interval widths are
comparable across models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelVariant, SourcePanel


@dataclass(frozen=True)
class ShrinkageDecomposition:
    """Per-draw shrinkage quantities; arrays broadcast over leading draw axes."""

    A: np.ndarray        # (..., I)
    s2: np.ndarray       # (..., I, J)
    h2: np.ndarray       # (..., I)
    phi: np.ndarray      # (..., I)
    ybar: np.ndarray     # (..., I)
    ybar_w: np.ndarray   # (...)
    cond_mean: np.ndarray  # (..., I)


def source_variance(
    model: ModelVariant,
    lambda_ij,
    lambda_i,
    tau1_sq,
    shape: tuple[int, int] | None = None,
) -> np.ndarray:
    """The source-level variance a_ij implied by the variant structure.

    ``shape`` supplies (I, J) for the unit form, whose variance carries no
    local factors.
    """
    tau1 = np.asarray(tau1_sq, dtype=float)[..., None, None]
    form = model.theta_variance_form
    if form == "product":
        return np.asarray(lambda_ij) * np.asarray(lambda_i)[..., None] * tau1
    if form == "source":
        return np.asarray(lambda_ij) * tau1
    if form == "unit":
        if shape is None:
            raise ValueError("unit form needs an explicit (I, J) shape")
        return np.broadcast_to(tau1, tau1.shape[:-2] + tuple(shape)) + 0.0
    raise ValueError(f"variant {model.tag} has no source-level variance")


def decompose(
    panel: SourcePanel,
    model: ModelVariant,
    lambda_ij,
    lambda_i,
    tau1_sq,
    tau2_sq,
) -> ShrinkageDecomposition:
    """Shrinkage decomposition for one draw or a batch of draws.

    ``lambda_i`` has shape (..., I), ``lambda_ij`` (..., I, J) (ignored for
    the unit and one-source forms), ``tau1_sq``/``tau2_sq`` shape (...).
    """
    v = panel.v
    y = panel.y
    lambda_i = np.asarray(lambda_i, dtype=float)
    tau2 = np.asarray(tau2_sq, dtype=float)
    A = lambda_i * tau2[..., None]
    if model.has_theta_level:
        a = source_variance(model, lambda_ij, lambda_i, tau1_sq, shape=v.shape)
        s2 = v + a
    else:
        s2 = np.broadcast_to(v, A.shape[:-1] + v.shape).astype(float)
    w = 1.0 / s2
    wsum = w.sum(axis=-1)
    h2 = 1.0 / wsum
    ybar = (y * w).sum(axis=-1) / wsum
    phi = A / (A + h2)
    pool_w = 1.0 / (A + h2)
    ybar_w = (ybar * pool_w).sum(axis=-1) / pool_w.sum(axis=-1)
    cond_mean = phi * ybar + (1.0 - phi) * ybar_w[..., None]
    return ShrinkageDecomposition(A=A, s2=s2, h2=h2, phi=phi, ybar=ybar, ybar_w=ybar_w, cond_mean=cond_mean)


def conditional_mean_direct(
    panel: SourcePanel,
    model: ModelVariant,
    lambda_ij,
    lambda_i,
    tau1_sq,
    tau2_sq,
) -> np.ndarray:
    """E(mu | y, Omega) by direct Gaussian conjugacy on the collapsed model.

    Works entirely in precision form: per-cell weights 1/(v + a), area
    precisions, then the flat-prior update of the common level. It never
    forms the shrinkage factors or pooled variances of :func:`decompose`,
    so it is the independent side of the identity check, and it stays
    numerically exact at the extreme variance draws heavy-tailed priors
    produce.
    """
    v = panel.v
    y = panel.y
    d = 1.0 / (np.asarray(lambda_i, dtype=float) * float(tau2_sq))
    if model.has_theta_level:
        a = source_variance(model, lambda_ij, lambda_i, float(tau1_sq), shape=v.shape)
        cell_w = 1.0 / (v + a)
    else:
        cell_w = 1.0 / v
    w = cell_w.sum(axis=1)            # precision of ybar_i given mu_i
    t = (y * cell_w).sum(axis=1)      # precision-weighted data total
    u = d * w / (w + d)               # precision of ybar_i given eta
    eta_hat = (u * (t / w)).sum() / u.sum()
    return (t + d * eta_hat) / (w + d)


def conditional_mean_joint_solve(
    panel: SourcePanel,
    model: ModelVariant,
    lambda_ij,
    lambda_i,
    tau1_sq,
    tau2_sq,
) -> np.ndarray:
    """E(mu | y, Omega) by assembling and solving the full (th, mu, eta) joint.

    The most structure-agnostic cross-check; accurate at moderate variance
    draws but ill-conditioned at heavy-tailed extremes, where
    :func:`conditional_mean_direct` is the reference.
    """
    v = panel.v
    y = panel.y
    I, J = v.shape
    b_i = np.asarray(lambda_i, dtype=float) * float(tau2_sq)
    if model.has_theta_level:
        a = source_variance(model, lambda_ij, lambda_i, float(tau1_sq), shape=(I, J))
        a = np.broadcast_to(a, (I, J))
        n = I * J + I + 1
        Q = np.zeros((n, n))
        rhs = np.zeros(n)
        def th(i, j):
            return i * J + j
        mu0 = I * J
        eta0 = I * J + I
        for i in range(I):
            for j in range(J):
                Q[th(i, j), th(i, j)] += 1.0 / v[i, j] + 1.0 / a[i, j]
                Q[th(i, j), mu0 + i] -= 1.0 / a[i, j]
                Q[mu0 + i, th(i, j)] -= 1.0 / a[i, j]
                Q[mu0 + i, mu0 + i] += 1.0 / a[i, j]
                rhs[th(i, j)] += y[i, j] / v[i, j]
            Q[mu0 + i, mu0 + i] += 1.0 / b_i[i]
            Q[mu0 + i, eta0] -= 1.0 / b_i[i]
            Q[eta0, mu0 + i] -= 1.0 / b_i[i]
            Q[eta0, eta0] += 1.0 / b_i[i]
        sol = np.linalg.solve(Q, rhs)
        return sol[mu0:eta0]
    # one-source: joint over (mu, eta) only
    n = I + 1
    Q = np.zeros((n, n))
    rhs = np.zeros(n)
    for i in range(I):
        Q[i, i] += 1.0 / v[i, 0] + 1.0 / b_i[i]
        Q[i, I] -= 1.0 / b_i[i]
        Q[I, i] -= 1.0 / b_i[i]
        Q[I, I] += 1.0 / b_i[i]
        rhs[i] += y[i, 0] / v[i, 0]
    sol = np.linalg.solve(Q, rhs)
    return sol[:I]


def kappa_weights(panel: SourcePanel, lambda_ij, tau1_sq) -> np.ndarray:
    """Source-level shrinkage weights v / (v + lam_ij * tau1_sq).

    Defined for the source-form variants (m1a/m1b), where the weight
    controls how far each source estimate is pulled toward its area mean.
    Broadcasts over leading draw axes of ``lambda_ij``/``tau1_sq``.
    """
    t = np.asarray(tau1_sq, dtype=float)[..., None, None]
    return panel.v / (panel.v + np.asarray(lambda_ij) * t)


@dataclass(frozen=True)
class QuantitySummary:
    mean: np.ndarray
    sd: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float


def summarize(store, level: float = 0.95, quantity: str = "mu") -> QuantitySummary:
    """Pooled posterior mean, sd and equal-tailed interval for a monitored quantity."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    draws = store.pooled(quantity)
    if draws.size == 0:
        raise ValueError("empty draw store")
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(draws, [alpha, 1.0 - alpha], axis=0, method="linear")
    return QuantitySummary(
        mean=draws.mean(axis=0),
        sd=draws.std(axis=0, ddof=1),
        lower=lo,
        upper=hi,
        level=level,
    )


def phi_distribution(store) -> np.ndarray:
    """Five-number summary (min, q1, median, q3, max) of phi per area, (I, 5)."""
    if "phi" not in store.draws:
        raise KeyError("phi was not monitored during sampling")
    phi = store.pooled("phi")
    qs = np.quantile(phi, [0.0, 0.25, 0.5, 0.75, 1.0], axis=0, method="linear")
    return qs.T
