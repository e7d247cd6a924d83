"""Independent reference implementations used as test oracles.

Each oracle reaches the quantity under test by a different route than the
library (set marginals, sequential conjugate updates, quadrature, naive
loops, brute-force enumeration), so agreement is evidence of correctness
rather than repetition.
"""

import math

import numpy as np


def set_log_marginal(vectors: np.ndarray, between: float, within: float) -> float:
    """Log marginal likelihood of a set of vectors sharing one speaker mean.

    Integrates the product of per-vector Gaussians against the speaker
    prior dimension by dimension via explicit completion of the square:

        integral prod_i N(x_i; y, w) N(y; 0, b) dy
          = (2 pi w)^(-n/2) (2 pi b)^(-1/2) sqrt(2 pi / a) exp(s2/(2a) - q/(2w))

    with a = n/w + 1/b, s = sum(x)/w, q = sum(x^2), per dimension.
    """
    x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    n, dim = x.shape
    a = n / within + 1.0 / between
    s = x.sum(axis=0) / within
    q = (x**2).sum(axis=0)
    per_dim = (
        -0.5 * n * math.log(2.0 * math.pi * within)
        - 0.5 * math.log(2.0 * math.pi * between)
        + 0.5 * math.log(2.0 * math.pi / a)
        + s**2 / (2.0 * a)
        - q / (2.0 * within)
    )
    return float(per_dim.sum())


def two_cov_plda_llr(
    enroll: np.ndarray, test: np.ndarray, between: float, within: float, center: np.ndarray
) -> float:
    """Two-covariance verification log likelihood ratio for one trial.

    log m(enroll + test) - log m(enroll) - log m(test), where m is the
    shared-speaker set marginal. Vectors are centered first.
    """
    e = np.atleast_2d(enroll) - center
    t = np.atleast_2d(test) - center
    joint = np.vstack([e, t])
    return (
        set_log_marginal(joint, between, within)
        - set_log_marginal(e, between, within)
        - set_log_marginal(t, between, within)
    )


def sequential_predictive_log_density(
    samples: np.ndarray, x: np.ndarray, between: float, within: float, center: np.ndarray
) -> float:
    """Posterior predictive via one-sample-at-a-time conjugate updates.

    Starts from the speaker prior N(0, b I) and folds in each centered
    enrollment sample with the standard Gaussian mean update, then
    evaluates N(x; posterior mean, (posterior var + w) I).
    """
    post_mean = np.zeros_like(center)
    post_var = between
    for s in np.atleast_2d(samples):
        sc = s - center
        new_var = 1.0 / (1.0 / post_var + 1.0 / within)
        post_mean = new_var * (post_mean / post_var + sc / within)
        post_var = new_var
    xc = np.asarray(x, dtype=np.float64) - center
    var = post_var + within
    dim = xc.shape[-1]
    return float(
        -0.5 * dim * math.log(2.0 * math.pi * var) - float(((xc - post_mean) ** 2).sum()) / (2.0 * var)
    )


def quadrature_log_marginal_1d(
    x: float, between: float, within: float, half_width: float = 40.0, n_points: int = 200001
) -> float:
    """Trapezoid quadrature of integral N(x; m, w) N(m; 0, b) dm at D=1."""
    grid = np.linspace(-half_width, half_width, n_points)
    lik = np.exp(-0.5 * (x - grid) ** 2 / within) / math.sqrt(2.0 * math.pi * within)
    prior = np.exp(-0.5 * grid**2 / between) / math.sqrt(2.0 * math.pi * between)
    return float(np.log(np.trapezoid(lik * prior, grid)))


def naive_affine_apply(matrix: np.ndarray, offset: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product with explicit double loops."""
    dim = len(offset)
    out = np.zeros(dim)
    for i in range(dim):
        acc = 0.0
        for j in range(dim):
            acc += matrix[i][j] * x[j]
        out[i] = acc + offset[i]
    return out


def central_difference_gradient(fun, matrix: np.ndarray, offset: np.ndarray, step: float):
    """Central finite differences of fun(matrix, offset) in every coordinate."""
    grad_matrix = np.zeros_like(matrix)
    for i in range(matrix.shape[0]):
        for j in range(matrix.shape[1]):
            up = matrix.copy()
            dn = matrix.copy()
            up[i, j] += step
            dn[i, j] -= step
            grad_matrix[i, j] = (fun(up, offset) - fun(dn, offset)) / (2.0 * step)
    grad_offset = np.zeros_like(offset)
    for i in range(offset.shape[0]):
        up = offset.copy()
        dn = offset.copy()
        up[i] += step
        dn[i] -= step
        grad_offset[i] = (fun(matrix, up) - fun(matrix, dn)) / (2.0 * step)
    return grad_matrix, grad_offset


def brute_force_eer(target, nontarget):
    """Threshold-enumeration EER with explicit counting loops.

    Walks every distinct score (plus one point above the maximum) as a
    candidate threshold, counts false acceptances (nontarget >= t) and
    false rejections (target < t) directly, and reads the crossing with
    the same linear-interpolation convention the library pins down.
    Returns (eer, threshold).
    """
    target = [float(s) for s in target]
    nontarget = [float(s) for s in nontarget]
    candidates = sorted(set(target) | set(nontarget))
    candidates.append(candidates[-1] + 1.0)
    far = []
    frr = []
    for t in candidates:
        fa = sum(1 for s in nontarget if s >= t)
        fr = sum(1 for s in target if s < t)
        far.append(fa / len(nontarget))
        frr.append(fr / len(target))
    for i in range(len(candidates)):
        gap = far[i] - frr[i]
        if gap <= 0:
            if gap == 0:
                if i >= 1:
                    threshold = 0.5 * (candidates[i - 1] + candidates[i])
                else:
                    threshold = candidates[i]
                return far[i], threshold
            prev_gap = far[i - 1] - frr[i - 1]
            alpha = prev_gap / (prev_gap - gap)
            eer = far[i - 1] + alpha * (far[i] - far[i - 1])
            threshold = candidates[i - 1] + alpha * (candidates[i] - candidates[i - 1])
            return eer, threshold
    raise AssertionError("no crossing found")
