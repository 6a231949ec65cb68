"""Pure numpy implementations of the hot kernels (fallback for ``_kernels``)."""
import numpy as np

TWO_PI = 2.0 * np.pi


def _layout(coeffs, half):
    """Frequencies of each axis and the coefficient block to sum.

    With ``half`` the last axis holds ``k2 = 0..K2`` of a hermitian series and
    columns ``k2 > 0`` count twice (they stand in for their conjugates).
    """
    M1, M2 = coeffs.shape[1:]
    k1 = np.arange(M1) - (M1 - 1) // 2
    if not half:
        return k1, np.arange(M2) - (M2 - 1) // 2, coeffs
    wt = np.full(M2, 2.0)
    wt[0] = 1.0
    return k1, np.arange(M2), coeffs * wt


def bandwidth(shape, half=False):
    M1, M2 = shape[-2:]
    return max((M1 - 1) // 2, M2 - 1 if half else (M2 - 1) // 2)


def series_derivatives(coeffs, t, half=False):
    """Value, gradient and Hessian of real-valued 2-D series at one point each.

    ``coeffs`` is ``(P, M1, M2)`` centered (or half, see ``_layout``), ``t``
    is ``(P, 2)``. Returns ``(value (P,), grad (P, 2), hess (P, 2, 2))``.
    """
    t = np.asarray(t, dtype=float)
    k1, k2, coeffs = _layout(np.asarray(coeffs), half)
    w1 = TWO_PI * 1j * k1
    w2 = TWO_PI * 1j * k2
    e1 = np.exp(np.multiply.outer(t[:, 0], w1))
    e2 = np.exp(np.multiply.outer(t[:, 1], w2))
    u0 = np.einsum("pij,pj->pi", coeffs, e2)
    u1 = np.einsum("pij,pj->pi", coeffs, e2 * w2)
    u2 = np.einsum("pij,pj->pi", coeffs, e2 * w2 * w2)
    e1w = e1 * w1
    val = np.einsum("pi,pi->p", e1, u0).real
    g1 = np.einsum("pi,pi->p", e1w, u0).real
    g2 = np.einsum("pi,pi->p", e1, u1).real
    h11 = np.einsum("pi,pi->p", e1w * w1, u0).real
    h12 = np.einsum("pi,pi->p", e1w, u1).real
    h22 = np.einsum("pi,pi->p", e1, u2).real
    grad = np.stack([g1, g2], axis=1)
    hess = np.stack([np.stack([h11, h12], 1), np.stack([h12, h22], 1)], 1)
    return val, grad, hess


def series_values(coeffs, t, half=False):
    t = np.asarray(t, dtype=float)
    k1, k2, coeffs = _layout(np.asarray(coeffs), half)
    e1 = np.exp(TWO_PI * 1j * np.multiply.outer(t[:, 0], k1))
    e2 = np.exp(TWO_PI * 1j * np.multiply.outer(t[:, 1], k2))
    return np.einsum("pi,pij,pj->p", e1, coeffs, e2).real


def newton_refine_batch(coeffs, t0, max_iters, tol=1e-9, backtracks=4, half=False):
    """Safeguarded Newton ascent on a batch of series.

    A step uses ``-H^-1 g`` where the Hessian is negative definite and a
    fixed-length gradient step of ``0.1 / (2 pi (K + 1))`` otherwise. Steps
    that lower the score are halved up to ``backtracks`` times and then
    rejected, so the returned score is never below the starting score.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    P = coeffs.shape[0]
    Kmax = bandwidth(coeffs.shape, half)
    fixed = 0.1 / (TWO_PI * (Kmax + 1))
    t = np.mod(np.asarray(t0, dtype=float).copy(), 1.0)
    score = series_values(coeffs, t, half)
    iters = np.zeros(P, dtype=np.int64)
    done = np.zeros(P, dtype=bool)
    for _ in range(max_iters):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        c = coeffs[act]
        _, g, H = series_derivatives(c, t[act], half)
        det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] ** 2
        concave = (H[:, 0, 0] < 0) & (det > 0)
        safe_det = np.where(concave, det, 1.0)
        newton = np.stack(
            [
                -(H[:, 1, 1] * g[:, 0] - H[:, 0, 1] * g[:, 1]) / safe_det,
                -(-H[:, 0, 1] * g[:, 0] + H[:, 0, 0] * g[:, 1]) / safe_det,
            ],
            axis=1,
        )
        gnorm = np.hypot(g[:, 0], g[:, 1])
        ascent = fixed * g / np.where(gnorm > 0, gnorm, 1.0)[:, None]
        step = np.where(concave[:, None], newton, ascent)
        iters[act] += 1
        accepted = np.zeros(act.size, dtype=bool)
        trial_t = t[act]
        trial_s = score[act]
        scale = 1.0
        pending = np.ones(act.size, dtype=bool)
        for _b in range(backtracks + 1):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            cand = np.mod(t[act[idx]] + scale * step[idx], 1.0)
            s = series_values(c[idx], cand, half)
            ok = s >= score[act[idx]]
            trial_t[idx[ok]] = cand[ok]
            trial_s[idx[ok]] = s[ok]
            accepted[idx[ok]] = True
            pending[idx[ok]] = False
            scale *= 0.5
        step_norm = np.where(accepted, np.hypot(step[:, 0], step[:, 1]), 0.0)
        t[act] = trial_t
        score[act] = trial_s
        small = step_norm < tol
        done[act[small | ~accepted]] = True
    converged = done.copy()
    return t, score, iters, converged


def absorb_samples(num, den, filt, a, y1, y2, c, rows, beta2):
    """In-place running closed-form update for model rows ``rows``.

    For batch entry ``q`` and model row ``p = rows[q]``, with label
    ``y = y1[q, i] * y2[q, j]``: ``num <- (1 - c) num + c conj(a) y``,
    ``den <- (1 - c) den + c |a|^2`` and ``filt = num / (den + beta2)``.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cc = np.asarray(c, float)[:, None, None]
    y = y1[:, :, None] * y2[:, None, :]
    num[rows] = (1 - cc) * num[rows] + cc * np.conj(a) * y
    den[rows] = (1 - cc) * den[rows] + cc * (a.real**2 + a.imag**2)
    filt[rows] = num[rows] / (den[rows] + beta2)
