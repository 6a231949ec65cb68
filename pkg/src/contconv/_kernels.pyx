# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Same algorithms and signatures as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, fmod, M_PI

cnp.import_array()

ctypedef double complex cplx


cdef inline double wrap(double x) noexcept nogil:
    x = fmod(x, 1.0)
    if x < 0:
        x += 1.0
    if x >= 1.0:
        x -= 1.0
    return x


cdef void fill_phasors(double t, Py_ssize_t kmin, Py_ssize_t M, cplx* e) noexcept nogil:
    # e[i] = exp(2 pi i k t), k = kmin + i, by recurrence resynced every 16 steps
    cdef Py_ssize_t i
    cdef double a
    cdef cplx step = cos(2 * M_PI * t) + 1j * sin(2 * M_PI * t)
    for i in range(M):
        if i % 16 == 0:
            a = 2 * M_PI * t * (kmin + i)
            e[i] = cos(a) + 1j * sin(a)
        else:
            e[i] = e[i - 1] * step


cdef struct Layout:
    Py_ssize_t kmin1
    Py_ssize_t kmin2
    int half


cdef struct Work:
    # phasors for axis 1 (complex) and axis 2 (split, column weights folded in)
    cplx* e1
    double* e2r
    double* e2i
    double* w2
    double* w2sq


cdef inline double col_weight(Layout* L, Py_ssize_t j) noexcept nogil:
    return 2.0 if (L.half and j > 0) else 1.0


cdef void prepare(double t1, double t2, Py_ssize_t M1, Py_ssize_t M2, Layout* L, Work* W) noexcept nogil:
    cdef Py_ssize_t j
    cdef double wt
    fill_phasors(t1, L.kmin1, M1, W.e1)
    # the split axis-2 phasors are built from a complex scratch in e1's tail
    fill_phasors(t2, L.kmin2, M2, W.e1 + M1)
    for j in range(M2):
        wt = col_weight(L, j)
        W.e2r[j] = W.e1[M1 + j].real * wt
        W.e2i[j] = W.e1[M1 + j].imag * wt


cdef double eval_value(const cplx[:, :] c, double t1, double t2, Layout* L, Work* W) noexcept nogil:
    cdef Py_ssize_t M1 = c.shape[0], M2 = c.shape[1], i, j
    cdef const double* cr
    cdef double ur, ui, acc = 0
    prepare(t1, t2, M1, M2, L, W)
    for i in range(M1):
        cr = <const double*> &c[i, 0]
        ur = 0
        ui = 0
        for j in range(M2):
            ur = ur + cr[2 * j] * W.e2r[j] - cr[2 * j + 1] * W.e2i[j]
            ui = ui + cr[2 * j] * W.e2i[j] + cr[2 * j + 1] * W.e2r[j]
        acc = acc + W.e1[i].real * ur - W.e1[i].imag * ui
    return acc


cdef void eval_derivs(const cplx[:, :] c, double t1, double t2, Layout* L, Work* W, double* out) noexcept nogil:
    # out = [value, g1, g2, h11, h12, h22]
    cdef Py_ssize_t M1 = c.shape[0], M2 = c.shape[1], i, j
    cdef const double* cr
    cdef double zr, zi, u0r, u0i, u1r, u1i, u2r, u2i, w1, er, ei
    cdef double v = 0, g1 = 0, g2 = 0, h11 = 0, h12 = 0, h22 = 0
    cdef double p0, q0, p1, q1
    prepare(t1, t2, M1, M2, L, W)
    for i in range(M1):
        cr = <const double*> &c[i, 0]
        u0r = 0
        u0i = 0
        u1r = 0
        u1i = 0
        u2r = 0
        u2i = 0
        for j in range(M2):
            zr = cr[2 * j] * W.e2r[j] - cr[2 * j + 1] * W.e2i[j]
            zi = cr[2 * j] * W.e2i[j] + cr[2 * j + 1] * W.e2r[j]
            u0r = u0r + zr
            u0i = u0i + zi
            u1r = u1r + zr * W.w2[j]
            u1i = u1i + zi * W.w2[j]
            u2r = u2r + zr * W.w2sq[j]
            u2i = u2i + zi * W.w2sq[j]
        w1 = 2 * M_PI * (L.kmin1 + i)
        er = W.e1[i].real
        ei = W.e1[i].imag
        # real and imaginary parts of e1 * u
        p0 = er * u0r - ei * u0i
        q0 = er * u0i + ei * u0r
        p1 = er * u1r - ei * u1i
        q1 = er * u1i + ei * u1r
        v = v + p0
        g1 = g1 - w1 * q0
        g2 = g2 - q1
        h11 = h11 - w1 * w1 * p0
        h12 = h12 - w1 * p1
        h22 = h22 - (er * u2r - ei * u2i)
    out[0] = v
    out[1] = g1
    out[2] = g2
    out[3] = h11
    out[4] = h12
    out[5] = h22


cdef Layout make_layout(Py_ssize_t M1, Py_ssize_t M2, bint half):
    cdef Layout L
    L.kmin1 = -((M1 - 1) // 2)
    L.kmin2 = 0 if half else -((M2 - 1) // 2)
    L.half = half
    return L


cdef class Workspace:
    cdef cplx[:] e1
    cdef double[:] e2r, e2i, w2, w2sq
    cdef Work W

    def __init__(self, Py_ssize_t M1, Py_ssize_t M2, Layout L):
        self.e1 = np.empty(M1 + M2, complex)
        self.e2r = np.empty(M2)
        self.e2i = np.empty(M2)
        k2 = 2 * np.pi * (L.kmin2 + np.arange(M2))
        self.w2 = k2
        self.w2sq = k2 * k2
        self.W.e1 = &self.e1[0]
        self.W.e2r = &self.e2r[0]
        self.W.e2i = &self.e2i[0]
        self.W.w2 = &self.w2[0]
        self.W.w2sq = &self.w2sq[0]


def series_derivatives(coeffs, t, half=False):
    cdef cplx[:, :, :] c = np.ascontiguousarray(coeffs, dtype=complex)
    cdef double[:, :] tt = np.ascontiguousarray(t, dtype=float)
    cdef Py_ssize_t P = c.shape[0], p
    cdef Layout L = make_layout(c.shape[1], c.shape[2], half)
    cdef Workspace ws = Workspace(c.shape[1], c.shape[2], L)
    val = np.empty(P)
    grad = np.empty((P, 2))
    hess = np.empty((P, 2, 2))
    cdef double[:] v = val
    cdef double[:, :] g = grad
    cdef double[:, :, :] h = hess
    cdef double out[6]
    with nogil:
        for p in range(P):
            eval_derivs(c[p], tt[p, 0], tt[p, 1], &L, &ws.W, out)
            v[p] = out[0]
            g[p, 0] = out[1]
            g[p, 1] = out[2]
            h[p, 0, 0] = out[3]
            h[p, 0, 1] = out[4]
            h[p, 1, 0] = out[4]
            h[p, 1, 1] = out[5]
    return val, grad, hess


def series_values(coeffs, t, half=False):
    cdef cplx[:, :, :] c = np.ascontiguousarray(coeffs, dtype=complex)
    cdef double[:, :] tt = np.ascontiguousarray(t, dtype=float)
    cdef Py_ssize_t P = c.shape[0], p
    cdef Layout L = make_layout(c.shape[1], c.shape[2], half)
    cdef Workspace ws = Workspace(c.shape[1], c.shape[2], L)
    val = np.empty(P)
    cdef double[:] v = val
    with nogil:
        for p in range(P):
            v[p] = eval_value(c[p], tt[p, 0], tt[p, 1], &L, &ws.W)
    return val


def newton_refine_batch(coeffs, t0, int max_iters, double tol=1e-9, int backtracks=4, half=False):
    cdef cplx[:, :, :] c = np.ascontiguousarray(coeffs, dtype=complex)
    cdef Py_ssize_t P = c.shape[0], p
    cdef Layout L = make_layout(c.shape[1], c.shape[2], half)
    cdef Workspace ws = Workspace(c.shape[1], c.shape[2], L)
    cdef Py_ssize_t Kmax = max((c.shape[1] - 1) // 2, c.shape[2] - 1 if half else (c.shape[2] - 1) // 2)
    cdef double fixed = 0.1 / (2 * M_PI * (Kmax + 1))
    t_arr = np.mod(np.array(t0, dtype=float), 1.0)
    score_arr = np.empty(P)
    iters_arr = np.zeros(P, dtype=np.int64)
    conv_arr = np.zeros(P, dtype=bool)
    cdef double[:, :] t = t_arr
    cdef double[:] score = score_arr
    cdef long long[:] iters = iters_arr
    cdef cnp.npy_bool[:] conv = conv_arr
    cdef double out[6]
    cdef double trial[6]
    cdef double det, s1, s2, gn, scale, c1, c2, s, nrm
    cdef int it, b, k
    cdef bint accepted, more
    with nogil:
        for p in range(P):
            if max_iters <= 0:
                score[p] = eval_value(c[p], t[p, 0], t[p, 1], &L, &ws.W)
                continue
            # derivatives at an accepted trial point are reused by the next iteration
            eval_derivs(c[p], t[p, 0], t[p, 1], &L, &ws.W, out)
            score[p] = out[0]
            for it in range(max_iters):
                iters[p] += 1
                det = out[3] * out[5] - out[4] * out[4]
                if out[3] < 0 and det > 0:
                    s1 = -(out[5] * out[1] - out[4] * out[2]) / det
                    s2 = -(-out[4] * out[1] + out[3] * out[2]) / det
                else:
                    gn = sqrt(out[1] * out[1] + out[2] * out[2])
                    if gn > 0:
                        s1 = fixed * out[1] / gn
                        s2 = fixed * out[2] / gn
                    else:
                        s1 = 0
                        s2 = 0
                nrm = sqrt(s1 * s1 + s2 * s2)
                more = it + 1 < max_iters and nrm >= tol
                accepted = False
                scale = 1.0
                for b in range(backtracks + 1):
                    c1 = wrap(t[p, 0] + scale * s1)
                    c2 = wrap(t[p, 1] + scale * s2)
                    if more and b == 0:
                        eval_derivs(c[p], c1, c2, &L, &ws.W, trial)
                        s = trial[0]
                    else:
                        s = eval_value(c[p], c1, c2, &L, &ws.W)
                    if s >= score[p]:
                        t[p, 0] = c1
                        t[p, 1] = c2
                        score[p] = s
                        accepted = True
                        break
                    scale *= 0.5
                if not accepted or not more:
                    conv[p] = (not accepted) or nrm < tol
                    break
                if b == 0:
                    for k in range(6):
                        out[k] = trial[k]
                else:
                    eval_derivs(c[p], t[p, 0], t[p, 1], &L, &ws.W, out)
    return t_arr, score_arr, iters_arr, conv_arr


def absorb_samples(num, den, filt, a, y1, y2, c, rows, double beta2):
    """In-place running closed-form update for model rows ``rows``.

    For batch entry ``q`` and model row ``p = rows[q]``, with label
    ``y = y1[q, i] * y2[q, j]``: ``num <- (1 - c) num + c conj(a) y``,
    ``den <- (1 - c) den + c |a|^2`` and ``filt = num / (den + beta2)``.
    """
    cdef cplx[:, :, ::1] N_ = num
    cdef double[:, :, ::1] D = den
    cdef cplx[:, :, ::1] F = filt
    cdef const cplx[:, :, ::1] A = np.ascontiguousarray(a, dtype=complex)
    cdef const cplx[:, ::1] Y1 = np.ascontiguousarray(y1, dtype=complex)
    cdef const cplx[:, ::1] Y2 = np.ascontiguousarray(y2, dtype=complex)
    cdef const double[::1] C = np.ascontiguousarray(c, dtype=float)
    cdef const long long[::1] R = np.ascontiguousarray(rows, dtype=np.int64)
    cdef Py_ssize_t Q = R.shape[0], M1 = A.shape[1], M2 = A.shape[2], q, p, i, j
    cdef double cc, keep, ar, ai, yr, yi, nr, ni, d, inv
    cdef cplx y
    with nogil:
        for q in range(Q):
            p = R[q]
            cc = C[q]
            keep = 1.0 - cc
            for i in range(M1):
                for j in range(M2):
                    y = Y1[q, i] * Y2[q, j]
                    yr = y.real
                    yi = y.imag
                    ar = A[q, i, j].real
                    ai = A[q, i, j].imag
                    # conj(a) * y
                    nr = keep * N_[p, i, j].real + cc * (ar * yr + ai * yi)
                    ni = keep * N_[p, i, j].imag + cc * (ar * yi - ai * yr)
                    d = keep * D[p, i, j] + cc * (ar * ar + ai * ai)
                    N_[p, i, j] = nr + 1j * ni
                    D[p, i, j] = d
                    inv = 1.0 / (d + beta2)
                    F[p, i, j] = nr * inv + 1j * (ni * inv)
