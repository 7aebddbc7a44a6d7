# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled closed-loop kernel.  Mirrors ``_pykernel.advance`` operation for operation."""

from libc.math cimport floor, pow, fabs


def advance(double[::1] x, long long[::1] ist, double[::1] fst,
            const double[:, ::1] noise, Py_ssize_t offset,
            const double[:, ::1] A, const double[:, ::1] Q, const double[:, ::1] M,
            const long long[::1] ip, const double[::1] fp):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t rows = noise.shape[0]
    cdef long long K = ip[0], N = ip[1], p = ip[2], q_exp = ip[3]
    cdef long long settle_T = ip[4], max_T = ip[5], burn_in = ip[6], check_stop = ip[7]
    cdef double L = fp[0], g = fp[1], dN = fp[2], stop_eps = fp[3]

    cdef long long steps = ist[0], m = ist[1], navg = ist[2], consec = ist[3]
    cdef long long n_over = ist[4], max_m = ist[5], stop = ist[6], pending = ist[7]
    cdef long long fix_over = ist[8]
    cdef double S = fst[0], gid = fst[1], max_abs = fst[2], cost_sum = fst[3]

    cdef long long hK = K // 2, hN = N // 2
    cdef double half_n = <double>hN * dN
    cdef double d, half_k, e, c, ci, S_new, amax, acc, fl
    cdef bint in_view
    cdef Py_ssize_t i, j, pos = offset
    cdef double s[64]
    cdef double xs[64]

    if n > 64:
        raise ValueError("compiled kernel supports n <= 64")
    for i in range(n):
        xs[i] = x[i]

    while True:
        if pending:
            pending = 0
            amax = 0.0
            for i in range(n):
                if fabs(xs[i]) > amax:
                    amax = fabs(xs[i])
            if amax > max_abs:
                max_abs = amax
            if steps >= burn_in:
                c = 0.0
                for i in range(n):
                    ci = 0.0
                    for j in range(n):
                        ci += Q[i, j] * xs[j]
                    c += xs[i] * ci
                navg += 1
                S_new = S + (c - S) / <double>navg
                if check_stop and navg >= 2:
                    if fabs(S_new - S) < stop_eps:
                        consec += 1
                    else:
                        consec = 0
                S = S_new
                cost_sum += c
                if check_stop and consec >= settle_T:
                    stop = 1
                    break
                if navg >= max_T:
                    stop = 2
                    break
        if pos >= rows:
            break

        d = L * pow(g, <double>m)
        half_k = <double>hK * d
        in_view = True
        for i in range(n):
            if fabs(xs[i]) > half_k:
                in_view = False
                break
        for i in range(n):
            if in_view:
                fl = floor(xs[i] / d) + <double>hK
                if fl < 0:
                    fl = 0
                elif fl > K - 1:
                    fl = K - 1
                e = xs[i] - (d * (fl - <double>hK) + d / 2.0)
            else:
                e = xs[i]
            if fabs(e) <= half_n:
                fl = floor(e / dN) + <double>hN
                if fl < 0:
                    fl = 0
                elif fl > N - 1:
                    fl = N - 1
                s[i] = e - (dN * (fl - <double>hN) + dN / 2.0)
            else:
                s[i] = e
                fix_over += 1

        acc = 0.0
        for i in range(n):
            ci = 0.0
            for j in range(n):
                ci += M[i, j] * s[j]
            acc += s[i] * ci
        gid += acc

        for i in range(n):
            ci = 0.0
            for j in range(n):
                ci += A[i, j] * s[j]
            xs[i] = ci + noise[pos, i]
        pos += 1

        if not in_view:
            m += q_exp
            n_over += 1
        elif m >= 0:
            m -= p
        if m > max_m:
            max_m = m
        steps += 1
        pending = 1

    for i in range(n):
        x[i] = xs[i]
    ist[0] = steps; ist[1] = m; ist[2] = navg; ist[3] = consec
    ist[4] = n_over; ist[5] = max_m; ist[6] = stop; ist[7] = pending; ist[8] = fix_over
    fst[0] = S; fst[1] = gid; fst[2] = max_abs; fst[3] = cost_sum
    return pos
