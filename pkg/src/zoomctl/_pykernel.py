"""Pure-Python closed-loop kernel (fallback for the compiled ``_ckernel``).

Both kernels perform the same floating-point operations in the same order
and therefore produce bitwise identical state.  See ``kernel.py`` for the
layout of the state arrays.
"""

import math


def advance(x, ist, fst, noise, offset, A, Q, M, ip, fp):
    n = x.shape[0]
    rows = noise.shape[0]
    K, N, p, q_exp, settle_T, max_T, burn_in, check_stop = (int(v) for v in ip)
    L, g, dN, stop_eps = (float(v) for v in fp)

    xs = x.tolist()
    A_ = A.tolist()
    Q_ = Q.tolist()
    M_ = M.tolist()
    W = noise[offset:].tolist()

    steps, m, navg, consec, n_over, max_m, stop, pending, fix_over = (int(v) for v in ist)
    S, gid, max_abs, cost_sum = (float(v) for v in fst)

    hK = K // 2
    hN = N // 2
    half_n = hN * dN
    s = [0.0] * n
    used = 0

    while True:
        if pending:
            pending = 0
            amax = 0.0
            for i in range(n):
                if abs(xs[i]) > amax:
                    amax = abs(xs[i])
            if amax > max_abs:
                max_abs = amax
            if steps >= burn_in:
                c = 0.0
                for i in range(n):
                    ci = 0.0
                    for j in range(n):
                        ci += Q_[i][j] * xs[j]
                    c += xs[i] * ci
                navg += 1
                S_new = S + (c - S) / navg
                if check_stop and navg >= 2:
                    if abs(S_new - S) < stop_eps:
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
        if used >= len(W):
            break

        d = L * math.pow(g, m)
        half_k = hK * d
        in_view = True
        for i in range(n):
            if abs(xs[i]) > half_k:
                in_view = False
                break
        for i in range(n):
            if in_view:
                fl = math.floor(xs[i] / d) + hK
                if fl < 0:
                    fl = 0
                elif fl > K - 1:
                    fl = K - 1
                e = xs[i] - (d * (fl - hK) + d / 2.0)
            else:
                e = xs[i]
            if abs(e) <= half_n:
                fl = math.floor(e / dN) + hN
                if fl < 0:
                    fl = 0
                elif fl > N - 1:
                    fl = N - 1
                s[i] = e - (dN * (fl - hN) + dN / 2.0)
            else:
                s[i] = e
                fix_over += 1

        acc = 0.0
        for i in range(n):
            ci = 0.0
            for j in range(n):
                ci += M_[i][j] * s[j]
            acc += s[i] * ci
        gid += acc

        w = W[used]
        used += 1
        for i in range(n):
            ci = 0.0
            for j in range(n):
                ci += A_[i][j] * s[j]
            xs[i] = ci + w[i]

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
    ist[0], ist[1], ist[2], ist[3] = steps, m, navg, consec
    ist[4], ist[5], ist[6], ist[7], ist[8] = n_over, max_m, stop, pending, fix_over
    fst[0], fst[1], fst[2], fst[3] = S, gid, max_abs, cost_sum
    return offset + used
