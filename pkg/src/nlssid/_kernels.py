"""Compiled recursion kernels shared by the linear and nonlinear simulators.

Both kernels walk the parallel-structure recursion

    x(t+1) = A x(t) + B u(t) + W_af tanh(W_pf [x;u] + b_pf)
    y(t)   = C x(t) + D u(t) + W_ag tanh(W_pg [x;u] + b_pg)

with x(1) = x0.  A purely linear model is the special case of
zero-width hidden layers (empty W/b arrays).

Parameter vector layout used by the Jacobian kernel (row-major vecs):

    vec(A), vec(B), vec(C), vec(D),
    vec(W_pf), b_pf, vec(W_af),
    vec(W_pg), b_pg, vec(W_ag),
    x0

State trajectories are aborted once any |x_i(t)| exceeds ``bound``
(or turns non-finite); the kernels then return the 0-based time index
of the offending state, or -1 on a clean run.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def simulate_kernel(A, B, C, D, Wpf, bpf, Waf, Wpg, bpg, Wag, x0, u, bound):
    N = u.shape[0]
    n_x = A.shape[0]
    n_u = B.shape[1]
    n_y = C.shape[0]
    n_f = bpf.shape[0]
    n_g = bpg.shape[0]
    n_in = n_x + n_u

    y = np.zeros((N, n_y))
    xs = np.zeros((N, n_x))
    x = x0.copy()
    z = np.empty(n_in)
    hf = np.empty(n_f)
    hg = np.empty(n_g)

    for t in range(N):
        for i in range(n_x):
            xs[t, i] = x[i]
            z[i] = x[i]
        for k in range(n_u):
            z[n_x + k] = u[t, k]

        for m in range(n_f):
            a = bpf[m]
            for j in range(n_in):
                a += Wpf[m, j] * z[j]
            hf[m] = math.tanh(a)
        for m in range(n_g):
            a = bpg[m]
            for j in range(n_in):
                a += Wpg[m, j] * z[j]
            hg[m] = math.tanh(a)

        for i in range(n_y):
            acc = 0.0
            for k in range(n_x):
                acc += C[i, k] * x[k]
            for k in range(n_u):
                acc += D[i, k] * u[t, k]
            for m in range(n_g):
                acc += Wag[i, m] * hg[m]
            y[t, i] = acc

        if t < N - 1:
            worst = 0.0
            for i in range(n_x):
                acc = 0.0
                for k in range(n_x):
                    acc += A[i, k] * x[k]
                for k in range(n_u):
                    acc += B[i, k] * u[t, k]
                for m in range(n_f):
                    acc += Waf[i, m] * hf[m]
                z[i] = acc          # reuse z[:n_x] as scratch for x(t+1)
                a = abs(acc)
                if a > worst:
                    worst = a
            if not np.isfinite(worst) or worst > bound:
                return y, xs, t + 1
            for i in range(n_x):
                x[i] = z[i]

    return y, xs, -1


@njit(cache=True)
def jacobian_kernel(A, B, C, D, Wpf, bpf, Waf, Wpg, bpg, Wag, x0, u, bound):
    N = u.shape[0]
    n_x = A.shape[0]
    n_u = B.shape[1]
    n_y = C.shape[0]
    n_f = bpf.shape[0]
    n_g = bpg.shape[0]
    n_in = n_x + n_u

    off_A = 0
    off_B = off_A + n_x * n_x
    off_C = off_B + n_x * n_u
    off_D = off_C + n_y * n_x
    off_Wpf = off_D + n_y * n_u
    off_bpf = off_Wpf + n_f * n_in
    off_Waf = off_bpf + n_f
    off_Wpg = off_Waf + n_x * n_f
    off_bpg = off_Wpg + n_g * n_in
    off_Wag = off_bpg + n_g
    off_x0 = off_Wag + n_y * n_g
    n_th = off_x0 + n_x

    y = np.zeros((N, n_y))
    J = np.zeros((N * n_y, n_th))
    x = x0.copy()
    S = np.zeros((n_x, n_th))        # d x(t) / d theta
    for i in range(n_x):
        S[i, off_x0 + i] = 1.0

    z = np.empty(n_in)
    hf = np.empty(n_f)
    sf = np.empty(n_f)
    hg = np.empty(n_g)
    sg = np.empty(n_g)
    Gx = np.empty((n_y, n_x))
    Fx = np.empty((n_x, n_x))
    xn = np.empty(n_x)

    for t in range(N):
        for i in range(n_x):
            z[i] = x[i]
        for k in range(n_u):
            z[n_x + k] = u[t, k]

        for m in range(n_f):
            a = bpf[m]
            for j in range(n_in):
                a += Wpf[m, j] * z[j]
            h = math.tanh(a)
            hf[m] = h
            sf[m] = 1.0 - h * h
        for m in range(n_g):
            a = bpg[m]
            for j in range(n_in):
                a += Wpg[m, j] * z[j]
            h = math.tanh(a)
            hg[m] = h
            sg[m] = 1.0 - h * h

        for i in range(n_y):
            acc = 0.0
            for k in range(n_x):
                acc += C[i, k] * x[k]
            for k in range(n_u):
                acc += D[i, k] * u[t, k]
            for m in range(n_g):
                acc += Wag[i, m] * hg[m]
            y[t, i] = acc

        # d y(t)/d x(t), then chain through the state sensitivity
        for i in range(n_y):
            for k in range(n_x):
                acc = C[i, k]
                for m in range(n_g):
                    acc += Wag[i, m] * sg[m] * Wpg[m, k]
                Gx[i, k] = acc
        Jt = np.dot(Gx, S)

        for i in range(n_y):
            row = t * n_y + i
            for k in range(n_x):
                Jt[i, off_C + i * n_x + k] += x[k]
            for k in range(n_u):
                Jt[i, off_D + i * n_u + k] += u[t, k]
            for m in range(n_g):
                w = Wag[i, m] * sg[m]
                for j in range(n_in):
                    Jt[i, off_Wpg + m * n_in + j] += w * z[j]
                Jt[i, off_bpg + m] += w
                Jt[i, off_Wag + i * n_g + m] += hg[m]
            for c in range(n_th):
                J[row, c] = Jt[i, c]

        if t < N - 1:
            for i in range(n_x):
                for k in range(n_x):
                    acc = A[i, k]
                    for m in range(n_f):
                        acc += Waf[i, m] * sf[m] * Wpf[m, k]
                    Fx[i, k] = acc
            Sn = np.dot(Fx, S)
            for i in range(n_x):
                for k in range(n_x):
                    Sn[i, off_A + i * n_x + k] += x[k]
                for k in range(n_u):
                    Sn[i, off_B + i * n_u + k] += u[t, k]
                for m in range(n_f):
                    w = Waf[i, m] * sf[m]
                    for j in range(n_in):
                        Sn[i, off_Wpf + m * n_in + j] += w * z[j]
                    Sn[i, off_bpf + m] += w
                    Sn[i, off_Waf + i * n_f + m] += hf[m]

            worst = 0.0
            for i in range(n_x):
                acc = 0.0
                for k in range(n_x):
                    acc += A[i, k] * x[k]
                for k in range(n_u):
                    acc += B[i, k] * u[t, k]
                for m in range(n_f):
                    acc += Waf[i, m] * hf[m]
                xn[i] = acc
                a = abs(acc)
                if a > worst:
                    worst = a
            if not np.isfinite(worst) or worst > bound:
                return y, J, t + 1
            for i in range(n_x):
                x[i] = xn[i]
            S = Sn

    return y, J, -1
