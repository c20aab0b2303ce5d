"""Compiled inner loops for piecewise-constant propagation of the triplet system.

Every step Hamiltonian here is real symmetric (Omega and Delta are real), so a
cyclic Jacobi sweep gives the eigendecomposition to machine precision and the
step propagator is ``V diag(exp(-i w dt)) V^T``.
"""
import numpy as np
from numba import njit

SQRT1_2 = 1.0 / np.sqrt(2.0)

CONCURRENCE = 0
FIDELITY = 1


@njit(cache=True)
def eigh_sym3(h00, h01, h02, h11, h12, h22, w, V):
    """Jacobi eigendecomposition of a real symmetric 3x3 matrix.

    Eigenvalues go to ``w`` (unsorted) and eigenvectors to the columns of ``V``.
    """
    a = np.empty((3, 3))
    a[0, 0] = h00
    a[0, 1] = h01
    a[0, 2] = h02
    a[1, 0] = h01
    a[1, 1] = h11
    a[1, 2] = h12
    a[2, 0] = h02
    a[2, 1] = h12
    a[2, 2] = h22
    for i in range(3):
        for j in range(3):
            V[i, j] = 1.0 if i == j else 0.0
    for sweep in range(60):
        off = a[0, 1] * a[0, 1] + a[0, 2] * a[0, 2] + a[1, 2] * a[1, 2]
        if off == 0.0:
            break
        for pq in range(3):
            if pq == 0:
                p, q = 0, 1
            elif pq == 1:
                p, q = 0, 2
            else:
                p, q = 1, 2
            apq = a[p, q]
            g = 100.0 * abs(apq)
            if sweep > 3 and abs(a[p, p]) + g == abs(a[p, p]) and abs(a[q, q]) + g == abs(a[q, q]):
                a[p, q] = 0.0
                a[q, p] = 0.0
                continue
            if apq == 0.0:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            if abs(theta) > 1e150:
                t = 0.5 / theta
            else:
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # rotate rows/columns p, q of a, columns of V
            for k in range(3):
                akp = a[k, p]
                akq = a[k, q]
                a[k, p] = c * akp - s * akq
                a[k, q] = s * akp + c * akq
            for k in range(3):
                apk = a[p, k]
                aqk = a[q, k]
                a[p, k] = c * apk - s * aqk
                a[q, k] = s * apk + c * aqk
            a[p, q] = 0.0
            a[q, p] = 0.0
            for k in range(3):
                vkp = V[k, p]
                vkq = V[k, q]
                V[k, p] = c * vkp - s * vkq
                V[k, q] = s * vkp + c * vkq
    w[0] = a[0, 0]
    w[1] = a[1, 1]
    w[2] = a[2, 2]


@njit(cache=True)
def _apply_step(psi, out, om, de, xi, dt, w, V):
    r = om * SQRT1_2
    eigh_sym3(de, r, 0.0, 0.0, r, 4.0 * xi - de, w, V)
    x0 = V[0, 0] * psi[0] + V[1, 0] * psi[1] + V[2, 0] * psi[2]
    x1 = V[0, 1] * psi[0] + V[1, 1] * psi[1] + V[2, 1] * psi[2]
    x2 = V[0, 2] * psi[0] + V[1, 2] * psi[1] + V[2, 2] * psi[2]
    x0 *= np.exp(-1j * w[0] * dt)
    x1 *= np.exp(-1j * w[1] * dt)
    x2 *= np.exp(-1j * w[2] * dt)
    for i in range(3):
        out[i] = V[i, 0] * x0 + V[i, 1] * x1 + V[i, 2] * x2


@njit(cache=True)
def final_states(omega, delta, dt, xi, psi0):
    """Final states for a batch of control sequences, shape (B, N) -> (B, 3)."""
    B, N = omega.shape
    out = np.empty((B, 3), dtype=np.complex128)
    w = np.empty(3)
    V = np.empty((3, 3))
    psi = np.empty(3, dtype=np.complex128)
    nxt = np.empty(3, dtype=np.complex128)
    for b in range(B):
        for i in range(3):
            psi[i] = psi0[i]
        for k in range(N):
            _apply_step(psi, nxt, omega[b, k], delta[b, k], xi, dt, w, V)
            for i in range(3):
                psi[i] = nxt[i]
        for i in range(3):
            out[b, i] = psi[i]
    return out


@njit(cache=True)
def trajectory(omega, delta, dt, xi, psi0):
    """All N+1 states along one control sequence."""
    N = omega.shape[0]
    states = np.empty((N + 1, 3), dtype=np.complex128)
    w = np.empty(3)
    V = np.empty((3, 3))
    for i in range(3):
        states[0, i] = psi0[i]
    for k in range(N):
        _apply_step(states[k], states[k + 1], omega[k], delta[k], xi, dt, w, V)
    return states


@njit(cache=True)
def _metric_costate(psi, metric):
    """Metric value m and row vector r with dm = Re(r . dpsi)."""
    r = np.zeros(3, dtype=np.complex128)
    if metric == CONCURRENCE:
        z = 2.0 * psi[0] * psi[2] - psi[1] * psi[1]
        m = abs(z)
        if m > 1e-300:
            u = np.conj(z) / m
            r[0] = 2.0 * u * psi[2]
            r[1] = -2.0 * u * psi[1]
            r[2] = 2.0 * u * psi[0]
    else:
        m = psi[1].real ** 2 + psi[1].imag ** 2
        r[1] = 2.0 * np.conj(psi[1])
    return m, r


@njit(cache=True)
def metric_and_control_gradient(omega, delta, dt, xi, psi0, metric):
    """Discrete adjoint sweep.

    Returns the final metric value, its derivative with respect to every
    Omega_k and Delta_k, and the final state. The step derivative is taken
    through the eigendecomposition:
    dU = V (G o (V^T dH V)) V^T with G the divided differences of exp(-i w dt).
    """
    N = omega.shape[0]
    states = np.empty((N + 1, 3), dtype=np.complex128)
    ws = np.empty((N, 3))
    Vs = np.empty((N, 3, 3))
    for i in range(3):
        states[0, i] = psi0[i]
    for k in range(N):
        _apply_step(states[k], states[k + 1], omega[k], delta[k], xi, dt, ws[k], Vs[k])

    m, a = _metric_costate(states[N], metric)
    g_om = np.empty(N)
    g_de = np.empty(N)
    G = np.empty((3, 3), dtype=np.complex128)
    ph = np.empty(3, dtype=np.complex128)
    x = np.empty(3, dtype=np.complex128)
    y = np.empty(3, dtype=np.complex128)
    dO = np.empty((3, 3))
    dD = np.empty((3, 3))
    for k in range(N - 1, -1, -1):
        w = ws[k]
        V = Vs[k]
        for i in range(3):
            ph[i] = np.exp(-1j * w[i] * dt)
        for i in range(3):
            for j in range(3):
                d = w[i] - w[j]
                if abs(d) * dt < 1e-6:
                    # divided difference limit, second-order accurate in d
                    G[i, j] = -1j * dt * ph[i] * (1.0 + 0.5j * d * dt)
                else:
                    G[i, j] = (ph[i] - ph[j]) / d
        # x = V^T psi_k, y = (a V)
        for j in range(3):
            x[j] = V[0, j] * states[k, 0] + V[1, j] * states[k, 1] + V[2, j] * states[k, 2]
            y[j] = a[0] * V[0, j] + a[1] * V[1, j] + a[2] * V[2, j]
        # dH/dOmega = (E01 + E10 + E12 + E21)/sqrt2, dH/dDelta = diag(1, 0, -1)
        for i in range(3):
            for j in range(3):
                dO[i, j] = SQRT1_2 * (V[0, i] * V[1, j] + V[1, i] * V[0, j]
                                      + V[1, i] * V[2, j] + V[2, i] * V[1, j])
                dD[i, j] = V[0, i] * V[0, j] - V[2, i] * V[2, j]
        so = 0.0 + 0.0j
        sd = 0.0 + 0.0j
        for i in range(3):
            for j in range(3):
                t = y[i] * G[i, j] * x[j]
                so += t * dO[i, j]
                sd += t * dD[i, j]
        g_om[k] = so.real
        g_de[k] = sd.real
        # a <- a U_k
        for j in range(3):
            y[j] *= ph[j]
        for i in range(3):
            a[i] = y[0] * V[i, 0] + y[1] * V[i, 1] + y[2] * V[i, 2]
    return m, g_om, g_de, states[N].copy()
