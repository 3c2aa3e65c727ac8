"""Hot 1D kernels with a numba path and a pure-numpy fallback.

The compiled path is used unless the environment variable
``ELASTOCONTROL_DISABLE_NUMBA`` is set to a truthy value (``1``, ``true``,
``yes``) before import.  Both paths implement the same contracts and are
cross-checked in the test suite; ``benchmarks/bench_kernels.py`` times them.

Material codes follow :attr:`StrainEnergyModel.code`: 0 SVK ``(lam, mu, -)``,
1 Fung ``(W0, beta, gamma)``, 2 Ogden ``(gamma, -, -)``.  In 1D the Green
strain of an element with displacement gradient ``g`` is ``g + g**2 / 2``.
"""
import os

import numpy as np
from scipy.linalg import solve_banded

_FLAG = os.environ.get("ELASTOCONTROL_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = _FLAG not in ("1", "true", "yes", "on")

if USE_NUMBA:
    from numba import njit
else:  # pragma: no cover - exercised in the fallback job
    njit = None

BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy reference implementations (always importable, used as oracles)

def law_1d_numpy(code, params, E):
    """Energy density, stress and tangent of a 1D law, vectorized over ``E``."""
    E = np.asarray(E, dtype=float)
    if code == 0:
        k = 2.0 * params[1] + params[0]
        return 0.5 * k * E * E, k * E, np.full_like(E, k)
    if code == 1:
        W0, beta, gamma = params[0], params[1], params[2]
        ex = np.exp(gamma * E * E)
        return (W0 + beta * (ex - 1.0), 2.0 * gamma * beta * ex * E,
                beta * ex * (2.0 * gamma + 4.0 * gamma * gamma * E * E))
    gamma = params[0]
    c = 2.0 * E + 1.0
    return (c**gamma - 1.0, 2.0 * gamma * c ** (gamma - 1.0),
            4.0 * gamma * (gamma - 1.0) * c ** (gamma - 2.0))


def element_response_numpy(code, params, grads):
    """Per-element energy density, first Piola stress and its derivative in ``g``."""
    g = np.asarray(grads, dtype=float)
    E = g + 0.5 * g * g
    W, S, C = law_1d_numpy(code, params, E)
    F = 1.0 + g
    return W, F * S, S + F * F * C


def scatter_force_numpy(P, n_free):
    # element e joins nodes e and e+1; node 0 is eliminated
    r = np.zeros(n_free)
    r += P
    r[:-1] -= P[1:]
    return r


def assemble_tridiag_numpy(lengths, coef):
    """Diagonals of sum_e coef_e * int phi_i' phi_j' over P1 elements."""
    w = coef / lengths
    diag = w.copy()
    diag[:-1] += w[1:]
    off = -w[1:]
    return off.copy(), diag, off


def solve_tridiag_numpy(lower, diag, upper, rhs):
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    return solve_banded((1, 1), ab, rhs, check_finite=False)


# ---------------------------------------------------------------------------
# compiled implementations

if USE_NUMBA:

    @njit(cache=True)
    def _law_1d_scalar(code, params, E):
        if code == 0:
            k = 2.0 * params[1] + params[0]
            return 0.5 * k * E * E, k * E, k
        if code == 1:
            W0 = params[0]
            beta = params[1]
            gamma = params[2]
            ex = np.exp(gamma * E * E)
            return (W0 + beta * (ex - 1.0), 2.0 * gamma * beta * ex * E,
                    beta * ex * (2.0 * gamma + 4.0 * gamma * gamma * E * E))
        gamma = params[0]
        c = 2.0 * E + 1.0
        return (c**gamma - 1.0, 2.0 * gamma * c ** (gamma - 1.0),
                4.0 * gamma * (gamma - 1.0) * c ** (gamma - 2.0))

    @njit(cache=True)
    def _element_response_jit(code, params, grads):
        n = grads.shape[0]
        W = np.empty(n)
        P = np.empty(n)
        K = np.empty(n)
        for e in range(n):
            g = grads[e]
            w, s, c = _law_1d_scalar(code, params, g + 0.5 * g * g)
            F = 1.0 + g
            W[e] = w
            P[e] = F * s
            K[e] = s + F * F * c
        return W, P, K

    @njit(cache=True)
    def _scatter_force_jit(P, n_free):
        r = np.zeros(n_free)
        for e in range(n_free):
            r[e] += P[e]
            if e + 1 < n_free:
                r[e] -= P[e + 1]
        return r

    @njit(cache=True)
    def _assemble_tridiag_jit(lengths, coef):
        n = lengths.shape[0]
        diag = np.empty(n)
        off = np.empty(n - 1)
        for e in range(n):
            w = coef[e] / lengths[e]
            diag[e] = w
            if e > 0:
                diag[e - 1] += w
                off[e - 1] = -w
        return off.copy(), diag, off

    @njit(cache=True)
    def _solve_tridiag_jit(lower, diag, upper, rhs):
        # Thomas algorithm; callers pass diagonally dominant or SPD systems
        n = diag.shape[0]
        cp = np.empty(n)
        dp = np.empty(n)
        piv = diag[0]
        if piv == 0.0:
            raise ZeroDivisionError("zero pivot in tridiagonal solve")
        cp[0] = upper[0] / piv if n > 1 else 0.0
        dp[0] = rhs[0] / piv
        for i in range(1, n):
            piv = diag[i] - lower[i - 1] * cp[i - 1]
            if piv == 0.0:
                raise ZeroDivisionError("zero pivot in tridiagonal solve")
            cp[i] = upper[i] / piv if i < n - 1 else 0.0
            dp[i] = (rhs[i] - lower[i - 1] * dp[i - 1]) / piv
        x = np.empty(n)
        x[n - 1] = dp[n - 1]
        for i in range(n - 2, -1, -1):
            x[i] = dp[i] - cp[i] * x[i + 1]
        return x

    def element_response(code, params, grads):
        return _element_response_jit(code, np.asarray(params, dtype=float),
                                     np.ascontiguousarray(grads, dtype=float))

    def scatter_force(P, n_free):
        return _scatter_force_jit(np.ascontiguousarray(P, dtype=float), n_free)

    def assemble_tridiag(lengths, coef):
        return _assemble_tridiag_jit(np.ascontiguousarray(lengths, dtype=float),
                                     np.ascontiguousarray(coef, dtype=float))

    def solve_tridiag(lower, diag, upper, rhs):
        return _solve_tridiag_jit(np.ascontiguousarray(lower, dtype=float),
                                  np.ascontiguousarray(diag, dtype=float),
                                  np.ascontiguousarray(upper, dtype=float),
                                  np.ascontiguousarray(rhs, dtype=float))

else:
    element_response = element_response_numpy
    scatter_force = scatter_force_numpy
    assemble_tridiag = assemble_tridiag_numpy
    solve_tridiag = solve_tridiag_numpy


# ---------------------------------------------------------------------------
# fused time loops (compiled path only; the numpy fallback runs the Python
# reference loops in ``forward`` and ``adjoint``)

STATUS_OK = 0
STATUS_NEWTON = 1
STATUS_SINGULAR = 2
STATUS_NONINJECTIVE = 3

MODE_FREE = 0
MODE_BORDERED = 1
MODE_AUGMENTED = 2

if USE_NUMBA:

    @njit(cache=True)
    def _tri_matvec(lo, d, up, x):
        n = d.shape[0]
        y = np.empty(n)
        for i in range(n):
            s = d[i] * x[i]
            if i > 0:
                s += lo[i - 1] * x[i - 1]
            if i < n - 1:
                s += up[i] * x[i + 1]
            y[i] = s
        return y

    @njit(cache=True)
    def _thomas(lo, d, up, rhs):
        n = d.shape[0]
        cp = np.empty(n)
        dp = np.empty(n)
        x = np.empty(n)
        piv = d[0]
        if piv == 0.0 or not np.isfinite(piv):
            return x, False
        cp[0] = up[0] / piv if n > 1 else 0.0
        dp[0] = rhs[0] / piv
        for i in range(1, n):
            piv = d[i] - lo[i - 1] * cp[i - 1]
            if piv == 0.0 or not np.isfinite(piv):
                return x, False
            cp[i] = up[i] / piv if i < n - 1 else 0.0
            dp[i] = (rhs[i] - lo[i - 1] * dp[i - 1]) / piv
        x[n - 1] = dp[n - 1]
        for i in range(n - 2, -1, -1):
            x[i] = dp[i] - cp[i] * x[i + 1]
        return x, True

    @njit(cache=True)
    def _response(code, params, lengths, u, linearized, k0):
        # element stresses P and tangents K; ok=False on a non-injective element
        ne = lengths.shape[0]
        P = np.empty(ne)
        K = np.empty(ne)
        ok = True
        for e in range(ne):
            left = u[e - 1] if e > 0 else 0.0
            g = (u[e] - left) / lengths[e]
            if linearized:
                P[e] = k0 * g
                K[e] = k0
                continue
            if 1.0 + g <= 0.0:
                ok = False
            w, s, c = _law_1d_scalar(code, params, g + 0.5 * g * g)
            F = 1.0 + g
            P[e] = F * s
            K[e] = s + F * F * c
        return P, K, ok

    @njit(cache=True)
    def _bordered_last(lo, d, up, rhs, target):
        # [[J, e_n], [e_n^T, 0]] [x; lam] = [rhs; target]
        y, ok1 = _thomas(lo, d, up, rhs)
        n = d.shape[0]
        en = np.zeros(n)
        en[n - 1] = 1.0
        z, ok2 = _thomas(lo, d, up, en)
        if not (ok1 and ok2) or z[n - 1] == 0.0:
            return y, 0.0, False
        lam = (y[n - 1] - target) / z[n - 1]
        return y - lam * z, lam, True

    @njit(cache=True)
    def cn_integrate(code, params, lengths, linearized, k0, m_off, m_diag, d_off, d_diag,
                     dt, rhs, u0, v0, mode, rho, al_tol, newton_tol, max_iter, strict):
        steps = rhs.shape[0]
        n = u0.shape[0]
        U = np.empty((steps + 1, n))
        V = np.empty((steps + 1, n))
        lam_out = np.zeros(steps)
        iters = np.zeros(steps, dtype=np.int64)
        U[0] = u0
        V[0] = v0
        # S = 4/dt^2 M + 2/dt kappa A
        s_off = 4.0 / dt**2 * m_off + 2.0 / dt * d_off
        s_diag = 4.0 / dt**2 * m_diag + 2.0 / dt * d_diag
        P, K, ok = _response(code, params, lengths, u0, linearized, k0)
        r_k = np.zeros(n)
        for e in range(n):
            r_k[e] = P[e] - (P[e + 1] if e + 1 < n else 0.0)
        lam_prev = 0.0
        target = u0[n - 1]
        for k in range(steps):
            uk = U[k]
            vk = V[k]
            Mv = _tri_matvec(m_off, m_diag, m_off, vk)
            known = rhs[k] + 4.0 / dt * Mv - r_k
            scale = 1.0
            for i in range(n):
                scale = max(scale, abs(known[i]), abs(r_k[i]))
            tol = newton_tol * scale
            u = uk + dt * vk
            lam = lam_prev
            count = 0
            inner = 0
            outer = 0
            while True:
                P, K, ok = _response(code, params, lengths, u, linearized, k0)
                if strict and not ok:
                    return U, V, lam_out, iters, STATUS_NONINJECTIVE, k, 0.0
                r = np.empty(n)
                for e in range(n):
                    r[e] = P[e] - (P[e + 1] if e + 1 < n else 0.0)
                R = _tri_matvec(s_off, s_diag, s_off, u - uk) + r - known
                cres = u[n - 1] - target
                if mode == MODE_BORDERED:
                    R[n - 1] += lam
                elif mode == MODE_AUGMENTED:
                    R[n - 1] += lam + rho * cres
                rnorm = 0.0
                for i in range(n):
                    rnorm = max(rnorm, abs(R[i]))
                converged = rnorm <= tol
                if mode == MODE_BORDERED:
                    converged = converged and abs(cres) <= 1e-12 * max(1.0, abs(1.0 + target))
                if converged and mode == MODE_AUGMENTED:
                    if abs(cres) <= al_tol:
                        lam = lam + rho * cres
                        break
                    lam = lam + rho * cres
                    inner = 0
                    outer += 1
                    if outer > 100:
                        return U, V, lam_out, iters, STATUS_NEWTON, k, abs(cres)
                    continue
                if converged:
                    break
                if inner >= max_iter or not np.isfinite(rnorm):
                    return U, V, lam_out, iters, STATUS_NEWTON, k, rnorm
                # Jacobian S + K(u)
                j_diag = s_diag.copy()
                j_off = s_off.copy()
                for e in range(n):
                    w = K[e] / lengths[e]
                    j_diag[e] += w
                    if e > 0:
                        j_diag[e - 1] += w
                        j_off[e - 1] -= w
                if mode == MODE_BORDERED:
                    # R carries the current multiplier; solve for the new total
                    R[n - 1] -= lam
                    du, lam, good = _bordered_last(j_off, j_diag, j_off, -R, -cres)
                else:
                    if mode == MODE_AUGMENTED:
                        j_diag[n - 1] += rho
                    du, good = _thomas(j_off, j_diag, j_off, -R)
                if not good:
                    return U, V, lam_out, iters, STATUS_SINGULAR, k, rnorm
                u = u + du
                count += 1
                inner += 1
            U[k + 1] = u
            V[k + 1] = 2.0 * (u - uk) / dt - vk
            lam_out[k] = lam
            lam_prev = lam
            iters[k] = count
            r_k = r
        return U, V, lam_out, iters, STATUS_OK, -1, 0.0

    @njit(cache=True)
    def ie_adjoint(lengths, m_off, m_diag, d_off, d_diag, dt, Kc, cu, cv,
                   jump0, jump1, z0_T, z1_T, constrained):
        steps = Kc.shape[0] - 1
        n = m_diag.shape[0]
        Z0 = np.zeros((steps + 1, n))
        Z1 = np.zeros((steps + 1, n))
        pi = np.zeros(steps + 1)
        Z0[steps] = z0_T
        Z1[steps] = z1_T
        s_off = m_off / dt**2 + d_off / dt
        s_diag = m_diag / dt**2 + d_diag / dt
        for k in range(steps - 1, -1, -1):
            z0n = Z0[k + 1] - jump0[k]
            z1n = Z1[k + 1] - jump1[k]
            k_diag = np.zeros(n)
            k_off = np.zeros(n - 1)
            for e in range(n):
                w = Kc[k, e] / lengths[e]
                k_diag[e] += w
                if e > 0:
                    k_diag[e - 1] += w
                    k_off[e - 1] -= w
            rhs = (_tri_matvec(m_off, m_diag, m_off, z0n) / dt
                   + _tri_matvec(m_off, m_diag, m_off, z1n) / dt**2 - cv[k] / dt - cu[k])
            j_off = s_off + k_off
            j_diag = s_diag + k_diag
            if constrained:
                z1, p, good = _bordered_last(j_off, j_diag, j_off, rhs, 0.0)
            else:
                z1, good = _thomas(j_off, j_diag, j_off, rhs)
                p = 0.0
            if not good:
                return Z0, Z1, pi, STATUS_SINGULAR, k
            src = _tri_matvec(k_off, k_diag, k_off, z1) + cu[k]
            src[n - 1] += p
            m_inv, good = _thomas(m_off, m_diag, m_off, src)
            if not good:
                return Z0, Z1, pi, STATUS_SINGULAR, k
            Z1[k] = z1
            Z0[k] = z0n - dt * m_inv
            pi[k] = p
        return Z0, Z1, pi, STATUS_OK, -1
