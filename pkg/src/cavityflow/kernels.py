"""Hot nodewise loops of the time stepper.

Every kernel has a pure-numpy implementation; when numba is importable
the jitted variants are used instead.  All writes are to disjoint rows,
so the parallel versions are deterministic for a fixed thread count.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]

    prange = range


def grad_tensor_np(v, st, wg):
    """G[i, a, b] = d v_a / d x_b at node i."""
    return np.einsum("nbs,nsa->nab", wg, v[st])


def grad_scalar_np(f, st, wg):
    """Gradient of a scalar field at every node."""
    return np.einsum("nas,ns->na", wg, f[st])


def predictor_np(v, T, eta, G, st, wlap, wg, interior, gbeta, rho, dt):
    out = np.zeros_like(v)
    sti = st[interior]
    lap = np.einsum("ns,nsa->na", wlap[interior], v[sti])
    grad_eta = np.einsum("nbs,ns->nb", wg[interior], eta[sti])
    adv = np.einsum("nb,nab->na", v[interior], G[interior])
    visc = np.einsum("nb,nab->na", grad_eta, G[interior])
    force = (
        -rho * adv
        + eta[interior, None] * lap
        + visc
        - rho * np.outer(T[interior], gbeta)
    )
    out[interior] = v[interior] + (dt / rho) * force
    return out


def divergence_np(v, st, wg, interior):
    out = np.zeros(len(v))
    out[interior] = np.einsum("nas,nsa->n", wg[interior], v[st[interior]])
    return out


def correct_np(vstar, p, st, wg, interior, dt_over_rho):
    out = vstar.copy()
    grad_p = np.einsum("nas,ns->na", wg[interior], p[st[interior]])
    out[interior] = vstar[interior] - dt_over_rho * grad_p
    return out


def temperature_np(T, v, st, wlap, wg, interior, alpha, dt):
    out = T.copy()
    sti = st[interior]
    lap = np.einsum("ns,ns->n", wlap[interior], T[sti])
    grad = np.einsum("nas,ns->na", wg[interior], T[sti])
    adv = np.einsum("na,na->n", v[interior], grad)
    out[interior] = T[interior] + dt * (alpha * lap - adv)
    return out


if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def grad_tensor_nb(v, st, wg):
        n, s = st.shape
        d = v.shape[1]
        out = np.zeros((n, d, d))
        for i in prange(n):
            for j in range(s):
                idx = st[i, j]
                for a in range(d):
                    va = v[idx, a]
                    for b in range(d):
                        out[i, a, b] += wg[i, b, j] * va
        return out

    @njit(parallel=True, cache=True)
    def grad_scalar_nb(f, st, wg):
        n, s = st.shape
        d = wg.shape[1]
        out = np.zeros((n, d))
        for i in prange(n):
            for j in range(s):
                fj = f[st[i, j]]
                for a in range(d):
                    out[i, a] += wg[i, a, j] * fj
        return out

    @njit(parallel=True, cache=True)
    def predictor_nb(v, T, eta, G, st, wlap, wg, interior, gbeta, rho, dt):
        n, d = v.shape
        s = st.shape[1]
        out = np.zeros((n, d))
        for k in prange(len(interior)):
            i = interior[k]
            lap = np.zeros(d)
            grad_eta = np.zeros(d)
            for j in range(s):
                idx = st[i, j]
                wl = wlap[i, j]
                e = eta[idx]
                for a in range(d):
                    lap[a] += wl * v[idx, a]
                    grad_eta[a] += wg[i, a, j] * e
            for a in range(d):
                adv = 0.0
                visc = 0.0
                for b in range(d):
                    adv += v[i, b] * G[i, a, b]
                    visc += grad_eta[b] * G[i, a, b]
                force = -rho * adv + eta[i] * lap[a] + visc - rho * gbeta[a] * T[i]
                out[i, a] = v[i, a] + (dt / rho) * force
        return out

    @njit(parallel=True, cache=True)
    def divergence_nb(v, st, wg, interior):
        out = np.zeros(len(v))
        for k in prange(len(interior)):
            i = interior[k]
            acc = 0.0
            for j in range(st.shape[1]):
                idx = st[i, j]
                for a in range(v.shape[1]):
                    acc += wg[i, a, j] * v[idx, a]
            out[i] = acc
        return out

    @njit(parallel=True, cache=True)
    def correct_nb(vstar, p, st, wg, interior, dt_over_rho):
        out = vstar.copy()
        d = vstar.shape[1]
        for k in prange(len(interior)):
            i = interior[k]
            for a in range(d):
                gp = 0.0
                for j in range(st.shape[1]):
                    gp += wg[i, a, j] * p[st[i, j]]
                out[i, a] = vstar[i, a] - dt_over_rho * gp
        return out

    @njit(parallel=True, cache=True)
    def temperature_nb(T, v, st, wlap, wg, interior, alpha, dt):
        out = T.copy()
        d = v.shape[1]
        for k in prange(len(interior)):
            i = interior[k]
            lap = 0.0
            adv = 0.0
            for a in range(d):
                grad_a = 0.0
                for j in range(st.shape[1]):
                    grad_a += wg[i, a, j] * T[st[i, j]]
                adv += v[i, a] * grad_a
            for j in range(st.shape[1]):
                lap += wlap[i, j] * T[st[i, j]]
            out[i] = T[i] + dt * (alpha * lap - adv)
        return out

    grad_tensor = grad_tensor_nb
    grad_scalar = grad_scalar_nb
    predictor = predictor_nb
    divergence = divergence_nb
    correct = correct_nb
    temperature = temperature_nb
else:  # pragma: no cover
    grad_tensor = grad_tensor_np
    grad_scalar = grad_scalar_np
    predictor = predictor_np
    divergence = divergence_np
    correct = correct_np
    temperature = temperature_np


def viscosity_from_gradients(G, eta0, n, floor=1e-10, convention="printed"):
    """Power-law viscosity from the velocity gradient tensor.

    'printed' raises half the Frobenius norm of the strain rate to
    (n - 1) / 2; 'invariant' uses the shear rate sqrt(2 tr D^2) with
    exponent n - 1.  Both agree for Newtonian n = 1.
    """
    S2 = np.einsum("nab,nab->n", G + np.swapaxes(G, 1, 2), G + np.swapaxes(G, 1, 2))
    fro = np.sqrt(S2)
    if convention == "printed":
        rate = 0.5 * fro
        exponent = 0.5 * (n - 1.0)
    elif convention == "invariant":
        rate = np.sqrt(0.5) * fro
        exponent = n - 1.0
    else:
        raise ValueError(f"unknown viscosity convention {convention!r}")
    return eta0 * np.maximum(rate, floor) ** exponent
