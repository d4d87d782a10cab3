"""Jit-compiled inner loops for time propagation and the optimizer sweep.

All kernels work on plain float64/complex128 arrays. The Hamiltonian is
H(eps) = diag(energies) + eps * mu with real symmetric mu, so propagation
per step is the exponential of a real symmetric matrix applied to a complex
state. The Chebyshev kernels evaluate that exponential through the series
sum_k c_k T_k(Hn) with Hn = (H - center) * inv_radius scaled into [-1, 1];
the coefficients c_k (Bessel-function values) are precomputed by the caller
once per run since dt and the normalization window stay fixed.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def cheb_apply(energies, mu, e, coeffs, center, inv_radius, psi, t0, t1, t2):
    """Overwrite psi with (sum_k coeffs[k] T_k(Hn)) psi for field value e."""
    d = energies.shape[0]
    nterms = coeffs.shape[0]
    for a in range(d):
        t0[a] = psi[a]
    for a in range(d):
        s = energies[a] * psi[a]
        for b in range(d):
            s += e * mu[a, b] * psi[b]
        t1[a] = (s - center * psi[a]) * inv_radius
    for a in range(d):
        psi[a] = coeffs[0] * t0[a] + coeffs[1] * t1[a]
    for k in range(2, nterms):
        for a in range(d):
            s = energies[a] * t1[a]
            for b in range(d):
                s += e * mu[a, b] * t1[b]
            t2[a] = 2.0 * ((s - center * t1[a]) * inv_radius) - t0[a]
        for a in range(d):
            psi[a] += coeffs[k] * t2[a]
            t0[a] = t1[a]
            t1[a] = t2[a]


@njit(cache=True)
def cheb_evolve_grid(energies, mu, eps_steps, coeffs, center, inv_radius,
                     phase, start, forward):
    """Propagate across the whole grid with per-step field values eps_steps.

    Returns states with shape (m + 1, d) indexed by grid point; states[0]
    holds the t = 0 state and states[m] the t = T state regardless of
    direction. For forward evolution pass the e^{-iH dt} coefficient set,
    for backward the conjugate set; phase is the scalar e^{-+ i center dt}.
    """
    m = eps_steps.shape[0]
    d = energies.shape[0]
    out = np.empty((m + 1, d), np.complex128)
    psi = start.astype(np.complex128).copy()
    t0 = np.empty(d, np.complex128)
    t1 = np.empty(d, np.complex128)
    t2 = np.empty(d, np.complex128)
    if forward:
        for a in range(d):
            out[0, a] = psi[a]
        for j in range(m):
            cheb_apply(energies, mu, eps_steps[j], coeffs, center, inv_radius,
                       psi, t0, t1, t2)
            for a in range(d):
                psi[a] *= phase
                out[j + 1, a] = psi[a]
    else:
        for a in range(d):
            out[m, a] = psi[a]
        for j in range(m - 1, -1, -1):
            cheb_apply(energies, mu, eps_steps[j], coeffs, center, inv_radius,
                       psi, t0, t1, t2)
            for a in range(d):
                psi[a] *= phase
                out[j, a] = psi[a]
    return out


@njit(cache=True)
def krotov_sweep(energies, mu, eps_old, gain, chis, psi0s, coeffs, center,
                 inv_radius, phase, eps_cap):
    """Sequential control update with concurrent forward propagation.

    gain holds S(t_j)/lambda0 (already including any state-averaging factor).
    chis has shape (K, n, d) with the adjoint states at every grid point;
    psi0s has shape (K, d). The new field value at t_j is applied on the step
    [t_j, t_{j+1}]. Returns (status, eps_new); status is -1 on success or the
    step index at which |eps| exceeded eps_cap (caller re-normalizes and
    retries).
    """
    nk = psi0s.shape[0]
    n = eps_old.shape[0]
    d = energies.shape[0]
    eps_new = np.empty(n, np.float64)
    psis = psi0s.astype(np.complex128).copy()
    t0 = np.empty(d, np.complex128)
    t1 = np.empty(d, np.complex128)
    t2 = np.empty(d, np.complex128)
    for j in range(n):
        acc = 0.0
        for k in range(nk):
            # Im <chi | mu | psi>
            val = 0.0
            for a in range(d):
                s = 0.0 + 0.0j
                for b in range(d):
                    s += mu[a, b] * psis[k, b]
                val += (np.conj(chis[k, j, a]) * s).imag
            acc += val
        eps_new[j] = eps_old[j] + gain[j] * acc
        if np.abs(eps_new[j]) > eps_cap:
            return j, eps_new
        if j < n - 1:
            for k in range(nk):
                psi = psis[k]
                cheb_apply(energies, mu, eps_new[j], coeffs, center,
                           inv_radius, psi, t0, t1, t2)
                for a in range(d):
                    psi[a] *= phase
    return -1, eps_new


@njit(cache=True)
def eigh_evolve_grid(energies, mu, eps_steps, dt, sign, start, forward):
    """Grid propagation by per-step dense diagonalization.

    Same contract as cheb_evolve_grid; sign = -1.0 gives e^{-iH dt} steps,
    sign = +1.0 the inverse.
    """
    m = eps_steps.shape[0]
    d = energies.shape[0]
    out = np.empty((m + 1, d), np.complex128)
    psi = start.astype(np.complex128).copy()
    h = np.empty((d, d), np.float64)
    y = np.empty(d, np.complex128)
    if forward:
        j0, j1, step = 0, m, 1
        for a in range(d):
            out[0, a] = psi[a]
    else:
        j0, j1, step = m - 1, -1, -1
        for a in range(d):
            out[m, a] = psi[a]
    for j in range(j0, j1, step):
        e = eps_steps[j]
        for a in range(d):
            for b in range(d):
                h[a, b] = e * mu[a, b]
            h[a, a] += energies[a]
        w, v = np.linalg.eigh(h)
        for a in range(d):
            s = 0.0 + 0.0j
            for b in range(d):
                s += v[b, a] * psi[b]
            y[a] = s * np.exp(1j * sign * w[a] * dt)
        for a in range(d):
            s = 0.0 + 0.0j
            for b in range(d):
                s += v[a, b] * y[b]
            psi[a] = s
        if forward:
            for a in range(d):
                out[j + 1, a] = psi[a]
        else:
            for a in range(d):
                out[j, a] = psi[a]
    return out


@njit(cache=True)
def inhom_backward(energies, mu, eps, dt, src_coeff, proj_diag, psis, seed,
                   adjoint_weights):
    """Backward solve of dchi/dt = -iH chi + c P psi(t) from chi(T) = seed.

    Per step [t_j, t_{j+1}] the Hamiltonian is held constant at the field
    value eps[j] (the forward convention), so the homogeneous part is the
    exact adjoint of the forward step. The source quadrature comes in two
    flavors. With adjoint_weights the recursion is the exact discrete
    adjoint of the trapezoid-rule cost c * trapz(<psi|P|psi>):

        chi_j = e^{+iH dt} chi_{j+1} - w_j c dt P psi_j

    with global trapezoid weights w_j (1/2 at both ends, 1 inside); this is
    what a monotonicity-preserving optimizer sweep must consume. Without it
    each step applies the trapezoid rule to the evolved integrand,

        chi_j = e^{+iH dt} (chi_{j+1} - dt/2 s_{j+1}) - dt/2 s_j,

    which converges at second order to the continuous solution at every
    node. Returns chi at all grid points, shape (n, d).
    """
    n = psis.shape[0]
    d = energies.shape[0]
    out = np.empty((n, d), np.complex128)
    chi = seed.astype(np.complex128).copy()
    h = np.empty((d, d), np.float64)
    y = np.empty(d, np.complex128)
    kick = src_coeff * dt
    if adjoint_weights:
        for a in range(d):
            chi[a] -= 0.5 * kick * proj_diag[a] * psis[n - 1, a]
    for a in range(d):
        out[n - 1, a] = chi[a]
    for j in range(n - 2, -1, -1):
        e = eps[j]
        for a in range(d):
            for b in range(d):
                h[a, b] = e * mu[a, b]
            h[a, a] += energies[a]
        w, v = np.linalg.eigh(h)
        if not adjoint_weights:
            for a in range(d):
                chi[a] -= 0.5 * kick * proj_diag[a] * psis[j + 1, a]
        for a in range(d):
            acc_c = 0.0 + 0.0j
            for b in range(d):
                acc_c += v[b, a] * chi[b]
            theta = w[a] * dt
            y[a] = (np.cos(theta) + 1j * np.sin(theta)) * acc_c
        if adjoint_weights:
            node_w = 0.5 if j == 0 else 1.0
        else:
            node_w = 0.5
        for a in range(d):
            acc = 0.0 + 0.0j
            for b in range(d):
                acc += v[a, b] * y[b]
            chi[a] = acc - node_w * kick * proj_diag[a] * psis[j, a]
        for a in range(d):
            out[j, a] = chi[a]
    return out
