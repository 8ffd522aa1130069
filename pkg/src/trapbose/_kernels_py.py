"""Pure-NumPy versions of the hot kernels (fallback for ``_kernels``)."""

import math

import numpy as np
from scipy.special import zeta

# Below this argument the small-x expansion is used, above it the direct series.
X_SWITCH = 1.0
_N_ZETA = 32
_N_SERIES = 48

# coefficients zeta(1/2 - k) (-1)^k / k! of g_{1/2}(e^{-x}) - sqrt(pi/x)
ZETA_COEFFS = np.array(
    [zeta(0.5 - k) * (-1) ** k / math.factorial(k) for k in range(_N_ZETA)]
)
_SQRT_K = np.sqrt(np.arange(1, _N_SERIES + 1, dtype=float))


def g_half(x):
    """g_{1/2}(exp(-x)) for x > 0, elementwise."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    near = x < X_SWITCH
    if np.any(near):
        xs = x[near]
        # Horner evaluation of the regular part
        acc = np.full_like(xs, ZETA_COEFFS[-1])
        for c in ZETA_COEFFS[-2::-1]:
            acc = acc * xs + c
        out[near] = np.sqrt(np.pi / xs) + acc
    far = ~near
    if np.any(far):
        z = np.exp(-x[far])
        zk = z.copy()
        acc = z.copy()
        for k in range(1, _N_SERIES):
            zk = zk * z
            acc += zk / _SQRT_K[k]
        out[far] = acc
    return out


def ideal_ladder(mu, temperature, rel_tol=1e-10):
    """sum_j (j+1) g_{1/2}(exp((mu - j - 1)/T)) for every entry of ``mu`` (< 1).

    The sum is cut at the smallest j with (j+1) exp(-j/T) < rel_tol.
    """
    mu = np.asarray(mu, dtype=float)
    t = float(temperature)
    j_max = ladder_cutoff(t, rel_tol)
    j = np.arange(j_max + 1, dtype=float)
    x = ((j[None, :] + 1.0) - mu.reshape(-1, 1)) / t
    total = g_half(x) @ (j + 1.0)
    return total.reshape(mu.shape)


def ladder_cutoff(temperature, rel_tol=1e-10):
    j = 0
    while (j + 1) * math.exp(-j / temperature) >= rel_tol:
        j += 1
    return j


def thermal_accumulate(occupation, phi):
    """sum over sectors and states of occupation * phi**2, per grid node.

    occupation: (n_sectors, n_states); phi: (n_sectors, n_states, n_nodes).
    """
    flat_occ = np.asarray(occupation).reshape(-1)
    flat_phi = np.asarray(phi).reshape(flat_occ.size, -1)
    return flat_occ @ np.square(flat_phi)
