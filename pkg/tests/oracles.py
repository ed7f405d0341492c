"""Independent reference computations shared by unit and acceptance tests."""

import numpy as np
from scipy.special import sph_harm_y

from paulizero.spinors import spinor_coupling


def sigma_dot_L(kappa, m, omega):
    """sigma.L Omega from the ladder action on the Y_lm components.

    sigma.L = sigma_z L_z + sigma_+ L_- + sigma_- L_+ with
    L_+- Y_lm = sqrt(l(l+1) - m(m+-1)) Y_{l,m+-1}; independent of the
    spectral route used by apply_K.
    """
    (cu, mu), (cd, md), l = spinor_coupling(kappa, m)
    theta = np.arccos(np.clip(omega[:, 2], -1, 1))
    phi = np.arctan2(omega[:, 1], omega[:, 0])

    def Y(mm):
        return sph_harm_y(l, mm, theta, phi) if abs(mm) <= l else np.zeros(len(omega), complex)

    def lad(mm, s):
        return np.sqrt(l * (l + 1) - mm * (mm + s))

    up = cu * mu * Y(mu) + cd * lad(md, -1) * Y(md - 1)  # sigma_z L_z on up, sigma_+ L_- from down
    dn = -cd * md * Y(md) + cu * lad(mu, 1) * Y(mu + 1)
    return np.stack([up, dn], axis=1)


def gauss_spinor(x):
    r2 = np.sum(x**2, axis=1)
    return np.stack([np.exp(-r2 / 4), 0.3j * np.exp(-r2 / 4)], axis=1)


def angular_spinor(x):
    # (x + i y) e^{-r^2/8} in the upper component: carries l = 1 angular content
    r2 = np.sum(x**2, axis=1)
    g = np.exp(-r2 / 8)
    return np.stack([(x[:, 0] + 1j * x[:, 1]) * g, x[:, 2] * g], axis=1)
