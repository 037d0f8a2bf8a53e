"""Fit of the internal cavity losses to the headline conversion figures.

Only the internal parts move.  kappa_b^t stays fixed, so gamma_10^e keeps
its value, and kappa_c^e is re-solved together with kappa_c^i so that
gamma_20^e (and with it gamma_21^e) stays fixed too.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
from scipy.optimize import least_squares

from .params import CavityChain, SystemConfig, effective_rates
from .response import small_signal


def chain_with_internal_losses(base: CavityChain, extra_10: float, extra_20: float,
                               gamma_20_e: float) -> CavityChain:
    """Chain whose internal losses add ``extra_10`` to gamma_10^i and
    ``extra_20`` to gamma_20^i while gamma_10^e and gamma_20^e are unchanged."""
    kb = base.total_kappa("b")
    kappa_b_i = extra_10 * kb**2 / (4 * base.g_y**2)
    if kappa_b_i > kb:
        raise ValueError("requested mechanical loss exceeds kappa_b^t")
    kc = 4 * base.g_02**2 / (gamma_20_e + extra_20)
    kappa_c_i = kc * extra_20 / (gamma_20_e + extra_20)
    return replace(base, kappa_b_i=kappa_b_i, kappa_b_e=kb - kappa_b_i,
                   kappa_c_i=kappa_c_i, kappa_c_e=kc - kappa_c_i)


def calibrate_internal_losses(
    cfg: SystemConfig, p_tot: float = 0.36, p_coh: float = 0.32, r_dark: float = 41.0,
    x0: tuple[float, float] = (1e6, 4e6),
) -> CavityChain:
    """Least-squares fit of (kappa_b^i, kappa_c^i) to P_tot, P_coh and R_d."""
    gamma_20_e = effective_rates(cfg.cavity, cfg.emitter).gamma_20_e

    def chain(params):
        e10, e20 = np.exp(params)
        return chain_with_internal_losses(cfg.cavity, e10, e20, gamma_20_e)

    def residual(params):
        ss = small_signal(replace(cfg, cavity=chain(params)))
        return [(ss.p_tot - p_tot) / 0.01, (ss.p_coh - p_coh) / 0.01,
                math.log(ss.r_dark / r_dark) / 0.05]

    fit = least_squares(residual, np.log(x0), x_scale=1.0)
    return chain(fit.x)
