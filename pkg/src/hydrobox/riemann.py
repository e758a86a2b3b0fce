"""Exact Riemann solver for the 1D ideal-gas Euler equations.

Newton iteration on the star-region pressure with two-state initial guess,
then self-similar sampling in xi = x/t.  Used as the analytic oracle for
shock-tube validation runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RiemannState:
    rho: float
    u: float
    p: float

    def sound_speed(self, gamma: float) -> float:
        return math.sqrt(gamma * self.p / self.rho)


def _pressure_function(p: float, s: RiemannState, gamma: float):
    """f_K(p) and df/dp for one side (shock branch for p > p_K, else rarefaction)."""
    a = s.sound_speed(gamma)
    if p > s.p:
        ak = 2.0 / ((gamma + 1.0) * s.rho)
        bk = (gamma - 1.0) / (gamma + 1.0) * s.p
        root = math.sqrt(ak / (p + bk))
        f = (p - s.p) * root
        df = root * (1.0 - 0.5 * (p - s.p) / (p + bk))
    else:
        f = 2.0 * a / (gamma - 1.0) * ((p / s.p) ** ((gamma - 1.0) / (2 * gamma)) - 1.0)
        df = (p / s.p) ** (-(gamma + 1.0) / (2 * gamma)) / (s.rho * a)
    return f, df


def solve_star(left: RiemannState, right: RiemannState, gamma: float,
               tol: float = 1e-12, max_iter: int = 100):
    """Star-region pressure and velocity."""
    du = right.u - left.u
    # two-rarefaction initial guess, floored away from vacuum
    al, ar = left.sound_speed(gamma), right.sound_speed(gamma)
    z = (gamma - 1.0) / (2.0 * gamma)
    p = ((al + ar - 0.5 * (gamma - 1.0) * du) /
         (al / left.p**z + ar / right.p**z)) ** (1.0 / z)
    p = max(p, 1e-12)
    for _ in range(max_iter):
        fl, dfl = _pressure_function(p, left, gamma)
        fr, dfr = _pressure_function(p, right, gamma)
        delta = (fl + fr + du) / (dfl + dfr)
        p_new = max(p - delta, 1e-14)
        if abs(p_new - p) <= tol * max(p, p_new):
            p = p_new
            break
        p = p_new
    fl, _ = _pressure_function(p, left, gamma)
    fr, _ = _pressure_function(p, right, gamma)
    u = 0.5 * (left.u + right.u) + 0.5 * (fr - fl)
    return p, u


def sample(xi, left: RiemannState, right: RiemannState, gamma: float):
    """Solution (rho, u, p) at similarity coordinates xi = x/t (vectorized)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    p_star, u_star = solve_star(left, right, gamma)
    gm1, gp1 = gamma - 1.0, gamma + 1.0
    rho = np.empty_like(xi)
    u = np.empty_like(xi)
    p = np.empty_like(xi)

    for k, x in enumerate(xi):
        if x <= u_star:
            s = left
            a = s.sound_speed(gamma)
            if p_star > s.p:  # left shock
                sp = s.u - a * math.sqrt(gp1 / (2 * gamma) * p_star / s.p
                                         + gm1 / (2 * gamma))
                if x < sp:
                    rk, uk, pk = s.rho, s.u, s.p
                else:
                    ratio = p_star / s.p
                    rk = s.rho * (ratio + gm1 / gp1) / (gm1 / gp1 * ratio + 1.0)
                    uk, pk = u_star, p_star
            else:  # left rarefaction
                head = s.u - a
                a_star = a * (p_star / s.p) ** (gm1 / (2 * gamma))
                tail = u_star - a_star
                if x < head:
                    rk, uk, pk = s.rho, s.u, s.p
                elif x > tail:
                    rk = s.rho * (p_star / s.p) ** (1.0 / gamma)
                    uk, pk = u_star, p_star
                else:  # inside the fan
                    uk = 2.0 / gp1 * (a + gm1 / 2.0 * s.u + x)
                    c = 2.0 / gp1 * (a + gm1 / 2.0 * (s.u - x))
                    rk = s.rho * (c / a) ** (2.0 / gm1)
                    pk = s.p * (c / a) ** (2 * gamma / gm1)
        else:
            s = right
            a = s.sound_speed(gamma)
            if p_star > s.p:  # right shock
                sp = s.u + a * math.sqrt(gp1 / (2 * gamma) * p_star / s.p
                                         + gm1 / (2 * gamma))
                if x > sp:
                    rk, uk, pk = s.rho, s.u, s.p
                else:
                    ratio = p_star / s.p
                    rk = s.rho * (ratio + gm1 / gp1) / (gm1 / gp1 * ratio + 1.0)
                    uk, pk = u_star, p_star
            else:  # right rarefaction
                head = s.u + a
                a_star = a * (p_star / s.p) ** (gm1 / (2 * gamma))
                tail = u_star + a_star
                if x > head:
                    rk, uk, pk = s.rho, s.u, s.p
                elif x < tail:
                    rk = s.rho * (p_star / s.p) ** (1.0 / gamma)
                    uk, pk = u_star, p_star
                else:
                    uk = 2.0 / gp1 * (-a + gm1 / 2.0 * s.u + x)
                    c = 2.0 / gp1 * (a - gm1 / 2.0 * (s.u - x))
                    rk = s.rho * (c / a) ** (2.0 / gm1)
                    pk = s.p * (c / a) ** (2 * gamma / gm1)
        rho[k], u[k], p[k] = rk, uk, pk
    return rho, u, p


def sod_solution(x, t: float, gamma: float = 1.4, x0: float = 0.5,
                 left=(1.0, 0.0, 1.0), right=(0.125, 0.0, 0.1)):
    """Density/velocity/pressure of the standard shock tube at time t."""
    ls = RiemannState(*left)
    rs = RiemannState(*right)
    if t <= 0:
        x = np.atleast_1d(np.asarray(x))
        rho = np.where(x < x0, ls.rho, rs.rho)
        u = np.where(x < x0, ls.u, rs.u)
        p = np.where(x < x0, ls.p, rs.p)
        return rho, u, p
    return sample((np.asarray(x) - x0) / t, ls, rs, gamma)
