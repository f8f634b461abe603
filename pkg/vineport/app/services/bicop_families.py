"""
Unrotated bivariate copula families.

Every family works on numpy arrays of uniforms already clipped away from
0 and 1 and exposes cdf, log-density, the h-function h(u|v) = dC(u,v)/dv,
its inverse in u, Kendall's tau and the tail dependence pair. All families
here are exchangeable, so dC/du at (u, v) is h(v|u).

Archimedean families are written once in terms of the generator phi and
its inverse psi: C = psi(phi(u) + phi(v)), h = psi'(s) phi'(v),
c = psi''(s) phi'(u) phi'(v). Each generator supplies log(-phi'),
log(-psi') and log(psi'') so densities stay finite in the tails.
"""

from typing import Tuple

import numpy as np
from scipy import integrate, special, stats

from ...schemas import FAMILY_BOUNDS, FamilyId

Params = Tuple[float, ...]

BISECTION_STEPS = 60


def _bisect_increasing(func, target, lo=0.0, hi=1.0, steps=BISECTION_STEPS):
    """Vectorized bisection for x with func(x) = target, func nondecreasing on [lo, hi]"""
    target = np.asarray(target, dtype=float)
    lo = np.full(target.shape, lo, dtype=float)
    hi = np.full(target.shape, hi, dtype=float)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        below = func(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


class BicopFamily:
    family: FamilyId
    # index of the parameter solved for when inverting Kendall's tau, others held at `neutral`
    tau_index: int = 0
    neutral: Params = ()

    @property
    def bounds(self):
        return FAMILY_BOUNDS[self.family]

    @property
    def n_params(self) -> int:
        return len(self.bounds)

    def cdf(self, u, v, p: Params):
        raise NotImplementedError

    def log_pdf(self, u, v, p: Params):
        raise NotImplementedError

    def h2(self, u, v, p: Params):
        raise NotImplementedError

    def h2_inv(self, w, v, p: Params):
        lo, hi = 1e-12, 1.0 - 1e-12
        return _bisect_increasing(lambda x: self.h2(x, v, p), w, lo, hi)

    def tau(self, p: Params) -> float:
        raise NotImplementedError

    def tail(self, p: Params) -> Tuple[float, float]:
        return 0.0, 0.0


class Independence(BicopFamily):
    family = FamilyId.INDEPENDENCE

    def cdf(self, u, v, p):
        return u * v

    def log_pdf(self, u, v, p):
        return np.zeros(np.broadcast(u, v).shape)

    def h2(self, u, v, p):
        return np.broadcast_to(np.asarray(u, dtype=float), np.broadcast(u, v).shape).copy()

    def h2_inv(self, w, v, p):
        return np.broadcast_to(np.asarray(w, dtype=float), np.broadcast(w, v).shape).copy()

    def tau(self, p):
        return 0.0


class Gaussian(BicopFamily):
    family = FamilyId.GAUSSIAN

    def cdf(self, u, v, p):
        rho = p[0]
        x, y = stats.norm.ppf(u), stats.norm.ppf(v)
        x = np.where(x == 0.0, 1e-12, x)
        y = np.where(y == 0.0, 1e-12, y)
        root = np.sqrt(1.0 - rho ** 2)
        tx = special.owens_t(x, (y - rho * x) / (x * root))
        ty = special.owens_t(y, (x - rho * y) / (y * root))
        beta = np.where(x * y < 0.0, 0.5, 0.0)
        return np.clip(0.5 * (stats.norm.cdf(x) + stats.norm.cdf(y)) - tx - ty - beta, 0.0, 1.0)

    def log_pdf(self, u, v, p):
        rho = p[0]
        x, y = stats.norm.ppf(u), stats.norm.ppf(v)
        one = 1.0 - rho ** 2
        return -0.5 * np.log(one) - (rho ** 2 * (x ** 2 + y ** 2) - 2.0 * rho * x * y) / (2.0 * one)

    def h2(self, u, v, p):
        rho = p[0]
        x, y = stats.norm.ppf(u), stats.norm.ppf(v)
        return stats.norm.cdf((x - rho * y) / np.sqrt(1.0 - rho ** 2))

    def h2_inv(self, w, v, p):
        rho = p[0]
        y = stats.norm.ppf(v)
        return stats.norm.cdf(rho * y + np.sqrt(1.0 - rho ** 2) * stats.norm.ppf(w))

    def tau(self, p):
        return 2.0 / np.pi * np.arcsin(p[0])


class StudentT(BicopFamily):
    family = FamilyId.STUDENT
    neutral = (0.0, 8.0)

    def _scale(self, y, rho, nu):
        return np.sqrt((nu + y ** 2) * (1.0 - rho ** 2) / (nu + 1.0))

    def h2(self, u, v, p):
        rho, nu = p
        x, y = stats.t.ppf(u, nu), stats.t.ppf(v, nu)
        return stats.t.cdf((x - rho * y) / self._scale(y, rho, nu), nu + 1.0)

    def h2_inv(self, w, v, p):
        rho, nu = p
        y = stats.t.ppf(v, nu)
        x = rho * y + self._scale(y, rho, nu) * stats.t.ppf(w, nu + 1.0)
        return stats.t.cdf(x, nu)

    def log_pdf(self, u, v, p):
        rho, nu = p
        x, y = stats.t.ppf(u, nu), stats.t.ppf(v, nu)
        one = 1.0 - rho ** 2
        const = (special.gammaln((nu + 2.0) / 2.0) + special.gammaln(nu / 2.0)
                 - 2.0 * special.gammaln((nu + 1.0) / 2.0) - 0.5 * np.log(one))
        quad = (x ** 2 + y ** 2 - 2.0 * rho * x * y) / (nu * one)
        return (const - (nu + 2.0) / 2.0 * np.log1p(quad)
                + (nu + 1.0) / 2.0 * (np.log1p(x ** 2 / nu) + np.log1p(y ** 2 / nu)))

    def cdf(self, u, v, p):
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        out = np.empty(u.shape)
        for idx in np.ndindex(u.shape):
            out[idx] = integrate.quad(
                lambda s: float(self.h2(u[idx], s, p)), 0.0, v[idx], epsabs=1e-13, epsrel=1e-12, limit=200,
            )[0]
        return np.clip(out, 0.0, 1.0)

    def tau(self, p):
        return 2.0 / np.pi * np.arcsin(p[0])

    def tail(self, p):
        rho, nu = p
        lam = 2.0 * stats.t.cdf(-np.sqrt((nu + 1.0) * (1.0 - rho) / (1.0 + rho)), nu + 1.0)
        return float(lam), float(lam)


class Archimedean(BicopFamily):
    """Generic Archimedean copula built from generator pieces"""

    def phi(self, t, p):
        raise NotImplementedError

    def log_ndphi(self, t, p):
        raise NotImplementedError

    def psi(self, s, p):
        raise NotImplementedError

    def log_ndpsi(self, s, p):
        raise NotImplementedError

    def log_d2psi(self, s, p):
        raise NotImplementedError

    def cdf(self, u, v, p):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return np.clip(self.psi(self.phi(u, p) + self.phi(v, p), p), 0.0, 1.0)

    def h2(self, u, v, p):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            s = self.phi(u, p) + self.phi(v, p)
            h = np.exp(self.log_ndpsi(s, p) + self.log_ndphi(v, p))
        return np.clip(np.nan_to_num(h, nan=1.0), 0.0, 1.0)

    def log_pdf(self, u, v, p):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            s = self.phi(u, p) + self.phi(v, p)
            return self.log_d2psi(s, p) + self.log_ndphi(u, p) + self.log_ndphi(v, p)

    def tau(self, p):
        def ratio(t):
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                value = np.exp(np.log(self.phi(t, p)) - self.log_ndphi(t, p))
            return float(value) if np.isfinite(value) else 0.0
        integral = integrate.quad(ratio, 0.0, 1.0, limit=200, epsabs=1e-12)[0]
        return 1.0 - 4.0 * integral


class Clayton(Archimedean):
    family = FamilyId.CLAYTON

    def phi(self, t, p):
        return np.expm1(-p[0] * np.log(t))

    def log_ndphi(self, t, p):
        return np.log(p[0]) - (p[0] + 1.0) * np.log(t)

    def psi(self, s, p):
        return np.exp(-np.log1p(s) / p[0])

    def log_ndpsi(self, s, p):
        a = 1.0 / p[0]
        return np.log(a) - (a + 1.0) * np.log1p(s)

    def log_d2psi(self, s, p):
        a = 1.0 / p[0]
        return np.log(a) + np.log(a + 1.0) - (a + 2.0) * np.log1p(s)

    def h2_inv(self, w, v, p):
        theta = p[0]
        inner = np.expm1(-theta / (1.0 + theta) * np.log(w)) * v ** (-theta) + 1.0
        return np.exp(-np.log(inner) / theta)

    def tau(self, p):
        return p[0] / (p[0] + 2.0)

    def tail(self, p):
        return 2.0 ** (-1.0 / p[0]), 0.0


class Gumbel(Archimedean):
    family = FamilyId.GUMBEL

    def phi(self, t, p):
        return (-np.log(t)) ** p[0]

    def log_ndphi(self, t, p):
        theta = p[0]
        return np.log(theta) + (theta - 1.0) * np.log(-np.log(t)) - np.log(t)

    def psi(self, s, p):
        return np.exp(-s ** (1.0 / p[0]))

    def log_ndpsi(self, s, p):
        a = 1.0 / p[0]
        return np.log(a) + (a - 1.0) * np.log(s) - s ** a

    def log_d2psi(self, s, p):
        a = 1.0 / p[0]
        sa = s ** a
        return -sa + np.log(a) + (a - 2.0) * np.log(s) + np.log(a * sa + 1.0 - a)

    def tau(self, p):
        return 1.0 - 1.0 / p[0]

    def tail(self, p):
        return 0.0, 2.0 - 2.0 ** (1.0 / p[0])


def _debye1(theta: float) -> float:
    def integrand(t):
        return t / np.expm1(t) if t != 0.0 else 1.0
    return integrate.quad(integrand, 0.0, theta, epsabs=1e-13, epsrel=1e-12)[0] / theta


class Frank(Archimedean):
    family = FamilyId.FRANK
    # parameters this close to zero are evaluated as the independence copula
    NEAR_ZERO = 1e-6

    def _near_zero(self, p):
        return abs(p[0]) < self.NEAR_ZERO

    def phi(self, t, p):
        theta = p[0]
        return -np.log(np.expm1(-theta * t) / np.expm1(-theta))

    def log_ndphi(self, t, p):
        theta = p[0]
        return np.log(abs(theta)) - np.log(np.abs(np.expm1(-theta * t))) - theta * t

    def psi(self, s, p):
        theta = p[0]
        g = np.exp(-s) * np.expm1(-theta)
        return -np.log1p(g) / theta

    def log_ndpsi(self, s, p):
        theta = p[0]
        g = np.exp(-s) * np.expm1(-theta)
        return -s + np.log(abs(np.expm1(-theta))) - np.log(abs(theta)) - np.log1p(g)

    def log_d2psi(self, s, p):
        theta = p[0]
        g = np.exp(-s) * np.expm1(-theta)
        return -s + np.log(abs(np.expm1(-theta))) - np.log(abs(theta)) - 2.0 * np.log1p(g)

    def cdf(self, u, v, p):
        if self._near_zero(p):
            return u * v
        return super().cdf(u, v, p)

    def h2(self, u, v, p):
        if self._near_zero(p):
            return Independence().h2(u, v, p)
        return super().h2(u, v, p)

    def log_pdf(self, u, v, p):
        if self._near_zero(p):
            return np.zeros(np.broadcast(u, v).shape)
        return super().log_pdf(u, v, p)

    def h2_inv(self, w, v, p):
        if self._near_zero(p):
            return Independence().h2_inv(w, v, p)
        theta = p[0]
        x = w * np.expm1(-theta) / (np.exp(-theta * v) - w * np.expm1(-theta * v))
        return np.clip(-np.log1p(x) / theta, 0.0, 1.0)

    def tau(self, p):
        theta = p[0]
        if self._near_zero(p):
            return 0.0
        if theta < 0.0:
            return -self.tau((-theta,))
        return 1.0 - 4.0 / theta + 4.0 * _debye1(theta) / theta


class Joe(Archimedean):
    family = FamilyId.JOE

    def phi(self, t, p):
        return -np.log(-np.expm1(p[0] * np.log1p(-t)))

    def log_ndphi(self, t, p):
        theta = p[0]
        return np.log(theta) + (theta - 1.0) * np.log1p(-t) - np.log(-np.expm1(theta * np.log1p(-t)))

    def psi(self, s, p):
        a = 1.0 / p[0]
        return -np.expm1(a * np.log1p(-np.exp(-s)))

    def log_ndpsi(self, s, p):
        a = 1.0 / p[0]
        return np.log(a) + (a - 1.0) * np.log(-np.expm1(-s)) - s

    def log_d2psi(self, s, p):
        a = 1.0 / p[0]
        return np.log(a) - s + (a - 2.0) * np.log(-np.expm1(-s)) + np.log1p(-a * np.exp(-s))

    def tail(self, p):
        return 0.0, 2.0 - 2.0 ** (1.0 / p[0])


class PowerArchimedean(Archimedean):
    """Generator phi_inner(t; theta) ** delta, inverse psi_inner(s ** (1/delta))"""
    inner: Archimedean

    def _split(self, p):
        return (p[0],), p[1]

    def phi(self, t, p):
        q, delta = self._split(p)
        return self.inner.phi(t, q) ** delta

    def log_ndphi(self, t, p):
        q, delta = self._split(p)
        return np.log(delta) + (delta - 1.0) * np.log(self.inner.phi(t, q)) + self.inner.log_ndphi(t, q)

    def psi(self, s, p):
        q, delta = self._split(p)
        return self.inner.psi(s ** (1.0 / delta), q)

    def log_ndpsi(self, s, p):
        q, delta = self._split(p)
        b = 1.0 / delta
        return self.inner.log_ndpsi(s ** b, q) + np.log(b) + (b - 1.0) * np.log(s)

    def log_d2psi(self, s, p):
        q, delta = self._split(p)
        b = 1.0 / delta
        x = s ** b
        curvature = self.inner.log_d2psi(x, q) + 2.0 * np.log(b) + (2.0 * b - 2.0) * np.log(s)
        slope = self.inner.log_ndpsi(x, q) + np.log(b) + np.log(1.0 - b) + (b - 2.0) * np.log(s)
        return np.logaddexp(curvature, slope)


class BB1(PowerArchimedean):
    family = FamilyId.BB1
    inner = Clayton()
    neutral = (1.0, 1.0)

    def tau(self, p):
        theta, delta = p
        return 1.0 - 2.0 / (delta * (theta + 2.0))

    def tail(self, p):
        theta, delta = p
        return 2.0 ** (-1.0 / (theta * delta)), 2.0 - 2.0 ** (1.0 / delta)


class BB6(PowerArchimedean):
    family = FamilyId.BB6
    inner = Joe()
    neutral = (1.0, 1.0)

    def tail(self, p):
        theta, delta = p
        return 0.0, 2.0 - 2.0 ** (1.0 / (theta * delta))


class BB7(Archimedean):
    family = FamilyId.BB7
    tau_index = 1
    neutral = (1.0, 1.0)

    def phi(self, t, p):
        theta, delta = p
        k = -np.expm1(theta * np.log1p(-t))
        return np.expm1(-delta * np.log(k))

    def log_ndphi(self, t, p):
        theta, delta = p
        k = -np.expm1(theta * np.log1p(-t))
        return np.log(delta) + np.log(theta) - (delta + 1.0) * np.log(k) + (theta - 1.0) * np.log1p(-t)

    def psi(self, s, p):
        theta, delta = p
        one_minus_y = -np.expm1(-np.log1p(s) / delta)
        return -np.expm1(np.log(one_minus_y) / theta)

    def log_ndpsi(self, s, p):
        theta, delta = p
        a, big = 1.0 / theta, np.log1p(s)
        one_minus_y = -np.expm1(-big / delta)
        return np.log(a) - np.log(delta) + (a - 1.0) * np.log(one_minus_y) - (1.0 / delta + 1.0) * big

    def log_d2psi(self, s, p):
        theta, delta = p
        a, big = 1.0 / theta, np.log1p(s)
        y = np.exp(-big / delta)
        one_minus_y = -np.expm1(-big / delta)
        bracket = (1.0 / delta + 1.0) * one_minus_y + (1.0 - a) * y / delta
        return (np.log(a) - np.log(delta) + (a - 2.0) * np.log(one_minus_y)
                - (1.0 / delta + 2.0) * big + np.log(bracket))

    def tail(self, p):
        theta, delta = p
        return 2.0 ** (-1.0 / delta), 2.0 - 2.0 ** (1.0 / theta)


class BB8(Archimedean):
    family = FamilyId.BB8
    neutral = (1.0, 1.0)

    def _eta(self, p):
        theta, delta = p
        with np.errstate(divide="ignore"):
            return -np.expm1(theta * np.log1p(-delta))

    def phi(self, t, p):
        theta, delta = p
        return -np.log(-np.expm1(theta * np.log1p(-delta * t)) / self._eta(p))

    def log_ndphi(self, t, p):
        theta, delta = p
        inner = np.log1p(-delta * t)
        return np.log(theta) + np.log(delta) + (theta - 1.0) * inner - np.log(-np.expm1(theta * inner))

    def psi(self, s, p):
        theta, delta = p
        y = self._eta(p) * np.exp(-s)
        return -np.expm1(np.log1p(-y) / theta) / delta

    def log_ndpsi(self, s, p):
        theta, delta = p
        a = 1.0 / theta
        y = self._eta(p) * np.exp(-s)
        return np.log(a / delta) + np.log(y) + (a - 1.0) * np.log1p(-y)

    def log_d2psi(self, s, p):
        theta, delta = p
        a = 1.0 / theta
        y = self._eta(p) * np.exp(-s)
        return np.log(a / delta) + np.log(y) + (a - 2.0) * np.log1p(-y) + np.log1p(-a * y)

    def tail(self, p):
        theta, delta = p
        return 0.0, (2.0 - 2.0 ** (1.0 / theta)) if delta == 1.0 else 0.0


FAMILIES = {
    FamilyId.INDEPENDENCE: Independence(),
    FamilyId.GAUSSIAN: Gaussian(),
    FamilyId.STUDENT: StudentT(),
    FamilyId.CLAYTON: Clayton(),
    FamilyId.GUMBEL: Gumbel(),
    FamilyId.FRANK: Frank(),
    FamilyId.JOE: Joe(),
    FamilyId.BB1: BB1(),
    FamilyId.BB6: BB6(),
    FamilyId.BB7: BB7(),
    FamilyId.BB8: BB8(),
}


def get_family(family: FamilyId) -> BicopFamily:
    return FAMILIES[FamilyId(family)]
