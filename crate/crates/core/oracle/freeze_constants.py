#!/usr/bin/env python3
"""Regenerates crates/core/src/models/constants.rs.

Every value is computed by nested adaptive quadrature in mpmath, working
directly from the model definitions (phi, the densities of y and z) rather
than from any closed form used inside the library.

    python3 crates/core/oracle/freeze_constants.py > crates/core/src/models/constants.rs
"""
import mpmath as mp

mp.mp.dps = 40

SQRT_2_OVER_PI = mp.sqrt(2 / mp.pi)


def phi(y, z):
    return SQRT_2_OVER_PI * mp.exp(-2 * (y - z) ** 2)


def normal_pdf(z):
    return mp.exp(-z * z / 2) / mp.sqrt(2 * mp.pi)


def inner_moment(y, power):
    # E_{z ~ N(0,1)}[phi(y, z)^power]; phi is concentrated near z = y.
    g = lambda z: normal_pdf(z) * phi(y, z) ** power
    return mp.quad(g, [-mp.inf, y - 4, y, y + 4, mp.inf])


def outer_mean(h):
    # E_{y ~ U(-1, 1)}[h(y)]
    return mp.quad(h, [-1, 0, 1]) / 2


gamma = lambda y: inner_moment(y, 1)

gauss_log_truth = outer_mean(lambda y: mp.log(gamma(y)))
mean_inner_variance = outer_mean(lambda y: inner_moment(y, 2) - gamma(y) ** 2)
linear_gauss_truth = outer_mean(lambda y: (1 + y * y) * gamma(y))
gamma_zero = gamma(0)
gamma_one = gamma(1)


def lit(x):
    return repr(float(x))


print("// Generated by oracle/freeze_constants.py. Do not edit by hand.")
print("")
print("/// E_y[log gamma(y)] for the gauss-log model.")
print(f"pub const GAUSS_LOG_TRUTH: f64 = {lit(gauss_log_truth)};")
print("")
print("/// gamma(0) for the gauss-log model.")
print(f"pub const GAUSS_LOG_GAMMA_AT_ZERO: f64 = {lit(gamma_zero)};")
print("")
print("/// gamma(1) for the gauss-log model.")
print(f"pub const GAUSS_LOG_GAMMA_AT_ONE: f64 = {lit(gamma_one)};")
print("")
print("/// E_y[Var(phi(y, z) | y)] shared by gauss-log and its derived models.")
print(f"pub const MEAN_INNER_VARIANCE: f64 = {lit(mean_inner_variance)};")
print("")
print("/// E_y[(1 + y^2) gamma(y)] for the linear-gauss model.")
print(f"pub const LINEAR_GAUSS_TRUTH: f64 = {lit(linear_gauss_truth)};")
