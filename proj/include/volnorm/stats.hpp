#pragma once

namespace volnorm::stats {

/// Regularized incomplete beta function I_x(a, b), a, b > 0, x in [0, 1].
/// Continued-fraction evaluation, accurate to ~1e-14.
double incomplete_beta(double a, double b, double x);

/// Student-t CDF with nu degrees of freedom.
double t_cdf(double t, double nu);

/// Two-sided p-value for a t statistic.
double t_two_sided_p(double t, double nu);

/// F-distribution CDF, d1/d2 degrees of freedom.
double f_cdf(double x, double d1, double d2);

/// Upper-tail probability P(F > x).
double f_sf(double x, double d1, double d2);

/// Critical value x with P(F <= x) = 1 - alpha, found by bisection.
double f_critical(double alpha, double d1, double d2);

}  // namespace volnorm::stats
