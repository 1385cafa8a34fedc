#pragma once

namespace biascope {

// Regularized incomplete beta function I_x(a, b), the CDF of Beta(a, b).
// Continued fraction (Lentz), with the symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
// applied when x lies past the convergence sweet spot.
double incomplete_beta(double a, double b, double x);

// Two-sided p-value for a t statistic with nu degrees of freedom,
// computed as I_{nu/(nu+t^2)}(nu/2, 1/2).
double student_t_two_sided_p(double t, double nu);

}  // namespace biascope
