#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>

namespace mldiag::numeric {

// Lower-tail standard normal quantile. Acklam's rational approximation
// (relative error < 1.2e-9) followed by one Halley step against erfc.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must lie in (0,1)");

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  constexpr double p_high = 1.0 - p_low;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= p_high) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Halley refinement.
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

// Upper-tail chi-square critical value by the Wilson-Hilferty cube
// transform: d * (1 - 2/(9d) + z * sqrt(2/(9d)))^3 with z = z_{1-alpha}.
inline double chi_square_critical(int dof, double alpha) {
  if (dof < 1) throw std::domain_error("chi_square_critical: dof must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::domain_error("chi_square_critical: alpha must lie in (0,1)");
  const double d = static_cast<double>(dof);
  const double z = normal_quantile(1.0 - alpha);
  const double h = 2.0 / (9.0 * d);
  const double base = 1.0 - h + z * std::sqrt(h);
  if (base <= 0.0) return 0.0;
  return d * base * base * base;
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::domain_error("mean of empty sample");
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

// Sample standard deviation, denominator n-1; 0 for a single value.
inline double sample_sd(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

// 2*sigma(u) - 1 written as tanh(u/2): exactly odd and bounded by 1.
inline double centered_logistic(double u) { return std::tanh(0.5 * u); }

}  // namespace mldiag::numeric
