#pragma once

#include <cstdint>
#include <span>

namespace csi::stats {

// Regularized incomplete beta I_x(a, b), via the Lentz continued fraction.
double incomplete_beta(double a, double b, double x);

// Student's t cumulative distribution with `df` degrees of freedom.
double student_t_cdf(double t, double df);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;  // two-sided
  std::size_t df = 0;
  double mean_difference = 0.0;
  // Differences have zero variance: t is 0 (all equal) or +/-inf, p is 1 or 0.
  bool degenerate = false;
};

// Paired two-sided t-test on b - a. Throws csi::Error unless the inputs have
// equal length >= 2.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

// Exact one-sided (greater) binomial tail P[X >= k], X ~ Bin(n, p0).
double binomial_test(std::uint64_t k, std::uint64_t n, double p0);

}  // namespace csi::stats
