#include "csi/stats.hpp"

#include <cmath>
#include <limits>

#include "csi/error.hpp"

namespace csi::stats {

namespace {

// Continued fraction for I_x(a, b); converges quickly for x < (a+1)/(a+b+2).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 10000;
  constexpr double kEpsilon = 1e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEpsilon) return h;
  }
  throw Error("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error("incomplete beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw Error("t distribution needs df > 0");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t > 0 ? 1.0 - tail : tail;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("paired t-test needs equal-length samples");
  if (a.size() < 2) throw Error("paired t-test needs at least two pairs");
  const std::size_t n = a.size();

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += b[i] - a[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (b[i] - a[i]) - mean;
    ss += d * d;
  }
  const double variance = ss / static_cast<double>(n - 1);

  TTestResult result;
  result.df = n - 1;
  result.mean_difference = mean;
  if (variance == 0.0) {
    result.degenerate = true;
    if (mean == 0.0) {
      result.t = 0.0;
      result.p = 1.0;
    } else {
      result.t = mean > 0 ? std::numeric_limits<double>::infinity()
                          : -std::numeric_limits<double>::infinity();
      result.p = 0.0;
    }
    return result;
  }
  result.t = mean / std::sqrt(variance / static_cast<double>(n));
  const double df = static_cast<double>(result.df);
  result.p = incomplete_beta(0.5 * df, 0.5, df / (df + result.t * result.t));
  return result;
}

double binomial_test(std::uint64_t k, std::uint64_t n, double p0) {
  if (k > n) throw Error("binomial test needs k <= n");
  if (p0 < 0.0 || p0 > 1.0) throw Error("binomial test needs p0 in [0, 1]");
  if (k == 0) return 1.0;
  if (p0 == 0.0) return 0.0;
  if (p0 == 1.0) return 1.0;

  double sum = 0.0;
  if (n <= 1000) {
    // C(n, i) by the multiplicative recurrence; exact while it fits a double mantissa.
    double coefficient = 1.0;
    for (std::uint64_t i = 0; i < k; ++i) {
      coefficient = coefficient * static_cast<double>(n - i) / static_cast<double>(i + 1);
    }
    for (std::uint64_t i = k; i <= n; ++i) {
      sum += coefficient * std::pow(p0, static_cast<double>(i)) *
             std::pow(1.0 - p0, static_cast<double>(n - i));
      coefficient = coefficient * static_cast<double>(n - i) / static_cast<double>(i + 1);
    }
  } else {
    const double lp = std::log(p0);
    const double lq = std::log1p(-p0);
    const double ln_n = std::lgamma(static_cast<double>(n) + 1.0);
    for (std::uint64_t i = k; i <= n; ++i) {
      const double di = static_cast<double>(i);
      sum += std::exp(ln_n - std::lgamma(di + 1.0) - std::lgamma(static_cast<double>(n - i) + 1.0) +
                      di * lp + static_cast<double>(n - i) * lq);
    }
  }
  return std::min(1.0, sum);
}

}  // namespace csi::stats
