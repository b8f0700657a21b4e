#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace seqlab::oracle {

// P(mu < s) for mu ~ Beta(p, q) by adaptive quadrature of the density.
inline double beta_cdf_quadrature(double p, double q, double s) {
  const double log_norm = std::lgamma(p + q) - std::lgamma(p) - std::lgamma(q);
  auto density = [&](double x) {
    if (x <= 0.0 || x >= 1.0) return 0.0;
    return std::exp(log_norm + (p - 1.0) * std::log(x) + (q - 1.0) * std::log1p(-x));
  };
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(density, 0.0, s, 20, 1e-14);
}

// Conjugate update written out from precisions.
struct NormalPosterior {
  double mean;
  double sd;
};

inline NormalPosterior normal_posterior(double mu0, double sigma0, double sigma, std::int64_t n, double sum) {
  const double precision = 1.0 / (sigma0 * sigma0) + static_cast<double>(n) / (sigma * sigma);
  const double mean = (mu0 / (sigma0 * sigma0) + sum / (sigma * sigma)) / precision;
  return {mean, 1.0 / std::sqrt(precision)};
}

struct McEstimate {
  double p;
  double se;
};

inline McEstimate normal_tail_monte_carlo(const NormalPosterior& post, double s, std::int64_t draws,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(post.mean, post.sd);
  std::int64_t below = 0;
  for (std::int64_t i = 0; i < draws; ++i) below += z(rng) < s ? 1 : 0;
  const double p = static_cast<double>(below) / static_cast<double>(draws);
  return {p, std::sqrt(std::max(p * (1.0 - p), 1e-12) / static_cast<double>(draws))};
}

inline double binomial_pmf(std::int64_t n, std::int64_t x, double p) {
  if (p <= 0.0) return x == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return x == n ? 1.0 : 0.0;
  const double lc = std::lgamma(n + 1.0) - std::lgamma(x + 1.0) - std::lgamma(n - x + 1.0);
  return std::exp(lc + x * std::log(p) + (n - x) * std::log1p(-p));
}

}  // namespace seqlab::oracle
