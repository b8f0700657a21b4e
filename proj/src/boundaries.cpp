#include "seqlab/boundaries.hpp"

#include <cmath>
#include <string>

#include <boost/math/distributions/binomial.hpp>

#include "seqlab/error.hpp"

namespace seqlab {

namespace {

constexpr double kRootTolerance = 1e-12;

std::optional<double> beta_boundary(const ModelSpec& model, const DiscoveryCriterion& criterion,
                                    std::int64_t n) {
  const double s = criterion.s();
  const double alpha = criterion.alpha();
  auto tail = [&](std::int64_t sum) {
    return posterior_tail(model, {n, static_cast<double>(sum)}, s);
  };
  if (!(tail(n) < alpha)) return std::nullopt;
  if (tail(0) < alpha) return 0.0;
  // Invariant: tail(lo) >= alpha > tail(hi).
  std::int64_t lo = 0;
  std::int64_t hi = n;
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (tail(mid) < alpha) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return static_cast<double>(hi);
}

double normal_boundary_bisection(const ModelSpec& model, const DiscoveryCriterion& criterion,
                                 std::int64_t n) {
  const double w = static_cast<double>(n) + model.gamma();
  const double center = statistic_from_martingale(model, n, criterion.s());
  const double half_width = 10.0 * model.normal().sigma * std::sqrt(w);
  double lo = center - half_width;
  double hi = center + half_width;
  auto excess = [&](double sum) {
    return posterior_tail(model, {n, sum}, criterion.s()) - criterion.alpha();
  };
  // Very small alpha puts the root outside the default bracket.
  while (excess(hi) >= 0.0) hi += (hi - lo);
  while (excess(lo) < 0.0) lo -= (hi - lo);
  while (hi - lo > kRootTolerance) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (excess(mid) < 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double log_beta_fn(double x, double y) { return std::lgamma(x) + std::lgamma(y) - std::lgamma(x + y); }

double binomial_cdf(std::int64_t n, double p, std::int64_t q) {
  if (q < 0) return 0.0;
  if (q >= n) return 1.0;
  if (p <= 0.0) return 1.0;
  if (p >= 1.0) return 0.0;
  return boost::math::cdf(boost::math::binomial_distribution<double>(static_cast<double>(n), p),
                          static_cast<double>(q));
}

}  // namespace

std::optional<double> acceptance_boundary(const ModelSpec& model,
                                          const DiscoveryCriterion& criterion, std::int64_t n) {
  if (n < 0) throw DomainError("acceptance boundary needs n >= 0");
  if (model.is_beta()) return beta_boundary(model, criterion, n);
  return normal_boundary_bisection(model, criterion, n);
}

double acceptance_boundary_normal_closed(const ModelSpec& model,
                                         const DiscoveryCriterion& criterion, std::int64_t n) {
  if (!model.is_normal()) throw DomainError("closed-form boundary requires the normal model");
  if (n < 0) throw DomainError("acceptance boundary needs n >= 0");
  const double w = static_cast<double>(n) + model.gamma();
  const double z = normal_quantile(criterion.alpha());
  return statistic_from_martingale(model, n, criterion.s()) - z * model.normal().sigma * std::sqrt(w);
}

bool in_acceptance_region(const ModelSpec& model, std::optional<double> a_n, double sum) {
  if (!a_n) return false;
  return model.is_beta() ? sum >= *a_n : sum > *a_n;
}

BoundarySeries::BoundarySeries(ModelSpec model, DiscoveryCriterion criterion,
                               std::vector<std::optional<double>> values)
    : model_(std::move(model)), criterion_(criterion), values_(std::move(values)) {}

BoundarySeries::BoundarySeries(const ModelSpec& model, const DiscoveryCriterion& criterion,
                               std::int64_t horizon)
    : model_(model), criterion_(criterion) {
  if (horizon < 1) throw DomainError("boundary horizon must be >= 1");
  values_.reserve(static_cast<std::size_t>(horizon));
  for (std::int64_t n = 1; n <= horizon; ++n) {
    values_.push_back(model.is_normal() ? acceptance_boundary_normal_closed(model, criterion, n)
                                        : acceptance_boundary(model, criterion, n));
  }
}

BoundarySeries BoundarySeries::from_values(const ModelSpec& model,
                                           const DiscoveryCriterion& criterion,
                                           std::vector<std::optional<double>> values) {
  if (values.empty()) throw ConfigError("boundary series must not be empty");
  if (model.is_normal()) {
    for (const auto& v : values) {
      if (!v) throw ConfigError("normal boundaries are always finite");
    }
  }
  return BoundarySeries(model, criterion, std::move(values));
}

std::optional<double> BoundarySeries::at(std::int64_t n) const {
  if (n < 1 || n > horizon()) {
    throw DomainError("n=" + std::to_string(n) + " outside boundary horizon " +
                      std::to_string(horizon()));
  }
  return values_[static_cast<std::size_t>(n - 1)];
}

bool BoundarySeries::accepts(std::int64_t n, double sum) const {
  return in_acceptance_region(model_, at(n), sum);
}

void to_json(nlohmann::json& j, const BoundarySeries& series) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& v : series.values()) a.push_back(v ? nlohmann::json(*v) : nlohmann::json());
  j = {{"model", series.model()},
       {"s", series.criterion().s()},
       {"alpha", series.criterion().alpha()},
       {"a", std::move(a)}};
}

BoundarySeries boundary_series_from_json(const nlohmann::json& j) {
  try {
    const ModelSpec model = model_from_json(j.at("model"));
    const DiscoveryCriterion criterion(model, j.at("s").get<double>(), j.at("alpha").get<double>());
    std::vector<std::optional<double>> values;
    for (const auto& v : j.at("a")) {
      values.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
    }
    return BoundarySeries::from_values(model, criterion, std::move(values));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad boundary JSON: ") + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(std::string("bad boundary JSON: ") + e.what());
  }
}

std::int64_t binomial_lower_quantile(std::int64_t n, double p, double beta) {
  if (n < 0) throw DomainError("binomial size must be non-negative");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("binomial p must lie in [0, 1]");
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("beta must lie in (0, 1)");
  if (binomial_cdf(n, p, 0) > beta) return -1;
  // Invariant: cdf(lo) <= beta < cdf(hi); cdf(n) = 1 > beta.
  std::int64_t lo = 0;
  std::int64_t hi = n;
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (binomial_cdf(n, p, mid) <= beta) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

std::optional<double> heuristic_threshold_for_effect(const ModelSpec& model, std::int64_t n,
                                                     double mu_hat, double beta) {
  if (n < 1) throw DomainError("heuristic threshold needs n >= 1");
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("beta must lie in (0, 1)");
  if (model.is_beta()) {
    const std::int64_t q = binomial_lower_quantile(n, mu_hat, beta);
    if (q < 0) return std::nullopt;
    return static_cast<double>(q);
  }
  const double nd = static_cast<double>(n);
  return nd * mu_hat + model.normal().sigma * std::sqrt(nd) * normal_quantile(beta);
}

std::optional<double> heuristic_boundary(const ModelSpec& model,
                                         const DiscoveryCriterion& criterion, std::int64_t n,
                                         std::int64_t lookahead, double beta) {
  if (lookahead < 0) throw DomainError("lookahead must be non-negative");
  const std::int64_t ahead = n + lookahead;
  const auto a = model.is_normal()
                     ? std::optional<double>(acceptance_boundary_normal_closed(model, criterion, ahead))
                     : acceptance_boundary(model, criterion, ahead);
  if (!a) {
    throw DomainError("acceptance boundary at n=" + std::to_string(ahead) +
                      " is unreachable; use a larger lookahead/horizon");
  }
  const double mu_hat = posterior_map(model, {ahead, *a});
  return heuristic_threshold_for_effect(model, n, mu_hat, beta);
}

std::optional<double> heuristic_boundary(const BoundarySeries& series, std::int64_t n,
                                         std::int64_t lookahead, double beta) {
  if (lookahead < 0) throw DomainError("lookahead must be non-negative");
  const std::int64_t ahead = n + lookahead;
  const auto a = series.at(ahead);
  if (!a) {
    throw DomainError("acceptance boundary at n=" + std::to_string(ahead) +
                      " is unreachable; use a larger lookahead/horizon");
  }
  const double mu_hat = posterior_map(series.model(), {ahead, *a});
  return heuristic_threshold_for_effect(series.model(), n, mu_hat, beta);
}

double fixed_horizon_accept_prob(const ModelSpec& model, const DiscoveryCriterion& criterion,
                                 std::int64_t sample_size) {
  if (sample_size < 1) throw DomainError("fixed horizon needs N >= 1");
  if (model.is_beta()) {
    const auto a_n = acceptance_boundary(model, criterion, sample_size);
    if (!a_n) return 0.0;
    const auto& p = model.beta();
    const double n = static_cast<double>(sample_size);
    const double log_norm = log_beta_fn(p.a, p.b);
    const double log_n_fact = std::lgamma(n + 1.0);
    // Sum the upper (accepting) tail of the beta-binomial directly; it equals
    // one minus the lower sum up to a_N - 1 without the cancellation.
    double total = 0.0;
    for (auto k = static_cast<std::int64_t>(*a_n); k <= sample_size; ++k) {
      const double kd = static_cast<double>(k);
      const double log_choose = log_n_fact - std::lgamma(kd + 1.0) - std::lgamma(n - kd + 1.0);
      total += std::exp(log_choose + log_beta_fn(p.a + kd, n - kd + p.b) - log_norm);
    }
    return std::min(total, 1.0);
  }
  const auto& p = model.normal();
  const double n = static_cast<double>(sample_size);
  const double w = n + model.gamma();
  const double z = normal_quantile(criterion.alpha());
  const double y_boundary = criterion.s() - z * p.sigma / std::sqrt(w);
  const double y_sd = std::sqrt(p.sigma0 * p.sigma0 * n * n + p.sigma * p.sigma * n) / w;
  return normal_cdf(-(y_boundary - p.mu0) / y_sd);
}

}  // namespace seqlab
