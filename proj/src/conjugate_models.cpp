#include "seqlab/conjugate_models.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "seqlab/error.hpp"

namespace seqlab {

namespace {

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

ModelSpec ModelSpec::beta_bernoulli(double a, double b) {
  if (!positive_finite(a) || !positive_finite(b)) {
    throw DomainError("beta prior shapes must be positive and finite");
  }
  return ModelSpec(BetaBernoulli{a, b});
}

ModelSpec ModelSpec::normal(double mu0, double sigma0, double sigma) {
  if (!std::isfinite(mu0) || !positive_finite(sigma0) || !positive_finite(sigma)) {
    throw DomainError("normal model needs finite mu0 and positive sigma0, sigma");
  }
  const double g = (sigma * sigma) / (sigma0 * sigma0);
  if (!positive_finite(g)) throw DomainError("sigma^2/sigma0^2 must be finite and positive");
  return ModelSpec(NormalKnownVariance{mu0, sigma0, sigma});
}

const BetaBernoulli& ModelSpec::beta() const {
  if (!is_beta()) throw DomainError("model is not beta-bernoulli");
  return std::get<BetaBernoulli>(params_);
}

const NormalKnownVariance& ModelSpec::normal() const {
  if (!is_normal()) throw DomainError("model is not normal");
  return std::get<NormalKnownVariance>(params_);
}

double ModelSpec::gamma() const {
  const auto& p = normal();
  return (p.sigma * p.sigma) / (p.sigma0 * p.sigma0);
}

void validate_state(const ModelSpec& model, const ExperimentState& state) {
  if (state.n < 0) throw DomainError("observation count must be non-negative");
  if (!std::isfinite(state.sum)) throw DomainError("sufficient statistic must be finite");
  if (state.n == 0 && state.sum != 0.0) throw DomainError("n = 0 requires S = 0");
  if (model.is_beta()) {
    if (state.sum < 0.0 || state.sum > static_cast<double>(state.n)) {
      throw DomainError("beta-bernoulli state needs 0 <= S <= n (S=" + std::to_string(state.sum) +
                        ", n=" + std::to_string(state.n) + ")");
    }
    if (std::floor(state.sum) != state.sum) throw DomainError("beta-bernoulli S must be an integer");
  }
}

DiscoveryCriterion::DiscoveryCriterion(const ModelSpec& model, double s, double alpha)
    : s_(s), alpha_(alpha) {
  if (!std::isfinite(s)) throw DomainError("threshold s must be finite");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  const double p0 = prior_tail(model, s);
  if (!(p0 > alpha && p0 < 1.0)) {
    throw DomainError("degenerate prior: P(mu < s) = " + std::to_string(p0) +
                      " must lie in (alpha, 1) so that neither every nor no experiment is "
                      "a discovery before sampling");
  }
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile needs p in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double posterior_tail(const ModelSpec& model, const ExperimentState& state, double s) {
  validate_state(model, state);
  if (model.is_beta()) {
    const auto& p = model.beta();
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    const double n = static_cast<double>(state.n);
    return boost::math::ibeta(p.a + state.sum, p.b + n - state.sum, s);
  }
  const auto& p = model.normal();
  const double w = static_cast<double>(state.n) + model.gamma();
  const double mean = martingale_value(model, state);
  return normal_cdf((s - mean) * std::sqrt(w) / p.sigma);
}

double prior_tail(const ModelSpec& model, double s) { return posterior_tail(model, {}, s); }

double posterior_mean(const ModelSpec& model, const ExperimentState& state) {
  validate_state(model, state);
  if (model.is_beta()) {
    const auto& p = model.beta();
    return (p.a + state.sum) / (p.a + p.b + static_cast<double>(state.n));
  }
  return martingale_value(model, state);
}

double posterior_map(const ModelSpec& model, const ExperimentState& state) {
  validate_state(model, state);
  if (model.is_normal()) return martingale_value(model, state);
  const auto& p = model.beta();
  const double shape1 = p.a + state.sum;
  const double shape2 = p.b + static_cast<double>(state.n) - state.sum;
  if (shape1 > 1.0 && shape2 > 1.0) return (shape1 - 1.0) / (shape1 + shape2 - 2.0);
  if (shape1 == 1.0 && shape2 == 1.0) return 0.5;  // flat density
  // At least one shape is <= 1: the density is unbounded or maximal at an endpoint.
  return shape1 >= shape2 ? 1.0 : 0.0;
}

double martingale_value(const ModelSpec& model, const ExperimentState& state) {
  const auto& p = model.normal();
  const double g = model.gamma();
  return (state.sum + g * p.mu0) / (static_cast<double>(state.n) + g);
}

double statistic_from_martingale(const ModelSpec& model, std::int64_t n, double y) {
  const auto& p = model.normal();
  const double g = model.gamma();
  return (static_cast<double>(n) + g) * y - g * p.mu0;
}

Transition transition_distribution(const ModelSpec& model, const ExperimentState& state) {
  validate_state(model, state);
  Transition t;
  if (model.is_beta()) {
    t.success_prob = posterior_mean(model, state);
    return t;
  }
  const double w = static_cast<double>(state.n) + model.gamma();
  const double sigma = model.normal().sigma;
  t.y_mean = martingale_value(model, state);
  t.y_variance = sigma * sigma / (w * (w + 1.0));
  return t;
}

FirstObservation prior_predictive_first(const ModelSpec& model) {
  FirstObservation f;
  if (model.is_beta()) {
    const auto& p = model.beta();
    f.success_prob = p.a / (p.a + p.b);
    return f;
  }
  const auto& p = model.normal();
  f.x_mean = p.mu0;
  f.x_variance = p.sigma0 * p.sigma0 + p.sigma * p.sigma;
  return f;
}

double sample_effect(const ModelSpec& model, Rng& rng) {
  if (model.is_beta()) {
    const auto& p = model.beta();
    std::gamma_distribution<double> ga(p.a, 1.0);
    std::gamma_distribution<double> gb(p.b, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    return x / (x + y);
  }
  const auto& p = model.normal();
  return std::normal_distribution<double>(p.mu0, p.sigma0)(rng);
}

double sample_observation(const ModelSpec& model, double mu, Rng& rng) {
  if (model.is_beta()) {
    if (!(mu >= 0.0 && mu <= 1.0)) throw DomainError("bernoulli effect must lie in [0, 1]");
    // Compare against a uniform in [0, 1) so that mu = 0 and mu = 1 are exact.
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < mu ? 1.0 : 0.0;
  }
  if (!std::isfinite(mu)) throw DomainError("normal effect must be finite");
  return std::normal_distribution<double>(mu, model.normal().sigma)(rng);
}

void to_json(nlohmann::json& j, const ModelSpec& model) {
  if (model.is_beta()) {
    j = {{"model", "beta_bernoulli"}, {"a", model.beta().a}, {"b", model.beta().b}};
  } else {
    const auto& p = model.normal();
    j = {{"model", "normal"}, {"mu0", p.mu0}, {"sigma0", p.sigma0}, {"sigma", p.sigma}};
  }
}

void from_json(const nlohmann::json& j, ModelSpec& model) { model = model_from_json(j); }

ModelSpec model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("model")) throw ConfigError("model JSON needs a \"model\" tag");
  const auto tag = j.at("model").get<std::string>();
  try {
    if (tag == "beta_bernoulli") {
      return ModelSpec::beta_bernoulli(j.at("a").get<double>(), j.at("b").get<double>());
    }
    if (tag == "normal") {
      return ModelSpec::normal(j.value("mu0", 0.0), j.at("sigma0").get<double>(),
                               j.at("sigma").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model JSON: ") + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(std::string("bad model parameters: ") + e.what());
  }
  throw ConfigError("unknown model tag '" + tag + "'");
}

}  // namespace seqlab
