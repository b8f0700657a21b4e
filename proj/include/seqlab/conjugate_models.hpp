#pragma once

#include <cstdint>
#include <random>
#include <variant>

#include <nlohmann/json.hpp>

namespace seqlab {

using Rng = std::mt19937_64;

/// Beta(a, b) prior over a Bernoulli success probability.
struct BetaBernoulli {
  double a = 1.0;
  double b = 1.0;
  bool operator==(const BetaBernoulli&) const = default;
};

/// Normal(mu0, sigma0^2) prior over the mean of Normal(mu, sigma^2) observations.
struct NormalKnownVariance {
  double mu0 = 0.0;
  double sigma0 = 1.0;
  double sigma = 1.0;
  bool operator==(const NormalKnownVariance&) const = default;
};

/// One of the two conjugate models. The sufficient statistic is the plain sum
/// of outcomes in both cases.
class ModelSpec {
 public:
  using Params = std::variant<BetaBernoulli, NormalKnownVariance>;

  ModelSpec() = default;  // Beta(1, 1)

  static ModelSpec beta_bernoulli(double a, double b);
  static ModelSpec normal(double mu0, double sigma0, double sigma);

  bool is_beta() const { return std::holds_alternative<BetaBernoulli>(params_); }
  bool is_normal() const { return std::holds_alternative<NormalKnownVariance>(params_); }
  const BetaBernoulli& beta() const;
  const NormalKnownVariance& normal() const;
  const Params& params() const { return params_; }

  /// sigma^2 / sigma0^2: the prior's weight in pseudo-observations (Normal only).
  double gamma() const;

  bool operator==(const ModelSpec&) const = default;

 private:
  explicit ModelSpec(Params p) : params_(p) {}
  Params params_{BetaBernoulli{}};
};

/// (n, S_n) for the experiment currently being sampled.
struct ExperimentState {
  std::int64_t n = 0;
  double sum = 0.0;
};

/// Throws DomainError unless the state is reachable under the model
/// (n >= 0; for Beta-Bernoulli, S integral in [0, n]).
void validate_state(const ModelSpec& model, const ExperimentState& state);

/// A discovery is declared once P(mu < s | data) < alpha.
class DiscoveryCriterion {
 public:
  /// Validates alpha in (0, 1) and that the prior tail P(mu < s) lies in (alpha, 1).
  DiscoveryCriterion(const ModelSpec& model, double s, double alpha);

  double s() const { return s_; }
  double alpha() const { return alpha_; }

  bool operator==(const DiscoveryCriterion&) const = default;

 private:
  double s_;
  double alpha_;
};

/// P(mu < s | n, S).
double posterior_tail(const ModelSpec& model, const ExperimentState& state, double s);

/// P(mu < s) before any data.
double prior_tail(const ModelSpec& model, double s);

double posterior_mean(const ModelSpec& model, const ExperimentState& state);

/// Posterior mode. Beta posteriors with a shape <= 1 take the boundary point.
double posterior_map(const ModelSpec& model, const ExperimentState& state);

/// Posterior-mean martingale (S + gamma*mu0) / (n + gamma) of the Normal model.
double martingale_value(const ModelSpec& model, const ExperimentState& state);

/// Inverse of martingale_value at a fixed n.
double statistic_from_martingale(const ModelSpec& model, std::int64_t n, double y);

/// Law of the next sufficient statistic given the current state.
///
/// Beta-Bernoulli: S_{n+1} = S_n + 1 with probability success_prob, else S_n.
/// Normal: Y_{n+1} | Y_n ~ Normal(y_mean, y_variance) with Y the posterior mean.
struct Transition {
  double success_prob = 0.0;
  double y_mean = 0.0;
  double y_variance = 0.0;
};
Transition transition_distribution(const ModelSpec& model, const ExperimentState& state);

/// Marginal law of the first observation. Beta: Bernoulli(success_prob).
/// Normal: X_1 ~ Normal(x_mean, x_variance), Y_1 = (X_1 + gamma*mu0)/(1 + gamma).
struct FirstObservation {
  double success_prob = 0.0;
  double x_mean = 0.0;
  double x_variance = 0.0;
};
FirstObservation prior_predictive_first(const ModelSpec& model);

double sample_effect(const ModelSpec& model, Rng& rng);
double sample_observation(const ModelSpec& model, double mu, Rng& rng);

void to_json(nlohmann::json& j, const ModelSpec& model);
void from_json(const nlohmann::json& j, ModelSpec& model);
ModelSpec model_from_json(const nlohmann::json& j);

// Standard normal helpers shared by the other modules.
double normal_cdf(double x);
double normal_quantile(double p);

}  // namespace seqlab
