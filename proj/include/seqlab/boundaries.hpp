#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqlab/conjugate_models.hpp"

namespace seqlab {

/// Acceptance boundary a_n after n observations, or nullopt when no
/// statistic reachable at n certifies a discovery.
///
/// Beta-Bernoulli: the smallest integer S in [0, n] with P(mu < s | n, S) < alpha,
/// so the acceptance region is S >= a_n. Normal: the real root of
/// P(mu < s | n, S) = alpha found by bisection, with acceptance region S > a_n.
std::optional<double> acceptance_boundary(const ModelSpec& model,
                                          const DiscoveryCriterion& criterion, std::int64_t n);

/// Closed form (n + gamma)s - gamma*mu0 - z_alpha * sigma * sqrt(n + gamma). Normal model only.
double acceptance_boundary_normal_closed(const ModelSpec& model,
                                         const DiscoveryCriterion& criterion, std::int64_t n);

/// True when (n, S) satisfies the discovery criterion relative to a_n.
bool in_acceptance_region(const ModelSpec& model, std::optional<double> a_n, double sum);

/// Sequence a_1..a_horizon. Immutable once built.
class BoundarySeries {
 public:
  BoundarySeries(const ModelSpec& model, const DiscoveryCriterion& criterion,
                 std::int64_t horizon);

  /// Rebuilds a series from stored values (for deserialization); no recomputation.
  static BoundarySeries from_values(const ModelSpec& model, const DiscoveryCriterion& criterion,
                                    std::vector<std::optional<double>> values);

  const ModelSpec& model() const { return model_; }
  const DiscoveryCriterion& criterion() const { return criterion_; }
  std::int64_t horizon() const { return static_cast<std::int64_t>(values_.size()); }
  const std::vector<std::optional<double>>& values() const { return values_; }

  /// a_n for 1 <= n <= horizon.
  std::optional<double> at(std::int64_t n) const;
  bool accepts(std::int64_t n, double sum) const;

 private:
  BoundarySeries(ModelSpec model, DiscoveryCriterion criterion,
                 std::vector<std::optional<double>> values);

  ModelSpec model_;
  DiscoveryCriterion criterion_;
  std::vector<std::optional<double>> values_;
};

void to_json(nlohmann::json& j, const BoundarySeries& series);
BoundarySeries boundary_series_from_json(const nlohmann::json& j);

/// Largest q in [-1, n] with P(Binomial(n, p) <= q) <= beta. -1 means that even
/// q = 0 carries more than beta mass.
std::int64_t binomial_lower_quantile(std::int64_t n, double p, double beta);

/// Heuristic rejection threshold for a given plausible effect mu_hat: the
/// beta-quantile of the sampling law of S_n under mu = mu_hat. The experiment
/// is rejected when S_n <= threshold; nullopt means nothing is rejected.
std::optional<double> heuristic_threshold_for_effect(const ModelSpec& model, std::int64_t n,
                                                     double mu_hat, double beta);

/// Heuristic threshold where mu_hat is the MAP effect at (n + lookahead, a_{n+lookahead}).
/// Throws DomainError when a_{n+lookahead} is unreachable (the lookahead is too short).
std::optional<double> heuristic_boundary(const ModelSpec& model,
                                         const DiscoveryCriterion& criterion, std::int64_t n,
                                         std::int64_t lookahead, double beta);

/// Same as heuristic_boundary but reads a_{n+lookahead} from a precomputed series.
std::optional<double> heuristic_boundary(const BoundarySeries& series, std::int64_t n,
                                         std::int64_t lookahead, double beta);

/// Marginal probability under the prior that a fresh experiment meets the
/// discovery criterion after exactly N observations.
double fixed_horizon_accept_prob(const ModelSpec& model, const DiscoveryCriterion& criterion,
                                 std::int64_t sample_size);

}  // namespace seqlab
