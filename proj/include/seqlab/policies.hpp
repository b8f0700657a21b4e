#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqlab/boundaries.hpp"
#include "seqlab/dp_solver.hpp"

namespace seqlab {

enum class Action { Discover, Continue, Reject };

const char* to_string(Action action);

/// Backward-induction policy. Either carries a solved table, points at a
/// table file, or is solved on construction with the given k, c and tol.
struct OptimalSpec {
  std::shared_ptr<const PolicyTable> table;
  std::string table_path;
  std::int64_t k = 5000;
  double c = 0.0;
  double tol = 1e-6;
};

/// Reject when S_n is implausible (level beta) under the MAP effect implied by
/// reaching the acceptance boundary `lookahead` observations later.
struct HeuristicSpec {
  std::int64_t lookahead = 2000;
  double beta = 0.2;
  std::int64_t k = 5000;
};

/// Exactly N observations, then a single discovery check.
struct FixedNSpec {
  std::int64_t n = 1000;
};

/// Up to N observations; discovers as soon as the criterion is met.
struct FixedNEarlyStopSpec {
  std::int64_t n = 1000;
};

/// Reject when P(mu > s | data) < beta_reject or after `cap` observations.
/// beta_reject defaults to 0.9 * P0(mu > s).
struct BayesSequentialSpec {
  std::optional<double> beta_reject;
  std::int64_t cap = 4000;
};

using PolicySpec =
    std::variant<OptimalSpec, HeuristicSpec, FixedNSpec, FixedNEarlyStopSpec, BayesSequentialSpec>;

/// Short stable name used in CSV rows ("optimal", "heuristic", ...).
std::string policy_name(const PolicySpec& spec);

void to_json(nlohmann::json& j, const PolicySpec& spec);
/// Parses the "variant"-tagged JSON form. A relative "table_path" resolves
/// against `base_dir` when given.
PolicySpec policy_spec_from_json(const nlohmann::json& j, const std::string& base_dir = "");

/// Immutable decision rule over (n, S_n). Every variant shares the same
/// discovery test; variants differ only in when they reject.
class Policy {
 public:
  /// Builds the tables a spec needs. Throws ConfigError for invalid settings,
  /// including a BayesSequential beta_reject >= P0(mu > s).
  static Policy make(const PolicySpec& spec, const ModelSpec& model,
                     const DiscoveryCriterion& criterion);

  Action decide(const ExperimentState& state) const;

  const std::string& name() const { return name_; }
  const ModelSpec& model() const { return acceptance_.model(); }
  const DiscoveryCriterion& criterion() const { return acceptance_.criterion(); }
  /// Largest n at which the policy can still be asked for a decision.
  std::int64_t horizon() const { return horizon_; }
  /// True when Reject at n is forced by the horizon rather than the statistic.
  bool is_truncation(std::int64_t n) const { return truncates_ && n == horizon_; }
  const BoundarySeries& acceptance() const { return acceptance_; }
  /// Reject when S_n <= r_n (before the horizon). nullopt: no rejection at n.
  const std::vector<std::optional<double>>& rejection_thresholds() const { return reject_; }
  std::shared_ptr<const PolicyTable> table() const { return table_; }

 private:
  Policy(std::string name, BoundarySeries acceptance, std::vector<std::optional<double>> reject,
         std::int64_t horizon, bool check_only_at_horizon, bool truncates,
         std::shared_ptr<const PolicyTable> table, double prior_upper_tail,
         std::optional<double> initial_reject_level);

  std::string name_;
  BoundarySeries acceptance_;
  std::vector<std::optional<double>> reject_;
  std::int64_t horizon_;
  bool check_only_at_horizon_;
  bool truncates_;
  std::shared_ptr<const PolicyTable> table_;
  double prior_upper_tail_;
  std::optional<double> initial_reject_level_;
};

}  // namespace seqlab
