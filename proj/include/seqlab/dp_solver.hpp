#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqlab/boundaries.hpp"
#include "seqlab/conjugate_models.hpp"

namespace seqlab {

/// Uniform grid over the posterior-mean martingale Y_n used by the Normal model.
struct NormalGrid {
  double lo = 0.0;
  double hi = 0.0;
  std::int64_t points = 4001;

  double spacing() const { return (hi - lo) / static_cast<double>(points - 1); }
  double at(std::int64_t i) const { return lo + spacing() * static_cast<double>(i); }
  bool operator==(const NormalGrid&) const = default;
};

/// [s - 8 sigma0, s + 8 sigma0] with the given number of points.
NormalGrid default_grid(const ModelSpec& model, const DiscoveryCriterion& criterion,
                        std::int64_t points = 4001);

/// Single-experiment problem that must reject after k observations. `c` is the
/// fixed cost of starting an experiment, in observation units.
struct TruncatedProblem {
  ModelSpec model;
  DiscoveryCriterion criterion;
  std::int64_t k = 5000;
  double c = 0.0;
  std::optional<NormalGrid> grid;  // Normal model only; defaulted when empty

  TruncatedProblem(ModelSpec m, DiscoveryCriterion crit, std::int64_t horizon, double cost = 0.0,
                   std::optional<NormalGrid> g = std::nullopt);

  void validate() const;
};

/// W_k(n, .) on the lattice (Beta) or grid (Normal), with the Reject decisions.
/// Row n - 1 holds stage n.
struct ValueTable {
  std::vector<std::vector<double>> values;
  std::vector<std::vector<bool>> reject;
};

struct InductionResult {
  /// Per n = 1..k, the largest statistic at which Reject is chosen; nullopt if
  /// no statistic is rejected at that stage.
  std::vector<std::optional<double>> thresholds;
  /// f(kappa) = 1 + E[W_k(1, S_1 | kappa)].
  double f_value = 0.0;
  std::optional<ValueTable> table;
};

/// Backward induction for one rejection cost. Boundaries and Gaussian transition
/// weights are computed once at construction so bisection only re-runs the sweep.
class SingleExperimentSolver {
 public:
  explicit SingleExperimentSolver(TruncatedProblem problem);

  const TruncatedProblem& problem() const { return problem_; }
  const BoundarySeries& boundaries() const { return boundaries_; }
  const NormalGrid& grid() const;

  InductionResult induct(double kappa, bool keep_table = false) const;

 private:
  InductionResult induct_beta(double kappa, bool keep_table) const;
  InductionResult induct_normal(double kappa, bool keep_table) const;

  TruncatedProblem problem_;
  BoundarySeries boundaries_;
  NormalGrid grid_;
  // Normal model: per stage n, cell-integrated kernel offsets -D..D.
  std::vector<std::vector<double>> kernels_;
  std::vector<double> first_weights_;
};

InductionResult backward_induction(const TruncatedProblem& problem, double kappa,
                                   bool keep_table = false);

struct BisectionStep {
  double kappa = 0.0;
  double f = 0.0;
};

struct SolveOptions {
  double tol = 1e-6;
  int max_iterations = 200;
  double bracket_lo = 1.0;
  double initial_hi = 2.0;
};

/// Optimal thresholds r_1..r_k at the fixed point kappa* = f(kappa*).
class PolicyTable {
 public:
  PolicyTable(TruncatedProblem problem, BoundarySeries acceptance,
              std::vector<std::optional<double>> thresholds, double kappa_star, double tol,
              std::vector<BisectionStep> iterations);

  const TruncatedProblem& problem() const { return problem_; }
  const ModelSpec& model() const { return problem_.model; }
  const DiscoveryCriterion& criterion() const { return problem_.criterion; }
  std::int64_t k() const { return problem_.k; }
  double c() const { return problem_.c; }
  double kappa_star() const { return kappa_star_; }
  double tol() const { return tol_; }
  const BoundarySeries& acceptance() const { return acceptance_; }
  const std::vector<std::optional<double>>& thresholds() const { return thresholds_; }
  const std::vector<BisectionStep>& iterations() const { return iterations_; }

  /// r_n: reject when S_n <= r_n. nullopt: never reject at n (before k).
  std::optional<double> rejection_threshold(std::int64_t n) const;

 private:
  TruncatedProblem problem_;
  BoundarySeries acceptance_;
  std::vector<std::optional<double>> thresholds_;
  double kappa_star_;
  double tol_;
  std::vector<BisectionStep> iterations_;
};

/// Bisection on kappa. Stops once |f(kappa) - kappa| <= tol * kappa and the
/// bracket around the root is no wider than tol * kappa. Throws NumericalError
/// when the upper bracket passes 2^40 or the iteration budget runs out.
PolicyTable solve_optimal(const TruncatedProblem& problem, const SolveOptions& options = {});

/// W_k(n, S | kappa*). Re-runs the induction at kappa*; Normal states are
/// linearly interpolated on the grid.
double value_at(const PolicyTable& table, const ExperimentState& state);

void to_json(nlohmann::json& j, const PolicyTable& table);
PolicyTable policy_table_from_json(const nlohmann::json& j);

}  // namespace seqlab
