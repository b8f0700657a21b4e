#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqlab/error.hpp"
#include "seqlab/policies.hpp"

namespace seqlab {

/// True effects drawn from the policy's own prior.
struct PriorSampled {};

/// Fixed list of true effects, visited in order (shuffled per replication when
/// `shuffle` is set).
struct EmpiricalList {
  std::vector<double> effects;
  bool shuffle = true;
};

using TruthSource = std::variant<PriorSampled, EmpiricalList>;

enum class Outcome { Discovered, Rejected, Exhausted };

const char* to_string(Outcome outcome);

struct DiscoveryRecord {
  std::int64_t experiment_index = 0;
  double true_effect = 0.0;
  std::int64_t samples_used = 0;
  Outcome outcome = Outcome::Rejected;
  std::optional<double> map_estimate;  // set iff Discovered
  std::int64_t cumulative_time = 0;    // global observation count after this experiment
};

/// An empirical list ran out before the first discovery.
class ExhaustionError : public NumericalError {
 public:
  ExhaustionError(const std::string& what, std::vector<DiscoveryRecord> partial)
      : NumericalError(what), partial_(std::move(partial)) {}
  const std::vector<DiscoveryRecord>& partial() const { return partial_; }

 private:
  std::vector<DiscoveryRecord> partial_;
};

/// Seed of an independent stream derived from (master seed, index, stream id).
/// Stable across platforms and releases: SplitMix64 finalizer chain.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream);

/// Experiments in order until the first discovery. Experiment i draws its true
/// effect and its outcomes from streams seeded by derive_seed(seed, i, .), so
/// two policies run on the same seed see identical effects and outcome
/// sequences for every experiment index they both visit.
std::vector<DiscoveryRecord> run_until_discovery(const Policy& policy, const TruthSource& truth,
                                                 std::uint64_t seed);

struct SimConfig {
  std::shared_ptr<const Policy> policy;
  TruthSource truth = PriorSampled{};
  std::int64_t replications = 1;
  std::uint64_t seed = 0;
  /// PriorSampled only: discoveries collected per replication.
  std::int64_t discoveries_per_replication = 1;
  /// Fixed cost per started experiment used in total_cost_with_c.
  double c = 0.0;
  double bucket_width = 0.005;
  int threads = 1;
  /// Guard against policies that never discover.
  std::int64_t max_observations_per_replication = 2'000'000'000;
};

struct EffectBucket {
  std::int64_t experiments = 0;
  std::int64_t discoveries = 0;
  std::int64_t samples_rejected = 0;
  std::int64_t samples_discovered = 0;
  double map_sum = 0.0;
};

struct MetricsReport {
  std::string policy;
  double s = 0.0;
  double alpha = 0.0;
  double mean_time_to_discovery = 0.0;
  double se_mean_time = 0.0;
  double fdp = 0.0;
  double se_fdp = 0.0;
  double power = 0.0;
  double se_power = 0.0;
  std::int64_t n_discoveries = 0;
  std::int64_t n_false_discoveries = 0;
  std::int64_t n_experiments_started = 0;
  std::int64_t n_alternatives = 0;  // experiments with true effect > s
  std::int64_t total_observations = 0;
  double mean_samples_rejected = 0.0;
  double mean_samples_discovered = 0.0;
  double total_cost_with_c = 0.0;
  double bucket_width = 0.0;
  /// Keyed by floor(effect / bucket_width).
  std::map<std::int64_t, EffectBucket> buckets;
};

/// Records of one replication (what simulate() aggregates for replication r).
std::vector<DiscoveryRecord> replication_records(const SimConfig& config, std::int64_t replication);

MetricsReport simulate(const SimConfig& config);

/// Runs every policy on the same truths and per-experiment outcome streams.
/// All policies must share the model and criterion.
std::vector<MetricsReport> compare_policies(const std::vector<std::shared_ptr<const Policy>>& policies,
                                            const SimConfig& shared);

void write_metrics_csv(std::ostream& out, const std::vector<MetricsReport>& rows);
void to_json(nlohmann::json& j, const MetricsReport& report);

}  // namespace seqlab
