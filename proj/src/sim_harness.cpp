#include "seqlab/sim_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <thread>

namespace seqlab {

namespace {

constexpr std::uint64_t kReplicationStream = 0x5EED;
constexpr std::uint64_t kTruthStream = 1;
constexpr std::uint64_t kObservationStream = 2;
constexpr std::uint64_t kShuffleStream = 3;

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Sufficient aggregates of one replication; merged by plain addition.
struct Tally {
  std::int64_t total_observations = 0;
  std::int64_t experiments = 0;
  std::int64_t alternatives = 0;
  std::int64_t discoveries = 0;
  std::int64_t false_discoveries = 0;
  std::int64_t true_discoveries = 0;
  std::int64_t rejections = 0;
  std::int64_t samples_rejected = 0;
  std::int64_t samples_discovered = 0;
  std::int64_t cycles = 0;
  double cycle_sum = 0.0;
  double cycle_sq = 0.0;
  std::map<std::int64_t, EffectBucket> buckets;

  void merge(const Tally& o) {
    total_observations += o.total_observations;
    experiments += o.experiments;
    alternatives += o.alternatives;
    discoveries += o.discoveries;
    false_discoveries += o.false_discoveries;
    true_discoveries += o.true_discoveries;
    rejections += o.rejections;
    samples_rejected += o.samples_rejected;
    samples_discovered += o.samples_discovered;
    cycles += o.cycles;
    cycle_sum += o.cycle_sum;
    cycle_sq += o.cycle_sq;
    for (const auto& [key, b] : o.buckets) {
      auto& mine = buckets[key];
      mine.experiments += b.experiments;
      mine.discoveries += b.discoveries;
      mine.samples_rejected += b.samples_rejected;
      mine.samples_discovered += b.samples_discovered;
      mine.map_sum += b.map_sum;
    }
  }
};

DiscoveryRecord run_experiment(const Policy& policy, std::int64_t index, double mu,
                               std::uint64_t obs_seed, std::int64_t& clock) {
  Rng rng(obs_seed);
  const auto& model = policy.model();
  ExperimentState state;
  for (;;) {
    state.n += 1;
    state.sum += sample_observation(model, mu, rng);
    ++clock;
    const Action action = policy.decide(state);
    if (action == Action::Continue) continue;
    DiscoveryRecord rec;
    rec.experiment_index = index;
    rec.true_effect = mu;
    rec.samples_used = state.n;
    rec.cumulative_time = clock;
    if (action == Action::Discover) {
      rec.outcome = Outcome::Discovered;
      rec.map_estimate = posterior_map(model, state);
    } else {
      rec.outcome = policy.is_truncation(state.n) ? Outcome::Exhausted : Outcome::Rejected;
    }
    return rec;
  }
}

class ExperimentSource {
 public:
  ExperimentSource(const Policy& policy, const TruthSource& truth, std::uint64_t seed)
      : policy_(policy), seed_(seed) {
    if (const auto* list = std::get_if<EmpiricalList>(&truth)) {
      effects_ = list->effects;
      if (list->shuffle) {
        Rng rng(derive_seed(seed, 0, kShuffleStream));
        std::shuffle(effects_.begin(), effects_.end(), rng);
      }
      finite_ = true;
    }
  }

  bool finite() const { return finite_; }
  bool exhausted(std::int64_t index) const {
    return finite_ && index >= static_cast<std::int64_t>(effects_.size());
  }

  double effect(std::int64_t index) const {
    if (finite_) return effects_[static_cast<std::size_t>(index)];
    Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(index), kTruthStream));
    return sample_effect(policy_.model(), rng);
  }

  DiscoveryRecord run(std::int64_t index, std::int64_t& clock) const {
    return run_experiment(policy_, index, effect(index),
                          derive_seed(seed_, static_cast<std::uint64_t>(index), kObservationStream),
                          clock);
  }

 private:
  const Policy& policy_;
  std::uint64_t seed_;
  std::vector<double> effects_;
  bool finite_ = false;
};

void validate_truth(const Policy& policy, const TruthSource& truth) {
  const auto* list = std::get_if<EmpiricalList>(&truth);
  if (!list) return;
  if (list->effects.empty()) throw ConfigError("empirical truth list is empty");
  for (double mu : list->effects) {
    if (!std::isfinite(mu) || (policy.model().is_beta() && (mu < 0.0 || mu > 1.0))) {
      throw ConfigError("empirical effect " + std::to_string(mu) + " is outside the model support");
    }
  }
}

template <class Sink>
void run_replication(const SimConfig& config, std::int64_t replication, Sink&& sink) {
  const Policy& policy = *config.policy;
  const std::uint64_t seed =
      derive_seed(config.seed, static_cast<std::uint64_t>(replication), kReplicationStream);
  const ExperimentSource source(policy, config.truth, seed);
  std::int64_t clock = 0;
  std::int64_t discoveries = 0;
  for (std::int64_t i = 0;; ++i) {
    if (source.finite()) {
      if (source.exhausted(i)) break;
    } else if (discoveries >= config.discoveries_per_replication) {
      break;
    }
    if (clock > config.max_observations_per_replication) {
      throw NumericalError("replication exceeded " +
                           std::to_string(config.max_observations_per_replication) +
                           " observations without reaching its discovery target");
    }
    const auto rec = source.run(i, clock);
    if (rec.outcome == Outcome::Discovered) ++discoveries;
    sink(rec);
  }
}

Tally tally_replication(const SimConfig& config, std::int64_t replication) {
  Tally t;
  const double s = config.policy->criterion().s();
  std::int64_t last_discovery_clock = 0;
  run_replication(config, replication, [&](const DiscoveryRecord& rec) {
    t.total_observations += rec.samples_used;
    t.experiments += 1;
    const bool alternative = rec.true_effect > s;
    if (alternative) t.alternatives += 1;
    auto& bucket = t.buckets[static_cast<std::int64_t>(std::floor(rec.true_effect / config.bucket_width))];
    bucket.experiments += 1;
    if (rec.outcome == Outcome::Discovered) {
      t.discoveries += 1;
      t.samples_discovered += rec.samples_used;
      if (alternative) {
        t.true_discoveries += 1;
      } else {
        t.false_discoveries += 1;
      }
      const double cycle = static_cast<double>(rec.cumulative_time - last_discovery_clock);
      last_discovery_clock = rec.cumulative_time;
      t.cycles += 1;
      t.cycle_sum += cycle;
      t.cycle_sq += cycle * cycle;
      bucket.discoveries += 1;
      bucket.samples_discovered += rec.samples_used;
      bucket.map_sum += *rec.map_estimate;
    } else {
      t.rejections += 1;
      t.samples_rejected += rec.samples_used;
      bucket.samples_rejected += rec.samples_used;
    }
  });
  return t;
}

double ratio(double num, double den) {
  return den > 0.0 ? num / den : std::numeric_limits<double>::quiet_NaN();
}

double proportion_se(double p, double n) { return n > 0.0 ? std::sqrt(p * (1.0 - p) / n) : 0.0; }

MetricsReport build_report(const SimConfig& config, const Tally& t) {
  MetricsReport r;
  r.policy = config.policy->name();
  r.s = config.policy->criterion().s();
  r.alpha = config.policy->criterion().alpha();
  const auto disc = static_cast<double>(t.discoveries);
  r.mean_time_to_discovery = ratio(static_cast<double>(t.total_observations), disc);
  if (t.cycles >= 2) {
    const double n = static_cast<double>(t.cycles);
    const double mean = t.cycle_sum / n;
    const double var = std::max(0.0, (t.cycle_sq - n * mean * mean) / (n - 1.0));
    r.se_mean_time = std::sqrt(var / n);
  }
  r.fdp = t.discoveries > 0 ? static_cast<double>(t.false_discoveries) / disc : 0.0;
  r.se_fdp = proportion_se(r.fdp, disc);
  r.power = t.alternatives > 0
                ? static_cast<double>(t.true_discoveries) / static_cast<double>(t.alternatives)
                : 0.0;
  r.se_power = proportion_se(r.power, static_cast<double>(t.alternatives));
  r.n_discoveries = t.discoveries;
  r.n_false_discoveries = t.false_discoveries;
  r.n_experiments_started = t.experiments;
  r.n_alternatives = t.alternatives;
  r.total_observations = t.total_observations;
  r.mean_samples_rejected =
      ratio(static_cast<double>(t.samples_rejected), static_cast<double>(t.rejections));
  r.mean_samples_discovered = ratio(static_cast<double>(t.samples_discovered), disc);
  r.total_cost_with_c =
      static_cast<double>(t.total_observations) + config.c * static_cast<double>(t.experiments);
  r.bucket_width = config.bucket_width;
  r.buckets = t.buckets;
  return r;
}

void validate_config(const SimConfig& config) {
  if (!config.policy) throw ConfigError("simulation needs a policy");
  if (config.replications < 1) throw ConfigError("replications must be >= 1");
  if (config.discoveries_per_replication < 1) throw ConfigError("discoveries per replication must be >= 1");
  if (!(config.bucket_width > 0.0)) throw ConfigError("bucket width must be > 0");
  if (!(config.c >= 0.0)) throw ConfigError("fixed cost must be >= 0");
  validate_truth(*config.policy, config.truth);
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

nlohmann::json number_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json();
}

}  // namespace

const char* to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Discovered:
      return "discovered";
    case Outcome::Rejected:
      return "rejected";
    case Outcome::Exhausted:
      return "exhausted";
  }
  return "?";
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream) {
  return splitmix(splitmix(splitmix(master) ^ index) ^ (stream * 0xD1B54A32D192ED03ULL));
}

std::vector<DiscoveryRecord> run_until_discovery(const Policy& policy, const TruthSource& truth,
                                                 std::uint64_t seed) {
  validate_truth(policy, truth);
  const ExperimentSource source(policy, truth, seed);
  std::vector<DiscoveryRecord> records;
  std::int64_t clock = 0;
  for (std::int64_t i = 0;; ++i) {
    if (source.exhausted(i)) {
      throw ExhaustionError("truth list exhausted after " + std::to_string(i) +
                                " experiments without a discovery",
                            std::move(records));
    }
    records.push_back(source.run(i, clock));
    if (records.back().outcome == Outcome::Discovered) return records;
  }
}

std::vector<DiscoveryRecord> replication_records(const SimConfig& config, std::int64_t replication) {
  validate_config(config);
  std::vector<DiscoveryRecord> out;
  run_replication(config, replication, [&](const DiscoveryRecord& rec) { out.push_back(rec); });
  return out;
}

MetricsReport simulate(const SimConfig& config) {
  validate_config(config);
  const auto reps = static_cast<std::size_t>(config.replications);
  std::vector<Tally> tallies(reps);
  const auto workers = static_cast<std::size_t>(std::clamp<std::int64_t>(config.threads, 1, config.replications));

  if (workers == 1) {
    for (std::size_t r = 0; r < reps; ++r) tallies[r] = tally_replication(config, static_cast<std::int64_t>(r));
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t r = next++; r < reps; r = next++) {
            tallies[r] = tally_replication(config, static_cast<std::int64_t>(r));
          }
        } catch (...) {
          errors[w] = std::current_exception();
          next = reps;
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  // Merge in replication order so floating-point sums do not depend on scheduling.
  Tally total;
  for (const auto& t : tallies) total.merge(t);
  return build_report(config, total);
}

std::vector<MetricsReport> compare_policies(const std::vector<std::shared_ptr<const Policy>>& policies,
                                            const SimConfig& shared) {
  if (policies.empty()) throw ConfigError("no policies to compare");
  std::vector<MetricsReport> out;
  for (const auto& p : policies) {
    if (!p) throw ConfigError("null policy");
    if (!(p->model() == policies.front()->model()) ||
        !(p->criterion() == policies.front()->criterion())) {
      throw ConfigError("compared policies must share the model and criterion");
    }
  }
  for (const auto& p : policies) {
    SimConfig config = shared;
    config.policy = p;
    out.push_back(simulate(config));
  }
  return out;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsReport>& rows) {
  out << "policy,s,alpha,mean_time,fdp,power,n_disc,m_tau,mean_samples_rej,mean_samples_disc\n";
  for (const auto& r : rows) {
    out << r.policy << ',' << format_number(r.s) << ',' << format_number(r.alpha) << ','
        << format_number(r.mean_time_to_discovery) << ',' << format_number(r.fdp) << ','
        << format_number(r.power) << ',' << r.n_discoveries << ',' << r.n_experiments_started << ','
        << format_number(r.mean_samples_rejected) << ',' << format_number(r.mean_samples_discovered)
        << '\n';
  }
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  nlohmann::json buckets = nlohmann::json::array();
  for (const auto& [key, b] : r.buckets) {
    const double lo = static_cast<double>(key) * r.bucket_width;
    const auto exps = static_cast<double>(b.experiments);
    const auto disc = static_cast<double>(b.discoveries);
    buckets.push_back({{"lo", lo},
                       {"hi", lo + r.bucket_width},
                       {"experiments", b.experiments},
                       {"discoveries", b.discoveries},
                       {"discovery_rate", number_or_null(ratio(disc, exps))},
                       {"mean_samples_rejected",
                        number_or_null(ratio(static_cast<double>(b.samples_rejected), exps - disc))},
                       {"mean_samples_discovered",
                        number_or_null(ratio(static_cast<double>(b.samples_discovered), disc))},
                       {"mean_map", number_or_null(ratio(b.map_sum, disc))}});
  }
  j = {{"policy", r.policy},
       {"s", r.s},
       {"alpha", r.alpha},
       {"mean_time", number_or_null(r.mean_time_to_discovery)},
       {"se_mean_time", r.se_mean_time},
       {"fdp", r.fdp},
       {"se_fdp", r.se_fdp},
       {"power", r.power},
       {"se_power", r.se_power},
       {"n_disc", r.n_discoveries},
       {"n_false_disc", r.n_false_discoveries},
       {"m_tau", r.n_experiments_started},
       {"n_alternatives", r.n_alternatives},
       {"total_observations", r.total_observations},
       {"mean_samples_rej", number_or_null(r.mean_samples_rejected)},
       {"mean_samples_disc", number_or_null(r.mean_samples_discovered)},
       {"total_cost_with_c", r.total_cost_with_c},
       {"effect_buckets", std::move(buckets)}};
}

}  // namespace seqlab
