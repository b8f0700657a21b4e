#include "seqlab/policies.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "seqlab/error.hpp"

namespace seqlab {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

BoundarySeries truncate_series(const BoundarySeries& series, std::int64_t horizon) {
  std::vector<std::optional<double>> values(series.values().begin(),
                                            series.values().begin() + horizon);
  return BoundarySeries::from_values(series.model(), series.criterion(), std::move(values));
}

std::shared_ptr<const PolicyTable> load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open policy table '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("policy table '" + path + "' is not valid JSON: " + e.what());
  }
  return std::make_shared<const PolicyTable>(policy_table_from_json(j));
}

// Largest statistic with P(mu > s | n, S) < level, i.e. tail > 1 - level.
std::optional<double> sequential_reject_threshold(const ModelSpec& model, double s, std::int64_t n,
                                                  double level) {
  const double cut = 1.0 - level;
  if (model.is_normal()) {
    const double w = static_cast<double>(n) + model.gamma();
    const double y = s - model.normal().sigma * normal_quantile(cut) / std::sqrt(w);
    return statistic_from_martingale(model, n, y);
  }
  auto tail = [&](std::int64_t sum) { return posterior_tail(model, {n, static_cast<double>(sum)}, s); };
  if (!(tail(0) > cut)) return std::nullopt;
  if (tail(n) > cut) return static_cast<double>(n);
  std::int64_t lo = 0;  // tail(lo) > cut
  std::int64_t hi = n;  // tail(hi) <= cut
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (tail(mid) > cut) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return static_cast<double>(lo);
}

}  // namespace

const char* to_string(Action action) {
  switch (action) {
    case Action::Discover:
      return "discover";
    case Action::Continue:
      return "continue";
    case Action::Reject:
      return "reject";
  }
  return "?";
}

std::string policy_name(const PolicySpec& spec) {
  return std::visit(Overloaded{
                        [](const OptimalSpec&) { return std::string("optimal"); },
                        [](const HeuristicSpec&) { return std::string("heuristic"); },
                        [](const FixedNSpec&) { return std::string("fixed_n"); },
                        [](const FixedNEarlyStopSpec&) { return std::string("fixed_n_early_stop"); },
                        [](const BayesSequentialSpec&) { return std::string("bayes_sequential"); },
                    },
                    spec);
}

void to_json(nlohmann::json& j, const PolicySpec& spec) {
  j = std::visit(
      Overloaded{
          [](const OptimalSpec& o) {
            nlohmann::json out = {{"variant", "optimal"}, {"k", o.k}, {"c", o.c}, {"tol", o.tol}};
            if (o.table) {
              out["table"] = *o.table;
            } else if (!o.table_path.empty()) {
              out["table_path"] = o.table_path;
            }
            return out;
          },
          [](const HeuristicSpec& h) {
            return nlohmann::json{{"variant", "heuristic"}, {"lookahead", h.lookahead},
                                  {"beta", h.beta}, {"k", h.k}};
          },
          [](const FixedNSpec& f) { return nlohmann::json{{"variant", "fixed_n"}, {"n", f.n}}; },
          [](const FixedNEarlyStopSpec& f) {
            return nlohmann::json{{"variant", "fixed_n_early_stop"}, {"n", f.n}};
          },
          [](const BayesSequentialSpec& b) {
            return nlohmann::json{
                {"variant", "bayes_sequential"},
                {"beta_reject", b.beta_reject ? nlohmann::json(*b.beta_reject) : nlohmann::json()},
                {"cap", b.cap}};
          },
      },
      spec);
}

PolicySpec policy_spec_from_json(const nlohmann::json& j, const std::string& base_dir) {
  try {
    const auto variant = j.at("variant").get<std::string>();
    if (variant == "optimal") {
      OptimalSpec o;
      o.k = j.value("k", o.k);
      o.c = j.value("c", o.c);
      o.tol = j.value("tol", o.tol);
      if (j.contains("table")) {
        o.table = std::make_shared<const PolicyTable>(policy_table_from_json(j.at("table")));
      } else if (j.contains("table_path")) {
        std::filesystem::path p = j.at("table_path").get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
        o.table_path = p.string();
      }
      return o;
    }
    if (variant == "heuristic") {
      HeuristicSpec h;
      h.lookahead = j.value("lookahead", h.lookahead);
      h.beta = j.value("beta", h.beta);
      h.k = j.value("k", h.k);
      return h;
    }
    if (variant == "fixed_n") return FixedNSpec{j.value("n", std::int64_t{1000})};
    if (variant == "fixed_n_early_stop") return FixedNEarlyStopSpec{j.value("n", std::int64_t{1000})};
    if (variant == "bayes_sequential") {
      BayesSequentialSpec b;
      if (j.contains("beta_reject") && !j.at("beta_reject").is_null()) {
        b.beta_reject = j.at("beta_reject").get<double>();
      }
      b.cap = j.value("cap", b.cap);
      return b;
    }
    throw ConfigError("unknown policy variant '" + variant + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad policy JSON: ") + e.what());
  }
}

Policy::Policy(std::string name, BoundarySeries acceptance, std::vector<std::optional<double>> reject,
               std::int64_t horizon, bool check_only_at_horizon, bool truncates,
               std::shared_ptr<const PolicyTable> table, double prior_upper_tail,
               std::optional<double> initial_reject_level)
    : name_(std::move(name)),
      acceptance_(std::move(acceptance)),
      reject_(std::move(reject)),
      horizon_(horizon),
      check_only_at_horizon_(check_only_at_horizon),
      truncates_(truncates),
      table_(std::move(table)),
      prior_upper_tail_(prior_upper_tail),
      initial_reject_level_(initial_reject_level) {}

Policy Policy::make(const PolicySpec& spec, const ModelSpec& model,
                    const DiscoveryCriterion& criterion) {
  const std::string name = policy_name(spec);
  const double upper_tail = 1.0 - prior_tail(model, criterion.s());

  if (const auto* o = std::get_if<OptimalSpec>(&spec)) {
    std::shared_ptr<const PolicyTable> table = o->table;
    if (!table && !o->table_path.empty()) table = load_table(o->table_path);
    if (!table) {
      if (o->k < 1) throw ConfigError("optimal policy needs k >= 1");
      table = std::make_shared<const PolicyTable>(
          solve_optimal(TruncatedProblem(model, criterion, o->k, o->c), SolveOptions{o->tol}));
    }
    if (!(table->model() == model) || !(table->criterion() == criterion)) {
      throw ConfigError("policy table was solved for a different model or criterion");
    }
    return Policy(name, table->acceptance(), table->thresholds(), table->k(), false, true, table,
                  upper_tail, std::nullopt);
  }

  if (const auto* h = std::get_if<HeuristicSpec>(&spec)) {
    if (h->k < 1) throw ConfigError("heuristic policy needs k >= 1");
    if (h->lookahead < 0) throw ConfigError("heuristic lookahead must be >= 0");
    if (!(h->beta > 0.0 && h->beta < 1.0)) throw ConfigError("heuristic beta must lie in (0, 1)");
    const BoundarySeries extended(model, criterion, h->k + h->lookahead);
    std::vector<std::optional<double>> reject(static_cast<std::size_t>(h->k));
    try {
      for (std::int64_t n = 1; n < h->k; ++n) {
        reject[static_cast<std::size_t>(n - 1)] = heuristic_boundary(extended, n, h->lookahead, h->beta);
      }
    } catch (const DomainError& e) {
      throw ConfigError(std::string("heuristic policy: ") + e.what());
    }
    return Policy(name, truncate_series(extended, h->k), std::move(reject), h->k, false, true,
                  nullptr, upper_tail, std::nullopt);
  }

  if (const auto* f = std::get_if<FixedNSpec>(&spec)) {
    if (f->n < 1) throw ConfigError("fixed sample size N must be >= 1");
    return Policy(name, BoundarySeries(model, criterion, f->n),
                  std::vector<std::optional<double>>(static_cast<std::size_t>(f->n)), f->n, true,
                  false, nullptr, upper_tail, std::nullopt);
  }

  if (const auto* f = std::get_if<FixedNEarlyStopSpec>(&spec)) {
    if (f->n < 1) throw ConfigError("fixed sample size N must be >= 1");
    return Policy(name, BoundarySeries(model, criterion, f->n),
                  std::vector<std::optional<double>>(static_cast<std::size_t>(f->n)), f->n, false,
                  false, nullptr, upper_tail, std::nullopt);
  }

  const auto& b = std::get<BayesSequentialSpec>(spec);
  if (b.cap < 1) throw ConfigError("sequential test cap must be >= 1");
  const double level = b.beta_reject.value_or(0.9 * upper_tail);
  if (!(level > 0.0)) throw ConfigError("sequential beta_reject must be > 0");
  if (!(level < upper_tail)) {
    throw ConfigError("sequential beta_reject=" + std::to_string(level) +
                      " must stay below the prior P0(mu > s)=" + std::to_string(upper_tail) +
                      ", otherwise every alternative is rejected outright");
  }
  std::vector<std::optional<double>> reject(static_cast<std::size_t>(b.cap));
  for (std::int64_t n = 1; n <= b.cap; ++n) {
    reject[static_cast<std::size_t>(n - 1)] = sequential_reject_threshold(model, criterion.s(), n, level);
  }
  return Policy(name, BoundarySeries(model, criterion, b.cap), std::move(reject), b.cap, false,
                true, nullptr, upper_tail, level);
}

Action Policy::decide(const ExperimentState& state) const {
  validate_state(model(), state);
  if (state.n > horizon_) {
    throw DomainError("state n=" + std::to_string(state.n) + " is beyond the policy horizon " +
                      std::to_string(horizon_));
  }
  if (state.n == 0) {
    if (initial_reject_level_ && prior_upper_tail_ < *initial_reject_level_) return Action::Reject;
    return Action::Continue;
  }
  if (check_only_at_horizon_) {
    if (state.n < horizon_) return Action::Continue;
    return acceptance_.accepts(state.n, state.sum) ? Action::Discover : Action::Reject;
  }
  if (acceptance_.accepts(state.n, state.sum)) return Action::Discover;
  if (state.n == horizon_) return Action::Reject;
  const auto& r = reject_[static_cast<std::size_t>(state.n - 1)];
  if (r && state.sum <= *r) return Action::Reject;
  return Action::Continue;
}

}  // namespace seqlab
