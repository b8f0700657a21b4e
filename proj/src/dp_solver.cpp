#include "seqlab/dp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "seqlab/error.hpp"

namespace seqlab {

namespace {

// Prior mass allowed outside the Normal grid before the solve is refused.
constexpr double kMaxGridLeakage = 1e-6;
// Kernel half-width in transition standard deviations.
constexpr double kKernelWidth = 8.0;

std::int64_t first_accepted_index(const NormalGrid& grid, double y_boundary) {
  // Smallest i with y_i > y_boundary; grid.points if none.
  const double h = grid.spacing();
  auto i = static_cast<std::int64_t>(std::floor((y_boundary - grid.lo) / h));
  i = std::clamp<std::int64_t>(i, 0, grid.points);
  while (i > 0 && grid.at(i - 1) > y_boundary) --i;
  while (i < grid.points && !(grid.at(i) > y_boundary)) ++i;
  return i;
}

}  // namespace

NormalGrid default_grid(const ModelSpec& model, const DiscoveryCriterion& criterion,
                        std::int64_t points) {
  const double width = 8.0 * model.normal().sigma0;
  return NormalGrid{criterion.s() - width, criterion.s() + width, points};
}

TruncatedProblem::TruncatedProblem(ModelSpec m, DiscoveryCriterion crit, std::int64_t horizon,
                                   double cost, std::optional<NormalGrid> g)
    : model(std::move(m)), criterion(crit), k(horizon), c(cost), grid(g) {
  if (model.is_normal() && !grid) grid = default_grid(model, criterion);
  validate();
}

void TruncatedProblem::validate() const {
  if (k < 1) throw DomainError("truncation horizon k must be >= 1");
  if (!std::isfinite(c) || c < 0.0) throw DomainError("fixed cost c must be finite and >= 0");
  if (model.is_beta()) {
    if (grid) throw DomainError("the beta-bernoulli model runs on the exact lattice; no grid");
    return;
  }
  if (!grid) throw DomainError("normal model requires a grid");
  if (grid->points < 3 || grid->points % 2 == 0) {
    throw DomainError("grid needs an odd number of points >= 3");
  }
  if (!(grid->lo < grid->hi) || !std::isfinite(grid->lo) || !std::isfinite(grid->hi)) {
    throw DomainError("grid bounds must be finite with lo < hi");
  }
}

SingleExperimentSolver::SingleExperimentSolver(TruncatedProblem problem)
    : problem_(std::move(problem)),
      boundaries_(problem_.model, problem_.criterion, problem_.k),
      grid_(problem_.grid.value_or(NormalGrid{})) {
  problem_.validate();
  if (!problem_.model.is_normal()) return;

  const auto& p = problem_.model.normal();
  const double leak = normal_cdf((grid_.lo - p.mu0) / p.sigma0) +
                      normal_cdf(-(grid_.hi - p.mu0) / p.sigma0);
  if (leak > kMaxGridLeakage) {
    throw NumericalError("normal grid [" + std::to_string(grid_.lo) + ", " +
                         std::to_string(grid_.hi) + "] leaks " + std::to_string(leak) +
                         " of the prior mass (limit 1e-6); widen the grid");
  }

  const double h = grid_.spacing();
  const double g = problem_.model.gamma();
  const std::int64_t max_half = grid_.points - 1;
  kernels_.resize(static_cast<std::size_t>(problem_.k));
  for (std::int64_t n = 1; n < problem_.k; ++n) {
    const double w = static_cast<double>(n) + g;
    const double sd = p.sigma / std::sqrt(w * (w + 1.0));
    const auto half = std::min<std::int64_t>(
        max_half, static_cast<std::int64_t>(std::ceil(kKernelWidth * sd / h)) + 1);
    auto& kernel = kernels_[static_cast<std::size_t>(n)];
    kernel.resize(static_cast<std::size_t>(2 * half + 1));
    for (std::int64_t d = -half; d <= half; ++d) {
      const double upper = d == half ? 1.0 : normal_cdf((static_cast<double>(d) + 0.5) * h / sd);
      const double lower = d == -half ? 0.0 : normal_cdf((static_cast<double>(d) - 0.5) * h / sd);
      kernel[static_cast<std::size_t>(d + half)] = upper - lower;
    }
  }

  // Y_1 = (X_1 + gamma*mu0) / (1 + gamma) with X_1 ~ N(mu0, sigma0^2 + sigma^2).
  const auto first = prior_predictive_first(problem_.model);
  const double y1_mean = p.mu0;
  const double y1_sd = std::sqrt(first.x_variance) / (1.0 + g);
  first_weights_.resize(static_cast<std::size_t>(grid_.points));
  for (std::int64_t i = 0; i < grid_.points; ++i) {
    const double y = grid_.at(i);
    const double upper = i == grid_.points - 1 ? 1.0 : normal_cdf((y + 0.5 * h - y1_mean) / y1_sd);
    const double lower = i == 0 ? 0.0 : normal_cdf((y - 0.5 * h - y1_mean) / y1_sd);
    first_weights_[static_cast<std::size_t>(i)] = upper - lower;
  }
}

const NormalGrid& SingleExperimentSolver::grid() const {
  if (!problem_.model.is_normal()) throw DomainError("beta-bernoulli problems have no grid");
  return grid_;
}

InductionResult SingleExperimentSolver::induct(double kappa, bool keep_table) const {
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw DomainError("rejection cost kappa must be > 0");
  return problem_.model.is_beta() ? induct_beta(kappa, keep_table)
                                  : induct_normal(kappa, keep_table);
}

InductionResult SingleExperimentSolver::induct_beta(double kappa, bool keep_table) const {
  const auto& prior = problem_.model.beta();
  const std::int64_t k = problem_.k;
  const double reject_cost = kappa + problem_.c;

  InductionResult result;
  result.thresholds.resize(static_cast<std::size_t>(k));
  if (keep_table) {
    result.table.emplace();
    result.table->values.resize(static_cast<std::size_t>(k));
    result.table->reject.resize(static_cast<std::size_t>(k));
  }

  std::vector<double> next(static_cast<std::size_t>(k + 2), 0.0);
  std::vector<double> cur(static_cast<std::size_t>(k + 2), 0.0);
  std::vector<bool> rejects(static_cast<std::size_t>(k + 1), false);

  for (std::int64_t n = k; n >= 1; --n) {
    const auto a = boundaries_.at(n);
    const std::int64_t accept_from = a ? static_cast<std::int64_t>(*a) : n + 1;
    std::optional<double> last_reject;
    for (std::int64_t s = 0; s <= n; ++s) {
      const auto si = static_cast<std::size_t>(s);
      rejects[si] = false;
      if (s >= accept_from) {
        cur[si] = 0.0;
        continue;
      }
      if (n == k) {
        cur[si] = reject_cost;
        rejects[si] = true;
        last_reject = static_cast<double>(s);
        continue;
      }
      const double p = (prior.a + static_cast<double>(s)) /
                       (prior.a + prior.b + static_cast<double>(n));
      const double cont = 1.0 + p * next[si + 1] + (1.0 - p) * next[si];
      // Ties go to Continue.
      if (reject_cost < cont) {
        cur[si] = reject_cost;
        rejects[si] = true;
        last_reject = static_cast<double>(s);
      } else {
        cur[si] = cont;
      }
    }
    result.thresholds[static_cast<std::size_t>(n - 1)] = last_reject;
    if (keep_table) {
      const auto row = static_cast<std::size_t>(n - 1);
      result.table->values[row].assign(cur.begin(), cur.begin() + n + 1);
      result.table->reject[row].assign(rejects.begin(), rejects.begin() + n + 1);
    }
    std::swap(cur, next);
  }
  // `next` now holds stage 1.
  const double q = prior_predictive_first(problem_.model).success_prob;
  result.f_value = 1.0 + q * next[1] + (1.0 - q) * next[0];
  return result;
}

InductionResult SingleExperimentSolver::induct_normal(double kappa, bool keep_table) const {
  const std::int64_t k = problem_.k;
  const std::int64_t points = grid_.points;
  const double reject_cost = kappa + problem_.c;
  const double h = grid_.spacing();
  const auto& model = problem_.model;

  InductionResult result;
  result.thresholds.resize(static_cast<std::size_t>(k));
  if (keep_table) {
    result.table.emplace();
    result.table->values.resize(static_cast<std::size_t>(k));
    result.table->reject.resize(static_cast<std::size_t>(k));
  }

  std::vector<double> next(static_cast<std::size_t>(points), 0.0);
  std::vector<double> cur(static_cast<std::size_t>(points), 0.0);
  std::vector<double> margin(static_cast<std::size_t>(points), 0.0);  // continue - reject
  std::vector<bool> rejects(static_cast<std::size_t>(points), false);
  std::int64_t next_accept = points;

  for (std::int64_t n = k; n >= 1; --n) {
    const double a_n = *boundaries_.at(n);
    const std::int64_t accept_from =
        first_accepted_index(grid_, martingale_value(model, {n, a_n}));
    std::fill(rejects.begin(), rejects.end(), false);
    std::int64_t last_reject = -1;

    if (n == k) {
      for (std::int64_t i = 0; i < points; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        const bool accepted = i >= accept_from;
        cur[ii] = accepted ? 0.0 : reject_cost;
        rejects[ii] = !accepted;
        if (!accepted) last_reject = i;
      }
    } else {
      const auto& kernel = kernels_[static_cast<std::size_t>(n)];
      const auto half = static_cast<std::int64_t>(kernel.size() / 2);
      const double top_value = next[static_cast<std::size_t>(points - 1)];
      for (std::int64_t i = 0; i < points; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        if (i >= accept_from) {
          cur[ii] = 0.0;
          continue;
        }
        // Offsets falling off the grid are clamped to the end cells.
        double expected = 0.0;
        const std::int64_t j_begin = std::max<std::int64_t>(0, i - half);
        const std::int64_t j_end = std::min<std::int64_t>(points - 1, i + half);
        double below = 0.0;
        for (std::int64_t d = -half; i + d < 0; ++d) below += kernel[static_cast<std::size_t>(d + half)];
        double above = 0.0;
        for (std::int64_t d = half; i + d > points - 1; --d) above += kernel[static_cast<std::size_t>(d + half)];
        expected += below * next[0] + above * top_value;
        const std::int64_t j_stop = std::min(j_end, next_accept - 1);
        for (std::int64_t j = j_begin; j <= j_stop; ++j) {
          expected += kernel[static_cast<std::size_t>(j - i + half)] * next[static_cast<std::size_t>(j)];
        }
        const double cont = 1.0 + expected;
        margin[ii] = cont - reject_cost;
        if (reject_cost < cont) {
          cur[ii] = reject_cost;
          rejects[ii] = true;
          last_reject = i;
        } else {
          cur[ii] = cont;
        }
      }
    }

    std::optional<double> threshold;
    if (last_reject >= 0) {
      if (last_reject + 1 >= accept_from) {
        threshold = a_n;
      } else {
        // Interpolate the crossing of continue-cost and reject-cost.
        const auto li = static_cast<std::size_t>(last_reject);
        const double d0 = margin[li];
        const double d1 = margin[li + 1];
        const double frac = d0 - d1 > 0.0 ? d0 / (d0 - d1) : 0.0;
        const double y = grid_.at(last_reject) + h * std::clamp(frac, 0.0, 1.0);
        threshold = statistic_from_martingale(model, n, y);
      }
    }
    result.thresholds[static_cast<std::size_t>(n - 1)] = threshold;
    if (keep_table) {
      const auto row = static_cast<std::size_t>(n - 1);
      result.table->values[row] = cur;
      result.table->reject[row] = rejects;
    }
    std::swap(cur, next);
    next_accept = accept_from;
  }

  double expected = 0.0;
  for (std::int64_t i = 0; i < std::min(points, next_accept); ++i) {
    expected += first_weights_[static_cast<std::size_t>(i)] * next[static_cast<std::size_t>(i)];
  }
  result.f_value = 1.0 + expected;
  return result;
}

InductionResult backward_induction(const TruncatedProblem& problem, double kappa,
                                   bool keep_table) {
  return SingleExperimentSolver(problem).induct(kappa, keep_table);
}

PolicyTable::PolicyTable(TruncatedProblem problem, BoundarySeries acceptance,
                         std::vector<std::optional<double>> thresholds, double kappa_star,
                         double tol, std::vector<BisectionStep> iterations)
    : problem_(std::move(problem)),
      acceptance_(std::move(acceptance)),
      thresholds_(std::move(thresholds)),
      kappa_star_(kappa_star),
      tol_(tol),
      iterations_(std::move(iterations)) {
  if (acceptance_.horizon() != problem_.k ||
      static_cast<std::int64_t>(thresholds_.size()) != problem_.k) {
    throw ConfigError("policy table needs k acceptance and k rejection entries");
  }
  if (!(acceptance_.model() == problem_.model) || !(acceptance_.criterion() == problem_.criterion)) {
    throw ConfigError("policy table boundaries were built for a different model or criterion");
  }
}

std::optional<double> PolicyTable::rejection_threshold(std::int64_t n) const {
  if (n < 1 || n > problem_.k) {
    throw DomainError("n=" + std::to_string(n) + " outside truncation horizon " +
                      std::to_string(problem_.k));
  }
  return thresholds_[static_cast<std::size_t>(n - 1)];
}

PolicyTable solve_optimal(const TruncatedProblem& problem, const SolveOptions& options) {
  if (!(options.tol > 0.0)) throw DomainError("tolerance must be > 0");
  if (!(options.bracket_lo > 0.0) || !(options.initial_hi > options.bracket_lo)) {
    throw DomainError("bisection bracket needs 0 < lo < hi");
  }
  const SingleExperimentSolver solver(problem);
  std::vector<BisectionStep> steps;
  auto evaluate = [&](double kappa) {
    auto r = solver.induct(kappa);
    steps.push_back({kappa, r.f_value});
    return r;
  };
  auto finish = [&](double kappa, InductionResult r) {
    return PolicyTable(problem, solver.boundaries(), std::move(r.thresholds), kappa, options.tol,
                       std::move(steps));
  };

  double lo = options.bracket_lo;
  auto r_lo = evaluate(lo);
  if (r_lo.f_value == lo) return finish(lo, std::move(r_lo));
  if (r_lo.f_value < lo) {
    throw DomainError("lower bisection bracket lies above the fixed point");
  }

  constexpr double kMaxBracket = 1099511627776.0;  // 2^40
  double hi = options.initial_hi;
  for (;;) {
    auto r_hi = evaluate(hi);
    if (r_hi.f_value == hi) return finish(hi, std::move(r_hi));
    if (r_hi.f_value < hi) break;
    lo = hi;
    hi *= 2.0;
    if (hi > kMaxBracket) {
      throw NumericalError("rejection cost bracket exceeded 2^40 without f(kappa) < kappa; "
                           "discovery looks unreachable under this criterion and horizon");
    }
  }

  // f(kappa) - kappa has slope -P(discovery), which can be tiny, so a small
  // residual alone does not pin kappa down; the bracket must be narrow too.
  for (int it = 0; it < options.max_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    auto r = evaluate(mid);
    const bool small_residual = std::abs(r.f_value - mid) <= options.tol * mid;
    if (r.f_value == mid || (small_residual && hi - lo <= options.tol * mid)) {
      return finish(mid, std::move(r));
    }
    if (r.f_value < mid) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  throw NumericalError("bisection did not reach the requested tolerance in " +
                       std::to_string(options.max_iterations) + " iterations");
}

double value_at(const PolicyTable& table, const ExperimentState& state) {
  const auto& model = table.model();
  validate_state(model, state);
  if (state.n < 1 || state.n > table.k()) {
    throw DomainError("state n=" + std::to_string(state.n) + " outside horizon 1.." +
                      std::to_string(table.k()));
  }
  if (table.acceptance().accepts(state.n, state.sum)) return 0.0;

  const SingleExperimentSolver solver(table.problem());
  const auto result = solver.induct(table.kappa_star(), true);
  const auto& row = result.table->values[static_cast<std::size_t>(state.n - 1)];
  if (model.is_beta()) return row[static_cast<std::size_t>(state.sum)];

  const auto& grid = solver.grid();
  const double y = martingale_value(model, state);
  if (y < grid.lo || y > grid.hi) throw DomainError("state lies outside the solver grid");
  const double pos = (y - grid.lo) / grid.spacing();
  const auto i = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(pos)), grid.points - 2);
  const double frac = pos - static_cast<double>(i);
  return (1.0 - frac) * row[static_cast<std::size_t>(i)] + frac * row[static_cast<std::size_t>(i + 1)];
}

void to_json(nlohmann::json& j, const PolicyTable& table) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& v : table.acceptance().values()) a.push_back(v ? nlohmann::json(*v) : nlohmann::json());
  nlohmann::json r = nlohmann::json::array();
  for (const auto& v : table.thresholds()) r.push_back(v ? nlohmann::json(*v) : nlohmann::json());
  nlohmann::json iterations = nlohmann::json::array();
  for (const auto& step : table.iterations()) iterations.push_back({step.kappa, step.f});
  nlohmann::json grid;
  if (table.problem().grid) {
    const auto& g = *table.problem().grid;
    grid = {{"lo", g.lo}, {"hi", g.hi}, {"points", g.points}};
  }
  j = {{"model", table.model()},
       {"criterion", {{"s", table.criterion().s()}, {"alpha", table.criterion().alpha()}}},
       {"k", table.k()},
       {"c", table.c()},
       {"tol", table.tol()},
       {"kappa_star", table.kappa_star()},
       {"a", std::move(a)},
       {"r", std::move(r)},
       {"grid", std::move(grid)},
       {"iterations", std::move(iterations)}};
}

PolicyTable policy_table_from_json(const nlohmann::json& j) {
  try {
    const ModelSpec model = model_from_json(j.at("model"));
    const DiscoveryCriterion criterion(model, j.at("criterion").at("s").get<double>(),
                                       j.at("criterion").at("alpha").get<double>());
    std::optional<NormalGrid> grid;
    if (j.contains("grid") && !j.at("grid").is_null()) {
      const auto& g = j.at("grid");
      grid = NormalGrid{g.at("lo").get<double>(), g.at("hi").get<double>(),
                        g.at("points").get<std::int64_t>()};
    }
    TruncatedProblem problem(model, criterion, j.at("k").get<std::int64_t>(),
                             j.value("c", 0.0), grid);
    auto read_nullable = [](const nlohmann::json& arr) {
      std::vector<std::optional<double>> out;
      for (const auto& v : arr) out.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
      return out;
    };
    auto acceptance = BoundarySeries::from_values(model, criterion, read_nullable(j.at("a")));
    std::vector<BisectionStep> steps;
    if (j.contains("iterations")) {
      for (const auto& step : j.at("iterations")) steps.push_back({step.at(0).get<double>(), step.at(1).get<double>()});
    }
    return PolicyTable(std::move(problem), std::move(acceptance), read_nullable(j.at("r")),
                       j.at("kappa_star").get<double>(), j.value("tol", 1e-6), std::move(steps));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad policy table JSON: ") + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(std::string("bad policy table JSON: ") + e.what());
  }
}

}  // namespace seqlab
