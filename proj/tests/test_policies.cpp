#include <gtest/gtest.h>

#include <random>

#include "seqlab/error.hpp"
#include "seqlab/policies.hpp"

using namespace seqlab;

namespace {

const ModelSpec kModel = ModelSpec::beta_bernoulli(60, 170);
const DiscoveryCriterion kCrit(kModel, 0.27, 0.05);

std::shared_ptr<const PolicyTable> small_table() {
  static const auto table =
      std::make_shared<const PolicyTable>(solve_optimal(TruncatedProblem(kModel, kCrit, 500)));
  return table;
}

std::vector<Policy> all_policies() {
  std::vector<Policy> out;
  out.push_back(Policy::make(OptimalSpec{small_table()}, kModel, kCrit));
  out.push_back(Policy::make(HeuristicSpec{2000, 0.2, 500}, kModel, kCrit));
  out.push_back(Policy::make(FixedNSpec{300}, kModel, kCrit));
  out.push_back(Policy::make(FixedNEarlyStopSpec{300}, kModel, kCrit));
  out.push_back(Policy::make(BayesSequentialSpec{std::nullopt, 400}, kModel, kCrit));
  return out;
}

}  // namespace

TEST(FixedN, NeverActsEarly) {
  const auto p = Policy::make(FixedNSpec{1000}, kModel, kCrit);
  for (std::int64_t x = 0; x <= 500; x += 50) EXPECT_EQ(p.decide({500, double(x)}), Action::Continue);
  const double a = *p.acceptance().at(1000);
  EXPECT_EQ(p.decide({1000, a}), Action::Discover);
  EXPECT_EQ(p.decide({1000, a - 1}), Action::Reject);
  EXPECT_THROW(p.decide({1001, 0}), DomainError);
}

TEST(FixedNEarlyStop, DiscoversEarly) {
  const auto p = Policy::make(FixedNEarlyStopSpec{1000}, kModel, kCrit);
  const double a = *p.acceptance().at(400);
  EXPECT_EQ(p.decide({400, a}), Action::Discover);
  EXPECT_EQ(p.decide({400, a - 1}), Action::Continue);
  EXPECT_EQ(p.decide({1000, 0}), Action::Reject);
  EXPECT_FALSE(p.is_truncation(1000));
}

TEST(Optimal, FollowsTable) {
  const auto table = small_table();
  const auto p = Policy::make(OptimalSpec{table}, kModel, kCrit);
  for (std::int64_t n = 1; n < table->k(); n += 13) {
    const auto a = table->acceptance().at(n);
    const auto r = table->rejection_threshold(n);
    for (std::int64_t x = 0; x <= n; ++x) {
      Action expected = Action::Continue;
      if (a && x >= *a) expected = Action::Discover;
      else if (r && x <= *r) expected = Action::Reject;
      EXPECT_EQ(p.decide({n, double(x)}), expected) << "n=" << n << " S=" << x;
    }
  }
  EXPECT_EQ(p.decide({table->k(), 0}), Action::Reject);
  EXPECT_TRUE(p.is_truncation(table->k()));
  EXPECT_EQ(p.decide({0, 0}), Action::Continue);
}

TEST(Optimal, SerializedTableDecidesIdentically) {
  const nlohmann::json j = *small_table();
  const auto reread = std::make_shared<const PolicyTable>(policy_table_from_json(nlohmann::json::parse(j.dump())));
  const auto a = Policy::make(OptimalSpec{small_table()}, kModel, kCrit);
  const auto b = Policy::make(OptimalSpec{reread}, kModel, kCrit);
  for (std::int64_t n = 1; n <= 500; ++n) {
    for (std::int64_t x = 0; x <= n; x += 3) EXPECT_EQ(a.decide({n, double(x)}), b.decide({n, double(x)}));
  }
}

TEST(Optimal, TableMustMatchCriterion) {
  const DiscoveryCriterion other(kModel, 0.28, 0.05);
  EXPECT_THROW(Policy::make(OptimalSpec{small_table()}, kModel, other), ConfigError);
}

TEST(Heuristic, ThresholdsDelegateToBoundaries) {
  const auto p = Policy::make(HeuristicSpec{2000, 0.2, 500}, kModel, kCrit);
  for (std::int64_t n = 1; n < 500; ++n) {
    EXPECT_EQ(p.rejection_thresholds()[static_cast<std::size_t>(n - 1)],
              heuristic_boundary(kModel, kCrit, n, 2000, 0.2))
        << "n=" << n;
  }
  EXPECT_EQ(p.decide({500, 0}), Action::Reject);
  EXPECT_TRUE(p.is_truncation(500));
}

TEST(BayesSequential, DefaultLevelContinuesAtStart) {
  const auto p = Policy::make(BayesSequentialSpec{}, kModel, kCrit);
  EXPECT_EQ(p.decide({0, 0}), Action::Continue);
  const double upper = 1 - prior_tail(kModel, 0.27);
  EXPECT_THROW(Policy::make(BayesSequentialSpec{upper}, kModel, kCrit), ConfigError);
  EXPECT_THROW(Policy::make(BayesSequentialSpec{upper + 0.1}, kModel, kCrit), ConfigError);
  EXPECT_THROW(Policy::make(BayesSequentialSpec{std::nullopt, 0}, kModel, kCrit), ConfigError);
}

TEST(BayesSequential, MatchesDirectPosterior) {
  const double level = 0.9 * (1 - prior_tail(kModel, 0.27));
  const auto p = Policy::make(BayesSequentialSpec{std::nullopt, 4000}, kModel, kCrit);
  for (std::int64_t n = 1; n < 4000; n += 97) {
    for (std::int64_t x = 0; x <= n; x += std::max<std::int64_t>(1, n / 60)) {
      const double tail = posterior_tail(kModel, {n, double(x)}, 0.27);
      Action expected = Action::Continue;
      if (tail < 0.05) expected = Action::Discover;
      else if (1 - tail < level) expected = Action::Reject;
      EXPECT_EQ(p.decide({n, double(x)}), expected) << "n=" << n << " S=" << x;
    }
  }
  EXPECT_EQ(p.decide({4000, 0}), Action::Reject);
  EXPECT_TRUE(p.is_truncation(4000));
}

TEST(Policies, DiscoverImpliesCriterion) {
  std::mt19937_64 rng(17);
  for (const auto& p : all_policies()) {
    for (int i = 0; i < 3000; ++i) {
      const std::int64_t n = std::uniform_int_distribution<std::int64_t>(1, p.horizon())(rng);
      const std::int64_t x = std::uniform_int_distribution<std::int64_t>(0, n)(rng);
      const Action first = p.decide({n, double(x)});
      EXPECT_EQ(first, p.decide({n, double(x)}));
      if (first == Action::Discover) EXPECT_LT(posterior_tail(kModel, {n, double(x)}, 0.27), 0.05);
    }
  }
}

TEST(Policies, EarlyStopNeverSlowerOnSharedStreams) {
  const auto fixed = Policy::make(FixedNSpec{300}, kModel, kCrit);
  const auto early = Policy::make(FixedNEarlyStopSpec{300}, kModel, kCrit);
  Rng rng(5);
  auto stop_time = [](const Policy& p, const std::vector<int>& xs) {
    ExperimentState st;
    for (int x : xs) {
      st.n += 1;
      st.sum += x;
      if (p.decide(st) != Action::Continue) return std::pair{st.n, p.decide(st)};
    }
    return std::pair{st.n, Action::Continue};
  };
  for (int e = 0; e < 2000; ++e) {
    const double mu = sample_effect(kModel, rng);
    std::vector<int> xs(300);
    for (auto& x : xs) x = static_cast<int>(sample_observation(kModel, mu, rng));
    const auto [tf, af] = stop_time(fixed, xs);
    const auto [te, ae] = stop_time(early, xs);
    EXPECT_LE(te, tf);
    if (af == Action::Discover) EXPECT_EQ(ae, Action::Discover);
  }
}

TEST(Policies, SpecJsonRoundTrip) {
  const PolicySpec specs[] = {HeuristicSpec{1500, 0.1, 3000}, FixedNSpec{800}, FixedNEarlyStopSpec{900},
                              BayesSequentialSpec{0.5, 3000}, BayesSequentialSpec{std::nullopt, 10},
                              OptimalSpec{nullptr, "tables/x.json", 4000, 2.0, 1e-7}};
  for (const auto& spec : specs) {
    const nlohmann::json j = spec;
    const auto back = policy_spec_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(nlohmann::json(back), j);
    EXPECT_EQ(policy_name(back), j.at("variant").get<std::string>());
  }
  EXPECT_THROW(policy_spec_from_json(nlohmann::json{{"variant", "thompson"}}), ConfigError);
  const auto resolved = policy_spec_from_json(nlohmann::json{{"variant", "optimal"}, {"table_path", "t.json"}}, "/data");
  EXPECT_EQ(std::get<OptimalSpec>(resolved).table_path, "/data/t.json");
}

TEST(Policies, InvalidSettings) {
  EXPECT_THROW(Policy::make(FixedNSpec{0}, kModel, kCrit), ConfigError);
  EXPECT_THROW(Policy::make(FixedNEarlyStopSpec{-3}, kModel, kCrit), ConfigError);
  EXPECT_THROW(Policy::make(HeuristicSpec{2000, 1.5, 100}, kModel, kCrit), ConfigError);
  EXPECT_THROW(Policy::make(OptimalSpec{nullptr, "/nonexistent/table.json"}, kModel, kCrit), ConfigError);
}
