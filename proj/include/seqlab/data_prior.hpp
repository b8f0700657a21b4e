#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "seqlab/conjugate_models.hpp"

namespace seqlab {

struct RateRecord {
  std::string id;
  std::int64_t trials = 0;
  std::int64_t successes = 0;

  double rate() const { return static_cast<double>(successes) / static_cast<double>(trials); }
};

/// Reads `id,trials,successes` CSV (header required) and keeps rows with
/// trials >= min_trials, in file order. Malformed rows raise ParseError with
/// the 1-based line number.
std::vector<RateRecord> ingest_csv(std::istream& in, std::int64_t min_trials = 200);

void write_csv(std::ostream& out, std::span<const RateRecord> records);

std::vector<double> rates_of(std::span<const RateRecord> records);

struct MomentFit {
  double a = 0.0;
  double b = 0.0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased, n - 1 denominator
  std::int64_t count = 0;
};

/// Method-of-moments Beta fit. Throws DomainError for fewer than two rates,
/// rates outside (0, 1), zero variance, or variance >= m(1 - m).
MomentFit fit_beta_mom(std::span<const double> rates);

/// Synthetic stand-in for an empirical population: effects drawn from
/// Beta(a, b), trials uniform on [min_trials, max_trials], successes rounded
/// from effect * trials.
std::vector<RateRecord> synthesize_population(double a, double b, std::int64_t count,
                                              std::int64_t min_trials, std::int64_t max_trials,
                                              std::uint64_t seed);

}  // namespace seqlab
