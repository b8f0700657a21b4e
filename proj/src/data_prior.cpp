#include "seqlab/data_prior.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <random>

#include "seqlab/error.hpp"

namespace seqlab {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

std::int64_t parse_count(const std::string& field, std::size_t line, const char* name) {
  std::int64_t value = 0;
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (field.empty() || ec != std::errc() || ptr != end) {
    throw ParseError(line, std::string(name) + " '" + field + "' is not an integer");
  }
  return value;
}

}  // namespace

std::vector<RateRecord> ingest_csv(std::istream& in, std::int64_t min_trials) {
  if (min_trials < 1) throw ConfigError("min_trials must be >= 1");
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::vector<RateRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (!header_seen) {
      if (fields != std::vector<std::string>{"id", "trials", "successes"}) {
        throw ParseError(line_no, "expected header 'id,trials,successes'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 3) {
      throw ParseError(line_no, "expected 3 fields, found " + std::to_string(fields.size()));
    }
    RateRecord rec{fields[0], parse_count(fields[1], line_no, "trials"),
                   parse_count(fields[2], line_no, "successes")};
    if (rec.trials < 1) throw ParseError(line_no, "trials must be >= 1");
    if (rec.successes < 0 || rec.successes > rec.trials) {
      throw ParseError(line_no, "successes must lie in [0, trials]");
    }
    if (rec.trials >= min_trials) out.push_back(std::move(rec));
  }
  if (!header_seen) throw ParseError(line_no == 0 ? 1 : line_no, "missing header 'id,trials,successes'");
  return out;
}

void write_csv(std::ostream& out, std::span<const RateRecord> records) {
  out << "id,trials,successes\n";
  for (const auto& r : records) out << r.id << ',' << r.trials << ',' << r.successes << '\n';
}

std::vector<double> rates_of(std::span<const RateRecord> records) {
  std::vector<double> rates;
  rates.reserve(records.size());
  for (const auto& r : records) rates.push_back(r.rate());
  return rates;
}

MomentFit fit_beta_mom(std::span<const double> rates) {
  if (rates.size() < 2) throw DomainError("method of moments needs at least two rates");
  double mean = 0.0;
  for (double x : rates) {
    if (!(x > 0.0 && x < 1.0)) throw DomainError("rate " + std::to_string(x) + " is outside (0, 1)");
    mean += x;
  }
  const auto n = static_cast<double>(rates.size());
  mean /= n;
  double ss = 0.0;
  for (double x : rates) ss += (x - mean) * (x - mean);
  const double var = ss / (n - 1.0);
  if (!(var > 0.0)) throw DomainError("rates have zero sample variance");
  const double nu = mean * (1.0 - mean) / var - 1.0;
  if (!(nu > 0.0)) {
    throw DomainError("infeasible moments: variance " + std::to_string(var) +
                      " >= m(1-m); no beta distribution matches");
  }
  return {mean * nu, (1.0 - mean) * nu, mean, var, static_cast<std::int64_t>(rates.size())};
}

std::vector<RateRecord> synthesize_population(double a, double b, std::int64_t count,
                                              std::int64_t min_trials, std::int64_t max_trials,
                                              std::uint64_t seed) {
  if (count < 0) throw ConfigError("population count must be >= 0");
  if (min_trials < 1 || max_trials < min_trials) throw ConfigError("bad trials range");
  const auto model = ModelSpec::beta_bernoulli(a, b);
  Rng rng(seed);
  std::uniform_int_distribution<std::int64_t> trials_dist(min_trials, max_trials);
  std::vector<RateRecord> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    const double effect = sample_effect(model, rng);
    const std::int64_t trials = trials_dist(rng);
    auto successes = static_cast<std::int64_t>(std::llround(effect * static_cast<double>(trials)));
    successes = std::clamp<std::int64_t>(successes, 0, trials);
    out.push_back({"p" + std::to_string(i), trials, successes});
  }
  return out;
}

}  // namespace seqlab
