#include "seqlab/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "seqlab/boundaries.hpp"
#include "seqlab/data_prior.hpp"
#include "seqlab/dp_solver.hpp"
#include "seqlab/error.hpp"
#include "seqlab/policies.hpp"
#include "seqlab/sim_harness.hpp"

namespace seqlab {

namespace {

using nlohmann::json;

struct Options {
  std::string model;
  std::vector<std::string> s;
  double alpha = 0.05;
  std::int64_t k = 5000;
  double c = 0.0;
  double tol = 1e-6;
  std::vector<std::string> policies;
  std::string truth = "prior";
  std::int64_t replications = 1000;
  std::int64_t discoveries = 1;
  std::string seed;
  std::int64_t min_trials = 200;
  std::string out;
  bool shuffle = true;
  int threads = 1;
  bool json_errors = false;
  std::int64_t lookahead = 2000;
  double beta = 0.2;
  std::int64_t fixed_n = 1000;
  std::int64_t cap = 4000;
  std::optional<double> beta_reject;
  double bucket_width = 0.005;
  std::int64_t horizon = 0;
  bool with_heuristic = false;
  std::int64_t grid_points = 4001;
  std::string data;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(what + " is not valid JSON: " + e.what());
  }
}

double parse_double(const std::string& text, const std::string& what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size() || !std::isfinite(v)) {
    throw ConfigError(what + " '" + text + "' is not a number");
  }
  return v;
}

std::vector<double> parse_numbers(const std::string& text, char sep, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(parse_double(item, what));
  return out;
}

// "beta:a,b", "normal:mu0,sigma0,sigma", inline JSON or a JSON file.
ModelSpec parse_model(const std::string& text) {
  if (text.empty()) throw ConfigError("--model is required");
  if (text.front() == '{') return model_from_json(parse_json(text, "--model"));
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const auto kind = text.substr(0, colon);
    const auto params = parse_numbers(text.substr(colon + 1), ',', "model parameter");
    try {
      if (kind == "beta" && params.size() == 2) return ModelSpec::beta_bernoulli(params[0], params[1]);
      if (kind == "normal" && params.size() == 3) return ModelSpec::normal(params[0], params[1], params[2]);
    } catch (const DomainError& e) {
      throw ConfigError(std::string("bad model parameters: ") + e.what());
    }
    if (kind == "beta" || kind == "normal") throw ConfigError("wrong parameter count in --model " + text);
  }
  return model_from_json(parse_json(read_file(text), "model file '" + text + "'"));
}

// Each value is a number or an inclusive range lo:hi:step.
std::vector<double> parse_thresholds(const std::vector<std::string>& values) {
  std::vector<double> out;
  for (const auto& v : values) {
    if (v.find(':') == std::string::npos) {
      out.push_back(parse_double(v, "--s"));
      continue;
    }
    const auto parts = parse_numbers(v, ':', "--s range");
    if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
      throw ConfigError("--s range must be lo:hi:step with lo <= hi and step > 0");
    }
    const auto steps = static_cast<std::int64_t>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
    for (std::int64_t i = 0; i <= steps; ++i) {
      out.push_back(std::round((parts[0] + static_cast<double>(i) * parts[2]) * 1e12) / 1e12);
    }
  }
  if (out.empty()) throw ConfigError("--s is required");
  return out;
}

std::string normalize(std::string name) {
  for (char& ch : name) {
    if (ch == '-') ch = '_';
  }
  return name;
}

// Shorthand "name[:key=value,...]", inline JSON, or @file.json.
PolicySpec parse_policy(const std::string& text, const Options& o) {
  if (!text.empty() && text.front() == '{') return policy_spec_from_json(parse_json(text, "--policy"));
  if (!text.empty() && text.front() == '@') {
    const std::string path = text.substr(1);
    return policy_spec_from_json(parse_json(read_file(path), "policy file '" + path + "'"),
                                 std::filesystem::path(path).parent_path().string());
  }
  const auto colon = text.find(':');
  const std::string name = normalize(text.substr(0, colon));
  std::vector<std::pair<std::string, std::string>> kv;
  if (colon != std::string::npos) {
    std::stringstream ss(text.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("policy option '" + item + "' needs key=value");
      kv.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
  }
  auto integer = [](const std::string& v, const std::string& key) {
    const double x = parse_double(v, key);
    if (x != std::floor(x)) throw ConfigError(key + " must be an integer");
    return static_cast<std::int64_t>(x);
  };
  auto unknown = [&](const std::string& key) {
    return ConfigError("unknown option '" + key + "' for policy " + name);
  };

  if (name == "optimal") {
    OptimalSpec spec{nullptr, "", o.k, o.c, o.tol};
    for (const auto& [key, v] : kv) {
      if (key == "k") spec.k = integer(v, key);
      else if (key == "c") spec.c = parse_double(v, key);
      else if (key == "tol") spec.tol = parse_double(v, key);
      else if (key == "table") spec.table_path = v;
      else throw unknown(key);
    }
    return spec;
  }
  if (name == "heuristic") {
    HeuristicSpec spec{o.lookahead, o.beta, o.k};
    for (const auto& [key, v] : kv) {
      if (key == "th" || key == "lookahead") spec.lookahead = integer(v, key);
      else if (key == "beta") spec.beta = parse_double(v, key);
      else if (key == "k") spec.k = integer(v, key);
      else throw unknown(key);
    }
    return spec;
  }
  if (name == "fixed_n" || name == "fixed_n_early_stop") {
    std::int64_t n = o.fixed_n;
    for (const auto& [key, v] : kv) {
      if (key == "n" || key == "N") n = integer(v, key);
      else throw unknown(key);
    }
    if (name == "fixed_n") return FixedNSpec{n};
    return FixedNEarlyStopSpec{n};
  }
  if (name == "bayes_sequential") {
    BayesSequentialSpec spec{o.beta_reject, o.cap};
    for (const auto& [key, v] : kv) {
      if (key == "beta_reject") spec.beta_reject = parse_double(v, key);
      else if (key == "cap") spec.cap = integer(v, key);
      else throw unknown(key);
    }
    return spec;
  }
  throw ConfigError("unknown policy '" + text +
                    "' (expected optimal, heuristic, fixed_n, fixed_n_early_stop, bayes_sequential, "
                    "inline JSON or @file)");
}

struct SeedChoice {
  std::uint64_t value = 1;
  std::string source = "default";
};

SeedChoice resolve_seed(const std::string& flag) {
  auto parse = [](const std::string& text, const std::string& what) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(text, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != text.size() || text.front() == '-') {
      throw ConfigError(what + " '" + text + "' is not an unsigned integer");
    }
    return static_cast<std::uint64_t>(v);
  };
  if (!flag.empty()) return {parse(flag, "--seed"), "flag"};
  if (const char* env = std::getenv("SEQLAB_SEED"); env && *env) return {parse(env, "SEQLAB_SEED"), "env"};
  return {};
}

struct Truth {
  TruthSource source;
  std::vector<RateRecord> records;  // empty for prior truths
};

Truth load_truth(const Options& o) {
  if (o.truth == "prior") return {PriorSampled{}, {}};
  std::ifstream in(o.truth);
  if (!in) throw ConfigError("cannot open truth file '" + o.truth + "'");
  auto records = ingest_csv(in, o.min_trials);
  if (records.empty()) throw ConfigError("truth file '" + o.truth + "' has no rows with enough trials");
  return {EmpiricalList{rates_of(records), o.shuffle}, std::move(records)};
}

// Without --model, a CSV truth supplies its own fitted prior.
std::pair<ModelSpec, json> resolve_model(const Options& o, const Truth& truth) {
  if (!o.model.empty()) return {parse_model(o.model), json{{"source", o.model}}};
  if (truth.records.empty()) throw ConfigError("--model is required unless --truth is a CSV file");
  const auto rates = rates_of(truth.records);
  const MomentFit fit = fit_beta_mom(rates);
  return {ModelSpec::beta_bernoulli(fit.a, fit.b),
          json{{"source", "fitted from truth file"}, {"variance_estimator", "unbiased"},
               {"mean", fit.mean}, {"variance", fit.variance}, {"count", fit.count}}};
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << text;
  if (!f) throw ConfigError("failed writing '" + path + "'");
}

json base_config(const std::string& command, const Options& o) {
  return {{"command", command}, {"alpha", o.alpha}, {"k", o.k}, {"c", o.c}, {"tol", o.tol}};
}

int cmd_fit_prior(const Options& o, std::ostream& out) {
  std::ifstream in(o.data);
  if (!in) throw ConfigError("cannot open '" + o.data + "'");
  const auto records = ingest_csv(in, o.min_trials);
  const auto rates = rates_of(records);
  const MomentFit fit = fit_beta_mom(rates);
  json j = ModelSpec::beta_bernoulli(fit.a, fit.b);
  j["fit"] = {{"method", "method_of_moments"}, {"variance_estimator", "unbiased"},
              {"mean", fit.mean}, {"variance", fit.variance}, {"count", fit.count}};
  j["config"] = {{"command", "fit-prior"}, {"data", o.data}, {"min_trials", o.min_trials}};
  emit(j.dump(2) + "\n", o.out, out);
  return kExitOk;
}

int cmd_boundaries(const Options& o, std::ostream& out) {
  const ModelSpec model = parse_model(o.model);
  const auto s = parse_thresholds(o.s);
  if (s.size() != 1) throw ConfigError("boundaries takes a single --s");
  const DiscoveryCriterion crit(model, s.front(), o.alpha);
  const std::int64_t horizon = o.horizon > 0 ? o.horizon : o.k;
  if (horizon < 1) throw ConfigError("--horizon must be >= 1");
  json j;
  json cfg = base_config("boundaries", o);
  cfg["s"] = s.front();
  cfg["horizon"] = horizon;
  cfg["model"] = model;
  if (o.with_heuristic) {
    if (o.lookahead < 0) throw ConfigError("--th must be >= 0");
    if (!(o.beta > 0.0 && o.beta < 1.0)) throw ConfigError("--beta must lie in (0, 1)");
    const BoundarySeries extended(model, crit, horizon + o.lookahead);
    std::vector<std::optional<double>> values(extended.values().begin(),
                                              extended.values().begin() + horizon);
    j = BoundarySeries::from_values(model, crit, std::move(values));
    json h = json::array();
    for (std::int64_t n = 1; n <= horizon; ++n) {
      const auto r = heuristic_boundary(extended, n, o.lookahead, o.beta);
      h.push_back(r ? json(*r) : json());
    }
    j["heuristic"] = std::move(h);
    cfg["th"] = o.lookahead;
    cfg["beta"] = o.beta;
  } else {
    j = BoundarySeries(model, crit, horizon);
  }
  j["config"] = std::move(cfg);
  emit(j.dump(2) + "\n", o.out, out);
  return kExitOk;
}

int cmd_solve(const Options& o, std::ostream& out, std::ostream& err) {
  const ModelSpec model = parse_model(o.model);
  const auto s = parse_thresholds(o.s);
  if (s.size() != 1) throw ConfigError("solve takes a single --s");
  const DiscoveryCriterion crit(model, s.front(), o.alpha);
  std::optional<NormalGrid> grid;
  if (model.is_normal()) grid = default_grid(model, crit, o.grid_points);
  const PolicyTable table = solve_optimal(TruncatedProblem(model, crit, o.k, o.c, grid), SolveOptions{o.tol});
  json j = table;
  json cfg = base_config("solve", o);
  cfg["s"] = s.front();
  cfg["model"] = model;
  if (model.is_normal()) cfg["grid_points"] = o.grid_points;
  j["config"] = std::move(cfg);
  emit(j.dump(2) + "\n", o.out, out);
  if (!o.out.empty() && o.out != "-") err << "kappa_star " << table.kappa_star() << "\n";
  return kExitOk;
}

int cmd_simulate(const Options& o, bool compare, std::ostream& out, std::ostream& err) {
  if (o.replications < 1) throw ConfigError("--replications must be >= 1");
  if (o.threads < 1) throw ConfigError("--threads must be >= 1");
  const Truth truth = load_truth(o);
  const auto [model, model_meta] = resolve_model(o, truth);
  const auto thresholds = parse_thresholds(o.s.empty() ? std::vector<std::string>{"0.25:0.32:0.01"} : o.s);
  const SeedChoice seed = resolve_seed(o.seed);

  std::vector<std::string> policy_texts = o.policies;
  if (policy_texts.empty()) {
    if (compare) {
      policy_texts = {"optimal", "heuristic", "bayes_sequential", "fixed_n_early_stop", "fixed_n"};
    } else {
      policy_texts = {"optimal"};
    }
  }
  if (!compare && policy_texts.size() != 1) throw ConfigError("simulate takes one --policy; use compare");
  std::vector<PolicySpec> specs;
  json spec_json = json::array();
  for (const auto& text : policy_texts) {
    specs.push_back(parse_policy(text, o));
    json pj = specs.back();
    if (auto* opt = std::get_if<OptimalSpec>(&specs.back()); opt && opt->table) pj.erase("table");
    spec_json.push_back(std::move(pj));
  }

  SimConfig shared;
  shared.truth = truth.source;
  shared.replications = o.replications;
  shared.seed = seed.value;
  shared.discoveries_per_replication = o.discoveries;
  shared.c = o.c;
  shared.bucket_width = o.bucket_width;
  shared.threads = o.threads;

  std::vector<MetricsReport> rows;
  for (double s : thresholds) {
    const DiscoveryCriterion crit(model, s, o.alpha);
    std::vector<std::shared_ptr<const Policy>> policies;
    for (const auto& spec : specs) policies.push_back(std::make_shared<const Policy>(Policy::make(spec, model, crit)));
    auto reports = compare_policies(policies, shared);
    rows.insert(rows.end(), reports.begin(), reports.end());
  }

  std::ostringstream csv;
  write_metrics_csv(csv, rows);

  json cfg = base_config(compare ? "compare" : "simulate", o);
  cfg["model"] = model;
  cfg["model_origin"] = model_meta;
  cfg["s"] = thresholds;
  cfg["policies"] = spec_json;
  cfg["truth"] = o.truth;
  cfg["truth_records"] = truth.records.size();
  cfg["min_trials"] = o.min_trials;
  cfg["shuffle"] = o.shuffle;
  cfg["replications"] = o.replications;
  cfg["discoveries_per_replication"] = o.discoveries;
  cfg["seed"] = seed.value;
  cfg["seed_source"] = seed.source;
  cfg["threads"] = o.threads;
  cfg["bucket_width"] = o.bucket_width;
  cfg["th"] = o.lookahead;
  cfg["beta"] = o.beta;
  cfg["N"] = o.fixed_n;
  cfg["cap"] = o.cap;
  cfg["beta_reject"] = o.beta_reject ? json(*o.beta_reject) : json();

  json doc = {{"config", cfg}, {"reports", rows}};
  if (o.out.empty() || o.out == "-") {
    out << csv.str();
    err << doc["config"].dump() << "\n";
  } else {
    emit(csv.str(), o.out, out);
    const auto json_path = std::filesystem::path(o.out).replace_extension(".json").string();
    emit(doc.dump(2) + "\n", json_path, out);
  }
  return kExitOk;
}

void report_error(std::ostream& err, bool as_json, const std::string& kind, const std::string& message,
                  int code) {
  if (as_json) {
    err << json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}}.dump() << "\n";
  } else {
    err << "seqlab: " << kind << " error: " << message << "\n";
  }
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--model", o.model,
                  "Prior: beta:A,B | normal:MU0,SIGMA0,SIGMA | inline JSON | JSON file (fit-prior output)");
  sub->add_option("--alpha", o.alpha, "Discovery level; default from the batting case study")
      ->capture_default_str();
  sub->add_option("--k", o.k, "Truncation horizon of the optimal and heuristic policies (case study)")
      ->capture_default_str();
  sub->add_option("--c", o.c, "Fixed cost per started experiment, in observations")->capture_default_str();
  sub->add_option("--tol", o.tol, "Relative tolerance of the fixed-point bisection")->capture_default_str();
  sub->add_option("--out", o.out, "Output path (stdout when omitted)");
}

void add_policy_params(CLI::App* sub, Options& o) {
  sub->add_option("--th", o.lookahead, "Heuristic lookahead T_h (case study)")->capture_default_str();
  sub->add_option("--beta", o.beta, "Heuristic rejection level (case study)")->capture_default_str();
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Sequential discovery testing: prior fitting, boundaries, optimal policies, simulation"};
  app.name("seqlab");
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("--json-errors", o.json_errors, "Print errors as JSON on stderr");

  auto* fit = app.add_subcommand("fit-prior", "Fit a Beta prior to id,trials,successes CSV by method of moments");
  fit->add_option("data", o.data, "Input CSV")->required();
  fit->add_option("--min-trials", o.min_trials, "Drop rows with fewer trials (case study: 200 at bats)")
      ->capture_default_str();
  fit->add_option("--out", o.out, "Output path (stdout when omitted)");

  auto* bnd = app.add_subcommand("boundaries", "Acceptance boundary a_n for n = 1..horizon");
  add_common(bnd, o);
  bnd->add_option("--s", o.s, "Discovery threshold")->required();
  bnd->add_option("--horizon", o.horizon, "Largest n (default: --k)");
  bnd->add_flag("--heuristic", o.with_heuristic, "Also emit the heuristic rejection thresholds");
  add_policy_params(bnd, o);

  auto* solve = app.add_subcommand("solve", "Solve the truncated single-experiment problem for kappa*");
  add_common(solve, o);
  solve->add_option("--s", o.s, "Discovery threshold")->required();
  solve->add_option("--grid-points", o.grid_points, "Normal model: grid points over Y")->capture_default_str();

  std::vector<CLI::App*> sims;
  sims.push_back(app.add_subcommand("simulate", "Monte Carlo metrics for one policy"));
  sims.push_back(app.add_subcommand("compare", "Monte Carlo metrics for several policies on common streams"));
  for (auto* sub : sims) {
    add_common(sub, o);
    sub->add_option("--s", o.s, "Threshold(s): values or lo:hi:step ranges; case study sweep 0.25:0.32:0.01")
        ->default_str("0.25:0.32:0.01");
    sub->add_option("--policy", o.policies,
                    "optimal | heuristic | fixed_n | fixed_n_early_stop | bayes_sequential, with optional "
                    ":key=value,... ; inline JSON; @file.json. Repeatable (compare defaults to all five)");
    sub->add_option("--truth", o.truth, "prior, or an id,trials,successes CSV of true effects")
        ->capture_default_str();
    sub->add_option("--replications", o.replications, "Replications (case study: 1000)")->capture_default_str();
    sub->add_option("--discoveries", o.discoveries, "Prior truths: discoveries per replication")
        ->capture_default_str();
    sub->add_option("--seed", o.seed, "Master seed (env SEQLAB_SEED; the flag wins; default 1)");
    sub->add_option("--min-trials", o.min_trials, "CSV truths: minimum trials (case study: 200 at bats)")
        ->capture_default_str();
    sub->add_flag("--shuffle,!--no-shuffle", o.shuffle, "Shuffle CSV truths per replication (default on)");
    sub->add_option("--threads", o.threads, "Worker threads; results do not depend on it")
        ->capture_default_str();
    sub->add_option("--bucket-width", o.bucket_width, "Width of the per-effect buckets in the JSON")
        ->capture_default_str();
    add_policy_params(sub, o);
    sub->add_option("--N", o.fixed_n, "Fixed-sample-size N (case study: 1000)")->capture_default_str();
    sub->add_option("--cap", o.cap, "Sequential test rejection cap (case study: 4000)")->capture_default_str();
    sub->add_option("--beta-reject", o.beta_reject,
                    "Sequential test rejection level (default 0.9 * P0(mu > s), case study)");
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, o.json_errors, "config", e.what(), kExitConfig);
    return kExitConfig;
  }

  try {
    if (fit->parsed()) return cmd_fit_prior(o, out);
    if (bnd->parsed()) return cmd_boundaries(o, out);
    if (solve->parsed()) return cmd_solve(o, out, err);
    return cmd_simulate(o, sims[1]->parsed(), out, err);
  } catch (const ConfigError& e) {
    report_error(err, o.json_errors, "config", e.what(), kExitConfig);
    return kExitConfig;
  } catch (const DomainError& e) {
    report_error(err, o.json_errors, "config", e.what(), kExitConfig);
    return kExitConfig;
  } catch (const json::exception& e) {
    report_error(err, o.json_errors, "config", e.what(), kExitConfig);
    return kExitConfig;
  } catch (const NumericalError& e) {
    report_error(err, o.json_errors, "numerical", e.what(), kExitNumerical);
    return kExitNumerical;
  } catch (const std::exception& e) {
    report_error(err, o.json_errors, "internal", e.what(), 1);
    return 1;
  }
}

}  // namespace seqlab
