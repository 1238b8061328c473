// Command-line front end: learn a causal model from a measurement table,
// diagnose faults, rank options, and run the synthetic benchmark.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rca/cbi.hpp"
#include "rca/dataset.hpp"
#include "rca/discovery.hpp"
#include "rca/effects.hpp"
#include "rca/error.hpp"
#include "rca/log.hpp"
#include "rca/resolve.hpp"
#include "rca/synthbench.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { Ok = 0, InputError = 2, EmptyResult = 3, InternalError = 4 };

struct RunConfig {
  std::string data;
  std::string roles;
  std::string out = ".";
  double alpha = 0.05;
  double theta_ratio = 0.8;
  std::size_t bins = 5;
  std::size_t top_k = 4;
  std::size_t max_cond_size = 3;
  std::uint64_t seed = 0;
  std::string method = "care";

  rca::LearnConfig learn() const {
    rca::LearnConfig c;
    c.fci.alpha = alpha;
    c.fci.max_cond_size = max_cond_size;
    c.resolve.theta_ratio = theta_ratio;
    c.bins = bins;
    return c;
  }
};

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw rca::Error(rca::ErrorCode::Io, "cannot write '" + tmp.string() + "'", path.string());
    os << content;
    if (!os.flush()) throw rca::Error(rca::ErrorCode::Io, "cannot write '" + tmp.string() + "'", path.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& doc) { write_atomic(path, doc.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw rca::Error(rca::ErrorCode::Io, "cannot open '" + path.string() + "'", path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw rca::Error(rca::ErrorCode::InvalidArgument, "'" + path.string() + "' is not valid JSON: " + e.what(),
                     path.string());
  }
}

rca::Dataset load(const RunConfig& cfg) {
  if (cfg.data.empty() || cfg.roles.empty()) {
    throw rca::Error(rca::ErrorCode::InvalidArgument, "--data and --roles are required", cfg.data.empty() ? "data" : "roles");
  }
  return rca::load_dataset(cfg.data, cfg.roles);
}

rca::VarId objective_id(const rca::Dataset& ds, const std::string& name) {
  auto id = ds.index_of(name);
  if (ds.meta(id).role != rca::Role::PerformanceObjective) {
    throw rca::Error(rca::ErrorCode::InvalidArgument, "'" + name + "' is not an objective", name);
  }
  return id;
}

json decision_json(const rca::EdgeDecision& d, const rca::Dataset& ds) {
  static const char* branches[] = {"copied_directed", "copied_bidirected", "latent_confounder", "forward", "backward"};
  json j{{"u", ds.meta(d.u).name}, {"v", ds.meta(d.v).name}, {"branch", branches[static_cast<int>(d.branch)]}};
  if (d.branch != rca::Resolution::CopiedDirected && d.branch != rca::Resolution::CopiedBidirected) {
    j["h_u"] = d.h_u;
    j["h_v"] = d.h_v;
    j["h_latent"] = d.h_latent;
    j["threshold"] = d.threshold;
    if (d.branch != rca::Resolution::LatentConfounder) {
      j["h_noise_forward"] = d.h_noise_forward;
      j["h_noise_backward"] = d.h_noise_backward;
    }
  }
  if (!d.adjustment.empty()) j["note"] = d.adjustment;
  return j;
}

rca::Admg load_model(const RunConfig& cfg, const rca::Dataset& ds) {
  auto doc = read_json(fs::path(cfg.out) / "model.json");
  rca::Admg g;
  try {
    g = rca::admg_from_json(doc.at("graph"));
  } catch (const json::exception& e) {
    throw rca::Error(rca::ErrorCode::InvalidArgument, std::string("malformed model.json: ") + e.what(), "graph");
  }
  if (g.size() != ds.variable_count()) {
    throw rca::Error(rca::ErrorCode::SchemaMismatch, "model.json does not match the dataset");
  }
  for (rca::VarId v = 0; v < g.size(); ++v) {
    if (g.vertices()[v].name != ds.meta(v).name) {
      throw rca::Error(rca::ErrorCode::SchemaMismatch, "model.json does not match the dataset", ds.meta(v).name);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

int cmd_learn(const RunConfig& cfg) {
  auto ds = load(cfg);
  auto model = rca::learn_model(ds, cfg.learn());
  fs::path out(cfg.out);
  json decisions = json::array();
  for (const auto& d : model.report.decisions) decisions.push_back(decision_json(d, ds));
  json doc{{"graph", rca::to_json(model.admg)},
           {"config",
            {{"alpha", cfg.alpha}, {"theta_ratio", cfg.theta_ratio}, {"bins", cfg.bins},
             {"max_cond_size", cfg.max_cond_size}}},
           {"decisions", decisions},
           {"rejected", model.report.rejected}};
  write_json(out / "pag.json", rca::to_json(model.pag));
  write_atomic(out / "pag.dot", rca::to_dot(model.pag));
  write_json(out / "model.json", doc);
  write_atomic(out / "model.dot", rca::to_dot(model.admg));
  std::cout << "learned " << model.admg.directed().size() << " directed and " << model.admg.bidirected().size()
            << " bidirected edges over " << ds.variable_count() << " variables\n";
  return Ok;
}

rca::Diagnosis run_diagnosis(const RunConfig& cfg, const rca::Dataset& ds, rca::VarId y) {
  if (cfg.method == "cbi") return rca::cbi_diagnose(ds, y, cfg.top_k, 0.95, cfg.bins);
  auto g = load_model(cfg, ds);
  return rca::diagnose(ds, g, y, cfg.top_k, rca::EffectOptions{cfg.bins});
}

int cmd_diagnose(const RunConfig& cfg, const std::string& objective) {
  auto ds = load(cfg);
  auto y = objective_id(ds, objective);
  auto diag = run_diagnosis(cfg, ds, y);
  write_json(fs::path(cfg.out) / ("diagnosis-" + objective + ".json"), rca::to_json(diag, ds.variables()));
  rca::print_table(std::cout, diag, ds.variables());
  return diag.ranked_paths.empty() ? EmptyResult : Ok;
}

int cmd_rank(const RunConfig& cfg) {
  auto ds = load(cfg);
  json doc{{"method", cfg.method}, {"objectives", json::array()}};
  bool any = false;
  if (cfg.method == "cbi") {
    for (auto y : ds.with_role(rca::Role::PerformanceObjective)) {
      auto d = rca::cbi_diagnose(ds, y, cfg.top_k, 0.95, cfg.bins);
      any = any || !d.ranked_paths.empty();
      doc["objectives"].push_back(rca::to_json(d, ds.variables()));
      rca::print_table(std::cout, d, ds.variables());
    }
  } else {
    auto g = load_model(cfg, ds);
    auto all = rca::cpwe(ds, g, ds.with_role(rca::Role::PerformanceObjective), cfg.top_k, rca::EffectOptions{cfg.bins});
    for (const auto& [y, d] : all) {
      any = any || !d.ranked_paths.empty();
      doc["objectives"].push_back(rca::to_json(d, ds.variables()));
      rca::print_table(std::cout, d, ds.variables());
    }
  }
  write_json(fs::path(cfg.out) / "ranking.json", doc);
  return any ? Ok : EmptyResult;
}

struct BenchFlags {
  std::size_t systems = 10;
  std::size_t samples = 2000;
};

int cmd_bench(const RunConfig& cfg, const BenchFlags& flags) {
  rca::BenchConfig bc;
  bc.systems = flags.systems;
  bc.samples = flags.samples;
  bc.top_k = cfg.top_k;
  bc.learn = cfg.learn();
  auto result = rca::run_benchmark(cfg.seed, bc);
  write_json(fs::path(cfg.out) / "bench.json", rca::to_json(result));
  std::printf("%-6s %5s %5s %5s %5s %9s %9s %6s\n", "method", "tp", "fp", "tn", "fn", "precision", "recall", "f1");
  for (const auto& [name, r] : {std::pair{"care", result.care}, std::pair{"cbi", result.cbi}}) {
    std::printf("%-6s %5zu %5zu %5zu %5zu %9.3f %9.3f %6.3f\n", name, r.tp, r.fp, r.tn, r.fn, r.precision, r.recall,
                r.f1);
  }
  std::printf("transfer rmse:");
  for (const auto& p : result.transfer) std::printf(" %zu:%.4f", p.samples, p.rmse);
  std::printf("\n");
  return Ok;
}

struct SynthFlags {
  std::string scm;
  std::size_t n = 1000;
  bool benchmark = false;
  std::size_t options = 3;
  std::size_t metrics = 5;
  std::size_t objectives = 2;
  double density = 0.4;
  double noise = 1.0;
  std::size_t confounders = 0;
};

int cmd_synth(const RunConfig& cfg, const SynthFlags& flags) {
  rca::Scm scm;
  if (!flags.scm.empty()) {
    scm = rca::scm_from_json(read_json(flags.scm));
  } else if (flags.benchmark) {
    scm = rca::generate_benchmark_scm(cfg.seed).scm;
  } else {
    scm = rca::generate_scm(flags.options, flags.metrics, flags.objectives, flags.density, flags.noise, cfg.seed,
                            flags.confounders);
  }
  auto ds = rca::sample(scm, flags.n);
  fs::path out(cfg.out);
  std::ostringstream table;
  rca::write_table(table, ds);
  std::ostringstream roles;
  rca::write_roles(roles, ds);
  write_json(out / "scm.json", rca::to_json(scm));
  write_atomic(out / "data.csv", table.str());
  write_atomic(out / "roles.json", roles.str());
  std::cout << "sampled " << ds.sample_count() << " rows of " << ds.variable_count() << " variables\n";
  return Ok;
}

int cmd_eval(const RunConfig& cfg, const std::string& scm_path, const std::string& diagnosis_path) {
  auto ds = load(cfg);
  auto scm = rca::scm_from_json(read_json(scm_path));
  auto doc = read_json(diagnosis_path);
  rca::Diagnosis pred;
  std::string method;
  try {
    pred.fault_objective = ds.index_of(doc.at("objective").get<std::string>());
    method = doc.at("method").get<std::string>();
    for (const auto& name : doc.at("root_causes")) pred.root_causes.push_back(ds.index_of(name.get<std::string>()));
  } catch (const json::exception& e) {
    throw rca::Error(rca::ErrorCode::InvalidArgument, std::string("malformed diagnosis: ") + e.what(), diagnosis_path);
  }
  auto truth = rca::curate_ground_truth(scm, ds, scm.size());
  const rca::FaultTruth* fault = nullptr;
  for (const auto& f : truth.faults) {
    if (f.objective == pred.fault_objective) fault = &f;
  }
  if (fault == nullptr) throw rca::Error(rca::ErrorCode::ObjectiveMismatch, "diagnosed objective is not in the model");
  std::optional<rca::Admg> g;
  if (method == "care") g = load_model(cfg, ds);
  auto aces = rca::detail::estimate_cause_aces(ds, g ? &*g : nullptr, pred.root_causes, pred.fault_objective, cfg.bins);
  auto report = rca::evaluate(pred, *fault, ds.with_role(rca::Role::ManipulableOption), aces);
  json out = rca::to_json(report);
  out["objective"] = ds.meta(pred.fault_objective).name;
  out["method"] = method;
  write_json(fs::path(cfg.out) / "eval.json", out);
  std::cout << out.dump(2) << '\n';
  return Ok;
}

void print_error(const std::string& code, const std::string& message, const std::string& key) {
  json err{{"error", code}, {"message", message}, {"key", key}};
  std::cerr << err.dump() << '\n';
}

int exit_code(rca::ErrorCode code) {
  switch (code) {
    case rca::ErrorCode::NoPathsFound:
    case rca::ErrorCode::NoFaultyRows:
      return EmptyResult;
    default:
      return InputError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Root-cause analysis of performance faults in configurable systems"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::string objective;
  std::string scm_path;
  std::string diagnosis_path;
  BenchFlags bench;
  SynthFlags synth;

  auto add_io = [&](CLI::App* sub) {
    sub->add_option("--data", cfg.data, "Measurement table (CSV with header)");
    sub->add_option("--roles", cfg.roles, "Variable roles (JSON)");
    sub->add_option("--out", cfg.out, "Output directory");
  };
  auto add_learn = [&](CLI::App* sub) {
    sub->add_option("--alpha", cfg.alpha, "Independence test level")->check(CLI::Range(1e-12, 1.0 - 1e-12));
    sub->add_option("--theta-ratio", cfg.theta_ratio, "Latent-entropy threshold ratio")->check(CLI::Range(1e-12, 1.0));
    sub->add_option("--max-cond-size", cfg.max_cond_size, "Largest conditioning set in skeleton search");
  };
  auto add_bins = [&](CLI::App* sub) {
    sub->add_option("--bins", cfg.bins, "Bins for continuous variables")->check(CLI::Range(std::size_t{2}, std::size_t{1000}));
  };
  auto add_rank = [&](CLI::App* sub) {
    sub->add_option("--top-k", cfg.top_k, "Paths reported per objective")->check(CLI::Range(std::size_t{1}, std::size_t{1000000}));
    sub->add_option("--method", cfg.method, "Ranking method")->check(CLI::IsMember({"care", "cbi"}));
  };
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", cfg.seed, "Random seed"); };

  auto* learn = app.add_subcommand("learn", "Learn a causal model; writes pag.json, model.json, model.dot");
  add_io(learn);
  add_learn(learn);
  add_bins(learn);
  add_seed(learn);

  auto* diagnose = app.add_subcommand("diagnose", "Rank root causes of a fault on one objective");
  add_io(diagnose);
  add_bins(diagnose);
  add_rank(diagnose);
  add_seed(diagnose);
  diagnose->add_option("--objective", objective, "Faulty objective")->required();

  auto* rank = app.add_subcommand("rank", "Rank causal paths for every objective");
  add_io(rank);
  add_bins(rank);
  add_rank(rank);
  add_seed(rank);

  auto* benchcmd = app.add_subcommand("bench", "Run the synthetic benchmark against the baseline");
  benchcmd->add_option("--out", cfg.out, "Output directory");
  add_learn(benchcmd);
  add_bins(benchcmd);
  add_seed(benchcmd);
  benchcmd->add_option("--top-k", cfg.top_k, "Paths reported per objective")->check(CLI::Range(std::size_t{1}, std::size_t{1000000}));
  benchcmd->add_option("--systems", bench.systems, "Generated systems (two faults each)")->check(CLI::PositiveNumber);
  benchcmd->add_option("--samples", bench.samples, "Samples per system")->check(CLI::Range(std::size_t{200}, std::size_t{10000000}));

  auto* synthcmd = app.add_subcommand("synth", "Generate a model and sample a dataset from it");
  synthcmd->add_option("--out", cfg.out, "Output directory");
  add_seed(synthcmd);
  synthcmd->add_option("--scm", synth.scm, "Sample from this model instead of generating one");
  synthcmd->add_option("--n", synth.n, "Rows to sample")->check(CLI::PositiveNumber);
  synthcmd->add_flag("--benchmark", synth.benchmark, "Generate a benchmark system");
  synthcmd->add_option("--options", synth.options)->check(CLI::PositiveNumber);
  synthcmd->add_option("--metrics", synth.metrics)->check(CLI::PositiveNumber);
  synthcmd->add_option("--objectives", synth.objectives)->check(CLI::PositiveNumber);
  synthcmd->add_option("--density", synth.density)->check(CLI::Range(1e-9, 1.0));
  synthcmd->add_option("--noise", synth.noise)->check(CLI::NonNegativeNumber);
  synthcmd->add_option("--confounders", synth.confounders);

  auto* evalcmd = app.add_subcommand("eval", "Score a diagnosis against a model's ground truth");
  add_io(evalcmd);
  add_bins(evalcmd);
  add_seed(evalcmd);
  evalcmd->add_option("--scm", scm_path, "Generating model (JSON)")->required();
  evalcmd->add_option("--diagnosis", diagnosis_path, "Diagnosis to score (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("InvalidArgument", e.what(), "");
    return InputError;
  }

  try {
    if (*learn) return cmd_learn(cfg);
    if (*diagnose) return cmd_diagnose(cfg, objective);
    if (*rank) return cmd_rank(cfg);
    if (*benchcmd) return cmd_bench(cfg, bench);
    if (*synthcmd) return cmd_synth(cfg, synth);
    if (*evalcmd) return cmd_eval(cfg, scm_path, diagnosis_path);
  } catch (const rca::Error& e) {
    print_error(std::string(rca::to_string(e.code())), e.what(), e.key());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    print_error("Internal", e.what(), "");
    return InternalError;
  }
  return InternalError;
}
