#include "cli.hpp"

#include "pedmr/error.hpp"
#include "pedmr/pipeline.hpp"
#include "pedmr/rng.hpp"
#include "pedmr/table_io.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace pedmr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Args {
  std::string pedigree, genotypes, phenotypes, config, out = ".";
  std::uint64_t seed = 1;
  std::optional<int> chains, iterations, warmup, replicates, workers;
  std::optional<double> p_max, r2_max, window_kb;
  bool mask_cases = true;
  bool no_bayes = false;
  std::string instruments;
  std::string exclude;
};

class Logger {
 public:
  explicit Logger(std::ostream& out) : out_(out) {}
  void info(const std::string& event, json fields = json::object()) {
    fields["level"] = "info";
    fields["event"] = event;
    out_ << fields.dump() << '\n' << std::flush;
  }
  void error(const std::string& code, const std::string& message) {
    out_ << json{{"level", "error"}, {"code", code}, {"message", message}}.dump() << '\n' << std::flush;
  }

 private:
  std::ostream& out_;
};

std::ifstream open_in(const std::string& path, const char* what) {
  if (path.empty()) throw Error("cli.missing_input", std::string("--") + what + " is required");
  std::ifstream in(path);
  if (!in) throw Error("cli.missing_input", std::string("cannot read ") + what + " file " + path);
  return in;
}

fs::path out_dir(const Args& a) {
  fs::path p(a.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw Error("cli.output_dir", "cannot create output directory " + a.out);
  return p;
}

template <class F>
void write_file(const fs::path& path, F&& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cli.output_dir", "cannot write " + path.string());
  body(out);
  out.flush();
  if (!out) throw Error("cli.output_dir", "write failed for " + path.string());
}

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  auto in = open_in(path, "config");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("cli.invalid_config", std::string("config is not valid JSON: ") + e.what());
  }
}

Pedigree load_pedigree(const Args& a) {
  auto in = open_in(a.pedigree, "pedigree");
  return parse_pedigree(in);
}

Dataset load_data(const Args& a, const Pedigree& ped) {
  auto g = open_in(a.genotypes, "genotypes");
  auto p = open_in(a.phenotypes, "phenotypes");
  return load_dataset(g, p, ped);
}

std::vector<std::string> split_ids(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = io::trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

// Instrument list from --instruments (file) or every variant in the data.
std::vector<std::string> instrument_ids(const Args& a, const Dataset& ds) {
  std::vector<std::string> ids;
  if (!a.instruments.empty()) {
    auto in = open_in(a.instruments, "instruments");
    ids = read_instrument_list(in);
  } else {
    for (const auto& v : ds.variants) ids.push_back(v.id);
  }
  const auto drop = split_ids(a.exclude);
  std::vector<std::string> kept;
  for (const auto& id : ids)
    if (std::find(drop.begin(), drop.end(), id) == drop.end()) kept.push_back(id);
  if (kept.empty()) throw Error("instruments.empty", "no instruments left after exclusions");
  return kept;
}

void apply_sampler_flags(const Args& a, SamplerConfig& c) {
  if (a.chains) c.n_chains = *a.chains;
  if (a.iterations) c.n_iterations = *a.iterations;
  if (a.warmup) c.n_warmup = *a.warmup;
  if (a.iterations && !a.warmup) c.n_warmup = c.n_iterations / 2;
}

SelectionOptions selection_from(const Args& a, const json& cfg) {
  SelectionOptions s;
  if (cfg.contains("selection")) {
    const auto& j = cfg.at("selection");
    try {
      if (j.contains("p_max")) j.at("p_max").get_to(s.p_max);
      if (j.contains("r2_max")) j.at("r2_max").get_to(s.r2_max);
      if (j.contains("window_bp")) j.at("window_bp").get_to(s.window_bp);
    } catch (const json::exception& e) {
      throw Error("cli.invalid_config", e.what());
    }
  }
  if (a.p_max) s.p_max = *a.p_max;
  if (a.r2_max) s.r2_max = *a.r2_max;
  if (a.window_kb) s.window_bp = static_cast<long long>(*a.window_kb * 1000.0);
  if (!(s.p_max > 0 && s.p_max <= 1) || !(s.r2_max > 0 && s.r2_max <= 1) || s.window_bp < 0)
    throw Error("cli.invalid_config", "p-max and r2-max must be in (0, 1], window must be >= 0");
  return s;
}

void cmd_kinship(const Args& a, Logger& log) {
  const Pedigree ped = load_pedigree(a);
  const KinshipMatrix k = kinship(ped);
  const auto dir = out_dir(a);
  write_file(dir / "kinship.csv", [&](std::ostream& o) { write_kinship_csv(o, k); });
  log.info("kinship.done", {{"members", ped.size()}});
}

void cmd_select(const Args& a, Logger& log) {
  const Pedigree ped = load_pedigree(a);
  const Dataset ds = prepare_dataset(load_data(a, ped), a.mask_cases);
  const KinshipMatrix k = kinship(ped);
  const auto opts = selection_from(a, read_config(a.config));
  const Selection s = select_from_data(ds, k, opts);
  const auto dir = out_dir(a);
  write_file(dir / "scan.csv", [&](std::ostream& o) { write_scan_csv(o, s.scan); });
  write_file(dir / "instruments.txt", [&](std::ostream& o) { write_instrument_list(o, s.instruments); });
  log.info("select.done", {{"variants", ds.n_variants()},
                           {"pruned", s.pruned.size()},
                           {"instruments", s.instruments.ids.size()}});
}

void cmd_fit_freq(const Args& a, Logger& log) {
  const Pedigree ped = load_pedigree(a);
  const Dataset ds = prepare_dataset(load_data(a, ped), a.mask_cases);
  const KinshipMatrix k = kinship(ped);
  const auto ids = instrument_ids(a, ds);
  MedianOptions med;
  med.seed = derive_seed(a.seed, kSeedBootstrap);
  const FreqResult r = fit_frequentist(ds, k, ids, {}, med);
  const auto dir = out_dir(a);
  write_file(dir / "table1.csv", [&](std::ostream& o) { write_estimates_csv(o, r.table); });
  write_file(dir / "egger_plot.csv", [&](std::ostream& o) { write_plot_csv(o, r.plot); });
  write_file(dir / "summary_stats.csv", [&](std::ostream& o) { write_summary_stats_csv(o, r.stats); });
  log.info("fit_freq.done", {{"instruments", ids.size()}});
}

void cmd_fit_bayes(const Args& a, Logger& log) {
  const json cfg = read_config(a.config);
  ModelSpec spec;
  SamplerConfig sc;
  try {
    if (cfg.contains("model")) cfg.at("model").get_to(spec);
    if (cfg.contains("sampler")) cfg.at("sampler").get_to(sc);
  } catch (const json::exception& e) {
    throw Error("cli.invalid_config", e.what());
  }
  apply_sampler_flags(a, sc);
  sc.seed = derive_seed(a.seed, kSeedSampler);

  const Pedigree ped = load_pedigree(a);
  const Dataset ds = prepare_dataset(load_data(a, ped), a.mask_cases);
  const KinshipMatrix k = kinship(ped);
  const auto ids = instrument_ids(a, ds);
  log.info("fit_bayes.start", {{"individuals", ds.size()},
                               {"instruments", ids.size()},
                               {"missing_exposures", ds.n_missing()},
                               {"chains", sc.n_chains},
                               {"iterations", sc.n_iterations},
                               {"warmup", sc.n_warmup}});
  const BayesResult r = fit_bayesian(ds.select_variants(ids), k, spec, sc);
  const auto dir = out_dir(a);
  write_file(dir / "table2.csv", [&](std::ostream& o) { write_percentile_csv(o, r.table); });
  write_file(dir / "draws.csv", [&](std::ostream& o) { write_draws_csv(o, r.draws); });
  write_file(dir / "diagnostics.json", [&](std::ostream& o) { write_diagnostics_json(o, r); });

  json done{{"divergences", r.draws.total_divergences()}};
  for (const auto& d : r.diagnostics)
    if (d.name == "theta") {
      done["theta_rhat"] = d.rhat;
      done["theta_ess_bulk"] = d.ess_bulk;
    }
  log.info("fit_bayes.done", done);
  if (r.draws.divergence_rate() > 0.1)
    log.info("fit_bayes.divergence_warning", {{"rate", r.draws.divergence_rate()}});
}

void cmd_simulate(const Args& a, Logger& log) {
  const json cfg = read_config(a.config);
  ScenarioConfig sc;
  try {
    cfg.contains("scenario") ? cfg.at("scenario").get_to(sc) : cfg.get_to(sc);
  } catch (const json::exception& e) {
    throw Error("simulator.invalid_config", e.what());
  }
  sc.seed = derive_seed(a.seed, kSeedSimulate);
  const Scenario s = simulate_scenario(sc);
  const auto dir = out_dir(a);
  write_file(dir / "pedigree.txt", [&](std::ostream& o) { write_pedigree(o, s.pedigree); });
  write_file(dir / "genotypes.txt", [&](std::ostream& o) { write_genotypes(o, s.dataset); });
  write_file(dir / "phenotypes.csv", [&](std::ostream& o) { write_phenotypes(o, s.dataset); });
  write_file(dir / "truth.json", [&](std::ostream& o) { o << json(s.truth).dump(2) << '\n'; });
  write_file(dir / "scenario.json", [&](std::ostream& o) { o << json(s.config).dump(2) << '\n'; });
  log.info("simulate.done", {{"individuals", s.dataset.size()},
                             {"variants", s.dataset.n_variants()},
                             {"prevalence", s.truth.prevalence},
                             {"theta_model", s.truth.theta_model}});
}

void cmd_replicate(const Args& a, Logger& log) {
  const json cfg = read_config(a.config);
  ReplicateOptions o;
  try {
    cfg.get_to(o);
  } catch (const json::exception& e) {
    throw Error("cli.invalid_config", e.what());
  }
  apply_sampler_flags(a, o.sampler);
  if (a.replicates) o.replicates = *a.replicates;
  if (a.workers) o.workers = *a.workers;
  if (a.no_bayes) o.run_bayes = false;
  if (a.p_max || a.r2_max || a.window_kb) {
    o.selection = selection_from(a, json::object());
    o.select_instruments = true;
  }
  o.seed = a.seed;
  if (o.replicates < 1 || o.workers < 1) throw Error("cli.invalid_config", "replicates and workers must be >= 1");
  // Workers already run replicates concurrently; chains inside each stay sequential.
  if (o.workers > 1) o.sampler.parallel_chains = false;

  const auto dir = out_dir(a);
  write_file(dir / "replicate_config.json", [&](std::ostream& out) { out << json(o).dump(2) << '\n'; });
  log.info("replicate.start", {{"replicates", o.replicates}, {"workers", o.workers}, {"bayes", o.run_bayes}});
  const auto rows = run_replicates(o, [&](const std::vector<ReplicateRow>& rs) {
    if (rs.empty()) return;
    json j{{"replicate", rs.front().replicate}};
    for (const auto& r : rs)
      if (!r.error.empty()) j["errors"].push_back(r.estimator + ":" + r.error);
    log.info("replicate.progress", j);
  });
  const auto metrics = replicate_metrics(rows);
  write_file(dir / "replicates.csv", [&](std::ostream& out) { write_replicate_csv(out, rows); });
  write_file(dir / "metrics.csv", [&](std::ostream& out) { write_metrics_csv(out, metrics); });
  log.info("replicate.done", {{"rows", rows.size()}});
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& log_stream) {
  Logger log(log_stream);
  Args a;
  CLI::App app{"Mendelian randomization for pedigree data"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  auto seed = [&](CLI::App* s) { s->add_option("--seed", a.seed, "top-level seed")->capture_default_str(); };
  auto out = [&](CLI::App* s) { s->add_option("--out", a.out, "output directory")->capture_default_str(); };
  auto data = [&](CLI::App* s) {
    s->add_option("--pedigree", a.pedigree, "pedigree file")->required();
    s->add_option("--genotypes", a.genotypes, "genotype file")->required();
    s->add_option("--phenotypes", a.phenotypes, "phenotype file")->required();
    s->add_flag("--mask-cases,!--no-mask-cases", a.mask_cases, "treat the exposure of cases as missing")
        ->capture_default_str();
  };
  auto selection = [&](CLI::App* s) {
    s->add_option("--p-max", a.p_max, "instrument p-value threshold");
    s->add_option("--r2-max", a.r2_max, "LD pruning r^2 threshold");
    s->add_option("--window-kb", a.window_kb, "LD pruning window (kb)");
  };
  auto sampler = [&](CLI::App* s) {
    s->add_option("--chains", a.chains, "number of chains")->check(CLI::PositiveNumber);
    s->add_option("--iterations", a.iterations, "iterations per chain, warmup included")->check(CLI::PositiveNumber);
    s->add_option("--warmup", a.warmup, "warmup iterations per chain")->check(CLI::NonNegativeNumber);
  };
  auto instruments = [&](CLI::App* s) {
    s->add_option("--instruments", a.instruments, "instrument list (default: every variant)");
    s->add_option("--exclude", a.exclude, "comma-separated variant ids to drop");
  };

  auto* k = app.add_subcommand("kinship", "kinship matrix of a pedigree");
  k->add_option("--pedigree", a.pedigree, "pedigree file")->required();
  out(k);

  auto* sel = app.add_subcommand("select", "association scan, LD pruning and instrument selection");
  data(sel);
  selection(sel);
  sel->add_option("--config", a.config, "JSON with a `selection` block");
  out(sel);

  auto* ff = app.add_subcommand("fit-freq", "frequentist MR estimators");
  data(ff);
  instruments(ff);
  seed(ff);
  out(ff);

  auto* fb = app.add_subcommand("fit-bayes", "Bayesian pedigree MR model");
  data(fb);
  instruments(fb);
  sampler(fb);
  fb->add_option("--config", a.config, "JSON with `model` and `sampler` blocks");
  seed(fb);
  out(fb);

  auto* sim = app.add_subcommand("simulate", "simulate a pedigree dataset");
  sim->add_option("--config", a.config, "scenario JSON");
  seed(sim);
  out(sim);

  auto* rep = app.add_subcommand("replicate", "simulation study over replicate datasets");
  rep->add_option("--config", a.config, "JSON with scenario, model, sampler, replicates, workers");
  rep->add_option("--replicates", a.replicates, "number of replicates")->check(CLI::PositiveNumber);
  rep->add_option("--workers", a.workers, "parallel replicate workers")->check(CLI::PositiveNumber);
  rep->add_flag("--no-bayes", a.no_bayes, "frequentist estimators only");
  sampler(rep);
  selection(rep);
  seed(rep);
  out(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    log.error("cli.usage", e.what());
    return 2;
  }

  try {
    if (*k) cmd_kinship(a, log);
    else if (*sel) cmd_select(a, log);
    else if (*ff) cmd_fit_freq(a, log);
    else if (*fb) cmd_fit_bayes(a, log);
    else if (*sim) cmd_simulate(a, log);
    else if (*rep) cmd_replicate(a, log);
  } catch (const Error& e) {
    log.error(e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    log.error("cli.internal", e.what());
    return 1;
  }
  return 0;
}

int run(const std::vector<std::string>& args, std::ostream& log) {
  std::vector<const char*> argv{"pedmr"};
  for (const auto& s : args) argv.push_back(s.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), log);
}

}  // namespace pedmr::cli
