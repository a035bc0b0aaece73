#include "pedmr/pipeline.hpp"

#include "pedmr/error.hpp"
#include "pedmr/rng.hpp"
#include "pedmr/table_io.hpp"

#include <cmath>
#include <future>
#include <mutex>
#include <ostream>

namespace pedmr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <class T>
void get_if(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  return io::format_double(v);
}

}  // namespace

void to_json(nlohmann::json& j, const SamplerConfig& c) {
  j = nlohmann::json{{"n_iterations", c.n_iterations}, {"n_warmup", c.n_warmup},
                     {"n_chains", c.n_chains},         {"target_accept", c.target_accept},
                     {"max_tree_depth", c.max_tree_depth}, {"seed", c.seed},
                     {"max_energy_error", c.max_energy_error}, {"parallel_chains", c.parallel_chains}};
}

void from_json(const nlohmann::json& j, SamplerConfig& c) {
  try {
    get_if(j, "n_iterations", c.n_iterations);
    get_if(j, "n_warmup", c.n_warmup);
    get_if(j, "n_chains", c.n_chains);
    get_if(j, "target_accept", c.target_accept);
    get_if(j, "max_tree_depth", c.max_tree_depth);
    get_if(j, "seed", c.seed);
    get_if(j, "max_energy_error", c.max_energy_error);
    get_if(j, "parallel_chains", c.parallel_chains);
  } catch (const nlohmann::json::exception& e) {
    throw Error("sampler.invalid_config", e.what());
  }
}

Dataset prepare_dataset(Dataset ds, bool mask_cases) {
  if (mask_cases) ds = mask_exposure_in_cases(std::move(ds));
  return standardize_exposure(std::move(ds));
}

Selection select_from_data(const Dataset& ds, const KinshipMatrix& k, const SelectionOptions& opts) {
  Selection s;
  s.scan = marginal_scan(ds, k, opts.scan);
  s.pruned = ld_prune(ds, opts.r2_max, opts.window_bp);
  s.instruments = select_instruments(s.scan, s.pruned, opts.p_max);
  s.instruments.r2_max = opts.r2_max;
  s.instruments.window_bp = opts.window_bp;
  return s;
}

FreqResult fit_frequentist(const Dataset& ds, const KinshipMatrix& k, const std::vector<std::string>& instruments,
                           const std::vector<std::string>& exclude, const MedianOptions& median,
                           const ScanOptions& scan_opts) {
  std::vector<std::string> ids;
  for (const auto& id : instruments)
    if (std::find(exclude.begin(), exclude.end(), id) == exclude.end()) ids.push_back(id);
  if (ids.empty()) throw Error("instruments.empty", "no instruments left after exclusions");
  const Dataset sub = ds.select_variants(ids);
  const AssociationScan scan = marginal_scan(sub, k, scan_opts);
  InstrumentSet set;
  set.ids = ids;
  FreqResult r;
  r.stats = make_summary_stats(scan, outcome_scan(sub, set));
  r.table = estimator_battery(r.stats, median);
  r.plot = egger_plot_data(r.stats, r.table);
  return r;
}

double gradient_check(const MrModel& model, const Eigen::VectorXd& at, const std::vector<std::size_t>& coords,
                      double step) {
  const auto base = model.log_posterior(at);
  std::vector<std::size_t> which = coords;
  if (which.empty())
    for (std::size_t i = 0; i < model.dimension(); ++i) which.push_back(i);
  double worst = 0.0;
  Eigen::VectorXd q = at;
  for (std::size_t c : which) {
    const auto i = static_cast<Eigen::Index>(c);
    q(i) = at(i) + step;
    const double up = model.log_posterior(q).value;
    q(i) = at(i) - step;
    const double down = model.log_posterior(q).value;
    q(i) = at(i);
    const double fd = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(base.gradient(i) - fd) / (1.0 + std::abs(fd)));
  }
  return worst;
}

BayesResult fit_bayesian(const Dataset& ds, const KinshipMatrix& k, ModelSpec spec, const SamplerConfig& cfg) {
  cfg.validate();
  spec.resolve_defaults(ds);
  const MrModel model = MrModel::from_data(spec, ds, k);

  // Cheap gradient audit at a start point: every non-individual coordinate
  // plus a few from each per-individual block.
  {
    const auto& L = model.layout();
    std::vector<std::size_t> coords;
    for (std::size_t i = 0; i < L.u; ++i) coords.push_back(i);
    for (std::size_t block : {L.u, L.eta_raw, L.x_missing}) {
      const std::size_t len = block == L.x_missing ? L.n_missing : L.n_individuals;
      for (std::size_t i = 0; i < std::min<std::size_t>(len, 5); ++i) coords.push_back(block + i);
    }
    if (L.has_log_liability_scale) coords.push_back(L.log_liability_scale);
    const Eigen::VectorXd start = model.initial_point(cfg.seed);
    model.log_posterior_checked(start);
    const double err = gradient_check(model, start, coords);
    if (!(err < 1e-4)) {
      throw Error("bayes_model.gradient_check", "analytic gradient disagrees with finite differences (" +
                                                    io::format_double(err) + ")");
    }
  }

  const LogDensityFn f = [&model](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
    auto r = model.log_posterior(q);
    g = std::move(r.gradient);
    return r.finite() ? r.value : -std::numeric_limits<double>::infinity();
  };
  const InitFn init = [&model](std::size_t, std::mt19937_64& rng) { return model.initial_point(rng()); };
  const DrawProjection project = [&model](const Eigen::VectorXd& q) { return model.summary_values(q); };

  BayesResult r;
  r.spec = model.spec();
  r.sampler = cfg;
  r.draws = sample(f, model.dimension(), init, cfg, project, model.summary_names());
  if (r.draws.n_chains() >= 2 && r.draws.n_draws() >= 100) r.diagnostics = diagnostics(r.draws);
  auto lo = summarize(r.draws, "theta", Transform::identity);
  lo.name = kLogOddsRow;
  auto hi = summarize(r.draws, "theta", Transform::exp);
  hi.name = kOddsRow;
  r.table = {lo, hi};
  return r;
}

void write_percentile_csv(std::ostream& out, const std::vector<PercentileRow>& rows) {
  out << "label,min,p05,p25,p50,p75,p95,max\n";
  for (const auto& r : rows) {
    out << r.name;
    for (double v : r.values) out << ',' << io::format_double(v);
    out << '\n';
  }
}

void write_diagnostics_json(std::ostream& out, const BayesResult& r) {
  nlohmann::json j;
  j["sampler"] = r.sampler;
  j["model"] = r.spec;
  j["model"]["horseshoe"]["global_scale"] = *r.spec.horseshoe.global_scale;
  j["dimensions"] = {{"instruments", r.spec.n_instruments},
                     {"individuals", r.spec.n_individuals},
                     {"families", r.spec.n_families},
                     {"missing_exposures", r.spec.n_missing}};
  j["divergences"] = r.draws.total_divergences();
  j["divergence_rate"] = r.draws.divergence_rate();
  j["divergence_warning"] = r.draws.divergence_rate() > 0.1;
  nlohmann::json chains = nlohmann::json::array();
  for (const auto& s : r.draws.stats) {
    chains.push_back({{"mean_accept_stat", s.mean_accept_stat},
                      {"divergences", s.divergences},
                      {"warmup_divergences", s.warmup_divergences},
                      {"step_size", s.step_size},
                      {"mean_tree_depth", s.mean_tree_depth},
                      {"n_leapfrog", s.n_leapfrog}});
  }
  j["chains"] = chains;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& d : r.diagnostics) {
    params.push_back({{"name", d.name},
                      {"mean", number(d.mean)},
                      {"sd", number(d.sd)},
                      {"rhat", number(d.rhat)},
                      {"ess_bulk", number(d.ess_bulk)}});
  }
  j["parameters"] = params;
  out << j.dump(2) << '\n';
}

void write_kinship_csv(std::ostream& out, const KinshipMatrix& k) {
  out << "id";
  for (const auto& id : k.order) out << ',' << id;
  out << '\n';
  for (Eigen::Index i = 0; i < k.values.rows(); ++i) {
    out << k.order[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < k.values.cols(); ++j) out << ',' << io::format_double(k.values(i, j));
    out << '\n';
  }
}

void to_json(nlohmann::json& j, const ReplicateOptions& o) {
  j = nlohmann::json{{"scenario", o.scenario},
                     {"model", o.model},
                     {"sampler", o.sampler},
                     {"replicates", o.replicates},
                     {"workers", o.workers},
                     {"run_bayes", o.run_bayes},
                     {"select_instruments", o.select_instruments},
                     {"selection",
                      {{"p_max", o.selection.p_max},
                       {"r2_max", o.selection.r2_max},
                       {"window_bp", o.selection.window_bp}}},
                     {"seed", o.seed}};
}

void from_json(const nlohmann::json& j, ReplicateOptions& o) {
  if (j.contains("scenario")) j.at("scenario").get_to(o.scenario);
  if (j.contains("model")) j.at("model").get_to(o.model);
  if (j.contains("sampler")) j.at("sampler").get_to(o.sampler);
  try {
    get_if(j, "replicates", o.replicates);
    get_if(j, "workers", o.workers);
    get_if(j, "run_bayes", o.run_bayes);
    get_if(j, "select_instruments", o.select_instruments);
    get_if(j, "seed", o.seed);
    if (j.contains("selection")) {
      const auto& s = j.at("selection");
      get_if(s, "p_max", o.selection.p_max);
      get_if(s, "r2_max", o.selection.r2_max);
      get_if(s, "window_bp", o.selection.window_bp);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("cli.invalid_config", e.what());
  }
  if (o.replicates < 1 || o.workers < 1) throw Error("cli.invalid_config", "replicates and workers must be >= 1");
}

std::vector<ReplicateRow> run_replicate(const ReplicateOptions& o, int index) {
  ScenarioConfig sc = o.scenario;
  sc.seed = derive_seed(o.seed, kSeedReplicate + 1000 * static_cast<std::uint64_t>(index));
  std::vector<ReplicateRow> rows;
  ReplicateRow base;
  base.replicate = index + 1;
  base.scenario_seed = sc.seed;
  base.rhat = kNaN;
  base.ess_bulk = kNaN;

  Scenario s;
  try {
    s = simulate_scenario(sc);
  } catch (const Error& e) {
    ReplicateRow r = base;
    r.estimator = "scenario";
    r.error = e.code();
    return {r};
  }
  base.truth = s.truth.theta_model;
  base.n_missing = s.dataset.n_missing();
  const KinshipMatrix k = kinship(s.pedigree);

  std::vector<std::string> ids;
  try {
    if (o.select_instruments) {
      ids = select_from_data(s.dataset, k, o.selection).instruments.ids;
    } else {
      for (const auto& v : s.dataset.variants) ids.push_back(v.id);
    }
  } catch (const Error& e) {
    ReplicateRow r = base;
    r.estimator = "selection";
    r.error = e.code();
    return {r};
  }
  base.n_instruments = ids.size();

  MedianOptions med;
  med.seed = derive_seed(sc.seed, kSeedBootstrap);
  try {
    const FreqResult f = fit_frequentist(s.dataset, k, ids, {}, med);
    for (const auto& e : f.table) {
      ReplicateRow r = base;
      r.estimator = e.method;
      r.estimate = e.estimate;
      r.ci_low = e.ci_low;
      r.ci_high = e.ci_high;
      r.covered = e.ci_low <= r.truth && r.truth <= e.ci_high;
      rows.push_back(r);
    }
  } catch (const Error& e) {
    ReplicateRow r = base;
    r.estimator = "frequentist";
    r.error = e.code();
    rows.push_back(r);
  }

  if (o.run_bayes) {
    ReplicateRow r = base;
    r.estimator = kBayesEstimator;
    try {
      SamplerConfig cfg = o.sampler;
      cfg.seed = derive_seed(sc.seed, kSeedSampler);
      const BayesResult b = fit_bayesian(s.dataset.select_variants(ids), k, o.model, cfg);
      const Eigen::VectorXd theta = b.draws.pooled("theta");
      const std::vector<double> v(theta.data(), theta.data() + theta.size());
      r.estimate = quantile(v, 0.5);
      r.ci_low = quantile(v, 0.025);
      r.ci_high = quantile(v, 0.975);
      r.covered = r.ci_low <= r.truth && r.truth <= r.ci_high;
      for (const auto& d : b.diagnostics)
        if (d.name == "theta") {
          r.rhat = d.rhat;
          r.ess_bulk = d.ess_bulk;
        }
      r.divergences = b.draws.total_divergences();
    } catch (const Error& e) {
      r.error = e.code();
    }
    rows.push_back(r);
  }
  return rows;
}

std::vector<ReplicateRow> run_replicates(const ReplicateOptions& o, const ProgressFn& progress) {
  const int n = o.replicates;
  std::vector<std::vector<ReplicateRow>> per(static_cast<std::size_t>(n));
  std::mutex mu;
  int next = 0;
  auto worker = [&]() {
    while (true) {
      int i = 0;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= n) return;
        i = next++;
      }
      auto rows = run_replicate(o, i);
      std::lock_guard<std::mutex> lock(mu);
      if (progress) progress(rows);
      per[static_cast<std::size_t>(i)] = std::move(rows);
    }
  };
  const int w = std::max(1, std::min(o.workers, n));
  if (w == 1) {
    worker();
  } else {
    std::vector<std::future<void>> pool;
    for (int t = 0; t < w; ++t) pool.push_back(std::async(std::launch::async, worker));
    for (auto& p : pool) p.get();
  }
  std::vector<ReplicateRow> out;
  for (auto& rows : per) out.insert(out.end(), rows.begin(), rows.end());
  return out;
}

std::vector<MetricRow> replicate_metrics(const std::vector<ReplicateRow>& rows) {
  std::vector<MetricRow> out;
  for (const auto& r : rows) {
    if (!r.error.empty()) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const MetricRow& m) { return m.estimator == r.estimator; });
    if (it == out.end()) {
      out.push_back(MetricRow{});
      it = out.end() - 1;
      it->estimator = r.estimator;
    }
    ++it->n;
    it->mean_estimate += r.estimate;
    it->bias += r.estimate - r.truth;
    it->rmse += (r.estimate - r.truth) * (r.estimate - r.truth);
    it->covered += r.covered;
  }
  for (auto& m : out) {
    m.mean_estimate /= m.n;
    m.bias /= m.n;
    m.abs_bias = std::abs(m.bias);
    m.rmse = std::sqrt(m.rmse / m.n);
    m.coverage = static_cast<double>(m.covered) / m.n;
  }
  return out;
}

void write_replicate_csv(std::ostream& out, const std::vector<ReplicateRow>& rows) {
  out << "replicate,scenario_seed,estimator,truth,estimate,ci_low,ci_high,covered,rhat,ess_bulk,divergences,"
         "n_instruments,n_missing,error\n";
  for (const auto& r : rows) {
    out << r.replicate << ',' << r.scenario_seed << ',' << r.estimator << ',' << io::format_double(r.truth) << ','
        << io::format_double(r.estimate) << ',' << io::format_double(r.ci_low) << ','
        << io::format_double(r.ci_high) << ',' << (r.covered ? 1 : 0) << ',' << io::format_double(r.rhat) << ','
        << io::format_double(r.ess_bulk) << ',' << r.divergences << ',' << r.n_instruments << ',' << r.n_missing
        << ',' << r.error << '\n';
  }
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "estimator,n,mean_estimate,bias,abs_bias,rmse,covered,coverage\n";
  for (const auto& m : rows) {
    out << m.estimator << ',' << m.n << ',' << io::format_double(m.mean_estimate) << ','
        << io::format_double(m.bias) << ',' << io::format_double(m.abs_bias) << ',' << io::format_double(m.rmse)
        << ',' << m.covered << ',' << io::format_double(m.coverage) << '\n';
  }
}

}  // namespace pedmr
