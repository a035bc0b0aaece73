#pragma once

#include "pedmr/bayes_model.hpp"
#include "pedmr/data.hpp"
#include "pedmr/instruments.hpp"
#include "pedmr/mr_freq.hpp"
#include "pedmr/pedigree.hpp"
#include "pedmr/sampler.hpp"
#include "pedmr/simulator.hpp"

#include "json.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

// End-to-end steps shared by the command line tool and the acceptance runs.
namespace pedmr {

void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);

// Stage indices for derive_seed(top_level_seed, stage).
enum SeedStage : std::uint64_t {
  kSeedBootstrap = 101,
  kSeedSampler = 102,
  kSeedReplicate = 103,
  kSeedSimulate = 104,
};

// Optionally masks the exposure of cases, then standardizes observed entries.
Dataset prepare_dataset(Dataset ds, bool mask_cases);

struct SelectionOptions {
  double p_max = 5e-3;
  double r2_max = 0.2;
  long long window_bp = 100'000;
  ScanOptions scan;
};

struct Selection {
  AssociationScan scan;
  std::vector<std::string> pruned;
  InstrumentSet instruments;
};

Selection select_from_data(const Dataset& ds, const KinshipMatrix& k, const SelectionOptions& opts = {});

struct FreqResult {
  SummaryStats stats;
  std::vector<EstimateRecord> table;
  std::vector<PlotRow> plot;
};

// First-stage mixed-model effects and second-stage logistic effects for the
// listed instruments, minus `exclude`, then the eleven-estimator battery.
FreqResult fit_frequentist(const Dataset& ds, const KinshipMatrix& k, const std::vector<std::string>& instruments,
                           const std::vector<std::string>& exclude, const MedianOptions& median = {},
                           const ScanOptions& scan = {});

struct BayesResult {
  ModelSpec spec;  // resolved
  SamplerConfig sampler;
  PosteriorDraws draws;
  std::vector<DiagnosticRow> diagnostics;
  double initial_gradient_error = 0.0;
  std::vector<PercentileRow> table;  // log odds ratio row, odds ratio row
};

// Dataset restricted to the instrument columns (exposure already prepared).
BayesResult fit_bayesian(const Dataset& ds, const KinshipMatrix& k, ModelSpec spec, const SamplerConfig& cfg);

// Largest |analytic - central difference| / (1 + |central difference|) over
// the given coordinates (all when empty).
double gradient_check(const MrModel& model, const Eigen::VectorXd& at, const std::vector<std::size_t>& coords = {},
                      double step = 1e-5);

inline const char* kLogOddsRow = "Causal Exposure Log Odds Ratio";
inline const char* kOddsRow = "Causal Exposure Odds Ratio";

void write_percentile_csv(std::ostream& out, const std::vector<PercentileRow>& rows);
void write_diagnostics_json(std::ostream& out, const BayesResult& r);
void write_kinship_csv(std::ostream& out, const KinshipMatrix& k);

struct ReplicateOptions {
  ScenarioConfig scenario;
  ModelSpec model;
  SamplerConfig sampler;
  int replicates = 20;
  int workers = 1;
  bool run_bayes = true;
  bool select_instruments = false;  // use every simulated variant when false
  SelectionOptions selection;
  std::uint64_t seed = 1;
};

void to_json(nlohmann::json& j, const ReplicateOptions& o);
void from_json(const nlohmann::json& j, ReplicateOptions& o);

// One estimate of the per-sd causal log odds ratio.
struct ReplicateRow {
  int replicate = 0;
  std::uint64_t scenario_seed = 0;
  std::string estimator;
  double truth = 0.0;
  double estimate = 0.0;  // posterior median for the Bayesian row
  double ci_low = 0.0;    // 95% interval
  double ci_high = 0.0;
  bool covered = false;
  double rhat = 0.0;  // Bayesian row only, NaN otherwise
  double ess_bulk = 0.0;
  int divergences = 0;
  std::size_t n_instruments = 0;
  std::size_t n_missing = 0;
  std::string error;  // non-empty when the estimator could not be computed
};

struct MetricRow {
  std::string estimator;
  int n = 0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double abs_bias = 0.0;  // |mean(estimate - truth)|
  double rmse = 0.0;
  int covered = 0;
  double coverage = 0.0;
};

using ProgressFn = std::function<void(const std::vector<ReplicateRow>&)>;

// Rows for one replicate: the eleven frequentist estimators and, if enabled,
// "Bayesian horseshoe".
std::vector<ReplicateRow> run_replicate(const ReplicateOptions& o, int index);
std::vector<ReplicateRow> run_replicates(const ReplicateOptions& o, const ProgressFn& progress = {});
std::vector<MetricRow> replicate_metrics(const std::vector<ReplicateRow>& rows);

inline const char* kBayesEstimator = "Bayesian horseshoe";

void write_replicate_csv(std::ostream& out, const std::vector<ReplicateRow>& rows);
void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);

}  // namespace pedmr
