#pragma once

#include "pedmr/data.hpp"
#include "pedmr/instruments.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pedmr {

// Per-instrument effects on the exposure (phi) and on outcome log-odds (gamma).
struct SummaryStats {
  std::vector<std::string> ids;
  Eigen::VectorXd phi;
  Eigen::VectorXd se_phi;
  Eigen::VectorXd gamma;
  Eigen::VectorXd se_gamma;

  std::size_t size() const { return ids.size(); }

  // Throws Error("mr_freq.invalid_stats") on misaligned sizes, non-positive
  // or non-finite standard errors.
  void validate() const;

  // Drops the listed instrument ids (unknown ids are ignored).
  SummaryStats without(const std::vector<std::string>& exclude) const;
};

struct InterceptRecord {
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
};

struct EstimateRecord {
  std::string method;
  double estimate = 0.0;  // log odds ratio per sd of exposure
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  std::optional<InterceptRecord> intercept;
};

struct OutcomeFit {
  std::string variant_id;
  double gamma = 0.0;
  double se = 0.0;
  bool separation = false;
  bool monomorphic = false;
};

// Logistic regression of y on the columns of `design` (which must include the
// intercept); returns the Wald estimate for column `coef`.
OutcomeFit logistic_wald(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, Eigen::Index coef);

// One regression Y ~ 1 + dose [+ sex] per instrument over the full sample.
// Separated fits carry gamma = +/-inf and se = inf.
std::vector<OutcomeFit> outcome_scan(const Dataset& ds, const InstrumentSet& instruments,
                                     bool adjust_sex = true);

// Aligns exposure scan results with outcome fits. Throws if an instrument is
// missing, monomorphic or separated.
SummaryStats make_summary_stats(const AssociationScan& scan, const std::vector<OutcomeFit>& outcome);

enum class IvwMode { fixed, penalized, robust, penalized_robust };
enum class EggerMode { plain, penalized, robust, penalized_robust };
enum class MedianMode { simple, weighted, penalized_weighted };

struct RobustOptions {
  double huber_k = 1.345;
  int max_iterations = 50;
  double tolerance = 1e-10;
};

// Heterogeneity penalty: weight multiplier min(1, factor * q) with q the
// chi-square(1) upper tail of each instrument's Cochran contribution.
struct PenaltyOptions {
  double factor = 20.0;
};

EstimateRecord ivw(const SummaryStats& s, IvwMode mode, const PenaltyOptions& pen = {},
                   const RobustOptions& rob = {});

// Slope record with `intercept` populated.
EstimateRecord egger(const SummaryStats& s, EggerMode mode, const PenaltyOptions& pen = {},
                     const RobustOptions& rob = {});

struct MedianOptions {
  int bootstrap_samples = 1000;
  std::uint64_t seed = 314159;
};

EstimateRecord median_estimator(const SummaryStats& s, MedianMode mode, const MedianOptions& opts = {},
                                const PenaltyOptions& pen = {});

// Weighted 50th percentile by linear interpolation of the cumulative weight
// function evaluated at the midpoint of each weight.
double weighted_median(std::span<const double> values, std::span<const double> weights);

// Per-instrument penalty multipliers relative to a fitted line.
Eigen::VectorXd penalty_weights(const SummaryStats& s, double slope, double intercept,
                                const PenaltyOptions& pen = {});

// The eleven-row battery: three medians, four IVW and four MR-Egger variants.
std::vector<EstimateRecord> estimator_battery(const SummaryStats& s, const MedianOptions& opts = {});

struct PlotRow {
  std::string kind;    // "point" or "line"
  std::string label;   // instrument id or method name
  double phi = 0.0;
  double gamma = 0.0;
  double se_phi = 0.0;
  double se_gamma = 0.0;
  double intercept = 0.0;
  double slope = 0.0;
};

std::vector<PlotRow> egger_plot_data(const SummaryStats& s, const std::vector<EstimateRecord>& fits);

void write_estimates_csv(std::ostream& out, const std::vector<EstimateRecord>& rows);
void write_plot_csv(std::ostream& out, const std::vector<PlotRow>& rows);
void write_summary_stats_csv(std::ostream& out, const SummaryStats& s);

}  // namespace pedmr
