#pragma once

#include "pedmr/data.hpp"
#include "pedmr/pedigree.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pedmr {

struct ScanRecord {
  std::string variant_id;
  double phi_hat = 0.0;  // sd of X per allele
  double se = 0.0;
  double p = 1.0;
  std::size_t n = 0;
  bool monomorphic = false;
  double lambda = 0.0;  // fitted sigma_g^2 / sigma_e^2
};

struct AssociationScan {
  std::vector<ScanRecord> records;

  const ScanRecord* find(const std::string& variant_id) const;
};

struct ScanOptions {
  bool adjust_sex = true;
  // Fixes the variance ratio instead of profiling it; 0 gives ordinary least squares.
  std::optional<double> fixed_lambda;
  int grid_points = 64;
  double log10_lambda_min = -4.0;
  double log10_lambda_max = 4.0;
  std::size_t min_individuals = 10;
};

// Per-variant linear mixed model X ~ 1 + dose [+ sex] + g + e on the
// disease-free individuals with observed exposure, g ~ N(0, sigma_g^2 * 2K).
// The variance ratio is profiled over a log grid by restricted likelihood
// using one eigendecomposition of the relationship matrix.
AssociationScan marginal_scan(const Dataset& ds, const KinshipMatrix& k, const ScanOptions& opts = {});

// Greedy LD pruning in genomic order. A variant is dropped when it has
// r^2 >= r2_max with an already retained variant on the same chromosome at
// distance <= window_bp.
std::vector<std::string> ld_prune(const Dataset& ds, double r2_max, long long window_bp);

// Squared Pearson correlation of two dose columns; 0 if either is constant.
double dose_r2(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Indices of ds.variants sorted by chromosome, position, then id.
std::vector<std::size_t> genomic_order(const std::vector<VariantInfo>& variants);

struct InstrumentSet {
  std::vector<std::string> ids;
  double p_max = 5e-3;
  double r2_max = 0.2;
  long long window_bp = 100'000;
};

// Members of `pruned` (kept in its order) whose scan p-value is below p_max
// and that are not monomorphic. Throws Error("instruments.empty").
InstrumentSet select_instruments(const AssociationScan& scan, const std::vector<std::string>& pruned,
                                 double p_max = 5e-3);

void write_scan_csv(std::ostream& out, const AssociationScan& scan);
void write_instrument_list(std::ostream& out, const InstrumentSet& set);
std::vector<std::string> read_instrument_list(std::istream& in);

double normal_two_sided_p(double z);

}  // namespace pedmr
