#include "pedmr/instruments.hpp"

#include "pedmr/error.hpp"
#include "pedmr/table_io.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

namespace pedmr {

namespace {

// Chromosome sort key: numeric labels first in numeric order, then the rest
// lexicographically.
std::pair<long long, std::string> chrom_key(const std::string& chrom) {
  std::string s = chrom;
  if (s.rfind("chr", 0) == 0) s = s.substr(3);
  if (!s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
    return {std::stoll(s), ""};
  }
  return {std::numeric_limits<long long>::max(), s};
}

struct GlsFit {
  double loglik = -std::numeric_limits<double>::infinity();
  double beta = 0.0;
  double se = 0.0;
};

// Generalized least squares in the rotated basis with diagonal covariance
// lambda * d + 1; returns the profiled restricted log-likelihood (up to a
// constant) and the Wald estimate for the last design column.
GlsFit gls_rotated(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& d,
                   double lambda) {
  const auto n = design.rows();
  const auto p = design.cols();
  const Eigen::ArrayXd w = 1.0 / (lambda * d.array() + 1.0);
  const Eigen::MatrixXd xtwx = design.transpose() * w.matrix().asDiagonal() * design;
  const Eigen::VectorXd xtwy = design.transpose() * (w * y.array()).matrix();
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(xtwx);
  GlsFit fit;
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return fit;
  const Eigen::VectorXd coef = ldlt.solve(xtwy);
  const double ywy = (w * y.array().square()).sum();
  const double rwr = std::max(ywy - coef.dot(xtwy), 0.0);
  if (!(rwr > 0.0)) return fit;
  const double sigma2 = rwr / static_cast<double>(n - p);
  const double logdet_h = -w.log().sum();
  const double logdet_xtwx = ldlt.vectorD().array().log().sum();
  fit.loglik = -0.5 * (static_cast<double>(n - p) * std::log(rwr) + logdet_h + logdet_xtwx);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(p);
  e(p - 1) = 1.0;
  const double var_coef = ldlt.solve(e)(p - 1) * sigma2;
  fit.beta = coef(p - 1);
  fit.se = std::sqrt(var_coef);
  return fit;
}

}  // namespace

double normal_two_sided_p(double z) {
  if (std::isnan(z)) return 1.0;
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

const ScanRecord* AssociationScan::find(const std::string& variant_id) const {
  for (const auto& r : records)
    if (r.variant_id == variant_id) return &r;
  return nullptr;
}

AssociationScan marginal_scan(const Dataset& ds, const KinshipMatrix& k, const ScanOptions& opts) {
  std::vector<bool> keep(ds.size());
  std::vector<std::string> sub_ids;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    keep[i] = !ds.x_missing[i] && ds.y(static_cast<Eigen::Index>(i)) == 0.0;
    if (keep[i]) sub_ids.push_back(ds.ids[i]);
  }
  if (sub_ids.size() < opts.min_individuals) {
    throw Error("instruments.too_few", "only " + std::to_string(sub_ids.size()) +
                                           " disease-free individuals with observed exposure");
  }
  const Dataset sub = ds.select_rows(keep);
  const auto n = static_cast<Eigen::Index>(sub.size());

  // With the ratio fixed at zero the kinship drops out and no rotation is needed.
  const bool rotate = !(opts.fixed_lambda && *opts.fixed_lambda == 0.0);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd vt;
  if (rotate) {
    const Eigen::MatrixXd grm = k.subset(sub_ids).relationship();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(grm);
    if (eig.info() != Eigen::Success) throw Error("instruments.eigen", "eigendecomposition failed");
    d = eig.eigenvalues().cwiseMax(0.0);
    vt = eig.eigenvectors().transpose();
  }
  auto rot = [&](const auto& m) -> Eigen::MatrixXd { return rotate ? Eigen::MatrixXd(vt * m) : Eigen::MatrixXd(m); };

  bool use_sex = opts.adjust_sex && sub.sex.has_value();
  if (use_sex) {
    const auto& s = *sub.sex;
    use_sex = s.maxCoeff() != s.minCoeff();
  }
  const Eigen::Index n_cov = use_sex ? 2 : 1;
  Eigen::MatrixXd design(n, n_cov + 1);
  Eigen::MatrixXd base(n, n_cov);
  base.col(0).setOnes();
  if (use_sex) base.col(1) = *sub.sex;
  design.leftCols(n_cov) = rot(base);
  const Eigen::VectorXd y_rot = rot(sub.x);

  std::vector<double> grid;
  if (opts.fixed_lambda) {
    grid.push_back(*opts.fixed_lambda);
  } else {
    const int g = std::max(opts.grid_points, 2);
    for (int i = 0; i < g; ++i) {
      const double t = opts.log10_lambda_min +
                       (opts.log10_lambda_max - opts.log10_lambda_min) * i / static_cast<double>(g - 1);
      grid.push_back(std::pow(10.0, t));
    }
  }

  AssociationScan scan;
  scan.records.reserve(sub.n_variants());
  for (std::size_t j = 0; j < sub.n_variants(); ++j) {
    ScanRecord rec;
    rec.variant_id = sub.variants[j].id;
    rec.n = static_cast<std::size_t>(n);
    const auto dose = sub.z.col(static_cast<Eigen::Index>(j));
    if (dose.maxCoeff() == dose.minCoeff()) {
      rec.monomorphic = true;
      rec.phi_hat = 0.0;
      rec.se = std::numeric_limits<double>::infinity();
      rec.p = 1.0;
      scan.records.push_back(rec);
      continue;
    }
    design.col(n_cov) = rot(dose);
    GlsFit best;
    double best_lambda = grid.front();
    for (double lambda : grid) {
      const auto fit = gls_rotated(design, y_rot, d, lambda);
      if (fit.loglik > best.loglik) {
        best = fit;
        best_lambda = lambda;
      }
    }
    if (!std::isfinite(best.loglik) || !(best.se > 0.0)) {
      // Dose collinear with covariates in this subsample.
      rec.monomorphic = true;
      rec.se = std::numeric_limits<double>::infinity();
      rec.p = 1.0;
      scan.records.push_back(rec);
      continue;
    }
    rec.phi_hat = best.beta;
    rec.se = best.se;
    rec.lambda = best_lambda;
    rec.p = normal_two_sided_p(best.beta / best.se);
    scan.records.push_back(rec);
  }
  return scan;
}

double dose_r2(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::ArrayXd ca = a.array() - a.mean();
  const Eigen::ArrayXd cb = b.array() - b.mean();
  const double saa = (ca * ca).sum();
  const double sbb = (cb * cb).sum();
  if (!(saa > 0.0) || !(sbb > 0.0)) return 0.0;
  const double sab = (ca * cb).sum();
  return sab * sab / (saa * sbb);
}

std::vector<std::size_t> genomic_order(const std::vector<VariantInfo>& variants) {
  std::vector<std::size_t> idx(variants.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& va = variants[a];
    const auto& vb = variants[b];
    const auto ka = chrom_key(va.chrom);
    const auto kb = chrom_key(vb.chrom);
    if (ka != kb) return ka < kb;
    if (va.pos != vb.pos) return va.pos < vb.pos;
    return va.id < vb.id;
  });
  return idx;
}

std::vector<std::string> ld_prune(const Dataset& ds, double r2_max, long long window_bp) {
  const auto order = genomic_order(ds.variants);
  std::vector<std::size_t> retained;
  std::vector<std::string> out;
  for (const auto j : order) {
    const auto& v = ds.variants[j];
    bool drop = false;
    for (auto it = retained.rbegin(); it != retained.rend(); ++it) {
      const auto& u = ds.variants[*it];
      if (u.chrom != v.chrom) break;
      if (v.pos - u.pos > window_bp) break;
      const double r2 = dose_r2(ds.z.col(static_cast<Eigen::Index>(*it)), ds.z.col(static_cast<Eigen::Index>(j)));
      if (r2 >= r2_max) {
        drop = true;
        break;
      }
    }
    if (!drop) {
      retained.push_back(j);
      out.push_back(v.id);
    }
  }
  return out;
}

InstrumentSet select_instruments(const AssociationScan& scan, const std::vector<std::string>& pruned,
                                 double p_max) {
  InstrumentSet set;
  set.p_max = p_max;
  for (const auto& id : pruned) {
    const auto* rec = scan.find(id);
    if (rec == nullptr || rec->monomorphic) continue;
    if (rec->p < p_max) set.ids.push_back(id);
  }
  if (set.ids.empty()) {
    throw Error("instruments.empty", "no variant passes both the association and LD filters");
  }
  return set;
}

void write_scan_csv(std::ostream& out, const AssociationScan& scan) {
  out << "variant_id,phi_hat,se,p,n\n";
  for (const auto& r : scan.records) {
    out << r.variant_id << ',' << io::format_double(r.phi_hat) << ',' << io::format_double(r.se) << ','
        << io::format_double(r.p) << ',' << r.n << '\n';
  }
}

void write_instrument_list(std::ostream& out, const InstrumentSet& set) {
  for (const auto& id : set.ids) out << id << '\n';
}

std::vector<std::string> read_instrument_list(std::istream& in) {
  std::vector<std::string> ids;
  for (const auto& row : io::read_rows(in)) {
    if (!row.empty()) ids.push_back(row.front());
  }
  return ids;
}

}  // namespace pedmr
