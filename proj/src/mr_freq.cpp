#include "pedmr/mr_freq.hpp"

#include "pedmr/error.hpp"
#include "pedmr/table_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <unordered_map>
#include <unordered_set>

namespace pedmr {

namespace {

constexpr double kZ975 = 1.959963984540054;
constexpr double kInf = std::numeric_limits<double>::infinity();

double chisq1_upper(double q) { return std::erfc(std::sqrt(std::max(q, 0.0) / 2.0)); }

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  if (n == 0) return 0.0;
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct LineFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
};

// Weighted regression of g on the columns of a with weights w. The standard
// errors use the multiplicative random-effects correction max(1, residual sd).
LineFit weighted_line(const Eigen::MatrixXd& a, const Eigen::VectorXd& g, const Eigen::VectorXd& w,
                      bool robust, const RobustOptions& rob) {
  const auto j = a.rows();
  const auto p = a.cols();
  const Eigen::VectorXd sw = w.array().sqrt();
  const Eigen::MatrixXd at = sw.asDiagonal() * a;
  const Eigen::VectorXd gt = sw.cwiseProduct(g);
  Eigen::VectorXd h = Eigen::VectorXd::Ones(j);

  auto solve = [&](const Eigen::VectorXd& hw) {
    const Eigen::MatrixXd xtx = at.transpose() * hw.asDiagonal() * at;
    const Eigen::VectorXd xty = at.transpose() * hw.cwiseProduct(gt);
    return Eigen::VectorXd(xtx.ldlt().solve(xty));
  };

  Eigen::VectorXd coef = solve(h);
  if (robust) {
    for (int it = 0; it < rob.max_iterations; ++it) {
      const Eigen::VectorXd r = gt - at * coef;
      // MAD about zero, as in the usual M-estimation scale step
      std::vector<double> rv(r.data(), r.data() + r.size());
      for (auto& x : rv) x = std::abs(x);
      const double scale = 1.482602218505602 * median_of(rv);
      if (!(scale > 1e-300)) break;
      for (Eigen::Index k = 0; k < j; ++k) {
        const double u = std::abs(r(k)) / scale;
        h(k) = u <= rob.huber_k ? 1.0 : rob.huber_k / u;
      }
      const Eigen::VectorXd next = solve(h);
      const double change = (next - coef).cwiseAbs().maxCoeff();
      coef = next;
      if (change <= rob.tolerance * (1.0 + coef.cwiseAbs().maxCoeff())) break;
    }
  }

  const Eigen::VectorXd r = gt - at * coef;
  double sigma = 1.0;
  if (j > p) {
    sigma = std::sqrt(h.cwiseProduct(r.cwiseAbs2()).sum() / static_cast<double>(j - p));
  }
  const Eigen::MatrixXd xtx = at.transpose() * h.asDiagonal() * at;
  const Eigen::MatrixXd inv = xtx.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  LineFit fit;
  fit.coef = coef;
  fit.se = inv.diagonal().cwiseMax(0.0).cwiseSqrt() * std::max(1.0, sigma);
  return fit;
}

void fill_interval(double est, double se, double& lo, double& hi, double& p) {
  lo = est - kZ975 * se;
  hi = est + kZ975 * se;
  p = se > 0.0 ? std::erfc(std::abs(est / se) / std::sqrt(2.0)) : (est == 0.0 ? 1.0 : 0.0);
}

EstimateRecord make_record(std::string method, double est, double se) {
  EstimateRecord r;
  r.method = std::move(method);
  r.estimate = est;
  r.std_error = se;
  fill_interval(est, se, r.ci_low, r.ci_high, r.p_value);
  return r;
}

Eigen::VectorXd base_weights(const SummaryStats& s) { return s.se_gamma.array().square().inverse(); }

void require_nonempty(const SummaryStats& s, std::size_t min, const char* what) {
  s.validate();
  if (s.size() < min) {
    throw Error("mr_freq.too_few_instruments", std::string(what) + " needs at least " + std::to_string(min) +
                                                   " instruments, got " + std::to_string(s.size()));
  }
}

void check_weights(const Eigen::VectorXd& w) {
  if (!(w.sum() > 0.0)) throw Error("mr_freq.zero_weights", "all weights are zero after penalization");
}

}  // namespace

void SummaryStats::validate() const {
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (phi.size() != n || se_phi.size() != n || gamma.size() != n || se_gamma.size() != n) {
    throw Error("mr_freq.invalid_stats", "summary statistic vectors are misaligned");
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!(se_phi(j) > 0.0) || !(se_gamma(j) > 0.0) || !std::isfinite(se_phi(j)) || !std::isfinite(se_gamma(j)) ||
        !std::isfinite(phi(j)) || !std::isfinite(gamma(j))) {
      throw Error("mr_freq.invalid_stats", "instrument '" + ids[static_cast<std::size_t>(j)] +
                                               "' has a non-finite estimate or non-positive standard error");
    }
  }
}

SummaryStats SummaryStats::without(const std::vector<std::string>& exclude) const {
  const std::unordered_set<std::string> drop(exclude.begin(), exclude.end());
  std::vector<Eigen::Index> keep;
  for (std::size_t j = 0; j < ids.size(); ++j)
    if (!drop.count(ids[j])) keep.push_back(static_cast<Eigen::Index>(j));
  SummaryStats out;
  const auto n = static_cast<Eigen::Index>(keep.size());
  out.phi.resize(n);
  out.se_phi.resize(n);
  out.gamma.resize(n);
  out.se_gamma.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto j = keep[static_cast<std::size_t>(k)];
    out.ids.push_back(ids[static_cast<std::size_t>(j)]);
    out.phi(k) = phi(j);
    out.se_phi(k) = se_phi(j);
    out.gamma(k) = gamma(j);
    out.se_gamma(k) = se_gamma(j);
  }
  return out;
}

OutcomeFit logistic_wald(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, Eigen::Index coef) {
  const auto p = design.cols();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  OutcomeFit fit;
  bool converged = false;
  Eigen::MatrixXd info(p, p);
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd eta = design * b;
    const Eigen::ArrayXd mu = 1.0 / (1.0 + (-eta.array()).exp());
    const Eigen::ArrayXd w = (mu * (1.0 - mu)).max(1e-300);
    info = design.transpose() * w.matrix().asDiagonal() * design;
    const Eigen::VectorXd score = design.transpose() * (y.array() - mu).matrix();
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    const Eigen::VectorXd step = ldlt.solve(score);
    if (!step.allFinite()) break;
    b += step;
    if (b.cwiseAbs().maxCoeff() > 50.0) break;
    if (step.cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + b.cwiseAbs().maxCoeff())) {
      converged = true;
      break;
    }
  }
  if (converged) {
    const Eigen::VectorXd eta = design * b;
    const Eigen::ArrayXd mu = 1.0 / (1.0 + (-eta.array()).exp());
    const Eigen::ArrayXd w = mu * (1.0 - mu);
    info = design.transpose() * w.matrix().asDiagonal() * design;
    const Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    fit.gamma = b(coef);
    fit.se = std::sqrt(std::max(cov(coef, coef), 0.0));
  }
  // Diverging coefficients or a vanishing information matrix mean the data
  // are (quasi-)separated.
  if (!converged || !(fit.se > 0.0) || fit.se > 1e4 || std::abs(fit.gamma) > 30.0) {
    fit.separation = true;
    fit.gamma = b(coef) >= 0.0 ? kInf : -kInf;
    fit.se = kInf;
  }
  return fit;
}

std::vector<OutcomeFit> outcome_scan(const Dataset& ds, const InstrumentSet& instruments, bool adjust_sex) {
  const auto n = static_cast<Eigen::Index>(ds.size());
  bool use_sex = adjust_sex && ds.sex.has_value() && ds.sex->maxCoeff() != ds.sex->minCoeff();
  std::unordered_map<std::string, Eigen::Index> col;
  for (std::size_t j = 0; j < ds.variants.size(); ++j) col.emplace(ds.variants[j].id, static_cast<Eigen::Index>(j));

  std::vector<OutcomeFit> out;
  for (const auto& id : instruments.ids) {
    auto it = col.find(id);
    if (it == col.end()) throw Error("mr_freq.unknown_variant", "instrument '" + id + "' not in dataset");
    const auto dose = ds.z.col(it->second);
    OutcomeFit fit;
    if (dose.maxCoeff() == dose.minCoeff()) {
      fit.monomorphic = true;
      fit.se = kInf;
    } else {
      Eigen::MatrixXd design(n, use_sex ? 3 : 2);
      design.col(0).setOnes();
      design.col(1) = dose;
      if (use_sex) design.col(2) = *ds.sex;
      fit = logistic_wald(design, ds.y, 1);
    }
    fit.variant_id = id;
    out.push_back(fit);
  }
  return out;
}

SummaryStats make_summary_stats(const AssociationScan& scan, const std::vector<OutcomeFit>& outcome) {
  SummaryStats s;
  const auto n = static_cast<Eigen::Index>(outcome.size());
  s.phi.resize(n);
  s.se_phi.resize(n);
  s.gamma.resize(n);
  s.se_gamma.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& o = outcome[static_cast<std::size_t>(j)];
    const auto* rec = scan.find(o.variant_id);
    if (rec == nullptr) throw Error("mr_freq.unknown_variant", "no exposure scan for '" + o.variant_id + "'");
    if (rec->monomorphic || o.monomorphic) {
      throw Error("mr_freq.monomorphic", "instrument '" + o.variant_id + "' is monomorphic");
    }
    if (o.separation) {
      throw Error("mr_freq.separation", "outcome regression for '" + o.variant_id + "' is separated");
    }
    s.ids.push_back(o.variant_id);
    s.phi(j) = rec->phi_hat;
    s.se_phi(j) = rec->se;
    s.gamma(j) = o.gamma;
    s.se_gamma(j) = o.se;
  }
  s.validate();
  return s;
}

Eigen::VectorXd penalty_weights(const SummaryStats& s, double slope, double intercept, const PenaltyOptions& pen) {
  const Eigen::VectorXd w = base_weights(s);
  Eigen::VectorXd mult(s.size());
  for (Eigen::Index j = 0; j < mult.size(); ++j) {
    const double r = s.gamma(j) - intercept - slope * s.phi(j);
    mult(j) = std::min(1.0, pen.factor * chisq1_upper(w(j) * r * r));
  }
  return mult;
}

EstimateRecord ivw(const SummaryStats& s, IvwMode mode, const PenaltyOptions& pen, const RobustOptions& rob) {
  require_nonempty(s, 1, "IVW");
  const Eigen::MatrixXd a = s.phi;
  Eigen::VectorXd w = base_weights(s);
  const bool robust = mode == IvwMode::robust || mode == IvwMode::penalized_robust;
  const bool penalized = mode == IvwMode::penalized || mode == IvwMode::penalized_robust;
  if (penalized) {
    const auto first = weighted_line(a, s.gamma, w, robust, rob);
    w = w.cwiseProduct(penalty_weights(s, first.coef(0), 0.0, pen));
    check_weights(w);
  }
  const auto fit = weighted_line(a, s.gamma, w, robust, rob);
  static const char* names[] = {"IVW", "Penalized IVW", "Robust IVW", "Penalized robust IVW"};
  return make_record(names[static_cast<int>(mode)], fit.coef(0), fit.se(0));
}

EstimateRecord egger(const SummaryStats& s, EggerMode mode, const PenaltyOptions& pen, const RobustOptions& rob) {
  require_nonempty(s, 2, "MR-Egger");
  // Orient every instrument so its exposure effect is non-negative.
  SummaryStats o = s;
  for (Eigen::Index j = 0; j < o.phi.size(); ++j) {
    if (o.phi(j) < 0.0) {
      o.phi(j) = -o.phi(j);
      o.gamma(j) = -o.gamma(j);
    }
  }
  if (o.phi.maxCoeff() == o.phi.minCoeff()) {
    throw Error("mr_freq.constant_phi", "MR-Egger needs non-constant instrument-exposure effects");
  }
  Eigen::MatrixXd a(o.size(), 2);
  a.col(0).setOnes();
  a.col(1) = o.phi;
  Eigen::VectorXd w = base_weights(o);
  const bool robust = mode == EggerMode::robust || mode == EggerMode::penalized_robust;
  const bool penalized = mode == EggerMode::penalized || mode == EggerMode::penalized_robust;
  if (penalized) {
    const auto first = weighted_line(a, o.gamma, w, robust, rob);
    w = w.cwiseProduct(penalty_weights(o, first.coef(1), first.coef(0), pen));
    check_weights(w);
  }
  const auto fit = weighted_line(a, o.gamma, w, robust, rob);
  static const char* names[] = {"MR-Egger", "Penalized MR-Egger", "Robust MR-Egger", "Penalized robust MR-Egger"};
  auto rec = make_record(names[static_cast<int>(mode)], fit.coef(1), fit.se(1));
  InterceptRecord ic;
  ic.estimate = fit.coef(0);
  ic.std_error = fit.se(0);
  fill_interval(ic.estimate, ic.std_error, ic.ci_low, ic.ci_high, ic.p_value);
  rec.intercept = ic;
  return rec;
}

double weighted_median(std::span<const double> values, std::span<const double> weights) {
  const auto n = values.size();
  if (n == 0 || weights.size() != n) throw Error("mr_freq.invalid_stats", "weighted median needs aligned input");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw Error("mr_freq.zero_weights", "weighted median weights sum to zero");
  std::vector<double> v(n), cum(n);
  double running = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double w = weights[idx[k]] / total;
    v[k] = values[idx[k]];
    running += w;
    cum[k] = running - 0.5 * w;
  }
  std::size_t below = n;  // last index with cum < 0.5
  for (std::size_t k = 0; k < n; ++k)
    if (cum[k] < 0.5) below = k;
  if (below == n) return v.front();
  if (below == n - 1) return v.back();
  return v[below] + (v[below + 1] - v[below]) * (0.5 - cum[below]) / (cum[below + 1] - cum[below]);
}

EstimateRecord median_estimator(const SummaryStats& s_in, MedianMode mode, const MedianOptions& opts,
                                const PenaltyOptions& pen) {
  require_nonempty(s_in, 3, "median estimator");
  SummaryStats s = s_in;
  for (Eigen::Index j = 0; j < s.phi.size(); ++j) {
    if (s.phi(j) == 0.0) {
      throw Error("mr_freq.zero_phi", "instrument '" + s.ids[static_cast<std::size_t>(j)] + "' has zero exposure effect");
    }
    if (s.phi(j) < 0.0) {
      s.phi(j) = -s.phi(j);
      s.gamma(j) = -s.gamma(j);
    }
  }
  const auto n = s.phi.size();
  const Eigen::VectorXd ratio = s.gamma.cwiseQuotient(s.phi);
  Eigen::VectorXd w(n);
  if (mode == MedianMode::simple) {
    w.setOnes();
  } else {
    w = s.phi.cwiseAbs2().cwiseQuotient(s.se_gamma.cwiseAbs2());
    if (mode == MedianMode::penalized_weighted) {
      const auto centre = ivw(s, IvwMode::fixed);
      w = w.cwiseProduct(penalty_weights(s, centre.estimate, 0.0, pen));
      check_weights(w);
    }
  }
  const double est = weighted_median(std::span<const double>(ratio.data(), static_cast<std::size_t>(n)),
                                     std::span<const double>(w.data(), static_cast<std::size_t>(n)));

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> boot(static_cast<std::size_t>(opts.bootstrap_samples));
  std::vector<double> r(static_cast<std::size_t>(n));
  for (auto& b : boot) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double g = s.gamma(j) + s.se_gamma(j) * normal(rng);
      const double f = s.phi(j) + s.se_phi(j) * normal(rng);
      r[static_cast<std::size_t>(j)] = g / f;
    }
    b = weighted_median(r, std::span<const double>(w.data(), static_cast<std::size_t>(n)));
  }
  double se = 0.0;
  if (boot.size() > 1) {
    const double mean = std::accumulate(boot.begin(), boot.end(), 0.0) / static_cast<double>(boot.size());
    double ss = 0.0;
    for (double b : boot) ss += (b - mean) * (b - mean);
    se = std::sqrt(ss / static_cast<double>(boot.size() - 1));
  }
  static const char* names[] = {"Simple median", "Weighted median", "Penalized weighted median"};
  return make_record(names[static_cast<int>(mode)], est, se);
}

std::vector<EstimateRecord> estimator_battery(const SummaryStats& s, const MedianOptions& opts) {
  std::vector<EstimateRecord> rows;
  for (auto m : {MedianMode::simple, MedianMode::weighted, MedianMode::penalized_weighted})
    rows.push_back(median_estimator(s, m, opts));
  for (auto m : {IvwMode::fixed, IvwMode::penalized, IvwMode::robust, IvwMode::penalized_robust})
    rows.push_back(ivw(s, m));
  for (auto m : {EggerMode::plain, EggerMode::penalized, EggerMode::robust, EggerMode::penalized_robust})
    rows.push_back(egger(s, m));
  return rows;
}

std::vector<PlotRow> egger_plot_data(const SummaryStats& s, const std::vector<EstimateRecord>& fits) {
  std::vector<PlotRow> rows;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    PlotRow r;
    r.kind = "point";
    r.label = s.ids[j];
    r.phi = s.phi(k);
    r.gamma = s.gamma(k);
    r.se_phi = s.se_phi(k);
    r.se_gamma = s.se_gamma(k);
    rows.push_back(r);
  }
  for (const auto& f : fits) {
    PlotRow r;
    r.kind = "line";
    r.label = f.method;
    r.slope = f.estimate;
    r.intercept = f.intercept ? f.intercept->estimate : 0.0;
    rows.push_back(r);
  }
  return rows;
}

void write_estimates_csv(std::ostream& out, const std::vector<EstimateRecord>& rows) {
  out << "method,estimate,std_error,ci_low,ci_high,p_value\n";
  for (const auto& r : rows) {
    out << r.method << ',' << io::format_double(r.estimate) << ',' << io::format_double(r.std_error) << ','
        << io::format_double(r.ci_low) << ',' << io::format_double(r.ci_high) << ','
        << io::format_double(r.p_value) << '\n';
  }
}

void write_plot_csv(std::ostream& out, const std::vector<PlotRow>& rows) {
  out << "kind,label,phi,gamma,se_phi,se_gamma,intercept,slope\n";
  for (const auto& r : rows) {
    out << r.kind << ',' << r.label << ',';
    if (r.kind == "point") {
      out << io::format_double(r.phi) << ',' << io::format_double(r.gamma) << ',' << io::format_double(r.se_phi)
          << ',' << io::format_double(r.se_gamma) << ",,\n";
    } else {
      out << ",,,," << io::format_double(r.intercept) << ',' << io::format_double(r.slope) << '\n';
    }
  }
}

void write_summary_stats_csv(std::ostream& out, const SummaryStats& s) {
  out << "variant_id,phi,se_phi,gamma,se_gamma\n";
  for (std::size_t j = 0; j < s.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    out << s.ids[j] << ',' << io::format_double(s.phi(k)) << ',' << io::format_double(s.se_phi(k)) << ','
        << io::format_double(s.gamma(k)) << ',' << io::format_double(s.se_gamma(k)) << '\n';
  }
}

}  // namespace pedmr
