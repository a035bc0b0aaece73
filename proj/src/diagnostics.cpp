#include "pedmr/error.hpp"
#include "pedmr/sampler.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pedmr {

namespace {

// Splits each chain into its first and second halves (dropping the middle
// draw of odd-length chains).
Eigen::MatrixXd split_chains(const Eigen::MatrixXd& draws) {
  const auto n = draws.rows() / 2;
  const auto offset = draws.rows() - n;
  Eigen::MatrixXd out(n, 2 * draws.cols());
  for (Eigen::Index c = 0; c < draws.cols(); ++c) {
    out.col(2 * c) = draws.col(c).head(n);
    out.col(2 * c + 1) = draws.col(c).segment(offset, n);
  }
  return out;
}

// Normal scores of pooled fractional ranks, ties sharing the average rank.
Eigen::MatrixXd rank_normalize(const Eigen::MatrixXd& draws) {
  const auto total = static_cast<std::size_t>(draws.size());
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  const double* v = draws.data();
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  Eigen::MatrixXd out(draws.rows(), draws.cols());
  double* o = out.data();
  const boost::math::normal_distribution<double> std_normal;
  const double s = static_cast<double>(total);
  std::size_t i = 0;
  while (i < total) {
    std::size_t j = i;
    while (j + 1 < total && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    const double z = boost::math::quantile(std_normal, (rank - 0.375) / (s + 0.25));
    for (std::size_t k = i; k <= j; ++k) o[idx[k]] = z;
    i = j + 1;
  }
  return out;
}

double rhat_basic(const Eigen::MatrixXd& chains) {
  const auto n = static_cast<double>(chains.rows());
  const auto m = chains.cols();
  Eigen::VectorXd means(m), vars(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    means(c) = chains.col(c).mean();
    vars(c) = (chains.col(c).array() - means(c)).square().sum() / (n - 1.0);
  }
  const double w = vars.mean();
  const double b_over_n = m > 1 ? (means.array() - means.mean()).square().sum() / static_cast<double>(m - 1) : 0.0;
  const double var_plus = (n - 1.0) / n * w + b_over_n;
  if (!(w > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(var_plus / w);
}

double median_of(const Eigen::MatrixXd& m) {
  std::vector<double> v(m.data(), m.data() + m.size());
  return quantile(std::move(v), 0.5);
}

}  // namespace

double ess_raw(const Eigen::MatrixXd& chains) {
  const auto n = chains.rows();
  const auto m = chains.cols();
  if (n < 4) return std::numeric_limits<double>::quiet_NaN();
  const double nd = static_cast<double>(n);

  Eigen::MatrixXd centred(n, m);
  Eigen::VectorXd means(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    means(c) = chains.col(c).mean();
    centred.col(c) = chains.col(c).array() - means(c);
  }
  // Biased autocovariance at lag t averaged over chains; computed on demand
  // because the truncation usually stops far before n.
  auto mean_acov = [&](Eigen::Index t) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < m; ++c) {
      acc += centred.col(c).head(n - t).dot(centred.col(c).tail(n - t)) / nd;
    }
    return acc / static_cast<double>(m);
  };
  const double acov0 = mean_acov(0);
  const double mean_var = acov0 * nd / (nd - 1.0);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) var_plus += (means.array() - means.mean()).square().sum() / static_cast<double>(m - 1);
  if (!(var_plus > 0.0)) return std::numeric_limits<double>::quiet_NaN();

  std::vector<double> rho(static_cast<std::size_t>(n), 0.0);
  auto rho_at = [&](Eigen::Index t) { return 1.0 - (mean_var - mean_acov(t)) / var_plus; };
  rho[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = rho_at(1);
  rho[1] = rho_odd;
  Eigen::Index t = 1;
  while (t < n - 4 && (rho_even + rho_odd) > 0.0) {
    rho_even = rho_at(t + 1);
    rho_odd = rho_at(t + 2);
    if (rho_even + rho_odd >= 0.0) {
      rho[static_cast<std::size_t>(t + 1)] = rho_even;
      rho[static_cast<std::size_t>(t + 2)] = rho_odd;
    }
    t += 2;
  }
  const Eigen::Index max_t = t;
  if (rho_even > 0.0) rho[static_cast<std::size_t>(max_t + 1)] = rho_even;

  // Initial monotone sequence.
  for (Eigen::Index k = 1; k <= max_t - 2; k += 2) {
    const auto a = static_cast<std::size_t>(k);
    if (rho[a + 1] + rho[a + 2] > rho[a - 1] + rho[a]) {
      rho[a + 1] = 0.5 * (rho[a - 1] + rho[a]);
      rho[a + 2] = rho[a + 1];
    }
  }
  const double total = static_cast<double>(m) * nd;
  double tau = -1.0;
  for (Eigen::Index k = 0; k <= max_t; ++k) tau += 2.0 * rho[static_cast<std::size_t>(k)];
  tau += rho[static_cast<std::size_t>(max_t + 1)];
  // Antithetic chains can push tau below 1; cap the reported efficiency.
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

double split_rhat(const Eigen::MatrixXd& draws) {
  const Eigen::MatrixXd split = split_chains(draws);
  const double bulk = rhat_basic(rank_normalize(split));
  const double med = median_of(draws);
  const Eigen::MatrixXd folded = (split.array() - med).abs().matrix();
  const double tail = rhat_basic(rank_normalize(folded));
  // Ranks cap the statistic near 1.8 when chains do not overlap at all, so
  // the classic split value is kept as a floor.
  const double classic = rhat_basic(split);
  double out = std::numeric_limits<double>::quiet_NaN();
  for (double v : {bulk, tail, classic})
    if (!std::isnan(v)) out = std::isnan(out) ? v : std::max(out, v);
  return out;
}

double ess_bulk(const Eigen::MatrixXd& draws) { return ess_raw(rank_normalize(split_chains(draws))); }

std::vector<DiagnosticRow> diagnostics(const PosteriorDraws& d) {
  if (d.n_chains() < 2 || d.n_draws() < 100) {
    throw Error("sampler.insufficient_draws", "diagnostics need at least 2 chains of 100 retained draws");
  }
  std::vector<DiagnosticRow> rows;
  for (const auto& name : d.names) {
    const Eigen::MatrixXd m = d.coordinate(name);
    DiagnosticRow r;
    r.name = name;
    r.mean = m.mean();
    r.sd = std::sqrt((m.array() - r.mean).square().sum() / static_cast<double>(m.size() - 1));
    if (m.maxCoeff() == m.minCoeff()) {
      r.rhat = std::numeric_limits<double>::quiet_NaN();
      r.ess_bulk = std::numeric_limits<double>::quiet_NaN();
    } else {
      r.rhat = split_rhat(m);
      r.ess_bulk = ess_bulk(m);
    }
    rows.push_back(r);
  }
  return rows;
}

double quantile(std::vector<double> v, double prob) {
  if (v.empty()) throw Error("sampler.insufficient_draws", "quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

PercentileRow summarize(const PosteriorDraws& d, const std::string& name, Transform transform) {
  const Eigen::VectorXd pooled = d.pooled(name);
  std::vector<double> v(pooled.data(), pooled.data() + pooled.size());
  std::sort(v.begin(), v.end());
  PercentileRow row;
  row.name = name;
  static constexpr std::array<double, 7> probs{0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0};
  // Percentiles are taken on the sampled scale and then mapped, so a
  // monotone transform commutes with them exactly.
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const double q = quantile(v, probs[k]);
    row.values[k] = transform == Transform::exp ? std::exp(q) : q;
  }
  return row;
}

}  // namespace pedmr
