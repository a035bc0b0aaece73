#include "pedmr/sampler.hpp"

#include "pedmr/error.hpp"
#include "pedmr/rng.hpp"
#include "pedmr/table_io.hpp"

#include <cmath>
#include <future>
#include <limits>
#include <ostream>

namespace pedmr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Step size from dual averaging of the acceptance statistic.
class DualAveraging {
 public:
  DualAveraging(double target, double gamma = 0.05, double t0 = 10.0, double kappa = 0.75)
      : target_(target), gamma_(gamma), t0_(t0), kappa_(kappa) {}

  void restart(double step_size) {
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
    mu_ = std::log(10.0 * step_size);
  }

  double learn(double accept_stat) {
    ++counter_;
    accept_stat = std::min(1.0, accept_stat);
    const double eta = 1.0 / (counter_ + t0_);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (target_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(counter_) / gamma_;
    const double x_eta = std::pow(counter_, -kappa_);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  double final_step_size() const { return std::exp(x_bar_); }

 private:
  double target_, gamma_, t0_, kappa_;
  double counter_ = 0.0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
  double mu_ = 0.0;
};

class WelfordVariance {
 public:
  explicit WelfordVariance(Eigen::Index n) : mean_(Eigen::VectorXd::Zero(n)), m2_(Eigen::VectorXd::Zero(n)) {}
  void restart() {
    count_ = 0;
    mean_.setZero();
    m2_.setZero();
  }
  void add(const Eigen::VectorXd& q) {
    ++count_;
    const Eigen::VectorXd delta = q - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta.cwiseProduct(q - mean_);
  }
  // Sample variance shrunk toward 1e-3 as in the standard windowed scheme.
  Eigen::VectorXd regularized() const {
    const double n = static_cast<double>(count_);
    Eigen::VectorXd var = m2_ / std::max(n - 1.0, 1.0);
    return (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
  }

 private:
  long count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

// Schedules metric windows inside warmup.
class WindowSchedule {
 public:
  explicit WindowSchedule(int n_warmup) : warmup_(n_warmup) {
    if (n_warmup < 20) {
      enabled_ = false;
      return;
    }
    init_ = 75;
    term_ = 50;
    base_ = 25;
    if (init_ + term_ + base_ > n_warmup) {
      init_ = static_cast<int>(0.15 * n_warmup);
      term_ = static_cast<int>(0.1 * n_warmup);
      base_ = n_warmup - (init_ + term_);
    }
    window_size_ = base_;
    next_window_ = init_ + window_size_ - 1;
  }

  bool in_window(int it) const { return enabled_ && it >= init_ && it < warmup_ - term_ && it != warmup_; }
  bool window_end(int it) const { return enabled_ && it == next_window_ && it != warmup_; }

  void advance(int it) {
    if (next_window_ == warmup_ - term_ - 1) return;
    window_size_ *= 2;
    next_window_ = it + window_size_;
    if (next_window_ != warmup_ - term_ - 1) {
      const int boundary = next_window_ + 2 * window_size_;
      if (boundary >= warmup_ - term_ - 1) next_window_ = warmup_ - term_ - 1;
    }
  }

 private:
  int warmup_;
  bool enabled_ = true;
  int init_ = 0, term_ = 0, base_ = 0;
  int window_size_ = 0;
  int next_window_ = 0;
};

struct TransitionInfo {
  double accept_stat = 0.0;
  bool divergent = false;
  int depth = 0;
  int n_leapfrog = 0;
};

class NutsChain {
 public:
  NutsChain(const LogDensityFn& f, Eigen::Index dim, const SamplerConfig& cfg, std::mt19937_64& rng)
      : f_(f), cfg_(cfg), rng_(rng), inv_metric_(Eigen::VectorXd::Ones(dim)) {}

  void set_position(const Eigen::VectorXd& q) {
    z_.q = q;
    z_.grad.resize(q.size());
    z_.log_density = f_(z_.q, z_.grad);
    z_.p = Eigen::VectorXd::Zero(q.size());
  }

  bool position_finite() const { return std::isfinite(z_.log_density) && z_.grad.allFinite(); }

  const Eigen::VectorXd& position() const { return z_.q; }
  double step_size() const { return eps_; }
  void set_step_size(double e) { eps_ = e; }
  const Eigen::VectorXd& inv_metric() const { return inv_metric_; }
  void set_inv_metric(const Eigen::VectorXd& m) { inv_metric_ = m; }

  void sample_momentum(PhasePoint& z) {
    z.p.resize(z.q.size());
    for (Eigen::Index i = 0; i < z.p.size(); ++i) z.p(i) = normal_(rng_) / std::sqrt(inv_metric_(i));
  }

  void init_step_size() {
    const PhasePoint start = z_;
    auto delta_h = [&]() {
      PhasePoint z = start;
      sample_momentum(z);
      const double h0 = hamiltonian(z, inv_metric_);
      leapfrog(f_, inv_metric_, eps_, z);
      double h = hamiltonian(z, inv_metric_);
      if (std::isnan(h)) h = kInf;
      return h0 - h;
    };
    const double log_target = std::log(0.8);
    const int direction = delta_h() > log_target ? 1 : -1;
    for (int guard = 0; guard < 200; ++guard) {
      const double dh = delta_h();
      if (direction == 1 && !(dh > log_target)) break;
      if (direction == -1 && !(dh < log_target)) break;
      eps_ = direction == 1 ? 2.0 * eps_ : 0.5 * eps_;
      if (eps_ > 1e7) throw Error("sampler.step_size", "step size diverged during initialization");
      if (eps_ == 0.0) throw Error("sampler.step_size", "step size collapsed to zero during initialization");
    }
    z_ = start;
  }

  TransitionInfo transition() {
    sample_momentum(z_);
    const PhasePoint start = z_;
    const double h0 = hamiltonian(z_, inv_metric_);

    PhasePoint z_fwd = z_, z_bck = z_;
    PhasePoint z_sample = z_, z_propose = z_;

    Eigen::VectorXd p_sharp = inv_metric_.cwiseProduct(z_.p);
    Eigen::VectorXd p_sharp_fwd_bck = p_sharp, p_sharp_fwd_fwd = p_sharp;
    Eigen::VectorXd p_sharp_bck_fwd = p_sharp, p_sharp_bck_bck = p_sharp;
    Eigen::VectorXd p_fwd_bck = z_.p, p_fwd_fwd = z_.p, p_bck_fwd = z_.p, p_bck_bck = z_.p;
    Eigen::VectorXd rho = z_.p;

    double log_sum_weight = 0.0;
    int depth = 0;
    int n_leapfrog = 0;
    double sum_metro = 0.0;
    divergent_ = false;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto dim = z_.q.size();

    while (depth < cfg_.max_tree_depth) {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(dim), rho_bck = Eigen::VectorXd::Zero(dim);
      bool valid = false;
      double lsw_subtree = -kInf;
      if (unif(rng_) > 0.5) {
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        p_sharp_bck_fwd = p_sharp_fwd_bck;
        z_ = z_fwd;
        valid = build_tree(depth, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd, h0,
                           1.0, n_leapfrog, lsw_subtree, sum_metro);
        z_fwd = z_;
      } else {
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        p_sharp_fwd_bck = p_sharp_bck_fwd;
        z_ = z_bck;
        valid = build_tree(depth, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd, p_bck_bck, h0,
                           -1.0, n_leapfrog, lsw_subtree, sum_metro);
        z_bck = z_;
      }
      if (!valid) break;
      ++depth;
      if (lsw_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (unif(rng_) < std::exp(lsw_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
      rho = rho_bck + rho_fwd;
      bool persist = criterion(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      Eigen::VectorXd rho_ext = rho_bck + p_fwd_bck;
      persist = persist && criterion(p_sharp_bck_bck, p_sharp_fwd_bck, rho_ext);
      rho_ext = rho_fwd + p_bck_fwd;
      persist = persist && criterion(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_ext);
      if (!persist) break;
    }

    z_ = z_sample;
    TransitionInfo info;
    info.accept_stat = n_leapfrog > 0 ? sum_metro / n_leapfrog : 0.0;
    info.divergent = divergent_;
    info.depth = depth;
    info.n_leapfrog = n_leapfrog;
    (void)start;
    return info;
  }

 private:
  static bool criterion(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
                        const Eigen::VectorXd& rho) {
    return p_sharp_plus.dot(rho) > 0 && p_sharp_minus.dot(rho) > 0;
  }

  bool build_tree(int depth, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg, Eigen::VectorXd& p_sharp_end,
                  Eigen::VectorXd& rho, Eigen::VectorXd& p_beg, Eigen::VectorXd& p_end, double h0, double sign,
                  int& n_leapfrog, double& log_sum_weight, double& sum_metro) {
    if (depth == 0) {
      leapfrog(f_, inv_metric_, sign * eps_, z_);
      ++n_leapfrog;
      double h = hamiltonian(z_, inv_metric_);
      if (std::isnan(h)) h = kInf;
      if (h - h0 > cfg_.max_energy_error) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro += h0 - h > 0 ? 1.0 : std::exp(h0 - h);
      z_propose = z_;
      p_sharp_beg = inv_metric_.cwiseProduct(z_.p);
      p_sharp_end = p_sharp_beg;
      rho += z_.p;
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }

    const auto dim = z_.q.size();
    Eigen::VectorXd p_sharp_init_end(dim), p_init_end(dim);
    Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(dim);
    double lsw_init = -kInf;
    const bool valid_init = build_tree(depth - 1, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
                                       p_init_end, h0, sign, n_leapfrog, lsw_init, sum_metro);
    if (!valid_init) return false;

    PhasePoint z_propose_final = z_;
    Eigen::VectorXd p_sharp_final_beg(dim), p_final_beg(dim);
    Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(dim);
    double lsw_final = -kInf;
    const bool valid_final = build_tree(depth - 1, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                                        p_final_beg, p_end, h0, sign, n_leapfrog, lsw_final, sum_metro);
    if (!valid_final) return false;

    const double lsw_subtree = log_sum_exp(lsw_init, lsw_final);
    log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    if (lsw_final > lsw_subtree) {
      z_propose = z_propose_final;
    } else if (unif(rng_) < std::exp(lsw_final - lsw_subtree)) {
      z_propose = z_propose_final;
    }

    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = criterion(p_sharp_beg, p_sharp_end, rho_subtree);
    Eigen::VectorXd rho_ext = rho_init + p_final_beg;
    persist = persist && criterion(p_sharp_beg, p_sharp_final_beg, rho_ext);
    rho_ext = rho_final + p_init_end;
    persist = persist && criterion(p_sharp_init_end, p_sharp_end, rho_ext);
    return persist;
  }

  const LogDensityFn& f_;
  const SamplerConfig& cfg_;
  std::mt19937_64& rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  PhasePoint z_;
  Eigen::VectorXd inv_metric_;
  double eps_ = 1.0;
  bool divergent_ = false;
};

struct ChainResult {
  Eigen::MatrixXd draws;
  ChainStats stats;
};

ChainResult run_chain(const LogDensityFn& f, std::size_t dimension, const InitFn& init, const SamplerConfig& cfg,
                      const DrawProjection& project, std::size_t chain) {
  std::mt19937_64 rng(derive_seed(cfg.seed, chain));
  const auto dim = static_cast<Eigen::Index>(dimension);
  NutsChain nuts(f, dim, cfg, rng);

  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    const Eigen::VectorXd q0 = init(chain, rng);
    if (q0.size() != dim) throw Error("sampler.dimension_mismatch", "initial point has the wrong dimension");
    nuts.set_position(q0);
    ok = nuts.position_finite();
  }
  if (!ok) {
    throw Error("sampler.initialization", "log density not finite at 100 initial points for chain " +
                                              std::to_string(chain));
  }

  nuts.set_step_size(1.0);
  nuts.init_step_size();
  DualAveraging dual(cfg.target_accept);
  dual.restart(nuts.step_size());
  WindowSchedule windows(cfg.n_warmup);
  WelfordVariance welford(dim);

  ChainResult result;
  const int n_keep = cfg.n_retained();
  Eigen::Index width = dim;
  if (project) width = project(nuts.position()).size();
  result.draws.resize(n_keep, width);
  double accept_sum = 0.0;
  double depth_sum = 0.0;

  for (int it = 0; it < cfg.n_iterations; ++it) {
    const auto info = nuts.transition();
    result.stats.n_leapfrog += info.n_leapfrog;
    if (it < cfg.n_warmup) {
      if (info.divergent) ++result.stats.warmup_divergences;
      nuts.set_step_size(dual.learn(info.accept_stat));
      if (windows.in_window(it)) welford.add(nuts.position());
      if (windows.window_end(it)) {
        windows.advance(it);
        nuts.set_inv_metric(welford.regularized());
        welford.restart();
        nuts.init_step_size();
        dual.restart(nuts.step_size());
      }
      if (it == cfg.n_warmup - 1) nuts.set_step_size(dual.final_step_size());
      continue;
    }
    if (info.divergent) ++result.stats.divergences;
    accept_sum += info.accept_stat;
    depth_sum += info.depth;
    const auto row = it - cfg.n_warmup;
    if (project) result.draws.row(row) = project(nuts.position()).transpose();
    else result.draws.row(row) = nuts.position().transpose();
  }
  if (n_keep > 0) {
    result.stats.mean_accept_stat = accept_sum / n_keep;
    result.stats.mean_tree_depth = depth_sum / n_keep;
  }
  result.stats.step_size = nuts.step_size();
  result.stats.inv_metric = nuts.inv_metric();
  return result;
}

}  // namespace

void SamplerConfig::validate() const {
  if (n_chains < 1) throw Error("sampler.invalid_config", "need at least one chain");
  if (n_warmup < 0 || n_warmup >= n_iterations) {
    throw Error("sampler.invalid_config", "warmup must be non-negative and smaller than the iteration count");
  }
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw Error("sampler.invalid_config", "target acceptance must lie strictly between 0 and 1");
  }
  if (max_tree_depth < 1) throw Error("sampler.invalid_config", "max tree depth must be positive");
}

Eigen::Index PosteriorDraws::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<Eigen::Index>(i);
  throw Error("sampler.unknown_coordinate", "unknown coordinate '" + name + "'");
}

Eigen::MatrixXd PosteriorDraws::coordinate(const std::string& name) const {
  const auto k = index_of(name);
  Eigen::MatrixXd out(n_draws(), static_cast<Eigen::Index>(chains.size()));
  for (std::size_t c = 0; c < chains.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = chains[c].col(k);
  return out;
}

Eigen::VectorXd PosteriorDraws::pooled(const std::string& name) const {
  const Eigen::MatrixXd m = coordinate(name);
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

int PosteriorDraws::total_divergences() const {
  int t = 0;
  for (const auto& s : stats) t += s.divergences;
  return t;
}

double PosteriorDraws::divergence_rate() const {
  const double total = static_cast<double>(n_draws()) * static_cast<double>(chains.size());
  return total > 0 ? total_divergences() / total : 0.0;
}

double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_metric) {
  return -z.log_density + 0.5 * z.p.cwiseProduct(inv_metric).dot(z.p);
}

void leapfrog(const LogDensityFn& f, const Eigen::VectorXd& inv_metric, double eps, PhasePoint& z) {
  z.p += 0.5 * eps * z.grad;
  z.q += eps * inv_metric.cwiseProduct(z.p);
  z.log_density = f(z.q, z.grad);
  if (!std::isfinite(z.log_density) || !z.grad.allFinite()) {
    z.log_density = -kInf;
    z.grad.setZero();
    return;
  }
  z.p += 0.5 * eps * z.grad;
}

std::vector<int> metric_window_ends(int n_warmup, int init_buffer, int term_buffer, int base_window) {
  std::vector<int> ends;
  if (n_warmup < 20) return ends;
  if (init_buffer + term_buffer + base_window > n_warmup) {
    init_buffer = static_cast<int>(0.15 * n_warmup);
    term_buffer = static_cast<int>(0.1 * n_warmup);
    base_window = n_warmup - (init_buffer + term_buffer);
  }
  int window = base_window;
  int next = init_buffer + window - 1;
  const int last = n_warmup - term_buffer - 1;
  while (true) {
    ends.push_back(next);
    if (next == last) break;
    window *= 2;
    const int it = next;
    next = it + window;
    if (next != last && next + 2 * window >= last) next = last;
    if (next > last) next = last;
  }
  return ends;
}

PosteriorDraws sample(const LogDensityFn& f, std::size_t dimension, const InitFn& init, const SamplerConfig& cfg,
                      const DrawProjection& project, std::vector<std::string> names) {
  cfg.validate();
  const auto n_chains = static_cast<std::size_t>(cfg.n_chains);
  std::vector<ChainResult> results(n_chains);
  if (cfg.parallel_chains && n_chains > 1) {
    std::vector<std::future<ChainResult>> futures;
    for (std::size_t c = 0; c < n_chains; ++c) {
      futures.push_back(std::async(std::launch::async, run_chain, std::cref(f), dimension, std::cref(init),
                                   std::cref(cfg), std::cref(project), c));
    }
    for (std::size_t c = 0; c < n_chains; ++c) results[c] = futures[c].get();
  } else {
    for (std::size_t c = 0; c < n_chains; ++c) results[c] = run_chain(f, dimension, init, cfg, project, c);
  }

  PosteriorDraws out;
  const auto width = results.front().draws.cols();
  if (names.empty()) {
    for (Eigen::Index k = 0; k < width; ++k) out.names.push_back("q[" + std::to_string(k + 1) + "]");
  } else {
    if (static_cast<Eigen::Index>(names.size()) != width) {
      throw Error("sampler.dimension_mismatch", "coordinate names do not match the recorded width");
    }
    out.names = std::move(names);
  }
  for (auto& r : results) {
    out.chains.push_back(std::move(r.draws));
    out.stats.push_back(std::move(r.stats));
  }
  return out;
}

void write_draws_csv(std::ostream& out, const PosteriorDraws& d) {
  out << "chain,iteration";
  for (const auto& n : d.names) out << ',' << n;
  out << '\n';
  for (std::size_t c = 0; c < d.chains.size(); ++c) {
    const auto& m = d.chains[c];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      out << (c + 1) << ',' << (i + 1);
      for (Eigen::Index k = 0; k < m.cols(); ++k) out << ',' << io::format_double(m(i, k));
      out << '\n';
    }
  }
}

}  // namespace pedmr
