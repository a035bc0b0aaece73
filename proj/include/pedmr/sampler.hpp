#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace pedmr {

// Log density and gradient at a point. Returning a non-finite value marks
// the point as outside the support.
using LogDensityFn = std::function<double(const Eigen::VectorXd& q, Eigen::VectorXd& grad)>;

// Quantities recorded per retained draw (identity when unset).
using DrawProjection = std::function<Eigen::VectorXd(const Eigen::VectorXd& q)>;

// Initial position for a chain; called again (up to 100 times) while the
// density is not finite there.
using InitFn = std::function<Eigen::VectorXd(std::size_t chain, std::mt19937_64& rng)>;

struct SamplerConfig {
  int n_iterations = 9000;
  int n_warmup = 4500;
  int n_chains = 4;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 1;
  double max_energy_error = 1000.0;
  bool parallel_chains = true;

  // Throws Error("sampler.invalid_config").
  void validate() const;
  int n_retained() const { return n_iterations - n_warmup; }
};

struct ChainStats {
  double mean_accept_stat = 0.0;
  int divergences = 0;          // post-warmup
  int warmup_divergences = 0;
  double step_size = 0.0;
  double mean_tree_depth = 0.0;
  long long n_leapfrog = 0;
  Eigen::VectorXd inv_metric;
};

struct PosteriorDraws {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> chains;  // retained iterations x coordinates
  std::vector<ChainStats> stats;

  std::size_t n_chains() const { return chains.size(); }
  Eigen::Index n_draws() const { return chains.empty() ? 0 : chains.front().rows(); }
  Eigen::Index index_of(const std::string& name) const;  // throws sampler.unknown_coordinate
  // Draws of one coordinate, one column per chain.
  Eigen::MatrixXd coordinate(const std::string& name) const;
  Eigen::VectorXd pooled(const std::string& name) const;
  int total_divergences() const;
  double divergence_rate() const;
};

// Diagonal Euclidean metric Hamiltonian state.
struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double log_density = 0.0;
};

// One leapfrog step of size eps with inverse metric inv_metric.
void leapfrog(const LogDensityFn& f, const Eigen::VectorXd& inv_metric, double eps, PhasePoint& z);

double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_metric);

// No-U-Turn sampling with multinomial trajectory selection, dual-averaging
// step size and windowed diagonal metric adaptation. Chains are seeded from
// (seed, chain index) and produce identical output whether run in parallel
// or sequentially.
PosteriorDraws sample(const LogDensityFn& f, std::size_t dimension, const InitFn& init, const SamplerConfig& cfg,
                      const DrawProjection& project = {}, std::vector<std::string> names = {});

// Stan-style warmup windows: returns the iteration indices (0-based) at which
// metric windows close.
std::vector<int> metric_window_ends(int n_warmup, int init_buffer = 75, int term_buffer = 50,
                                    int base_window = 25);

struct DiagnosticRow {
  std::string name;
  double rhat = 0.0;      // split R-hat: max of rank-normalized bulk, folded and classic
  double ess_bulk = 0.0;
  double mean = 0.0;
  double sd = 0.0;
};

// Needs at least two chains and 100 draws per chain; throws
// Error("sampler.insufficient_draws").
std::vector<DiagnosticRow> diagnostics(const PosteriorDraws& d);

// Diagnostics for draws laid out one column per chain.
double split_rhat(const Eigen::MatrixXd& draws);
double ess_bulk(const Eigen::MatrixXd& draws);
// Effective sample size of the given chains without rank normalization or splitting.
double ess_raw(const Eigen::MatrixXd& draws);

enum class Transform { identity, exp };

struct PercentileRow {
  std::string name;
  // min, 5%, 25%, 50%, 75%, 95%, max
  std::array<double, 7> values{};
};

PercentileRow summarize(const PosteriorDraws& d, const std::string& name, Transform transform);

// Linear-interpolation quantile (type 7) of unsorted data.
double quantile(std::vector<double> v, double prob);

void write_draws_csv(std::ostream& out, const PosteriorDraws& d);

}  // namespace pedmr
