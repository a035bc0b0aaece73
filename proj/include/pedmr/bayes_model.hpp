#pragma once

#include "pedmr/data.hpp"
#include "pedmr/pedigree.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pedmr {

struct HorseshoeSpec {
  // Global scale tau0; resolved from J and N by resolve_defaults() when unset.
  std::optional<double> global_scale;
  double slab_scale = 2.5;
  double slab_df = 4.0;
};

// Prior hyperparameters and structural switches of the Bayesian MR model.
struct ModelSpec {
  std::size_t n_instruments = 0;
  std::size_t n_individuals = 0;
  std::size_t n_families = 0;
  std::size_t n_missing = 0;

  double theta_scale = 2.5;          // Cauchy scale of the causal effect
  double alpha_scale_prior = 1.0;    // half-Cauchy scale of the Laplace rate on alpha
  HorseshoeSpec horseshoe;
  double family_effect_scale = 5.0;  // normal sd of gamma_x and gamma_y
  double sigma_x_prior_scale = 1.0;  // half-Cauchy
  double delta_x_prior_scale = 2.0;  // normal sd
  double omega_y_prior_scale = 5.0;  // normal sd

  double liability_scale = 1.0;
  bool estimate_liability_scale = false;
  double liability_scale_prior = 1.0;  // half-normal sd, used when estimated

  bool use_kinship = true;
  KinshipScale kinship_scale = KinshipScale::coefficient;

  // Throws Error("bayes_model.invalid_spec").
  void validate() const;

  // Fills dimensions from the dataset and the horseshoe global scale
  // p0 / ((J - p0) sqrt(N)) with p0 = max(1, J / 10).
  void resolve_defaults(const Dataset& ds);
};

void to_json(nlohmann::json& j, const ModelSpec& s);
void from_json(const nlohmann::json& j, ModelSpec& s);

// Offsets of each block in the flat unconstrained parameter vector. Scale
// parameters are stored on the log scale; beta is non-centred as
// beta_j = z_j * effective_scale_j. The u block holds the confounder
// standardized given the exposure residual r = x - Z alpha - gamma_x:
// U = delta r / v + (sigma / sqrt(v)) u with v = delta^2 + sigma^2.
struct ParameterLayout {
  std::size_t n_instruments = 0;
  std::size_t n_individuals = 0;
  std::size_t n_families = 0;
  std::size_t n_missing = 0;
  bool has_log_liability_scale = false;

  std::size_t theta = 0;
  std::size_t alpha = 0;
  std::size_t beta_raw = 0;
  std::size_t log_lambda = 0;
  std::size_t log_tau = 0;
  std::size_t log_c2 = 0;
  std::size_t log_b_alpha = 0;
  std::size_t delta_x = 0;
  std::size_t log_sigma_x = 0;
  std::size_t omega_y = 0;
  std::size_t gamma_x = 0;
  std::size_t gamma_y = 0;
  std::size_t u = 0;
  std::size_t eta_raw = 0;
  std::size_t x_missing = 0;
  std::size_t log_liability_scale = 0;
  std::size_t dimension = 0;

  static ParameterLayout make(const ModelSpec& spec);
  std::vector<std::string> names() const;
};

struct LogDensityResult {
  double value = 0.0;
  Eigen::VectorXd gradient;
  // Name of the first model term that evaluated to a non-finite number.
  std::string nonfinite_term;

  bool finite() const { return nonfinite_term.empty(); }
};

// Effective prior sd of a pleiotropic effect under the regularized horseshoe:
// sqrt(c^2 tau^2 lambda^2 / (c^2 + tau^2 lambda^2)).
double horseshoe_effective_scale(double lambda, double tau, double c2);

class MrModel {
 public:
  // `lower` is the Cholesky factor of the individual-level liability
  // covariance aligned with ds.ids (identity when kinship is disabled).
  MrModel(ModelSpec spec, const Dataset& ds, const Eigen::MatrixXd& lower);

  // Subsets the kinship matrix to ds.ids and factorizes it, adding jitter only
  // if the plain factorization fails.
  static MrModel from_data(ModelSpec spec, const Dataset& ds, const KinshipMatrix& k);

  const ModelSpec& spec() const { return spec_; }
  const ParameterLayout& layout() const { return layout_; }
  std::size_t dimension() const { return layout_.dimension; }
  std::vector<std::string> coordinate_names() const { return layout_.names(); }

  // Log posterior density (nats, fully normalized priors and likelihood
  // including log-Jacobians) and its gradient. Throws on dimension mismatch;
  // non-finite values are reported through `nonfinite_term`.
  LogDensityResult log_posterior(const Eigen::VectorXd& params) const;

  // Same as log_posterior but throws Error("bayes_model.nonfinite").
  LogDensityResult log_posterior_checked(const Eigen::VectorXd& params) const;

  // Observed exposures with the missing entries filled from the parameter block.
  Eigen::VectorXd impute_missing(const Eigen::VectorXd& params) const;

  // Pleiotropic effects on the natural scale.
  Eigen::VectorXd beta(const Eigen::VectorXd& params) const;

  // Location parameters uniform(-0.5, 0.5), log-scale parameters at 0.
  Eigen::VectorXd initial_point(std::uint64_t seed) const;

  // Interpretable quantities recorded per draw (no per-individual latents).
  std::vector<std::string> summary_names() const;
  Eigen::VectorXd summary_values(const Eigen::VectorXd& params) const;

  double liability_scale(const Eigen::VectorXd& params) const;

 private:
  ModelSpec spec_;
  ParameterLayout layout_;
  Eigen::MatrixXd z_;
  Eigen::VectorXd x_obs_;
  std::vector<Eigen::Index> missing_rows_;
  Eigen::VectorXd y_;
  std::vector<int> family_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> lower_;
  double tau0_ = 1.0;
};

// Observed entries of ds.x passed through, missing entries filled in order.
Eigen::VectorXd impute_missing(const Eigen::VectorXd& x_missing_values, const Dataset& ds);

// Conditional causal odds ratio exp(theta (x1 - x0)).
double cor_from_theta(double theta, double x0, double x1);

}  // namespace pedmr
