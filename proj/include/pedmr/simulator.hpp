#pragma once

#include "pedmr/data.hpp"
#include "pedmr/pedigree.hpp"

#include <Eigen/Dense>

#include "json.hpp"

#include <cstdint>
#include <vector>

namespace pedmr {

struct MissingnessRule {
  bool mask_cases = false;
  double random_fraction = 0.0;  // of the entries still observed after masking cases
};

struct ScenarioConfig {
  int families = 20;
  int founder_couples = 2;
  int offspring_per_couple = 3;
  int generations = 2;

  int n_instruments = 15;
  double freq_low = 0.1;
  double freq_high = 0.5;
  std::vector<double> freqs;  // drawn uniformly from (freq_low, freq_high) when empty

  double alpha_value = 0.4;
  std::vector<double> alpha;  // alpha_value for every instrument when empty

  // The first round(fraction * J) instruments get pleiotropy_value.
  double pleiotropy_fraction = 0.0;
  double pleiotropy_value = 0.5;
  std::vector<double> beta;

  double theta = -0.7;  // per population sd of the raw exposure
  double delta_x = 1.0;
  double sigma_x = 1.0;
  double omega_y = -1.0;
  double family_sd_x = 0.5;
  double family_sd_y = 0.5;
  double confounder_y = 1.0;  // coefficient of U in the outcome liability
  double liability_scale = 1.0;

  MissingnessRule missingness;
  std::uint64_t seed = 1;

  // Throws Error("simulator.invalid_config").
  void validate() const;
};

void to_json(nlohmann::json& j, const ScenarioConfig& c);
void from_json(const nlohmann::json& j, ScenarioConfig& c);

// Copy of cfg with freqs, alpha and beta filled in.
ScenarioConfig resolve_scenario(const ScenarioConfig& cfg);

// Generating values after standardization.
struct ScenarioTruth {
  double theta_per_sd = 0.0;     // as configured
  double theta_raw = 0.0;        // coefficient on the raw exposure
  double theta_model = 0.0;      // coefficient on the standardized exposure of the dataset
  double exposure_sd = 0.0;      // population sd of the raw exposure
  std::vector<double> freqs;
  std::vector<double> alpha;
  std::vector<double> beta;
  double prevalence = 0.0;
};

void to_json(nlohmann::json& j, const ScenarioTruth& t);

Pedigree simulate_pedigree(const ScenarioConfig& cfg);

// Allele doses (members x variants, pedigree member order) by Mendelian
// transmission from founders drawn at the given allele frequencies.
Eigen::MatrixXd gene_drop(const Pedigree& ped, const std::vector<double>& freqs, std::uint64_t seed);

struct SimulatedPhenotypes {
  Dataset dataset;
  ScenarioTruth truth;
};

// cfg must be resolved. Throws Error("simulator.degenerate_outcome") when all
// outcomes are equal.
SimulatedPhenotypes simulate_phenotypes(const Pedigree& ped, const Eigen::MatrixXd& doses,
                                        const ScenarioConfig& cfg, std::uint64_t seed);

struct Scenario {
  ScenarioConfig config;  // resolved
  Pedigree pedigree;
  Dataset dataset;
  ScenarioTruth truth;
};

Scenario simulate_scenario(const ScenarioConfig& cfg);

}  // namespace pedmr
