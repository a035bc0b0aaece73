#include "pedmr/simulator.hpp"

#include "pedmr/error.hpp"
#include "pedmr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

namespace pedmr {

namespace {

enum Stream : std::uint64_t { kParameters = 0, kPedigree = 1, kGenotypes = 2, kPhenotypes = 3 };

std::string label(const char* prefix, int n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, n);
  return buf;
}

double uniform01(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error("simulator.invalid_config", m); };
  if (families < 1) fail("families must be >= 1");
  if (founder_couples < 1) fail("founder_couples must be >= 1");
  if (offspring_per_couple < 1) fail("offspring_per_couple must be >= 1");
  if (generations < 1) fail("generations must be >= 1");
  if (n_instruments < 0) fail("n_instruments must be >= 0");
  const auto j = static_cast<std::size_t>(n_instruments);
  if (!(freq_low > 0.0 && freq_high < 1.0 && freq_low <= freq_high)) fail("need 0 < freq_low <= freq_high < 1");
  if (!freqs.empty() && freqs.size() != j) fail("freqs must have n_instruments entries");
  for (double f : freqs)
    if (!(f > 0.0 && f < 1.0)) fail("allele frequencies must lie in (0, 1)");
  if (!alpha.empty() && alpha.size() != j) fail("alpha must have n_instruments entries");
  if (!beta.empty() && beta.size() != j) fail("beta must have n_instruments entries");
  if (!(pleiotropy_fraction >= 0.0 && pleiotropy_fraction <= 1.0)) fail("pleiotropy_fraction must lie in [0, 1]");
  if (!(sigma_x > 0.0)) fail("sigma_x must be > 0");
  if (!(family_sd_x >= 0.0 && family_sd_y >= 0.0)) fail("family sds must be >= 0");
  if (!(liability_scale >= 0.0)) fail("liability_scale must be >= 0");
  if (!(missingness.random_fraction >= 0.0 && missingness.random_fraction < 1.0)) {
    fail("random_fraction must lie in [0, 1)");
  }
  for (double v : {theta, delta_x, omega_y, alpha_value, pleiotropy_value})
    if (!std::isfinite(v)) fail("non-finite scenario value");
}

void to_json(nlohmann::json& j, const ScenarioConfig& c) {
  j = nlohmann::json{
      {"families", c.families},
      {"founder_couples", c.founder_couples},
      {"offspring_per_couple", c.offspring_per_couple},
      {"generations", c.generations},
      {"n_instruments", c.n_instruments},
      {"freq_low", c.freq_low},
      {"freq_high", c.freq_high},
      {"freqs", c.freqs},
      {"alpha_value", c.alpha_value},
      {"alpha", c.alpha},
      {"pleiotropy_fraction", c.pleiotropy_fraction},
      {"pleiotropy_value", c.pleiotropy_value},
      {"beta", c.beta},
      {"theta", c.theta},
      {"delta_x", c.delta_x},
      {"sigma_x", c.sigma_x},
      {"omega_y", c.omega_y},
      {"family_sd_x", c.family_sd_x},
      {"family_sd_y", c.family_sd_y},
      {"confounder_y", c.confounder_y},
      {"liability_scale", c.liability_scale},
      {"missingness", {{"mask_cases", c.missingness.mask_cases}, {"random_fraction", c.missingness.random_fraction}}},
      {"seed", c.seed},
  };
}

void from_json(const nlohmann::json& j, ScenarioConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("families", c.families);
  get("founder_couples", c.founder_couples);
  get("offspring_per_couple", c.offspring_per_couple);
  get("generations", c.generations);
  get("n_instruments", c.n_instruments);
  get("freq_low", c.freq_low);
  get("freq_high", c.freq_high);
  get("freqs", c.freqs);
  get("alpha_value", c.alpha_value);
  get("alpha", c.alpha);
  get("pleiotropy_fraction", c.pleiotropy_fraction);
  get("pleiotropy_value", c.pleiotropy_value);
  get("beta", c.beta);
  get("theta", c.theta);
  get("delta_x", c.delta_x);
  get("sigma_x", c.sigma_x);
  get("omega_y", c.omega_y);
  get("family_sd_x", c.family_sd_x);
  get("family_sd_y", c.family_sd_y);
  get("confounder_y", c.confounder_y);
  get("liability_scale", c.liability_scale);
  get("seed", c.seed);
  if (j.contains("missingness")) {
    const auto& m = j.at("missingness");
    if (m.contains("mask_cases")) m.at("mask_cases").get_to(c.missingness.mask_cases);
    if (m.contains("random_fraction")) m.at("random_fraction").get_to(c.missingness.random_fraction);
  }
}

void to_json(nlohmann::json& j, const ScenarioTruth& t) {
  j = nlohmann::json{
      {"theta_per_sd", t.theta_per_sd}, {"theta_raw", t.theta_raw}, {"theta_model", t.theta_model},
      {"exposure_sd", t.exposure_sd},   {"freqs", t.freqs},         {"alpha", t.alpha},
      {"beta", t.beta},                 {"prevalence", t.prevalence},
  };
}

ScenarioConfig resolve_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  ScenarioConfig out = cfg;
  const auto j = static_cast<std::size_t>(cfg.n_instruments);
  std::mt19937_64 rng(derive_seed(cfg.seed, kParameters));
  if (out.freqs.empty()) {
    std::uniform_real_distribution<double> u(cfg.freq_low, cfg.freq_high);
    for (std::size_t k = 0; k < j; ++k) out.freqs.push_back(u(rng));
  }
  if (out.alpha.empty()) out.alpha.assign(j, cfg.alpha_value);
  if (out.beta.empty()) {
    out.beta.assign(j, 0.0);
    const auto n_pleio = static_cast<std::size_t>(std::lround(cfg.pleiotropy_fraction * static_cast<double>(j)));
    for (std::size_t k = 0; k < n_pleio; ++k) out.beta[k] = cfg.pleiotropy_value;
  }
  return out;
}

Pedigree simulate_pedigree(const ScenarioConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(cfg.seed, kPedigree));
  const int fam_width = cfg.families >= 100 ? 3 : 2;
  std::vector<Member> members;
  for (int f = 1; f <= cfg.families; ++f) {
    const std::string fam = label("F", f, fam_width);
    int next_id = 1;
    auto add = [&](std::optional<std::string> father, std::optional<std::string> mother, Sex sex) {
      Member m;
      m.id = fam + "_" + label("", next_id++, 3);
      m.family = fam;
      m.father = std::move(father);
      m.mother = std::move(mother);
      m.sex = sex;
      members.push_back(m);
      return members.back().id;
    };
    // couples as (father, mother)
    std::vector<std::pair<std::string, std::string>> couples;
    for (int c = 0; c < cfg.founder_couples; ++c) {
      const auto father = add(std::nullopt, std::nullopt, Sex::male);
      const auto mother = add(std::nullopt, std::nullopt, Sex::female);
      couples.emplace_back(father, mother);
    }
    for (int g = 0; g < cfg.generations; ++g) {
      std::vector<std::pair<std::string, Sex>> children;
      for (const auto& [father, mother] : couples) {
        for (int k = 0; k < cfg.offspring_per_couple; ++k) {
          const Sex sex = (rng() & 1U) ? Sex::female : Sex::male;
          children.emplace_back(add(father, mother, sex), sex);
        }
      }
      if (g + 1 == cfg.generations) break;
      // every child marries in a new founder
      couples.clear();
      for (const auto& [child, sex] : children) {
        const Sex spouse_sex = sex == Sex::male ? Sex::female : Sex::male;
        const auto spouse = add(std::nullopt, std::nullopt, spouse_sex);
        if (sex == Sex::male) couples.emplace_back(child, spouse);
        else couples.emplace_back(spouse, child);
      }
    }
  }
  return Pedigree(std::move(members));
}

Eigen::MatrixXd gene_drop(const Pedigree& ped, const std::vector<double>& freqs, std::uint64_t seed) {
  for (double f : freqs)
    if (!(f > 0.0 && f < 1.0)) throw Error("simulator.invalid_config", "allele frequencies must lie in (0, 1)");
  const auto n = ped.size();
  const auto j = freqs.size();
  std::mt19937_64 rng(seed);
  // two haplotype alleles per member and variant
  std::vector<unsigned char> alleles(n * j * 2, 0);
  auto at = [&](std::size_t i, std::size_t v, int h) -> unsigned char& { return alleles[(i * j + v) * 2 + h]; };
  for (std::size_t i : ped.topological_order()) {
    const Member& m = ped.members()[i];
    if (m.is_founder()) {
      for (std::size_t v = 0; v < j; ++v) {
        at(i, v, 0) = uniform01(rng) < freqs[v];
        at(i, v, 1) = uniform01(rng) < freqs[v];
      }
    } else {
      const std::size_t fa = *ped.index_of(*m.father);
      const std::size_t mo = *ped.index_of(*m.mother);
      for (std::size_t v = 0; v < j; ++v) {
        at(i, v, 0) = at(fa, v, static_cast<int>(rng() & 1U));
        at(i, v, 1) = at(mo, v, static_cast<int>(rng() & 1U));
      }
    }
  }
  Eigen::MatrixXd doses(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t v = 0; v < j; ++v)
      doses(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v)) = at(i, v, 0) + at(i, v, 1);
  return doses;
}

SimulatedPhenotypes simulate_phenotypes(const Pedigree& ped, const Eigen::MatrixXd& doses,
                                        const ScenarioConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(ped.size());
  const auto j = static_cast<std::size_t>(cfg.n_instruments);
  if (cfg.freqs.size() != j || cfg.alpha.size() != j || cfg.beta.size() != j) {
    throw Error("simulator.invalid_config", "scenario must be resolved before simulating phenotypes");
  }
  if (doses.rows() != n || doses.cols() != static_cast<Eigen::Index>(j)) {
    throw Error("simulator.invalid_config", "dose matrix does not match pedigree and instrument count");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Eigen::Map<const Eigen::VectorXd> alpha(cfg.alpha.data(), static_cast<Eigen::Index>(j));
  const Eigen::Map<const Eigen::VectorXd> beta(cfg.beta.data(), static_cast<Eigen::Index>(j));

  // Population variance of the raw exposure under Hardy-Weinberg founders.
  double var_x = cfg.delta_x * cfg.delta_x + cfg.family_sd_x * cfg.family_sd_x + cfg.sigma_x * cfg.sigma_x;
  for (std::size_t k = 0; k < j; ++k) var_x += cfg.alpha[k] * cfg.alpha[k] * 2.0 * cfg.freqs[k] * (1.0 - cfg.freqs[k]);
  const double x_sd = std::sqrt(var_x);
  const double theta_raw = cfg.theta / x_sd;

  const auto& fams = ped.families();
  std::vector<int> family(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& f = ped.members()[static_cast<std::size_t>(i)].family;
    family[static_cast<std::size_t>(i)] = static_cast<int>(std::find(fams.begin(), fams.end(), f) - fams.begin());
  }
  Eigen::VectorXd gamma_x(static_cast<Eigen::Index>(fams.size())), gamma_y(static_cast<Eigen::Index>(fams.size()));
  for (Eigen::Index f = 0; f < gamma_x.size(); ++f) {
    gamma_x(f) = cfg.family_sd_x * normal(rng);
    gamma_y(f) = cfg.family_sd_y * normal(rng);
  }
  Eigen::VectorXd u(n), e_x(n), e_y(n);
  for (Eigen::Index i = 0; i < n; ++i) u(i) = normal(rng);
  for (Eigen::Index i = 0; i < n; ++i) e_x(i) = normal(rng);
  for (Eigen::Index i = 0; i < n; ++i) e_y(i) = normal(rng);

  Eigen::VectorXd x = doses * alpha + cfg.delta_x * u + cfg.sigma_x * e_x;
  for (Eigen::Index i = 0; i < n; ++i) x(i) += gamma_x(family[static_cast<std::size_t>(i)]);
  Eigen::VectorXd eta = (cfg.omega_y + theta_raw * x.array()).matrix() + doses * beta + cfg.confounder_y * u;
  for (Eigen::Index i = 0; i < n; ++i) eta(i) += gamma_y(family[static_cast<std::size_t>(i)]);
  if (cfg.liability_scale > 0.0) {
    const KinshipMatrix k = kinship(ped);
    const Eigen::MatrixXd lower = cholesky_with_fallback(k.values);
    eta += cfg.liability_scale * (sparse_lower(lower) * e_y);
  }

  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-eta(i)));
    y(i) = uniform01(rng) < p ? 1.0 : 0.0;
  }
  if (y.minCoeff() == y.maxCoeff()) {
    throw Error("simulator.degenerate_outcome", "every simulated outcome is " + std::to_string(static_cast<int>(y(0))));
  }

  Dataset ds;
  ds.family_labels = fams;
  ds.family = family;
  for (const auto& m : ped.members()) ds.ids.push_back(m.id);
  for (std::size_t k = 0; k < j; ++k) {
    ds.variants.push_back({label("snp", static_cast<int>(k + 1), 2), "1", 1000000LL * static_cast<long long>(k + 1)});
  }
  ds.z = doses;
  ds.x = x;
  ds.x_missing.assign(static_cast<std::size_t>(n), false);
  ds.y = y;
  bool sex_known = true;
  Eigen::VectorXd sex(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Sex s = ped.members()[static_cast<std::size_t>(i)].sex;
    if (s == Sex::unknown) sex_known = false;
    sex(i) = s == Sex::female ? 1.0 : 0.0;
  }
  if (sex_known) ds.sex = sex;

  if (cfg.missingness.mask_cases) ds = mask_exposure_in_cases(std::move(ds));
  if (cfg.missingness.random_fraction > 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double draw = uniform01(rng);
      auto idx = static_cast<std::size_t>(i);
      if (!ds.x_missing[idx] && draw < cfg.missingness.random_fraction) {
        ds.x_missing[idx] = true;
        ds.x(i) = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  ds = standardize_exposure(std::move(ds));

  SimulatedPhenotypes out;
  out.truth.theta_per_sd = cfg.theta;
  out.truth.theta_raw = theta_raw;
  out.truth.theta_model = theta_raw * ds.x_scale;
  out.truth.exposure_sd = x_sd;
  out.truth.freqs = cfg.freqs;
  out.truth.alpha = cfg.alpha;
  out.truth.beta = cfg.beta;
  out.truth.prevalence = y.mean();
  out.dataset = std::move(ds);
  return out;
}

Scenario simulate_scenario(const ScenarioConfig& cfg) {
  Scenario s;
  s.config = resolve_scenario(cfg);
  s.pedigree = simulate_pedigree(s.config);
  const Eigen::MatrixXd doses = gene_drop(s.pedigree, s.config.freqs, derive_seed(s.config.seed, kGenotypes));
  auto ph = simulate_phenotypes(s.pedigree, doses, s.config, derive_seed(s.config.seed, kPhenotypes));
  s.dataset = std::move(ph.dataset);
  s.truth = std::move(ph.truth);
  return s;
}

}  // namespace pedmr
