#include "pedmr/bayes_model.hpp"
#include "pedmr/simulator.hpp"

#include "test_util.hpp"

#include <boost/math/distributions/cauchy.hpp>
#include <boost/math/distributions/inverse_chi_squared.hpp>
#include <boost/math/distributions/laplace.hpp>
#include <boost/math/distributions/normal.hpp>

#include <numeric>
#include <random>

using namespace pedmr;
namespace bm = boost::math;

namespace {

double lnorm(double x, double sd) { return std::log(bm::pdf(bm::normal_distribution<>(0.0, sd), x)); }
double lnorm(double x, double mean, double sd) { return std::log(bm::pdf(bm::normal_distribution<>(mean, sd), x)); }
// half-Cauchy on x = exp(l), including the log Jacobian l
double lhalf_cauchy_log(double l, double scale) {
  return std::log(2.0 * bm::pdf(bm::cauchy_distribution<>(0.0, scale), std::exp(l))) + l;
}

// Independent evaluation of the log posterior: every density comes from
// Boost, and the liability is assembled from a dense factor.
double oracle(const ModelSpec& spec, const Dataset& ds, const Eigen::MatrixXd& lower, const Eigen::VectorXd& p) {
  const auto J = static_cast<Eigen::Index>(ds.n_variants());
  const auto N = static_cast<Eigen::Index>(ds.size());
  const auto M = static_cast<Eigen::Index>(ds.n_families());
  const auto n_miss = static_cast<Eigen::Index>(ds.n_missing());
  Eigen::Index k = 0;
  const double theta = p(k++);
  const Eigen::VectorXd alpha = p.segment(k, J);
  k += J;
  const Eigen::VectorXd zb = p.segment(k, J);
  k += J;
  const Eigen::VectorXd llam = p.segment(k, J);
  k += J;
  const double ltau = p(k++), lc2 = p(k++), lba = p(k++), delta = p(k++), lsx = p(k++), omega = p(k++);
  const Eigen::VectorXd gx = p.segment(k, M);
  k += M;
  const Eigen::VectorXd gy = p.segment(k, M);
  k += M;
  const Eigen::VectorXd u = p.segment(k, N);
  k += N;
  const Eigen::VectorXd er = p.segment(k, N);
  k += N;
  const Eigen::VectorXd xm = p.segment(k, n_miss);
  k += n_miss;
  const double s = spec.estimate_liability_scale ? std::exp(p(k++)) : spec.liability_scale;
  REQUIRE(k == p.size());

  const double tau = std::exp(ltau), c2 = std::exp(lc2), b = std::exp(lba), sx = std::exp(lsx);
  const double tau0 = *spec.horseshoe.global_scale;
  double lp = 0.0;
  lp += std::log(bm::pdf(bm::cauchy_distribution<>(0.0, spec.theta_scale), theta));
  for (Eigen::Index j = 0; j < J; ++j) {
    lp += std::log(bm::pdf(bm::laplace_distribution<>(0.0, b), alpha(j)));
    lp += lnorm(zb(j), 1.0);
    lp += lhalf_cauchy_log(llam(j), 1.0);
  }
  lp += lhalf_cauchy_log(lba, spec.alpha_scale_prior);
  lp += lhalf_cauchy_log(ltau, tau0);
  const double s2 = spec.horseshoe.slab_scale * spec.horseshoe.slab_scale;
  lp += std::log(bm::pdf(bm::inverse_chi_squared_distribution<>(spec.horseshoe.slab_df, s2), c2)) + lc2;
  lp += lnorm(delta, spec.delta_x_prior_scale);
  lp += lhalf_cauchy_log(lsx, spec.sigma_x_prior_scale);
  lp += lnorm(omega, spec.omega_y_prior_scale);
  for (Eigen::Index f = 0; f < M; ++f) lp += lnorm(gx(f), spec.family_effect_scale) + lnorm(gy(f), spec.family_effect_scale);
  if (spec.estimate_liability_scale) lp += std::log(2.0 * bm::pdf(bm::normal_distribution<>(0.0, spec.liability_scale_prior), s)) + std::log(s);

  Eigen::VectorXd beta(J);
  for (Eigen::Index j = 0; j < J; ++j) {
    const double l2 = std::exp(2 * llam(j));
    beta(j) = zb(j) * std::sqrt(c2 * tau * tau * l2 / (c2 + tau * tau * l2));
  }
  const Eigen::VectorXd latent = lower * er;
  Eigen::Index m = 0;
  for (Eigen::Index i = 0; i < N; ++i) {
    const int f = ds.family[static_cast<std::size_t>(i)];
    const double xi = ds.x_missing[static_cast<std::size_t>(i)] ? xm(m++) : ds.x(i);
    double mean_x = gx(f);
    for (Eigen::Index j = 0; j < J; ++j) mean_x += alpha(j) * ds.z(i, j);
    // stored u is standardized given the exposure; map back and keep the Jacobian
    const double v = delta * delta + sx * sx;
    const double ui = delta * (xi - mean_x) / v + sx / std::sqrt(v) * u(i);
    const double nu = mean_x + delta * ui;
    double mu = omega + theta * xi + ui + gy(f);
    for (Eigen::Index j = 0; j < J; ++j) mu += beta(j) * ds.z(i, j);
    const double eta = mu + s * latent(i);
    const double pi = 1.0 / (1.0 + std::exp(-eta));
    lp += lnorm(ui, 1.0) + lnorm(er(i), 1.0) + lnorm(xi, nu, sx) + std::log(sx / std::sqrt(v));
    lp += ds.y(i) == 1.0 ? std::log(pi) : std::log1p(-pi);
  }
  return lp;
}

Dataset toy(int n, int j, int m, std::vector<bool> miss, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Dataset ds;
  ds.z.resize(n, j);
  ds.x.resize(n);
  ds.y.resize(n);
  for (int f = 0; f < m; ++f) ds.family_labels.push_back("F" + std::to_string(f));
  for (int i = 0; i < n; ++i) {
    ds.ids.push_back("i" + std::to_string(i));
    ds.family.push_back(i % m);
    for (int v = 0; v < j; ++v) ds.z(i, v) = static_cast<double>(rng() % 3);
    ds.x(i) = nd(rng);
    ds.y(i) = static_cast<double>(i % 2);
  }
  for (int v = 0; v < j; ++v) ds.variants.push_back({"v" + std::to_string(v), "1", v + 1});
  ds.x_missing = miss;
  for (int i = 0; i < n; ++i)
    if (miss[static_cast<std::size_t>(i)]) ds.x(i) = NAN;
  return ds;
}

Eigen::MatrixXd related_factor(int n) {
  // compound-symmetric kinship-like matrix
  Eigen::MatrixXd k = Eigen::MatrixXd::Constant(n, n, 0.125);
  k.diagonal().setConstant(0.5);
  return Eigen::LLT<Eigen::MatrixXd>(k).matrixL();
}

Eigen::VectorXd random_point(const MrModel& model, std::mt19937_64& rng, double spread = 1.0) {
  std::uniform_real_distribution<double> u(-spread, spread);
  Eigen::VectorXd p(static_cast<Eigen::Index>(model.dimension()));
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = u(rng);
  return p;
}

// Worst |analytic - central difference| / (1 + |central difference|).
double gradient_error(const MrModel& model, const Eigen::VectorXd& p) {
  const auto r = model.log_posterior(p);
  double worst = 0.0;
  const double h = 1e-5;
  Eigen::VectorXd q = p;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    q(i) = p(i) + h;
    const double up = model.log_posterior(q).value;
    q(i) = p(i) - h;
    const double down = model.log_posterior(q).value;
    q(i) = p(i);
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(r.gradient(i) - fd) / (1.0 + std::abs(fd)));
  }
  return worst;
}

}  // namespace

TEST_CASE("parameter layout") {
  ModelSpec spec;
  spec.n_instruments = 2;
  spec.n_individuals = 3;
  spec.n_families = 1;
  spec.n_missing = 1;
  const auto l = ParameterLayout::make(spec);
  CHECK(l.dimension == 1 + 3 * 2 + 6 + 2 * 1 + 2 * 3 + 1);
  const auto names = l.names();
  CHECK(names.size() == l.dimension);
  CHECK(names[0] == "theta");
  CHECK(names[1] == "alpha[1]");
  CHECK(names[l.log_tau] == "log_tau");
  CHECK(names[l.x_missing] == "x_missing[1]");
}

TEST_CASE("default global scale") {
  Dataset ds = toy(100, 20, 2, std::vector<bool>(100, false), 1);
  ModelSpec spec;
  spec.resolve_defaults(ds);
  // p0 = 2: 2 / (18 * 10)
  CHECK(*spec.horseshoe.global_scale == doctest::Approx(2.0 / 180.0));
  CHECK(spec.n_instruments == 20);
  ModelSpec given;
  given.horseshoe.global_scale = 0.3;
  given.resolve_defaults(ds);
  CHECK(*given.horseshoe.global_scale == 0.3);
}

TEST_CASE("spec validation and config round trip") {
  ModelSpec bad;
  bad.theta_scale = 0.0;
  CHECK(error_code([&] { bad.validate(); }) == "bayes_model.invalid_spec");
  ModelSpec spec;
  spec.theta_scale = 1.5;
  spec.horseshoe.global_scale = 0.01;
  spec.kinship_scale = KinshipScale::relationship;
  spec.estimate_liability_scale = true;
  const nlohmann::json j = spec;
  const ModelSpec back = j.get<ModelSpec>();
  CHECK(back.theta_scale == 1.5);
  CHECK(*back.horseshoe.global_scale == 0.01);
  CHECK(back.kinship_scale == KinshipScale::relationship);
  CHECK(back.estimate_liability_scale);
  CHECK(error_code([] { nlohmann::json{{"kinship_scale", "twice"}}.get<ModelSpec>(); }) == "bayes_model.invalid_spec");
}

TEST_CASE("toy model at the transform origin matches the density oracle") {
  const Dataset ds = toy(2, 1, 1, {false, false}, 3);
  ModelSpec spec;
  const Eigen::MatrixXd lower = related_factor(2);
  const MrModel model(spec, ds, lower);
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dimension()));
  const double expect = oracle(model.spec(), ds, lower, origin);
  CHECK(std::abs(model.log_posterior(origin).value - expect) < 1e-10);
}

TEST_CASE("density oracle at random points, with missing exposure and estimated scale") {
  const Dataset ds = toy(5, 2, 2, {false, true, false, false, true}, 4);
  for (bool est : {false, true}) {
    ModelSpec spec;
    spec.estimate_liability_scale = est;
    spec.liability_scale = 0.7;
    const Eigen::MatrixXd lower = related_factor(5);
    const MrModel model(spec, ds, lower);
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 20; ++rep) {
      const Eigen::VectorXd p = random_point(model, rng);
      const double expect = oracle(model.spec(), ds, lower, p);
      CHECK(std::abs(model.log_posterior(p).value - expect) < 1e-10 * (1.0 + std::abs(expect)));
    }
  }
}

TEST_CASE("identity kinship factorizes into independent individual terms") {
  const Dataset ds = toy(6, 2, 2, {false, false, true, false, false, false}, 8);
  const MrModel model(ModelSpec{}, ds, Eigen::MatrixXd::Identity(6, 6));
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::VectorXd p = random_point(model, rng);
    // oracle with a diagonal factor evaluates each individual separately
    const double expect = oracle(model.spec(), ds, Eigen::MatrixXd::Identity(6, 6), p);
    CHECK(std::abs(model.log_posterior(p).value - expect) < 1e-10 * (1.0 + std::abs(expect)));
  }
}

TEST_CASE("gradient matches central differences") {
  ScenarioConfig cfg;
  cfg.families = 3;
  cfg.founder_couples = 1;
  cfg.offspring_per_couple = 2;
  cfg.n_instruments = 4;
  cfg.missingness.mask_cases = true;
  cfg.seed = 12;
  const Scenario sc = simulate_scenario(cfg);
  for (bool est : {false, true}) {
    ModelSpec spec;
    spec.estimate_liability_scale = est;
    const MrModel model = MrModel::from_data(spec, sc.dataset, kinship(sc.pedigree));
    CHECK(model.spec().n_missing > 0);
    std::mt19937_64 rng(13);
    double worst = 0.0;
    for (int rep = 0; rep < 25; ++rep) worst = std::max(worst, gradient_error(model, random_point(model, rng)));
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("zero instruments still give a finite density") {
  const Dataset ds = toy(4, 0, 1, {false, false, false, false}, 2);
  const MrModel model(ModelSpec{}, ds, Eigen::MatrixXd::Identity(4, 4));
  std::mt19937_64 rng(1);
  const auto p = random_point(model, rng);
  const auto r = model.log_posterior_checked(p);
  CHECK(std::isfinite(r.value));
  CHECK(gradient_error(model, p) < 1e-5);
}

TEST_CASE("permuting individuals leaves the density unchanged") {
  ScenarioConfig cfg;
  cfg.families = 2;
  cfg.founder_couples = 1;
  cfg.offspring_per_couple = 3;
  cfg.n_instruments = 3;
  cfg.missingness.random_fraction = 0.3;
  cfg.seed = 21;
  const Scenario sc = simulate_scenario(cfg);
  const Dataset& ds = sc.dataset;
  const KinshipMatrix k = kinship(sc.pedigree);
  const MrModel model = MrModel::from_data(ModelSpec{}, ds, k);

  const auto n = static_cast<Eigen::Index>(ds.size());
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(22);
  std::shuffle(perm.begin(), perm.end(), rng);

  Dataset pd = ds;
  pd.ids.clear();
  pd.family.clear();
  pd.x_missing.clear();
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = perm[static_cast<std::size_t>(r)];
    pd.ids.push_back(ds.ids[static_cast<std::size_t>(i)]);
    pd.family.push_back(ds.family[static_cast<std::size_t>(i)]);
    pd.x_missing.push_back(ds.x_missing[static_cast<std::size_t>(i)]);
    pd.z.row(r) = ds.z.row(i);
    pd.x(r) = ds.x(i);
    pd.y(r) = ds.y(i);
  }
  const MrModel permuted = MrModel::from_data(ModelSpec{}, pd, k);

  const Eigen::MatrixXd l = cholesky_with_fallback(k.subset(ds.ids).values);
  const Eigen::MatrixXd lp = cholesky_with_fallback(k.subset(pd.ids).values);
  const auto& L = model.layout();
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::VectorXd p = random_point(model, rng);
    Eigen::VectorXd q = p;
    const Eigen::VectorXd latent = l * p.segment(static_cast<Eigen::Index>(L.eta_raw), n);
    Eigen::VectorXd latent_p(n);
    std::vector<Eigen::Index> where(static_cast<std::size_t>(n));
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto i = perm[static_cast<std::size_t>(r)];
      latent_p(r) = latent(i);
      q(static_cast<Eigen::Index>(L.u) + r) = p(static_cast<Eigen::Index>(L.u) + i);
    }
    q.segment(static_cast<Eigen::Index>(L.eta_raw), n) = lp.triangularView<Eigen::Lower>().solve(latent_p);
    // missing exposure parameters follow the new row order
    std::vector<Eigen::Index> miss_rank(static_cast<std::size_t>(n), -1);
    Eigen::Index m = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (ds.x_missing[static_cast<std::size_t>(i)]) miss_rank[static_cast<std::size_t>(i)] = m++;
    m = 0;
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto i = perm[static_cast<std::size_t>(r)];
      if (ds.x_missing[static_cast<std::size_t>(i)]) {
        q(static_cast<Eigen::Index>(L.x_missing) + m++) =
            p(static_cast<Eigen::Index>(L.x_missing) + miss_rank[static_cast<std::size_t>(i)]);
      }
    }
    const double a = model.log_posterior(p).value;
    const double b = permuted.log_posterior(q).value;
    CHECK(std::abs(a - b) < 1e-10 * (1.0 + std::abs(a)));
  }
}

TEST_CASE("horseshoe effective scale") {
  for (double tau : {1e-3, 0.1, 2.0})
    for (double c2 : {0.5, 6.25}) {
      double prev = 0.0;
      for (double lambda = 1e-3; lambda < 1e3; lambda *= 1.7) {
        const double s = horseshoe_effective_scale(lambda, tau, c2);
        CHECK(s > prev);
        CHECK(s * s <= c2 * (1 + 1e-15));
        CHECK(s * s <= tau * tau * lambda * lambda * (1 + 1e-15));
        prev = s;
      }
    }
}

TEST_CASE("unused instruments do not touch the outcome likelihood without pleiotropy") {
  Dataset a = toy(6, 3, 2, std::vector<bool>(6, false), 30);
  Dataset b = a;
  b.z.col(2) = Eigen::VectorXd::LinSpaced(6, 0, 2).array().round();
  const Eigen::MatrixXd lower = related_factor(6);
  const MrModel ma(ModelSpec{}, a, lower), mb(ModelSpec{}, b, lower);
  std::mt19937_64 rng(31);
  Eigen::VectorXd p = random_point(ma, rng);
  const auto& L = ma.layout();
  p(static_cast<Eigen::Index>(L.alpha) + 2) = 0.0;
  p.segment(static_cast<Eigen::Index>(L.beta_raw), 3).setZero();
  CHECK(ma.log_posterior(p).value == mb.log_posterior(p).value);
}

TEST_CASE("errors") {
  const Dataset ds = toy(3, 1, 1, {false, false, false}, 1);
  const MrModel model(ModelSpec{}, ds, Eigen::MatrixXd::Identity(3, 3));
  CHECK(error_code([&] { model.log_posterior(Eigen::VectorXd::Zero(3)); }) == "bayes_model.dimension_mismatch");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dimension()));
  p(static_cast<Eigen::Index>(model.layout().log_sigma_x)) = -800.0;
  const auto r = model.log_posterior(p);
  CHECK(!r.finite());
  CHECK(r.nonfinite_term != "");
  CHECK(error_code([&] { model.log_posterior_checked(p); }) == "bayes_model.nonfinite");
  CHECK(error_code([&] { MrModel(ModelSpec{}, ds, Eigen::MatrixXd::Identity(2, 2)); }) == "bayes_model.dimension_mismatch");
}

TEST_CASE("impute missing") {
  Dataset ds = toy(2, 0, 1, {false, true}, 1);
  ds.x(0) = 0.3;
  Eigen::VectorXd xm(1);
  xm << 0.7;
  const auto x = impute_missing(xm, ds);
  CHECK(x(0) == 0.3);
  CHECK(x(1) == 0.7);

  const Dataset none = toy(3, 0, 1, {false, false, false}, 2);
  CHECK((impute_missing(Eigen::VectorXd(0), none) - none.x).cwiseAbs().maxCoeff() == 0.0);

  const Dataset all = toy(3, 0, 1, {true, true, true}, 2);
  const Eigen::Vector3d v(1, 2, 3);
  CHECK((impute_missing(v, all) - v).cwiseAbs().maxCoeff() == 0.0);

  const MrModel model(ModelSpec{}, ds, Eigen::MatrixXd::Identity(2, 2));
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dimension()));
  p(static_cast<Eigen::Index>(model.layout().x_missing)) = 0.7;
  CHECK(model.impute_missing(p)(1) == 0.7);
  CHECK(model.impute_missing(p)(0) == 0.3);
}

TEST_CASE("causal odds ratio") {
  CHECK(cor_from_theta(0.0, -3.0, 5.0) == 1.0);
  CHECK(cor_from_theta(-2.12, 0.0, 1.0) == doctest::Approx(0.12).epsilon(0.01));
  CHECK(cor_from_theta(0.5, 0.0, 2.0) == doctest::Approx(2.718281828459045));
}

TEST_CASE("initial points") {
  const Scenario sc = simulate_scenario(ScenarioConfig{});
  const MrModel model = MrModel::from_data(ModelSpec{}, sc.dataset, kinship(sc.pedigree));
  const auto a = model.initial_point(1);
  CHECK((a - model.initial_point(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a - model.initial_point(2)).cwiseAbs().maxCoeff() > 0.0);
  CHECK(a.cwiseAbs().maxCoeff() <= 0.5);
  CHECK(a(static_cast<Eigen::Index>(model.layout().log_tau)) == 0.0);
  CHECK(std::isfinite(model.log_posterior_checked(a).value));
}

TEST_CASE("summary quantities") {
  const Dataset ds = toy(3, 2, 1, {false, false, false}, 1);
  ModelSpec spec;
  spec.estimate_liability_scale = true;
  const MrModel model(spec, ds, Eigen::MatrixXd::Identity(3, 3));
  std::mt19937_64 rng(2);
  const auto p = random_point(model, rng);
  const auto names = model.summary_names();
  const auto v = model.summary_values(p);
  REQUIRE(static_cast<Eigen::Index>(names.size()) == v.size());
  CHECK(names[1] == "odds_ratio");
  CHECK(v(1) == doctest::Approx(std::exp(v(0))));
  CHECK(names.back() == "liability_scale");
  CHECK(v(v.size() - 1) == doctest::Approx(std::exp(p(p.size() - 1))));
  const auto beta = model.beta(p);
  const auto it = std::find(names.begin(), names.end(), "beta[2]");
  CHECK(v(it - names.begin()) == beta(1));
}
