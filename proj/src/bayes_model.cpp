#include "pedmr/bayes_model.hpp"

#include "pedmr/error.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace pedmr {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
const double kLogPi = std::log(std::numbers::pi);

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log half-Cauchy(x | 0, a) for x > 0, plus log x (Jacobian of x = exp(l)),
// and its derivative with respect to l.
void half_cauchy_log(double l, double a, double& value, double& dvalue) {
  const double x = std::exp(l);
  const double r = x / a;
  value = std::log(2.0) - kLogPi - std::log(a) - std::log1p(r * r) + l;
  dvalue = -2.0 * r * r / (1.0 + r * r) + 1.0;
}

double normal_log(double x, double sd) { return -0.5 * kLog2Pi - std::log(sd) - 0.5 * (x / sd) * (x / sd); }

}  // namespace

void ModelSpec::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error("bayes_model.invalid_spec", std::string(what) + " must be a positive finite number");
    }
  };
  positive(theta_scale, "theta_scale");
  positive(alpha_scale_prior, "alpha_scale_prior");
  positive(horseshoe.slab_scale, "horseshoe.slab_scale");
  positive(horseshoe.slab_df, "horseshoe.slab_df");
  if (horseshoe.global_scale) positive(*horseshoe.global_scale, "horseshoe.global_scale");
  positive(family_effect_scale, "family_effect_scale");
  positive(sigma_x_prior_scale, "sigma_x_prior_scale");
  positive(delta_x_prior_scale, "delta_x_prior_scale");
  positive(omega_y_prior_scale, "omega_y_prior_scale");
  positive(liability_scale_prior, "liability_scale_prior");
  if (!(liability_scale >= 0.0) || !std::isfinite(liability_scale)) {
    throw Error("bayes_model.invalid_spec", "liability_scale must be non-negative");
  }
  if (n_missing > n_individuals) {
    throw Error("bayes_model.invalid_spec", "more missing exposures than individuals");
  }
}

void ModelSpec::resolve_defaults(const Dataset& ds) {
  n_instruments = ds.n_variants();
  n_individuals = ds.size();
  n_families = ds.n_families();
  n_missing = ds.n_missing();
  if (!horseshoe.global_scale) {
    const double j = static_cast<double>(n_instruments);
    const double p0 = std::max(1.0, j / 10.0);
    // With J <= p0 the expected count of non-zero effects is all of them.
    const double denom = std::max(j - p0, 1.0);
    horseshoe.global_scale = p0 / (denom * std::sqrt(std::max<double>(static_cast<double>(n_individuals), 1.0)));
  }
}

void to_json(nlohmann::json& j, const ModelSpec& s) {
  j = nlohmann::json{
      {"theta_scale", s.theta_scale},
      {"alpha_scale_prior", s.alpha_scale_prior},
      {"horseshoe",
       {{"slab_scale", s.horseshoe.slab_scale}, {"slab_df", s.horseshoe.slab_df}}},
      {"family_effect_scale", s.family_effect_scale},
      {"sigma_x_prior_scale", s.sigma_x_prior_scale},
      {"delta_x_prior_scale", s.delta_x_prior_scale},
      {"omega_y_prior_scale", s.omega_y_prior_scale},
      {"liability_scale", s.liability_scale},
      {"estimate_liability_scale", s.estimate_liability_scale},
      {"liability_scale_prior", s.liability_scale_prior},
      {"use_kinship", s.use_kinship},
      {"kinship_scale", s.kinship_scale == KinshipScale::coefficient ? "coefficient" : "relationship"},
  };
  if (s.horseshoe.global_scale) j["horseshoe"]["global_scale"] = *s.horseshoe.global_scale;
}

void from_json(const nlohmann::json& j, ModelSpec& s) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("theta_scale", s.theta_scale);
  get("alpha_scale_prior", s.alpha_scale_prior);
  if (j.contains("horseshoe")) {
    const auto& h = j.at("horseshoe");
    if (h.contains("global_scale") && !h.at("global_scale").is_null()) {
      s.horseshoe.global_scale = h.at("global_scale").get<double>();
    }
    if (h.contains("slab_scale")) h.at("slab_scale").get_to(s.horseshoe.slab_scale);
    if (h.contains("slab_df")) h.at("slab_df").get_to(s.horseshoe.slab_df);
  }
  get("family_effect_scale", s.family_effect_scale);
  get("sigma_x_prior_scale", s.sigma_x_prior_scale);
  get("delta_x_prior_scale", s.delta_x_prior_scale);
  get("omega_y_prior_scale", s.omega_y_prior_scale);
  get("liability_scale", s.liability_scale);
  get("estimate_liability_scale", s.estimate_liability_scale);
  get("liability_scale_prior", s.liability_scale_prior);
  get("use_kinship", s.use_kinship);
  if (j.contains("kinship_scale")) {
    const auto v = j.at("kinship_scale").get<std::string>();
    if (v == "coefficient") s.kinship_scale = KinshipScale::coefficient;
    else if (v == "relationship") s.kinship_scale = KinshipScale::relationship;
    else throw Error("bayes_model.invalid_spec", "kinship_scale must be 'coefficient' or 'relationship'");
  }
}

ParameterLayout ParameterLayout::make(const ModelSpec& spec) {
  ParameterLayout l;
  l.n_instruments = spec.n_instruments;
  l.n_individuals = spec.n_individuals;
  l.n_families = spec.n_families;
  l.n_missing = spec.n_missing;
  l.has_log_liability_scale = spec.estimate_liability_scale;
  const auto j = spec.n_instruments;
  std::size_t at = 0;
  l.theta = at++;
  l.alpha = at;
  at += j;
  l.beta_raw = at;
  at += j;
  l.log_lambda = at;
  at += j;
  l.log_tau = at++;
  l.log_c2 = at++;
  l.log_b_alpha = at++;
  l.delta_x = at++;
  l.log_sigma_x = at++;
  l.omega_y = at++;
  l.gamma_x = at;
  at += spec.n_families;
  l.gamma_y = at;
  at += spec.n_families;
  l.u = at;
  at += spec.n_individuals;
  l.eta_raw = at;
  at += spec.n_individuals;
  l.x_missing = at;
  at += spec.n_missing;
  if (l.has_log_liability_scale) l.log_liability_scale = at++;
  l.dimension = at;
  return l;
}

std::vector<std::string> ParameterLayout::names() const {
  std::vector<std::string> out;
  out.reserve(dimension);
  auto block = [&](const char* name, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(std::string(name) + "[" + std::to_string(i + 1) + "]");
  };
  out.push_back("theta");
  block("alpha", n_instruments);
  block("beta_raw", n_instruments);
  block("log_lambda", n_instruments);
  out.push_back("log_tau");
  out.push_back("log_c2");
  out.push_back("log_b_alpha");
  out.push_back("delta_x");
  out.push_back("log_sigma_x");
  out.push_back("omega_y");
  block("gamma_x", n_families);
  block("gamma_y", n_families);
  block("u", n_individuals);
  block("eta_raw", n_individuals);
  block("x_missing", n_missing);
  if (has_log_liability_scale) out.push_back("log_liability_scale");
  return out;
}

double horseshoe_effective_scale(double lambda, double tau, double c2) {
  const double a = tau * tau * lambda * lambda;
  return std::sqrt(c2 * a / (c2 + a));
}

MrModel::MrModel(ModelSpec spec, const Dataset& ds, const Eigen::MatrixXd& lower) : spec_(std::move(spec)) {
  if (spec_.n_individuals == 0 && ds.size() > 0) spec_.resolve_defaults(ds);
  if (!spec_.horseshoe.global_scale) spec_.resolve_defaults(ds);
  spec_.validate();
  if (spec_.n_instruments != ds.n_variants() || spec_.n_individuals != ds.size() ||
      spec_.n_families != ds.n_families() || spec_.n_missing != ds.n_missing()) {
    throw Error("bayes_model.dimension_mismatch", "model dimensions do not match the dataset");
  }
  const auto n = static_cast<Eigen::Index>(ds.size());
  if (lower.rows() != n || lower.cols() != n) {
    throw Error("bayes_model.dimension_mismatch", "liability factor must be N x N");
  }
  layout_ = ParameterLayout::make(spec_);
  z_ = ds.z;
  y_ = ds.y;
  family_ = ds.family;
  x_obs_ = ds.x;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (ds.x_missing[static_cast<std::size_t>(i)]) {
      missing_rows_.push_back(i);
      x_obs_(i) = 0.0;
    }
  }
  lower_ = sparse_lower(lower);
  tau0_ = *spec_.horseshoe.global_scale;
}

MrModel MrModel::from_data(ModelSpec spec, const Dataset& ds, const KinshipMatrix& k) {
  spec.resolve_defaults(ds);
  const auto n = static_cast<Eigen::Index>(ds.size());
  if (!spec.use_kinship) return MrModel(std::move(spec), ds, Eigen::MatrixXd::Identity(n, n));
  KinshipMatrix sub = k.subset(ds.ids);
  Eigen::MatrixXd cov = sub.values;
  if (sub.scale != spec.kinship_scale) {
    cov = spec.kinship_scale == KinshipScale::relationship ? Eigen::MatrixXd(sub.relationship())
                                                           : Eigen::MatrixXd(0.5 * sub.values);
  }
  return MrModel(std::move(spec), ds, cholesky_with_fallback(cov));
}

double MrModel::liability_scale(const Eigen::VectorXd& p) const {
  return layout_.has_log_liability_scale ? std::exp(p(static_cast<Eigen::Index>(layout_.log_liability_scale)))
                                         : spec_.liability_scale;
}

LogDensityResult MrModel::log_posterior(const Eigen::VectorXd& p) const {
  if (static_cast<std::size_t>(p.size()) != layout_.dimension) {
    throw Error("bayes_model.dimension_mismatch", "parameter vector has length " + std::to_string(p.size()) +
                                                      ", expected " + std::to_string(layout_.dimension));
  }
  const auto& L = layout_;
  const auto J = static_cast<Eigen::Index>(L.n_instruments);
  const auto N = static_cast<Eigen::Index>(L.n_individuals);
  const auto M = static_cast<Eigen::Index>(L.n_families);
  auto at = [](std::size_t o) { return static_cast<Eigen::Index>(o); };

  const double theta = p(at(L.theta));
  const auto alpha = p.segment(at(L.alpha), J);
  const auto zb = p.segment(at(L.beta_raw), J);
  const auto llam = p.segment(at(L.log_lambda), J);
  const double ltau = p(at(L.log_tau));
  const double lc2 = p(at(L.log_c2));
  const double lba = p(at(L.log_b_alpha));
  const double delta = p(at(L.delta_x));
  const double lsx = p(at(L.log_sigma_x));
  const double omega = p(at(L.omega_y));
  const auto gx = p.segment(at(L.gamma_x), M);
  const auto gy = p.segment(at(L.gamma_y), M);
  const auto u_std = p.segment(at(L.u), N);
  const auto er = p.segment(at(L.eta_raw), N);
  const auto xm = p.segment(at(L.x_missing), static_cast<Eigen::Index>(L.n_missing));
  const double s = liability_scale(p);

  LogDensityResult out;
  out.gradient = Eigen::VectorXd::Zero(p.size());
  auto& g = out.gradient;
  double total = 0.0;
  auto add = [&](const char* term, double v) {
    if (!std::isfinite(v) && out.nonfinite_term.empty()) out.nonfinite_term = term;
    total += v;
  };

  const double c2 = std::exp(lc2);
  const double b_alpha = std::exp(lba);
  const double sx = std::exp(lsx);

  // Regularized horseshoe, non-centred.
  Eigen::VectorXd beta(J), frac(J), beta_sd(J);
  for (Eigen::Index j = 0; j < J; ++j) {
    const double a = std::exp(2.0 * (ltau + llam(j)));
    frac(j) = c2 / (c2 + a);  // d log v / d log(lambda^2)
    beta_sd(j) = std::sqrt(a * frac(j));
    beta(j) = zb(j) * beta_sd(j);
  }

  Eigen::VectorXd x = x_obs_;
  for (std::size_t k = 0; k < missing_rows_.size(); ++k) x(missing_rows_[k]) = xm(static_cast<Eigen::Index>(k));

  // Exposure model with U integrated out: x ~ N(m, delta^2 + sigma^2). The
  // confounder is stored standardized given the exposure residual,
  //   u = delta r / v + (sigma / sqrt(v)) u_std,
  // which is the exact conditional of U and removes the delta/sigma/U funnel.
  Eigen::VectorXd m = z_ * alpha;
  for (Eigen::Index i = 0; i < N; ++i) m(i) += gx(family_[static_cast<std::size_t>(i)]);
  const Eigen::VectorXd rx = x - m;
  const double v = delta * delta + sx * sx;
  const double sv = std::sqrt(v);
  const double ua = delta / v;
  const double ub = sx / sv;
  const Eigen::VectorXd u = ua * rx + ub * u_std;
  const double rss = rx.squaredNorm();
  add("exposure likelihood", -static_cast<double>(N) * (0.5 * kLog2Pi + 0.5 * std::log(v)) - 0.5 * rss / v);

  // Outcome model with kinship-correlated liability.
  const Eigen::VectorXd latent = lower_ * er;
  Eigen::VectorXd eta = z_ * beta + u + theta * x + s * latent;
  eta.array() += omega;
  for (Eigen::Index i = 0; i < N; ++i) eta(i) += gy(family_[static_cast<std::size_t>(i)]);
  double lp_y = 0.0;
  Eigen::VectorXd g_eta(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    lp_y += y_(i) * eta(i) - softplus(eta(i));
    g_eta(i) = y_(i) - logistic(eta(i));
  }
  add("outcome likelihood", lp_y);
  // d/d r through the exposure density and through u
  const Eigen::VectorXd g_r = -rx / v + ua * g_eta;

  // Latent normals.
  add("confounder prior", -0.5 * static_cast<double>(N) * kLog2Pi - 0.5 * u_std.squaredNorm());
  add("liability innovation prior", -0.5 * static_cast<double>(N) * kLog2Pi - 0.5 * er.squaredNorm());
  add("pleiotropy raw prior", -0.5 * static_cast<double>(J) * kLog2Pi - 0.5 * zb.squaredNorm());

  // theta ~ Cauchy(0, theta_scale).
  {
    const double a = spec_.theta_scale;
    const double r = theta / a;
    add("theta prior", -kLogPi - std::log(a) - std::log1p(r * r));
    g(at(L.theta)) += -2.0 * theta / (a * a + theta * theta);
  }
  g(at(L.theta)) += g_eta.dot(x);

  // alpha ~ Laplace(0, b_alpha), b_alpha ~ half-Cauchy.
  {
    const double abs_sum = alpha.cwiseAbs().sum();
    add("alpha prior", -static_cast<double>(J) * std::log(2.0 * b_alpha) - abs_sum / b_alpha);
    auto ga = g.segment(at(L.alpha), J);
    ga = -(z_.transpose() * g_r);
    for (Eigen::Index j = 0; j < J; ++j) ga(j) -= (alpha(j) > 0 ? 1.0 : alpha(j) < 0 ? -1.0 : 0.0) / b_alpha;
    double v = 0, dv = 0;
    half_cauchy_log(lba, spec_.alpha_scale_prior, v, dv);
    add("alpha scale prior", v);
    g(at(L.log_b_alpha)) = -static_cast<double>(J) + abs_sum / b_alpha + dv;
  }

  // Horseshoe locals, global and slab.
  {
    const Eigen::VectorXd g_beta = z_.transpose() * g_eta;
    double g_ltau = 0.0, g_lc2 = 0.0;
    for (Eigen::Index j = 0; j < J; ++j) {
      g(at(L.beta_raw) + j) = g_beta(j) * beta_sd(j) - zb(j);
      const double gb = g_beta(j) * beta(j);
      double v = 0, dv = 0;
      half_cauchy_log(llam(j), 1.0, v, dv);
      add("local scale prior", v);
      g(at(L.log_lambda) + j) = gb * frac(j) + dv;
      g_ltau += gb * frac(j);
      g_lc2 += 0.5 * gb * (1.0 - frac(j));
    }
    double v = 0, dv = 0;
    half_cauchy_log(ltau, tau0_, v, dv);
    add("global scale prior", v);
    g(at(L.log_tau)) = g_ltau + dv;

    // c^2 ~ scaled inverse chi-square(nu, s^2), stored as log c^2.
    const double nu_df = spec_.horseshoe.slab_df;
    const double s2 = spec_.horseshoe.slab_scale * spec_.horseshoe.slab_scale;
    const double half = 0.5 * nu_df;
    add("slab prior", half * std::log(half) - std::lgamma(half) + half * std::log(s2) - (half + 1.0) * lc2 -
                          half * s2 / c2 + lc2);
    g(at(L.log_c2)) = g_lc2 - half + half * s2 / c2;
  }

  // delta_x, sigma_x, omega_y.
  {
    const double g_v = -0.5 * static_cast<double>(N) / v + 0.5 * rss / (v * v);
    const double ge_r = g_eta.dot(rx);
    const double ge_u = g_eta.dot(u_std);
    const double v15 = v * sv;
    add("delta_x prior", normal_log(delta, spec_.delta_x_prior_scale));
    g(at(L.delta_x)) = 2.0 * delta * g_v + ge_r * (sx * sx - delta * delta) / (v * v) - ge_u * sx * delta / v15 -
                       delta / (spec_.delta_x_prior_scale * spec_.delta_x_prior_scale);
    double hv = 0, dv = 0;
    half_cauchy_log(lsx, spec_.sigma_x_prior_scale, hv, dv);
    add("sigma_x prior", hv);
    const double g_sigma = 2.0 * sx * g_v - ge_r * 2.0 * delta * sx / (v * v) + ge_u * delta * delta / v15;
    g(at(L.log_sigma_x)) = sx * g_sigma + dv;
  }
  add("omega_y prior", normal_log(omega, spec_.omega_y_prior_scale));
  g(at(L.omega_y)) = g_eta.sum() - omega / (spec_.omega_y_prior_scale * spec_.omega_y_prior_scale);

  // Family effects.
  {
    const double sf = spec_.family_effect_scale;
    add("family effect prior",
        -static_cast<double>(2 * M) * (0.5 * kLog2Pi + std::log(sf)) - 0.5 * (gx.squaredNorm() + gy.squaredNorm()) / (sf * sf));
    auto ggx = g.segment(at(L.gamma_x), M);
    auto ggy = g.segment(at(L.gamma_y), M);
    ggx = -gx / (sf * sf);
    ggy = -gy / (sf * sf);
    for (Eigen::Index i = 0; i < N; ++i) {
      const auto f = family_[static_cast<std::size_t>(i)];
      ggx(f) -= g_r(i);
      ggy(f) += g_eta(i);
    }
  }

  g.segment(at(L.u), N) = ub * g_eta - u_std;
  g.segment(at(L.eta_raw), N) = s * (lower_.transpose() * g_eta) - er;
  for (std::size_t k = 0; k < missing_rows_.size(); ++k) {
    const auto i = missing_rows_[k];
    g(at(L.x_missing) + static_cast<Eigen::Index>(k)) = g_r(i) + theta * g_eta(i);
  }

  if (L.has_log_liability_scale) {
    const double sd = spec_.liability_scale_prior;
    add("liability scale prior", std::log(2.0) + normal_log(s, sd) + std::log(s));
    g(at(L.log_liability_scale)) = s * g_eta.dot(latent) - s * s / (sd * sd) + 1.0;
  }

  out.value = total;
  if (!out.finite() || !g.allFinite()) {
    if (out.nonfinite_term.empty()) out.nonfinite_term = "gradient";
    out.value = -std::numeric_limits<double>::infinity();
  }
  return out;
}

LogDensityResult MrModel::log_posterior_checked(const Eigen::VectorXd& params) const {
  auto r = log_posterior(params);
  if (!r.finite()) throw Error("bayes_model.nonfinite", "log density is not finite in term: " + r.nonfinite_term);
  return r;
}

Eigen::VectorXd MrModel::impute_missing(const Eigen::VectorXd& p) const {
  Eigen::VectorXd x = x_obs_;
  const auto off = static_cast<Eigen::Index>(layout_.x_missing);
  for (std::size_t k = 0; k < missing_rows_.size(); ++k) x(missing_rows_[k]) = p(off + static_cast<Eigen::Index>(k));
  return x;
}

Eigen::VectorXd MrModel::beta(const Eigen::VectorXd& p) const {
  const auto& L = layout_;
  const auto J = static_cast<Eigen::Index>(L.n_instruments);
  Eigen::VectorXd b(J);
  const double tau = std::exp(p(static_cast<Eigen::Index>(L.log_tau)));
  const double c2 = std::exp(p(static_cast<Eigen::Index>(L.log_c2)));
  for (Eigen::Index j = 0; j < J; ++j) {
    const double lambda = std::exp(p(static_cast<Eigen::Index>(L.log_lambda) + j));
    b(j) = p(static_cast<Eigen::Index>(L.beta_raw) + j) * horseshoe_effective_scale(lambda, tau, c2);
  }
  return b;
}

Eigen::VectorXd MrModel::initial_point(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  Eigen::VectorXd p(static_cast<Eigen::Index>(layout_.dimension));
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = unif(rng);
  const auto& L = layout_;
  auto zero = [&](std::size_t off, std::size_t n) {
    p.segment(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(n)).setZero();
  };
  zero(L.log_lambda, L.n_instruments);
  zero(L.log_tau, 1);
  zero(L.log_c2, 1);
  zero(L.log_b_alpha, 1);
  zero(L.log_sigma_x, 1);
  if (L.has_log_liability_scale) zero(L.log_liability_scale, 1);
  return p;
}

std::vector<std::string> MrModel::summary_names() const {
  const auto& L = layout_;
  std::vector<std::string> out{"theta", "odds_ratio"};
  auto block = [&](const char* name, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(std::string(name) + "[" + std::to_string(i + 1) + "]");
  };
  block("alpha", L.n_instruments);
  block("beta", L.n_instruments);
  block("lambda", L.n_instruments);
  out.insert(out.end(), {"tau", "c2", "b_alpha", "delta_x", "sigma_x", "omega_y"});
  block("gamma_x", L.n_families);
  block("gamma_y", L.n_families);
  if (L.has_log_liability_scale) out.push_back("liability_scale");
  return out;
}

Eigen::VectorXd MrModel::summary_values(const Eigen::VectorXd& p) const {
  const auto& L = layout_;
  const auto J = static_cast<Eigen::Index>(L.n_instruments);
  const auto M = static_cast<Eigen::Index>(L.n_families);
  auto at = [](std::size_t o) { return static_cast<Eigen::Index>(o); };
  Eigen::VectorXd v(static_cast<Eigen::Index>(summary_names().size()));
  Eigen::Index k = 0;
  const double theta = p(at(L.theta));
  v(k++) = theta;
  v(k++) = cor_from_theta(theta, 0.0, 1.0);
  v.segment(k, J) = p.segment(at(L.alpha), J);
  k += J;
  v.segment(k, J) = beta(p);
  k += J;
  v.segment(k, J) = p.segment(at(L.log_lambda), J).array().exp();
  k += J;
  v(k++) = std::exp(p(at(L.log_tau)));
  v(k++) = std::exp(p(at(L.log_c2)));
  v(k++) = std::exp(p(at(L.log_b_alpha)));
  v(k++) = p(at(L.delta_x));
  v(k++) = std::exp(p(at(L.log_sigma_x)));
  v(k++) = p(at(L.omega_y));
  v.segment(k, M) = p.segment(at(L.gamma_x), M);
  k += M;
  v.segment(k, M) = p.segment(at(L.gamma_y), M);
  k += M;
  if (L.has_log_liability_scale) v(k++) = liability_scale(p);
  return v;
}

Eigen::VectorXd impute_missing(const Eigen::VectorXd& x_missing_values, const Dataset& ds) {
  Eigen::VectorXd x = ds.x;
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!ds.x_missing[i]) continue;
    if (k >= x_missing_values.size()) {
      throw Error("bayes_model.dimension_mismatch", "too few imputed exposure values");
    }
    x(static_cast<Eigen::Index>(i)) = x_missing_values(k++);
  }
  if (k != x_missing_values.size()) throw Error("bayes_model.dimension_mismatch", "too many imputed exposure values");
  return x;
}

double cor_from_theta(double theta, double x0, double x1) { return std::exp(theta * (x1 - x0)); }

}  // namespace pedmr
