#include "pedmr/instruments.hpp"
#include "pedmr/simulator.hpp"

#include "test_util.hpp"

#include <random>

using namespace pedmr;

namespace {

// Unrelated individuals: kinship 0.5 I.
KinshipMatrix founders_kinship(const std::vector<std::string>& ids) {
  KinshipMatrix k;
  k.order = ids;
  k.values = 0.5 * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(ids.size()));
  return k;
}

Dataset random_founders(int n, int j, double effect, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::binomial_distribution<int> bin(2, 0.3);
  Dataset ds;
  ds.family_labels = {"F"};
  ds.z.resize(n, j);
  ds.x.resize(n);
  ds.y = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sex(n);
  for (int i = 0; i < n; ++i) {
    ds.ids.push_back("i" + std::to_string(i));
    ds.family.push_back(0);
    for (int v = 0; v < j; ++v) ds.z(i, v) = bin(rng);
    sex(i) = static_cast<double>(rng() & 1U);
    ds.x(i) = effect * ds.z(i, 0) + 0.4 * sex(i) + nd(rng);
  }
  ds.sex = sex;
  ds.x_missing.assign(static_cast<std::size_t>(n), false);
  for (int v = 0; v < j; ++v) ds.variants.push_back({"v" + std::to_string(v), "1", 1000 * (v + 1)});
  return ds;
}

// Least squares X ~ 1 + sex + dose with the classical standard error.
std::pair<double, double> ols(const Dataset& ds, int j, bool with_sex) {
  const auto n = static_cast<Eigen::Index>(ds.size());
  Eigen::MatrixXd a(n, with_sex ? 3 : 2);
  a.col(0).setOnes();
  if (with_sex) a.col(1) = *ds.sex;
  a.col(a.cols() - 1) = ds.z.col(j);
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(ds.x);
  const Eigen::VectorXd r = ds.x - a * coef;
  const double s2 = r.squaredNorm() / static_cast<double>(n - a.cols());
  const Eigen::MatrixXd cov = s2 * (a.transpose() * a).inverse();
  return {coef(a.cols() - 1), std::sqrt(cov(a.cols() - 1, a.cols() - 1))};
}

Dataset dose_dataset(const std::vector<std::vector<double>>& cols, const std::vector<VariantInfo>& info) {
  Dataset ds;
  const auto n = static_cast<Eigen::Index>(cols.front().size());
  ds.z.resize(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (Eigen::Index i = 0; i < n; ++i) ds.z(i, static_cast<Eigen::Index>(c)) = cols[c][static_cast<std::size_t>(i)];
  ds.variants = info;
  return ds;
}

std::vector<double> repeat(std::vector<double> pattern, int times) {
  std::vector<double> out;
  for (int t = 0; t < times; ++t) out.insert(out.end(), pattern.begin(), pattern.end());
  return out;
}

}  // namespace

TEST_CASE("unrelated sample reproduces least squares") {
  const Dataset ds = random_founders(300, 3, 0.2, 11);
  const KinshipMatrix k = founders_kinship(ds.ids);
  const AssociationScan scan = marginal_scan(ds, k);
  REQUIRE(scan.records.size() == 3);
  for (int j = 0; j < 3; ++j) {
    const auto [b, se] = ols(ds, j, true);
    CHECK(std::abs(scan.records[static_cast<std::size_t>(j)].phi_hat - b) < 1e-8);
    CHECK(std::abs(scan.records[static_cast<std::size_t>(j)].se - se) < 1e-8);
    CHECK(scan.records[static_cast<std::size_t>(j)].n == 300);
  }
  ScanOptions no_sex;
  no_sex.adjust_sex = false;
  const auto s2 = marginal_scan(ds, k, no_sex);
  CHECK(std::abs(s2.records[0].phi_hat - ols(ds, 0, false).first) < 1e-8);
}

TEST_CASE("zero variance ratio on related sample is least squares") {
  ScenarioConfig cfg;
  cfg.families = 4;
  cfg.n_instruments = 4;
  cfg.seed = 3;
  const Scenario s = simulate_scenario(cfg);
  ScanOptions opts;
  opts.fixed_lambda = 0.0;
  const AssociationScan scan = marginal_scan(s.dataset, kinship(s.pedigree), opts);
  std::vector<bool> keep(s.dataset.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = s.dataset.y(static_cast<Eigen::Index>(i)) == 0.0;
  const Dataset controls = s.dataset.select_rows(keep);
  for (int j = 0; j < 4; ++j) {
    const auto [b, se] = ols(controls, j, true);
    CHECK(std::abs(scan.records[static_cast<std::size_t>(j)].phi_hat - b) < 1e-8);
    CHECK(std::abs(scan.records[static_cast<std::size_t>(j)].se - se) < 1e-8);
  }
}

TEST_CASE("scan uses disease-free individuals with observed exposure") {
  Dataset ds = random_founders(60, 1, 0.2, 5);
  for (int i = 0; i < 10; ++i) ds.y(i) = 1.0;
  ds.x_missing[20] = true;
  ds.x(20) = NAN;
  const auto scan = marginal_scan(ds, founders_kinship(ds.ids));
  CHECK(scan.records[0].n == 49);
  CHECK(std::isfinite(scan.records[0].phi_hat));
}

TEST_CASE("monomorphic variant is flagged") {
  Dataset ds = random_founders(50, 2, 0.2, 5);
  ds.z.col(1).setConstant(1.0);
  const auto scan = marginal_scan(ds, founders_kinship(ds.ids));
  CHECK(scan.records[1].monomorphic);
  CHECK(scan.records[1].p == 1.0);
  CHECK(scan.records[1].phi_hat == 0.0);
  CHECK(!scan.records[0].monomorphic);
  const auto set = select_instruments(scan, {"v0", "v1"}, 1.0);
  CHECK(set.ids == std::vector<std::string>{"v0"});
}

TEST_CASE("too few individuals") {
  const Dataset ds = random_founders(8, 1, 0.2, 5);
  CHECK(error_code([&] { marginal_scan(ds, founders_kinship(ds.ids)); }) == "instruments.too_few");
}

TEST_CASE("simulated per-allele effect is recovered") {
  const Dataset ds = random_founders(400, 1, 0.3, 99);
  const auto scan = marginal_scan(ds, founders_kinship(ds.ids));
  CHECK(std::abs(scan.records[0].phi_hat - 0.3) < 3.0 * scan.records[0].se);
}

TEST_CASE("related sample: profiled variance ratio lies on the grid and p in [0,1]") {
  ScenarioConfig cfg;
  cfg.families = 6;
  cfg.seed = 8;
  const Scenario s = simulate_scenario(cfg);
  const auto scan = marginal_scan(s.dataset, kinship(s.pedigree));
  for (const auto& r : scan.records) {
    CHECK(r.p >= 0.0);
    CHECK(r.p <= 1.0);
    CHECK(r.se > 0.0);
    CHECK(r.lambda >= 1e-4 * (1 - 1e-12));
    CHECK(r.lambda <= 1e4 * (1 + 1e-12));
  }
}

TEST_CASE("dose r2 of constructed vectors") {
  const Eigen::VectorXd a = Eigen::Vector4d(0, 1, 1, 2);
  const Eigen::VectorXd b = Eigen::Vector4d(0, 1, 2, 1);
  CHECK(dose_r2(a, b) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(dose_r2(a, a) == doctest::Approx(1.0));
  CHECK(dose_r2(a, Eigen::Vector4d(1, 1, 1, 1)) == 0.0);
}

TEST_CASE("ld pruning examples") {
  SUBCASE("identical vectors 1 kb apart") {
    const auto ds = dose_dataset({{0, 1, 2, 1}, {0, 1, 2, 1}}, {{"a", "1", 1000}, {"b", "1", 2000}});
    CHECK(ld_prune(ds, 0.2, 100000) == std::vector<std::string>{"a"});
  }
  SUBCASE("r2 0.25 pair outside the window") {
    const auto ds = dose_dataset({{0, 1, 1, 2}, {0, 1, 2, 1}}, {{"a", "1", 1000}, {"b", "1", 151000}});
    CHECK(ld_prune(ds, 0.2, 100000) == std::vector<std::string>{"a", "b"});
    // same pair inside the window is pruned
    const auto near = dose_dataset({{0, 1, 1, 2}, {0, 1, 2, 1}}, {{"a", "1", 1000}, {"b", "1", 51000}});
    CHECK(ld_prune(near, 0.2, 100000) == std::vector<std::string>{"a"});
  }
  SUBCASE("three variant chain keeps the ends") {
    const auto v1 = repeat({0, 0, 2, 2}, 3);
    const auto v3 = repeat({0, 2, 0, 2}, 3);
    std::vector<double> v2(v1.size());
    for (std::size_t i = 0; i < v1.size(); ++i) v2[i] = (v1[i] + v3[i]) / 2.0;
    const auto ds = dose_dataset({v1, v2, v3}, {{"s1", "1", 100}, {"s2", "1", 200}, {"s3", "1", 300}});
    const Eigen::VectorXd c1 = ds.z.col(0), c2 = ds.z.col(1), c3 = ds.z.col(2);
    CHECK(dose_r2(c1, c2) == doctest::Approx(0.5));
    CHECK(dose_r2(c2, c3) == doctest::Approx(0.5));
    CHECK(dose_r2(c1, c3) < 0.2);
    CHECK(ld_prune(ds, 0.2, 100000) == std::vector<std::string>{"s1", "s3"});
  }
  SUBCASE("different chromosomes never interact and order is genomic") {
    const auto ds = dose_dataset({{0, 1, 2, 1}, {0, 1, 2, 1}, {0, 1, 2, 1}},
                                 {{"c", "10", 5}, {"b", "2", 5}, {"a", "2", 5}});
    // chromosome 2 before 10; at equal positions the lower id is kept
    CHECK(ld_prune(ds, 0.2, 100000) == std::vector<std::string>{"a", "c"});
  }
  SUBCASE("threshold extremes") {
    const auto ds = dose_dataset({{0, 1, 2, 1}, {0, 1, 2, 1}, {2, 1, 0, 1}},
                                 {{"a", "1", 1}, {"b", "1", 2}, {"c", "1", 3}});
    CHECK(ld_prune(ds, 1.0 + 1e-9, 100000).size() == 3);
    CHECK(ld_prune(ds, 0.0, 100000).size() == 1);
  }
}

TEST_CASE("instrument selection") {
  AssociationScan scan;
  scan.records = {{"a", 0.1, 0.01, 1e-4, 10, false, 0}, {"b", 0.1, 0.1, 0.2, 10, false, 0}};
  CHECK(select_instruments(scan, {"a", "b"}).ids == std::vector<std::string>{"a"});
  scan.records[0].p = 0.01;
  CHECK(error_code([&] { select_instruments(scan, {"a", "b"}); }) == "instruments.empty");

  // brute force over ten candidates
  AssociationScan many;
  const std::vector<double> ps{1e-5, 0.3, 4e-3, 6e-3, 1e-3, 0.9, 5e-3, 2e-4, 0.05, 1e-6};
  std::vector<std::string> pruned;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    many.records.push_back({"v" + std::to_string(i), 0.1, 0.01, ps[i], 10, false, 0});
    if (i % 3 != 1) pruned.push_back("v" + std::to_string(i));
  }
  std::vector<std::string> expect;
  for (const auto& id : pruned)
    if (many.find(id)->p < 5e-3) expect.push_back(id);
  const auto set = select_instruments(many, pruned);
  CHECK(set.ids == expect);
  CHECK(set.ids.size() == 3);
}

TEST_CASE("instrument list round trip and scan csv") {
  InstrumentSet s;
  s.ids = {"rs1", "rs22"};
  std::ostringstream out;
  write_instrument_list(out, s);
  auto in = text(out.str());
  CHECK(read_instrument_list(in) == s.ids);

  AssociationScan scan;
  scan.records = {{"a", 0.5, 0.1, 0.01, 30, false, 1.0}};
  std::ostringstream csv;
  write_scan_csv(csv, scan);
  CHECK(csv.str().rfind("variant_id,phi_hat,se,p,n\n", 0) == 0);
}

TEST_CASE("two sided normal p") {
  CHECK(normal_two_sided_p(0.0) == 1.0);
  CHECK(normal_two_sided_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-12));
}
