#include "pedmr/data.hpp"

#include "test_util.hpp"

#include <cmath>

using namespace pedmr;

namespace {

Pedigree trio() {
  auto in = text("F1 A 0 0 1\nF1 B 0 0 2\nF1 C A B 2\n");
  return parse_pedigree(in);
}

double mean_observed(const Dataset& ds) {
  double s = 0;
  int n = 0;
  for (Eigen::Index i = 0; i < ds.x.size(); ++i)
    if (!ds.x_missing[static_cast<std::size_t>(i)]) {
      s += ds.x(i);
      ++n;
    }
  return s / n;
}

double sd_observed(const Dataset& ds) {
  const double m = mean_observed(ds);
  double s = 0;
  int n = 0;
  for (Eigen::Index i = 0; i < ds.x.size(); ++i)
    if (!ds.x_missing[static_cast<std::size_t>(i)]) {
      s += (ds.x(i) - m) * (ds.x(i) - m);
      ++n;
    }
  return std::sqrt(s / (n - 1));
}

Dataset small(std::vector<double> x, std::vector<bool> miss, std::vector<double> y) {
  Dataset ds;
  const auto n = static_cast<Eigen::Index>(x.size());
  ds.x = Eigen::Map<Eigen::VectorXd>(x.data(), n);
  ds.y = Eigen::Map<Eigen::VectorXd>(y.data(), n);
  ds.x_missing = miss;
  ds.z.resize(n, 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    ds.ids.push_back("i" + std::to_string(i));
    ds.family.push_back(0);
    if (miss[static_cast<std::size_t>(i)]) ds.x(i) = NAN;
  }
  ds.family_labels = {"F"};
  return ds;
}

}  // namespace

TEST_CASE("load wide genotypes with one missing exposure") {
  auto geno = text("variant_id chrom pos A B C\nrs1 1 100 0 1 2\nrs2 1 200 2 2 1\n");
  auto pheno = text("id,Y,X,sex\nA,0,1.5,1\nB,1,,2\nC,0,-0.5,2\n");
  const Dataset ds = load_dataset(geno, pheno, trio());
  REQUIRE(ds.size() == 3);
  CHECK(ds.n_variants() == 2);
  CHECK(ds.x_missing == std::vector<bool>{false, true, false});
  CHECK(ds.n_missing() == 1);
  CHECK(ds.z(2, 0) == 2.0);
  CHECK(ds.z(0, 1) == 2.0);
  CHECK(ds.x(0) == 1.5);
  CHECK(std::isnan(ds.x(1)));
  REQUIRE(ds.sex.has_value());
  CHECK((*ds.sex)(0) == 0.0);
  CHECK((*ds.sex)(1) == 1.0);
  CHECK(ds.family == std::vector<int>{0, 0, 0});
  CHECK(ds.variants[1].pos == 200);
}

TEST_CASE("long genotypes and row order follows pedigree") {
  auto geno = text("variant_id chrom pos id dose\nrs1 2 5 C 1\nrs1 2 5 A 0\nrs1 2 5 B 2\n");
  auto pheno = text("C 1 NA 0\nA 0 3 0\nB 0 4 0\n");
  const Dataset ds = load_dataset(geno, pheno, trio());
  CHECK(ds.ids == std::vector<std::string>{"A", "B", "C"});
  CHECK(ds.z(0, 0) == 0.0);
  CHECK(ds.z(2, 0) == 1.0);
  CHECK(ds.x_missing == std::vector<bool>{false, false, true});
  // sex comes from the pedigree when the phenotype file leaves it unknown
  CHECK(ds.sex.has_value());
}

TEST_CASE("validation errors") {
  auto ped = trio();
  CHECK(error_code([&] {
          auto g = text("variant_id chrom pos A B C\nrs1 1 100 0 3 2\n");
          auto p = text("A 0 1\nB 0 2\nC 0 3\n");
          load_dataset(g, p, ped);
        }) == "data.bad_dose");
  CHECK(error_code([&] {
          auto g = text("variant_id chrom pos A B C\nrs1 1 100 0 1 2\n");
          auto p = text("A 0 1\nB 0 2\nZ 0 3\n");
          load_dataset(g, p, ped);
        }) == "data.id_mismatch");
  CHECK(error_code([&] {
          auto g = text("variant_id,chrom,pos,A,B,C\nrs1,1,100,0,1,2\n");
          auto p = text("A,0,1\nB,,2\nC,0,3\n");
          load_dataset(g, p, ped);
        }) == "data.missing_outcome");
  CHECK(error_code([&] {
          auto g = text("variant_id,chrom,pos,A,B,C\nrs1,1,100,0,,2\n");
          auto p = text("A,0,1\nB,0,2\nC,0,3\n");
          load_dataset(g, p, ped);
        }) == "data.missing_genotype");
}

TEST_CASE("standardize observed (1,2,3)") {
  const Dataset ds = standardize_exposure(small({1, 2, 3}, {false, false, false}, {0, 0, 0}));
  CHECK(ds.x(0) == doctest::Approx(-1.0));
  CHECK(ds.x(1) == doctest::Approx(0.0));
  CHECK(ds.x(2) == doctest::Approx(1.0));
  CHECK(std::abs(mean_observed(ds)) < 1e-10);
  CHECK(std::abs(sd_observed(ds) - 1.0) < 1e-10);
  CHECK(ds.raw_exposure()(2) == doctest::Approx(3.0));
}

TEST_CASE("standardize errors") {
  CHECK(error_code([] { standardize_exposure(small({5, 5, 5}, {false, false, false}, {0, 0, 0})); }) ==
        "data.zero_variance");
  CHECK(error_code([] { standardize_exposure(small({1, 2}, {true, true}, {0, 0})); }) == "data.all_missing");
}

TEST_CASE("standardize uses observed entries only") {
  const Dataset ds = standardize_exposure(small({0, 10, 99}, {false, false, true}, {0, 0, 0}));
  // mean 5, sd sqrt(50)
  CHECK(ds.x(0) == doctest::Approx(-5.0 / std::sqrt(50.0)));
  CHECK(ds.x(1) == doctest::Approx(5.0 / std::sqrt(50.0)));
  CHECK(std::isnan(ds.x(2)));
  CHECK(ds.x_center == doctest::Approx(5.0));
  CHECK(ds.x_scale == doctest::Approx(std::sqrt(50.0)));
}

TEST_CASE("standardize is idempotent") {
  const Dataset once = standardize_exposure(small({0.3, 7.1, -2.0, 4.4}, {false, false, false, true}, {0, 0, 0, 0}));
  const Dataset twice = standardize_exposure(once);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(std::abs(once.x(i) - twice.x(i)) < 1e-12);
  for (Eigen::Index i = 0; i < 3; ++i)
    CHECK(twice.raw_exposure()(i) == doctest::Approx(std::vector<double>{0.3, 7.1, -2.0}[static_cast<std::size_t>(i)]));
}

TEST_CASE("mask exposure in cases") {
  const Dataset a = mask_exposure_in_cases(small({1, 2, 3}, {false, false, false}, {0, 1, 0}));
  CHECK(a.x_missing == std::vector<bool>{false, true, false});
  const Dataset b = mask_exposure_in_cases(small({1, 2, 3}, {false, true, false}, {0, 0, 0}));
  CHECK(b.x_missing == std::vector<bool>{false, true, false});
  const Dataset c = mask_exposure_in_cases(small({1, 2, 3}, {false, false, false}, {1, 1, 1}));
  CHECK(c.n_missing() == 3);
  CHECK(error_code([&] { standardize_exposure(c); }) == "data.all_missing");
}

TEST_CASE("written files load back") {
  auto geno = text("variant_id chrom pos A B C\nrs1 1 100 0 1 2\nrs2 1 200 2 2 1\n");
  auto pheno = text("id,Y,X,sex\nA,0,1.5,1\nB,1,,2\nC,0,-0.5,2\n");
  const Pedigree ped = trio();
  const Dataset ds = standardize_exposure(load_dataset(geno, pheno, ped));
  std::ostringstream g, p, pd;
  write_genotypes(g, ds);
  write_phenotypes(p, ds);
  write_pedigree(pd, ped);
  auto gi = text(g.str()), pi = text(p.str()), pdi = text(pd.str());
  const Pedigree ped2 = parse_pedigree(pdi);
  const Dataset back = load_dataset(gi, pi, ped2);
  CHECK(back.ids == ds.ids);
  CHECK((back.z - ds.z).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.x_missing == ds.x_missing);
  CHECK(back.x(0) == doctest::Approx(1.5));
  CHECK(back.x(2) == doctest::Approx(-0.5));
}

TEST_CASE("variant and row selection") {
  auto geno = text("variant_id chrom pos A B C\nrs1 1 100 0 1 2\nrs2 1 200 2 2 1\n");
  auto pheno = text("A 0 1 1\nB 1 2 2\nC 0 3 2\n");
  const Dataset ds = load_dataset(geno, pheno, trio());
  const Dataset v = ds.select_variants({"rs2"});
  CHECK(v.n_variants() == 1);
  CHECK(v.z(2, 0) == 1.0);
  CHECK(error_code([&] { ds.select_variants({"nope"}); }) == "data.unknown_variant");
  const Dataset r = ds.select_rows({true, false, true});
  CHECK(r.ids == std::vector<std::string>{"A", "C"});
  CHECK(r.y(1) == 0.0);
}
