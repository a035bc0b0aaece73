#include "cli.hpp"

#include "test_util.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <random>

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("pedmr_cli_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::string& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

std::size_t count_prefix(const std::string& csv, const std::string& prefix) {
  std::size_t n = 0;
  std::istringstream in(csv);
  std::string l;
  while (std::getline(in, l)) n += l.rfind(prefix, 0) == 0;
  return n;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string l;
  while (std::getline(in, l)) out.push_back(l);
  return out;
}

// Header line followed by the first field of each data row.
std::string shape(const std::string& csv) {
  auto ls = lines(csv);
  std::string out = ls.at(0) + "\n";
  for (std::size_t i = 1; i < ls.size(); ++i) out += ls[i].substr(0, ls[i].find(',')) + "\n";
  return out;
}

int run(const std::vector<std::string>& args, std::string* log = nullptr) {
  std::ostringstream err;
  const int rc = pedmr::cli::run(args, err);
  if (log) *log = err.str();
  return rc;
}

const std::string kGolden = PEDMR_GOLDEN_DIR;

// Small scenario so the whole pipeline runs in seconds.
const char* kSmallScenario = R"({"families": 8, "n_instruments": 8, "theta": -0.7})";

struct Simulated {
  TempDir dir;
  std::vector<std::string> data;
  Simulated() {
    dump(dir / "scenario_in.json", kSmallScenario);
    REQUIRE(run({"simulate", "--config", dir / "scenario_in.json", "--seed", "11", "--out", dir / "sim"}) == 0);
    data = {"--pedigree", dir / "sim/pedigree.txt", "--genotypes", dir / "sim/genotypes.txt", "--phenotypes",
            dir / "sim/phenotypes.csv"};
  }
  std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail = {}) const {
    head.insert(head.end(), data.begin(), data.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  }
};

}  // namespace

TEST_CASE("kinship of a nuclear family") {
  TempDir d;
  dump(d / "ped.txt", "F1 dad 0 0 1\nF1 mom 0 0 2\nF1 kid1 dad mom 1\nF1 kid2 dad mom 2\n");
  REQUIRE(run({"kinship", "--pedigree", d / "ped.txt", "--out", d / "out"}) == 0);
  const auto ls = lines(slurp(d / "out/kinship.csv"));
  REQUIRE(ls.size() == 5);
  CHECK(ls[0] == "id,dad,mom,kid1,kid2");
  for (std::size_t i = 1; i <= 4; ++i) {
    std::vector<double> row;
    std::istringstream in(ls[i]);
    std::string f;
    std::getline(in, f, ',');
    while (std::getline(in, f, ',')) row.push_back(std::stod(f));
    REQUIRE(row.size() == 4);
    CHECK(row[i - 1] == doctest::Approx(0.5));
  }
  CHECK(ls[3] == "kid1,0.25,0.25,0.5,0.25");
}

TEST_CASE("errors are JSON on the log stream with module codes") {
  TempDir d;
  std::string log;
  CHECK(run({"kinship"}, &log) == 2);
  auto j = nlohmann::json::parse(lines(log).back());
  CHECK(j["level"] == "error");
  CHECK(j["code"] == "cli.usage");

  CHECK(run({"kinship", "--pedigree", d / "missing.txt", "--out", d / "out"}, &log) == 1);
  j = nlohmann::json::parse(lines(log).back());
  CHECK(j["code"] == "cli.missing_input");

  dump(d / "cyc.txt", "F a b 0 1\nF b a 0 2\n");
  CHECK(run({"kinship", "--pedigree", d / "cyc.txt", "--out", d / "out"}, &log) == 1);
  j = nlohmann::json::parse(lines(log).back());
  CHECK(std::string(j["code"]).rfind("pedigree.", 0) == 0);
  CHECK(!std::string(j["message"]).empty());

  CHECK(run({"nonsense"}, &log) == 2);
}

TEST_CASE("simulate, select, fit-freq and fit-bayes compose") {
  Simulated s;
  const auto& d = s.dir;
  for (const char* f : {"pedigree.txt", "genotypes.txt", "phenotypes.csv", "truth.json", "scenario.json"})
    CHECK(fs::exists(d.path / "sim" / f));

  REQUIRE(run(s.with({"select", "--p-max", "0.5", "--out", d / "sel"})) == 0);
  CHECK(fs::exists(d / "sel/scan.csv"));
  const auto inst = lines(slurp(d / "sel/instruments.txt"));
  REQUIRE(!inst.empty());

  REQUIRE(run(s.with({"fit-freq", "--instruments", d / "sel/instruments.txt", "--out", d / "ff"})) == 0);
  CHECK(shape(slurp(d / "ff/table1.csv")) == slurp(kGolden + "/table1_shape.txt"));
  const auto plot = slurp(d / "ff/egger_plot.csv");
  CHECK(count_prefix(plot, "point,") == inst.size());
  CHECK(count_prefix(plot, "line,") == 11);
  CHECK(fs::exists(d / "ff/summary_stats.csv"));

  std::string log;
  REQUIRE(run(s.with({"fit-bayes", "--instruments", d / "sel/instruments.txt", "--chains", "2", "--iterations",
                      "200", "--out", d / "fb"}),
              &log) == 0);
  CHECK(shape(slurp(d / "fb/table2.csv")) == slurp(kGolden + "/table2_shape.txt"));
  const auto diag = nlohmann::json::parse(slurp(d / "fb/diagnostics.json"));
  CHECK(diag["sampler"]["n_chains"] == 2);
  CHECK(diag["dimensions"]["instruments"] == inst.size());
  CHECK(diag["dimensions"]["missing_exposures"].get<int>() > 0);  // cases masked by default
  const auto draws = lines(slurp(d / "fb/draws.csv"));
  CHECK(draws.size() == 1 + 2 * 100);
  for (const auto& l : lines(log)) CHECK(nlohmann::json::parse(l)["level"] == "info");

  // --exclude drops a row from the Egger plot data.
  REQUIRE(run(s.with({"fit-freq", "--instruments", d / "sel/instruments.txt", "--exclude", inst.front(), "--out",
                      d / "ff_ex"})) == 0);
  CHECK(count_prefix(slurp(d / "ff_ex/egger_plot.csv"), "point,") == inst.size() - 1);
}

TEST_CASE("no-mask-cases keeps every observed exposure") {
  Simulated s;
  REQUIRE(run(s.with({"fit-bayes", "--no-mask-cases", "--chains", "1", "--iterations", "20", "--out",
                      s.dir / "fb"})) == 0);
  const auto diag = nlohmann::json::parse(slurp(s.dir / "fb/diagnostics.json"));
  CHECK(diag["dimensions"]["missing_exposures"] == 0);
}

TEST_CASE("every subcommand is byte-reproducible under a fixed seed") {
  Simulated s;
  const auto& d = s.dir;
  dump(d / "scenario_in.json", kSmallScenario);
  REQUIRE(run({"simulate", "--config", d / "scenario_in.json", "--seed", "11", "--out", d / "sim2"}) == 0);
  for (const char* f : {"pedigree.txt", "genotypes.txt", "phenotypes.csv", "truth.json", "scenario.json"})
    CHECK(slurp(d / (std::string("sim/") + f)) == slurp(d / (std::string("sim2/") + f)));

  REQUIRE(run({"simulate", "--config", d / "scenario_in.json", "--seed", "12", "--out", d / "sim3"}) == 0);
  CHECK(slurp(d / "sim/phenotypes.csv") != slurp(d / "sim3/phenotypes.csv"));

  for (const char* out : {"a", "b"}) {
    const std::string o = out;
    REQUIRE(run(s.with({"select", "--p-max", "0.5", "--out", d / ("sel_" + o)})) == 0);
    REQUIRE(run(s.with({"fit-freq", "--seed", "3", "--out", d / ("ff_" + o)})) == 0);
    REQUIRE(run(s.with({"fit-bayes", "--seed", "3", "--chains", "2", "--iterations", "60", "--out",
                        d / ("fb_" + o)})) == 0);
  }
  for (const char* f : {"sel_%/scan.csv", "sel_%/instruments.txt", "ff_%/table1.csv", "ff_%/egger_plot.csv",
                        "ff_%/summary_stats.csv", "fb_%/table2.csv", "fb_%/draws.csv", "fb_%/diagnostics.json"}) {
    std::string a = f, b = f;
    a.replace(a.find('%'), 1, "a");
    b.replace(b.find('%'), 1, "b");
    INFO(f);
    CHECK(slurp(d / a) == slurp(d / b));
  }
}

TEST_CASE("replicate writes per-estimator metrics") {
  TempDir d;
  dump(d / "rep.json", std::string(R"({"scenario": )") + kSmallScenario + R"(, "replicates": 2})");
  REQUIRE(run({"replicate", "--config", d / "rep.json", "--no-bayes", "--out", d / "rep"}) == 0);
  const auto rows = lines(slurp(d / "rep/replicates.csv"));
  CHECK(rows.size() == 1 + 2 * 11);
  const auto metrics = lines(slurp(d / "rep/metrics.csv"));
  CHECK(metrics.size() == 1 + 11);
  CHECK(metrics[0] == "estimator,n,mean_estimate,bias,abs_bias,rmse,covered,coverage");

  REQUIRE(run({"replicate", "--config", d / "rep.json", "--no-bayes", "--workers", "2", "--out", d / "rep2"}) == 0);
  CHECK(slurp(d / "rep/replicates.csv") == slurp(d / "rep2/replicates.csv"));
}
