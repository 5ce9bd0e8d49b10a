#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "spectrunc/cli.hpp"
#include "spectrunc/expr.hpp"
#include "spectrunc/models.hpp"

using namespace spectrunc;
using namespace spectrunc::cli;

namespace {

ExperimentConfig sample_config() {
  ExperimentConfig c;
  c.seed = 42;
  c.model.name = "nc_torus";
  c.model.dimension = 2;
  c.model.theta = {0.0, 0.7, -0.7, 0.0};
  c.output_dir = "";
  JobConfig j;
  j.kind = "truncated";
  j.name = "torus_word";
  j.op = "adj(u(1, 0)) * u(1, 0)";
  j.lambda_ladder = {16, 32, 64};
  Assertion a;
  a.field = "value";
  a.target = 1.0;
  a.abs_tol = 1e-9;
  j.check = a;
  c.jobs.push_back(j);
  return c;
}

double last_csv_value(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  // the operator cell may hold quoted commas; the trailing four cells
  // (value_re, value_im, drift, measurable) never do, so count from the end
  std::vector<std::string> cells;
  std::istringstream row(last);
  for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
  REQUIRE(cells.size() >= 4);
  return std::stod(cells[cells.size() - 4]);
}

}  // namespace

TEST_CASE("config serialization round-trips losslessly") {
  ExperimentConfig c = sample_config();
  auto j = to_json(c);
  ExperimentConfig back = config_from_json(j);
  CHECK(back == c);
  CHECK(to_json(back).dump() == j.dump());

  // defaulted fields re-serialize identically too
  ExperimentConfig d;
  CHECK(config_from_json(to_json(d)) == d);

  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> real(-4.0, 4.0);
  const char* kinds[] = {"weyl",     "truncated", "log_mean", "dixmier",
                         "widom",    "qe",        "szego",    "heat",
                         "frohlich", "timeavg",   "weighted_dixmier"};
  for (int iter = 0; iter < 50; ++iter) {
    ExperimentConfig r;
    r.seed = rng();
    r.model.name = iter % 2 ? "circle" : "almost_commutative";
    r.model.d_f_re = {1.0, real(rng), real(rng), -1.0};
    for (int q = 0; q < iter % 4; ++q) {
      JobConfig j;
      j.kind = kinds[rng() % 11];
      j.op = "id";
      for (int k = 0; k < 3; ++k) j.lambda_ladder.push_back(real(rng));
      j.horizons = {std::size_t(rng() % 1000), std::size_t(rng() % 1000)};
      j.s = real(rng);
      j.beta = real(rng);
      j.horizon = rng() % 500;
      if (rng() % 2) {
        Assertion a;
        a.field = "drift";
        a.target = real(rng);
        a.rel_tol = 0.5;
        j.check = a;
      }
      r.jobs.push_back(j);
    }
    auto jj = to_json(r);
    CHECK(config_from_json(jj) == r);
    CHECK(to_json(config_from_json(jj)).dump() == jj.dump());
  }

  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"schema_version", 2}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{
                      {"jobs", nlohmann::json::array({{{"op", "id"}}})}}),
                  std::invalid_argument);
}

TEST_CASE("model construction from descriptors") {
  ModelConfig circle;
  CHECK(make_model(circle)->name() == "circle");
  ModelConfig toep;
  toep.name = "toeplitz";
  CHECK(make_model(toep)->name() == "toeplitz");

  ModelConfig torus;
  torus.name = "nc_torus";
  torus.theta = {0.0, 0.5, -0.5, 0.0};
  auto t = make_model(torus);
  CHECK(t->dimension() == 2);

  ModelConfig ac;
  ac.name = "almost_commutative";
  ac.d_f_re = {1.0, 0.0, 0.0, -1.0};
  CHECK(make_model(ac)->name().find("almost") == 0);

  ModelConfig bad;
  bad.name = "klein_bottle";
  CHECK_THROWS_AS(make_model(bad), std::invalid_argument);
  torus.theta = {0.0, 0.5, -0.5};
  CHECK_THROWS_AS(make_model(torus), std::invalid_argument);
  ac.d_f_re = {1.0, 0.0, 0.0};
  CHECK_THROWS_AS(make_model(ac), std::invalid_argument);
}

TEST_CASE("run_experiment executes jobs and evaluates checks") {
  ExperimentConfig c = sample_config();
  RunResult r = run_experiment(c);
  CHECK(r.exit_code == 0);
  REQUIRE(r.jobs.size() == 1);
  CHECK(r.jobs[0].checked);
  CHECK(r.jobs[0].passed);
  CHECK(r.jobs[0].check_value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.summary["all_passed"] == true);
  CHECK(r.summary["results"].size() == 1);

  // determinism: the CSV body is byte-identical across runs
  RunResult r2 = run_experiment(c);
  CHECK(r2.jobs[0].csv == r.jobs[0].csv);

  // a failing declared assertion flips the exit code to 4
  c.jobs[0].check->target = 0.5;
  RunResult bad = run_experiment(c);
  CHECK(bad.exit_code == 4);
  CHECK(bad.summary["all_passed"] == false);

  // empty job list: zero results, success
  ExperimentConfig empty;
  RunResult re = run_experiment(empty);
  CHECK(re.exit_code == 0);
  CHECK(re.summary["results"].empty());

  // invalid expression and unknown kind are config errors
  ExperimentConfig broken = sample_config();
  broken.jobs[0].op = "u(1, 0";
  CHECK_THROWS_AS(run_experiment(broken), std::invalid_argument);
  broken.jobs[0].op = "id";
  broken.jobs[0].kind = "fourier";
  CHECK_THROWS_AS(run_experiment(broken), std::invalid_argument);

  // cutoff past the streaming cap surfaces as a resource-limit error
  ExperimentConfig huge = sample_config();
  huge.jobs[0].lambda_ladder = {2048, 4096};
  CHECK_THROWS_AS(run_experiment(huge), ResourceLimitError);
}

TEST_CASE("bundled szego config reproduces the symbol functional") {
  ExperimentConfig cfg = load_config(std::string(SPECTRUNC_CONFIG_DIR) +
                                     "/szego_toeplitz.json");
  CHECK(cfg.model.name == "toeplitz");
  RunResult r = run_experiment(cfg);
  CHECK(r.exit_code == 0);
  double v = last_csv_value(r.jobs[0].csv);
  CHECK(std::abs(v - 2.0) / 2.0 < 0.02);

  CHECK_THROWS_AS(load_config("/nonexistent/nowhere.json"),
                  std::invalid_argument);
}

TEST_CASE("write_outputs emits timestamp-insulated files") {
  namespace fs = std::filesystem;
  ExperimentConfig c = sample_config();
  c.jobs[0].lambda_ladder = {8, 16};
  fs::path dir = fs::temp_directory_path() / "spectrunc_cli_test_out";
  fs::remove_all(dir);
  c.output_dir = dir.string();

  RunResult r = run_experiment(c);
  write_outputs(c, r);
  CHECK(fs::exists(dir / "torus_word.csv"));
  CHECK(fs::exists(dir / "summary.json"));

  std::ifstream f(dir / "torus_word.csv");
  std::string first;
  std::getline(f, first);
  CHECK(first.rfind("# written ", 0) == 0);
  std::stringstream rest;
  rest << f.rdbuf();
  CHECK(rest.str() == r.jobs[0].csv);

  std::ifstream s(dir / "summary.json");
  nlohmann::json summary;
  s >> summary;
  CHECK(summary["all_passed"] == true);
  fs::remove_all(dir);
}

TEST_CASE("parser round-trip on randomized sources") {
  std::mt19937_64 rng(20260815);
  std::vector<std::shared_ptr<const models::SpectralModel>> zoo;
  zoo.push_back(models::make_circle());
  zoo.push_back(models::make_toeplitz());
  Eigen::MatrixXd theta(2, 2);
  theta << 0.0, 0.7, -0.7, 0.0;
  zoo.push_back(models::make_nc_torus(2, theta));
  Eigen::MatrixXcd df(2, 2);
  df << 1.0, 0.0, 0.0, -1.0;
  zoo.push_back(models::make_almost_commutative(df));

  for (int iter = 0; iter < 200; ++iter) {
    const auto& model = zoo[std::size_t(iter) % zoo.size()];
    std::string src = random_operator_source(rng, *model);
    CAPTURE(src);
    std::string once = expr::pretty(*expr::parse(src, *model));
    std::string twice = expr::pretty(*expr::parse(once, *model));
    CHECK(once == twice);
  }
}
