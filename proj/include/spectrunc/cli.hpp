#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spectrunc/common.hpp"
#include "spectrunc/models.hpp"

namespace spectrunc::cli {

// Model descriptor. theta and d_f are row-major square matrices; theta feeds
// the torus commutation phases, d_f_re/d_f_im the internal Dirac block.
struct ModelConfig {
  std::string name = "circle";  // circle | toeplitz | nc_torus | almost_commutative
  int dimension = 2;            // nc_torus only
  std::vector<double> theta;    // nc_torus, d*d entries; empty means zero
  std::vector<double> d_f_re;   // almost_commutative, k*k entries
  std::vector<double> d_f_im;   // optional imaginary part, k*k entries

  bool operator==(const ModelConfig&) const = default;
};

// Declared acceptance check on one scalar of a job result. Passes when
// |x - target| <= max(abs_tol, rel_tol * |target|).
struct Assertion {
  std::string field = "value";
  double target = 0.0;
  double abs_tol = 0.0;
  double rel_tol = 0.0;

  bool operator==(const Assertion&) const = default;
};

struct JobConfig {
  std::string kind;  // weyl | truncated | log_mean | dixmier | weighted_dixmier
                     // | heat | frohlich | szego | widom | qe | timeavg
  std::string name;  // output stem; defaults to kind + index when empty
  std::string op;    // operator expression (first operator for widom)
  std::string op_b;  // widom second operator
  std::vector<double> lambda_ladder;
  std::vector<std::size_t> horizons;   // log_mean / dixmier checkpoints
  std::vector<double> t_ladder;        // heat / frohlich
  std::vector<double> time_ladder;     // timeavg
  std::vector<double> f_poly;          // szego: coefficients of x^1..x^p
  double s = 0.0;                      // weighted_dixmier order
  double beta = 0.0;                   // frohlich abscissa
  double d_override = 0.0;             // dixmier: 0 keeps the model dimension
  double lambda = 0.0;                 // timeavg cutoff
  std::size_t horizon = 0;             // timeavg diagonal horizon
  double drift_tol = 1e-2;
  std::optional<Assertion> check;

  bool operator==(const JobConfig&) const = default;
};

struct ExperimentConfig {
  int schema_version = 1;
  std::uint64_t seed = 0;  // feeds randomized property suites built on configs
  ModelConfig model;
  std::string output_dir;  // empty: nothing is written
  std::vector<JobConfig> jobs;

  bool operator==(const ExperimentConfig&) const = default;
};

// Serialization is total: every field is always emitted, so a config
// round-trips losslessly and re-serializes byte-identically.
nlohmann::json to_json(const ModelConfig& m);
nlohmann::json to_json(const Assertion& a);
nlohmann::json to_json(const JobConfig& j);
nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

std::shared_ptr<const models::SpectralModel> make_model(const ModelConfig& m);

struct JobResult {
  std::string name;
  std::string kind;
  nlohmann::json report;  // full structured result
  std::string csv;        // header plus one row per ladder point, no timestamps
  bool checked = false;
  bool passed = true;
  double check_value = 0.0;
};

struct RunResult {
  int exit_code = 0;  // 0, or 4 when a declared assertion fails
  nlohmann::json summary;
  std::vector<JobResult> jobs;
};

// Runs the jobs in order. Invalid configs and expressions raise
// std::invalid_argument, cap overruns raise ResourceLimitError; the tool maps
// those to exit codes 2 and 3. Assertion failures are recorded, not thrown.
RunResult run_experiment(const ExperimentConfig& cfg);

// Writes <stem>.csv per job plus summary.json under cfg.output_dir. The CSV
// starts with a "# written ..." comment line; the body below it is
// deterministic across runs.
void write_outputs(const ExperimentConfig& cfg, const RunResult& r);

// Random well-formed operator source over the model's generators, for
// parser round-trip suites.
std::string random_operator_source(std::mt19937_64& rng,
                                   const models::SpectralModel& model,
                                   int depth = 3);

}  // namespace spectrunc::cli
