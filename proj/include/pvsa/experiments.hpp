#pragma once

#include "pvsa/pvsa.hpp"
#include "pvsa/scenario.hpp"
#include "pvsa/validation.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pvsa {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitNumerical = 2, kExitBound = 3 };

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  std::filesystem::path feeder;
  std::filesystem::path pack;
  std::filesystem::path output = "out";
  std::optional<std::uint64_t> seed;
  Variant variant = Variant::symmetric;
  CdfMode cdf_mode = CdfMode::rician;
  unsigned workers = 0;

  TimeGrid grid;
  double penetration_level = 0.3;
  std::size_t n_actors = 14;
  std::vector<NodeId> actor_nodes;    // overrides random allocation when non-empty
  std::vector<std::string> profiles;  // pack profile names; empty = first profile of the pack
  VoltageLimits limits;
  double threshold = 0.5;
  std::optional<GenerationLossEvent> loss;

  struct Validate {
    NodeId node{22};
    Phase phase = Phase::a;
    std::vector<NodeId> actors{NodeId{2}, NodeId{11}, NodeId{20}, NodeId{29}};
    double penetration_level = 0.3;
    TimeOfDay time{13 * 60};
    std::size_t samples = 10000;
    std::size_t bins = 50;
    double js_bound = 0.05;
  } validate;

  struct MonteCarlo {
    int runs = 100;
    std::vector<double> levels{0.3, 0.7};
    std::size_t actors = 20;
    std::optional<double> error_bound;  // percent
  } montecarlo;

  struct Bench {
    int repetitions = 30;
    NodeId observation{22};
    std::vector<NodeId> actors{NodeId{2}, NodeId{11}, NodeId{20}, NodeId{29}};
    std::vector<std::size_t> chain_sizes{37, 74, 148};
  } bench;

  /// Reads a YAML experiment file; relative paths are resolved against its directory.
  static ExperimentConfig load(const std::filesystem::path& path);
  void check() const;
  std::uint64_t require_seed() const;
};

Variant parse_variant(std::string_view s);
std::string_view variant_name(Variant v);

struct ValidationOutcome {
  RicianPrediction prediction;            // configured variant
  RicianPrediction symmetric;
  RicianPrediction paper_verbatim;
  MonteCarloSamples samples;
  Histogram histogram;
  std::vector<double> theoretical;        // bin masses of `prediction`
  double js = 0.0;
  double js_symmetric = 0.0;
  double js_paper_verbatim = 0.0;
  bool degenerate = false;                // zero-variance prediction and samples
  double mc_mean = 0.0;
  double mc_std = 0.0;
};
ValidationOutcome run_validation(const ExperimentConfig& cfg);

struct PredictionOutcome {
  PenetrationConfig penetration;
  ViolationTrajectory trajectory;
  ErrorReport error;
  std::vector<std::pair<TimeOfDay, double>> net_power;
};
PredictionOutcome run_prediction(const ExperimentConfig& cfg);

struct MonteCarloRow {
  int run = 0;
  double penetration_level = 0.0;
  std::uint64_t seed = 0;
  ErrorReport error;
};
struct MonteCarloOutcome {
  std::vector<MonteCarloRow> rows;
  std::vector<std::pair<double, double>> mean_error;  // (pl, mean error %)
};
MonteCarloOutcome run_montecarlo(const ExperimentConfig& cfg);

struct BenchRow {
  std::string feeder;
  std::size_t nodes = 0;
  BenchmarkResult result;
};
std::vector<BenchRow> run_bench(const ExperimentConfig& cfg);

/// Chain feeder carrying the total load of `like` over the same total impedance: every segment and
/// spot load is the average one of `like`, scaled by like.node_count() / n_nodes.
Feeder chain_like(const Feeder& like, std::size_t n_nodes);

/// Commands: compute, write CSV files through a staging directory, return an exit code. Failures
/// are reported on `diag` and leave no output behind.
int cmd_validate_node(const ExperimentConfig& cfg, std::ostream& diag);
int cmd_predict(const ExperimentConfig& cfg, std::ostream& diag);
int cmd_montecarlo(const ExperimentConfig& cfg, std::ostream& diag);
int cmd_bench(const ExperimentConfig& cfg, std::ostream& diag);

/// Runs `body`, mapping configuration errors to 1 and numerical failures to 2.
int guarded(const std::function<int()>& body, std::ostream& diag);

/// Files are written under a hidden staging directory inside `dir` and renamed into place by
/// commit(); an uncommitted stage is removed on destruction.
class StagedOutput {
 public:
  explicit StagedOutput(std::filesystem::path dir);
  ~StagedOutput();
  StagedOutput(const StagedOutput&) = delete;
  StagedOutput& operator=(const StagedOutput&) = delete;

  std::filesystem::path path(const std::string& name);
  void commit();

 private:
  std::filesystem::path dir_;
  std::filesystem::path stage_;
  std::vector<std::string> names_;
  bool committed_ = false;
};

std::string csv_field(std::string_view s);

}  // namespace pvsa
