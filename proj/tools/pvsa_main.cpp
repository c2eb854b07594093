#include "pvsa/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::string> out;
  std::optional<unsigned> workers;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment config (YAML)")->required();
  cmd->add_option("--seed", c.seed, "Master seed");
  cmd->add_option("--variant", c.variant, "Moment-matching variant")->check(CLI::IsMember({"paper", "symmetric"}));
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--workers", c.workers, "Worker threads (0 = all cores)");
}

pvsa::ExperimentConfig load(const Common& c) {
  auto cfg = pvsa::ExperimentConfig::load(c.config);
  if (c.seed) cfg.seed = c.seed;
  if (c.variant) cfg.variant = pvsa::parse_variant(*c.variant);
  if (c.out) cfg.output = *c.out;
  if (c.workers) cfg.workers = *c.workers;
  return cfg;
}

std::vector<pvsa::NodeId> to_nodes(const std::vector<int>& ids) {
  std::vector<pvsa::NodeId> out;
  for (int id : ids) out.push_back(pvsa::NodeId{id});
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic voltage sensitivity analysis experiments"};
  app.require_subcommand(1);

  Common common;
  std::optional<int> node;
  std::optional<char> phase;
  std::vector<int> actors;
  std::optional<std::size_t> samples;
  std::optional<double> pl;
  std::optional<std::string> loss;
  std::optional<int> runs;
  std::optional<int> reps;

  auto* validate = app.add_subcommand("validate", "Rician prediction against a load-flow Monte Carlo histogram");
  add_common(validate, common);
  validate->add_option("--node", node, "Observation node");
  validate->add_option("--phase", phase, "Observed phase (a, b or c)");
  validate->add_option("--actors", actors, "Actor nodes")->delimiter(',');
  validate->add_option("--samples", samples, "Monte Carlo samples");

  auto* predict = app.add_subcommand("predict", "Violation-count trajectory over the time grid");
  add_common(predict, common);
  predict->add_option("--pl", pl, "Penetration level");
  predict->add_option("--actors", actors, "Explicit actor nodes")->delimiter(',');
  predict->add_option("--loss", loss, "Generation-loss time HH:MM (all actors)");

  auto* montecarlo = app.add_subcommand("montecarlo", "Mean violation-count error over repeated runs");
  add_common(montecarlo, common);
  montecarlo->add_option("--runs", runs, "Runs per penetration level");

  auto* bench = app.add_subcommand("bench", "Sensitivity against load-flow timing");
  add_common(bench, common);
  bench->add_option("--reps", reps, "Timed repetitions (>= 30)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? pvsa::kExitOk : pvsa::kExitConfig;
  }

  return pvsa::guarded(
      [&]() -> int {
        auto cfg = load(common);
        if (app.got_subcommand(validate)) {
          if (node) cfg.validate.node = pvsa::NodeId{*node};
          if (phase) cfg.validate.phase = pvsa::phase_from_char(*phase);
          if (!actors.empty()) cfg.validate.actors = to_nodes(actors);
          if (samples) cfg.validate.samples = *samples;
          return pvsa::cmd_validate_node(cfg, std::cerr);
        }
        if (app.got_subcommand(predict)) {
          if (pl) cfg.penetration_level = *pl;
          if (!actors.empty()) cfg.actor_nodes = to_nodes(actors);
          if (loss) cfg.loss = pvsa::GenerationLossEvent{pvsa::TimeOfDay::parse(*loss), {}};
          return pvsa::cmd_predict(cfg, std::cerr);
        }
        if (app.got_subcommand(montecarlo)) {
          if (runs) cfg.montecarlo.runs = *runs;
          return pvsa::cmd_montecarlo(cfg, std::cerr);
        }
        if (reps) cfg.bench.repetitions = *reps;
        return pvsa::cmd_bench(cfg, std::cerr);
      },
      std::cerr);
}
