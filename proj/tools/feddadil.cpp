#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "feddadil/commands.hpp"
#include "feddadil/config.hpp"
#include "feddadil/data_io.hpp"

using namespace feddadil;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> transport;
};

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.transport) cfg.transport = *o.transport == "stream" ? TransportKind::Stream : TransportKind::InProcess;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated dataset dictionary learning experiments"};
  app.require_subcommand(1);
  Options o;

  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "INI configuration file (defaults when omitted)")->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "Run directory")->required();
    cmd->add_option("--seed", o.seed, "Override run.seed");
  };

  auto* gen = app.add_subcommand("generate", "Write the domain data and hidden target labels");
  add_run_options(gen);

  auto* train = app.add_subcommand("train", "Run federated training");
  add_run_options(train);
  train->add_option("--transport", o.transport, "Override training.transport")
      ->check(CLI::IsMember({"inproc", "stream"}));

  auto* eval = app.add_subcommand("eval", "Score FedDaDiL-R, FedDaDiL-E and Source-Only on the target");
  eval->add_option("--out", o.out, "Run directory")->required();

  auto* drift = app.add_subcommand("drift", "Summarize atom-version drift of a run");
  drift->add_option("--out", o.out, "Run directory")->required();

  auto* fig = app.add_subcommand("figdata", "Per-round loss and drift series for runs that differ in E");
  fig->add_option("--out", o.out, "A run directory or a directory of runs")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      cmd_generate(resolve(o), o.out);
      std::printf("wrote %s\n", o.out.c_str());
    } else if (train->parsed()) {
      const auto outcome = cmd_train(resolve(o), o.out);
      const auto& first = outcome.history.front();
      const auto& last = outcome.history.back();
      std::printf("rounds %u  global loss %.6g -> %.6g\n", last.round, first.global_loss, last.global_loss);
    } else if (eval->parsed()) {
      const auto s = cmd_eval(o.out);
      std::printf("source_only %.4f  feddadil_r %.4f  feddadil_e %.4f\n", s.source_only, s.reconstruction, s.ensemble);
    } else if (drift->parsed()) {
      const auto s = cmd_drift(o.out);
      std::printf("mean drift rounds 1-10 %.6g  late slope %.6g\n", s.early_mean, s.late_slope);
    } else if (fig->parsed()) {
      for (const auto& f : cmd_figdata(o.out)) std::printf("%s\n", f.string().c_str());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
