#include "loccforge/experiments.hpp"
#include "loccforge/protocol_io.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace loccforge;

namespace {

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "results";
  std::optional<int> threads;
};

int run(ExperimentKind kind, const Args& args) {
  std::string text;
  ExperimentConfig config = load_config(args.config, kind, &text);
  if (args.seed) config.seed = *args.seed;
  if (args.threads) config.threads = *args.threads;
  config.validate();
  const ExperimentResult result = run_experiment(config);
  const OutputFiles files = write_outputs(config, text, result, args.out);
  std::cout << "wrote " << files.csv.string() << " (" << result.rows.size() << " rows), "
            << files.protocols.size() << " protocol documents, " << files.manifest.string() << '\n';
  if (!result.failures.empty()) {
    std::cout << result.failures.size() << " grid point(s) failed, see the manifest\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimize LOCC protocols on Stiefel manifolds and bound them with PPT relaxations"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Args args;
  const std::vector<std::pair<ExperimentKind, std::string>> commands = {
      {ExperimentKind::DistillAvg, "optimize the average distillation fidelity over a noise grid"},
      {ExperimentKind::DistillFid, "optimize the post-selected distillation fidelity over a noise grid"},
      {ExperimentKind::CoherentInfo, "block coherent information of GADC Choi states against the hashing value"},
      {ExperimentKind::Merge, "state merging on Haar-random tripartite pure states"},
      {ExperimentKind::PptBound, "PPT relaxation bounds over a noise grid, optionally checked against a results CSV"},
      {ExperimentKind::Timing, "wall times of CMPS optimization and the PPT SDP"},
  };
  for (const auto& [kind, help] : commands) {
    CLI::App* sub = app.add_subcommand(to_string(kind), help);
    sub->add_option("--config", args.config, "YAML experiment document")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", args.seed, "master seed, overrides the document");
    sub->add_option("--out", args.out, "output directory")->capture_default_str();
    sub->add_option("--threads", args.threads, "worker threads, overrides the document")->check(CLI::PositiveNumber);
    sub->callback([kind = kind, &args] {
      try {
        const int code = run(kind, args);
        if (code != 0) throw CLI::RuntimeError(code);
      } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        throw CLI::RuntimeError(2);
      } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        throw CLI::RuntimeError(2);
      } catch (const CLI::Error&) {
        throw;
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        throw CLI::RuntimeError(1);
      }
    });
  }

  CLI11_PARSE(app, argc, argv);
  return 0;
}
