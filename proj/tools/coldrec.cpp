#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "coldrec/cli/commands.hpp"
#include "coldrec/cli/runtime.hpp"
#include "coldrec/error.hpp"

namespace fs = std::filesystem;
using namespace coldrec;

namespace {

enum Exit { ok = 0, validation = 1, data_error = 2, training = 3 };

// Leftover "--key value" pairs become config overrides.
std::vector<std::pair<std::string, std::string>> overrides_from(const std::vector<std::string>& extra) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extra.size(); ++i) {
    const auto& key = extra[i];
    if (key.rfind("--", 0) != 0 || key.size() == 2) {
      throw ValidationError("unexpected argument '" + key + "' (overrides are --key value)");
    }
    if (const auto eq = key.find('='); eq != std::string::npos) {
      out.emplace_back(key.substr(2, eq - 2), key.substr(eq + 1));
      continue;
    }
    if (i + 1 >= extra.size()) throw ValidationError("override '" + key + "' needs a value");
    out.emplace_back(key.substr(2), extra[++i]);
  }
  return out;
}

std::vector<std::uint64_t> selected_seeds(const cli::ExperimentConfig& c, const std::optional<std::uint64_t>& seed) {
  if (seed) return {*seed};
  return c.seeds;
}

}  // namespace

int main(int argc, char** argv) {
  cli::keep_freed_memory();
  CLI::App app{"coldrec: sequential recommendation with content-anchored item embeddings"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> checkpoint;
  std::vector<double> values;
  std::vector<std::string> dirs;
  std::optional<std::string> report_out;
  std::string synth_out;
  cli::SynthConfig synth;

  auto with_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->allow_extras();
    return sub;
  };

  auto* prepare = with_config(app.add_subcommand("prepare", "preprocess, split and project content"));
  auto* train = with_config(app.add_subcommand("train", "train the configured variant for each seed"));
  train->add_option("--seed", seed, "train only this seed");
  auto* evaluate = with_config(app.add_subcommand("evaluate", "evaluate trained checkpoints on the test split"));
  evaluate->add_option("--seed", seed, "evaluate only this seed");
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file (default: the seed's run directory)");
  auto* sweep = with_config(app.add_subcommand("sweep", "train and evaluate frozen_delta over delta_max values"));
  sweep->add_option("--values", values, "delta_max values")->required()->delimiter(',');
  auto* knn = with_config(app.add_subcommand("knn", "evaluate the content KNN baseline"));
  auto* report = app.add_subcommand("report", "merge run directories into a mean±std table");
  report->add_option("dirs", dirs, "run directories")->required();
  report->add_option("--out", report_out, "also write report.csv and report_segments.csv here");
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset and a matching config");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--users", synth.num_users, "number of users");
  synth_cmd->add_option("--items", synth.num_items, "number of items");
  synth_cmd->add_option("--cold", synth.num_cold, "items released after the split boundary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? Exit::ok : Exit::validation;
  }

  try {
    auto& log = std::cerr;
    auto config = [&](CLI::App* sub) { return cli::load_config(config_path, overrides_from(sub->remaining())); };

    if (*prepare) {
      cli::cmd_prepare(config(prepare), log);
    } else if (*train) {
      const auto c = config(train);
      for (auto s : selected_seeds(c, seed)) cli::cmd_train(c, s, log);
    } else if (*evaluate) {
      const auto c = config(evaluate);
      if (checkpoint) {
        cli::cmd_evaluate(c, seed.value_or(0), fs::path(*checkpoint), log);
      } else {
        for (auto s : selected_seeds(c, seed)) cli::cmd_evaluate(c, s, std::nullopt, log);
      }
    } else if (*sweep) {
      cli::cmd_sweep(config(sweep), values, log);
    } else if (*knn) {
      cli::cmd_knn(config(knn), log);
    } else if (*report) {
      std::vector<fs::path> paths(dirs.begin(), dirs.end());
      cli::cmd_report(paths, report_out ? std::optional<fs::path>(*report_out) : std::nullopt, std::cout);
    } else if (*synth_cmd) {
      cli::cmd_synth(synth_out, synth, log);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::validation;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::data_error;
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::training;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::data_error;
  }
  return Exit::ok;
}
