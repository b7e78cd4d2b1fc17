// causalprobe command line: suite generation and experiment runs.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "causalprobe/error.h"
#include "causalprobe/runner.h"
#include "causalprobe/suites.h"
#include "json.hpp"

using nlohmann::json;
using namespace causalprobe;

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;
};

void add_config_options(CLI::App *cmd, ConfigArgs &args) {
  cmd->add_option("-c,--config", args.path, "experiment config (JSON)");
  cmd->add_option("--set", args.overrides, "override one config key, e.g. probe.hidden_dim=64")
      ->take_all();
}

ExperimentConfig resolve(const ConfigArgs &args) {
  json j = json::object();
  if (!args.path.empty()) {
    std::ifstream in(args.path);
    if (!in) throw ConfigError("cannot open config " + args.path);
    try {
      j = json::parse(in);
    } catch (const json::parse_error &e) {
      throw ConfigError("config " + args.path + " is not valid JSON: " + e.what());
    }
  }
  for (const auto &o : args.overrides) apply_override(j, o);
  return config_from_json(j);
}

int fail(const std::string &kind, const std::string &message) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
  return 1;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Causal probing with dropout probes"};
  app.require_subcommand(1);

  std::string suite = "all";
  std::string out_path;
  auto *gen = app.add_subcommand("gen-suite", "write a template suite as JSON lines");
  gen->add_option("-s,--suite", suite, "suite id or 'all'");
  gen->add_option("-o,--out", out_path, "output file (default stdout)");

  ConfigArgs train_args, mine_args, causal_args, intervene_args, sweep_args, report_args;
  auto *train = app.add_subcommand("train-probes", "train one probe per (layer, dropout, seed)");
  add_config_options(train, train_args);
  auto *mine = app.add_subcommand("mine", "estimate redundancy per layer");
  add_config_options(mine, mine_args);
  auto *causal = app.add_subcommand("causal", "counterfactual causal effects on a suite");
  add_config_options(causal, causal_args);
  auto *intervene = app.add_subcommand("intervene", "inject gold parses and score answers");
  add_config_options(intervene, intervene_args);
  auto *sweep = app.add_subcommand("layer-sweep", "injection scores per layer and threshold");
  add_config_options(sweep, sweep_args);
  std::string report_dir;
  auto *report = app.add_subcommand("report", "print the summary tables of a run");
  add_config_options(report, report_args);
  report->add_option("-d,--dir", report_dir, "run directory (default: config output_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("usage", e.what());
  }

  try {
    if (*gen) {
      std::vector<std::string> ids = suite == "all" ? suite_ids() : std::vector<std::string>{suite};
      std::vector<Prompt> prompts;
      for (const auto &id : ids) {
        auto p = generate_suite(id);
        prompts.insert(prompts.end(), p.begin(), p.end());
      }
      if (out_path.empty()) {
        write_suite_jsonl(std::cout, prompts);
      } else {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw ConfigError("cannot write " + out_path);
        write_suite_jsonl(out, prompts);
      }
      std::cerr << "wrote " << prompts.size() << " prompts\n";
    } else if (*train) {
      const auto r = run_probe_sweep(resolve(train_args));
      std::cerr << "trained " << r.cells.size() << " probes\n";
    } else if (*mine) {
      for (const auto &r : run_mine(resolve(mine_args))) {
        std::cout << "layer " << r.layer << ": I(Z1,D)=" << r.report.i_z1
                  << " I(Z2,D)=" << r.report.i_z2 << " I(Z,D)=" << r.report.i_z
                  << " redundant=" << (r.report.redundant ? "true" : "false") << '\n';
      }
    } else if (*causal) {
      const auto r = run_causal_suite(resolve(causal_args));
      for (const auto &s : r.summary) {
        std::cout << "dropout " << s.dropout_rate << " threshold " << s.loss_threshold
                  << ": aggregate " << s.aggregate.mean << " +/- " << s.aggregate.std << '\n';
      }
    } else if (*intervene) {
      for (const auto &row : run_intervention(resolve(intervene_args))) {
        std::cout << "dropout " << row.dropout_rate << " threshold " << row.loss_threshold
                  << ": F1 " << row.original_f1.mean << " -> " << row.counterfactual_f1.mean
                  << ", EM " << row.original_exact.mean << " -> "
                  << row.counterfactual_exact.mean << '\n';
      }
    } else if (*sweep) {
      const auto r = run_layer_sweep(resolve(sweep_args));
      for (const auto &[alpha, layer] : r.best_layer) {
        std::cout << "dropout " << alpha << ": best layer " << layer << '\n';
      }
    } else if (*report) {
      const std::string dir = report_dir.empty() ? resolve(report_args).output_dir : report_dir;
      std::cout << summarize_reports(dir);
    }
  } catch (const Error &e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception &e) {
    return fail("internal", e.what());
  }
  return 0;
}
