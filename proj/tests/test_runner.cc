#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "causalprobe/error.h"
#include "causalprobe/runner.h"
#include "causalprobe/suites.h"
#include "doctest.h"
#include "test_util.h"

using namespace causalprobe;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json small_config(const std::string &dir) {
  return {{"model", {{"task", "nli"}, {"synthetic", {{"codebook_size", 16}, {"lexical_dims", 2}}}}},
          {"probe", {{"kind", "distance"}, {"hidden_dim", 16}, {"output_dim", 8}}},
          {"train", {{"max_epochs", 4}}},
          {"corpus", {{"synthetic_sentences", 60}, {"max_length", 10}}},
          {"layers", {2, 3}},
          {"dropout_rates", {0.0, 0.5}},
          {"seeds", {0, 1}},
          {"loss_thresholds", {0.1, 0.3}},
          {"suite", {{"id", "nli_coord"}, {"limit", 6}}},
          {"counterfactual", {{"step_size", 0.05}, {"max_steps", 400}}},
          {"output_dir", dir},
          {"threads", 4}};
}

SyntheticRedundantModel model_of(const ExperimentConfig &c) {
  SyntheticModelConfig s = c.model.synthetic;
  s.task = *c.model.task;
  return SyntheticRedundantModel(s);
}

// Saves a hand-built probe reading `copy` at every checkpoint path of the config.
void save_copy_probes(const ExperimentConfig &c, const SyntheticRedundantModel &model, int copy) {
  for (int layer : c.layers) {
    for (double alpha : c.dropout_rates) {
      for (auto seed : c.seeds) {
        const std::string path = probe_checkpoint_path(c, layer, alpha, seed);
        fs::create_directories(fs::path(path).parent_path());
        save_probe(path, testing::copy_probe(model, copy, alpha));
      }
    }
  }
}

int run_cli(const std::string &args, const fs::path &err) {
  const std::string cmd = std::string(CAUSALPROBE_CLI) + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config overlay is strict") {
  const ExperimentConfig defaults = config_from_json(json::object());
  CHECK(defaults.dropout_rates.size() == 10);
  CHECK(defaults.seeds.size() == 5);
  CHECK_THROWS_AS(config_from_json({{"layerz", {1}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"probe", {{"hidden", 3}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"layers", "four"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"probe", {{"kind", "tree"}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"layers", json::array()}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"loss_thresholds", {0.0}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"dropout_rates", {1.0}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"model", {{"kind", "external"}}}}), ConfigError);
}

TEST_CASE("overrides name their key") {
  json j = small_config("/tmp/x");
  apply_override(j, "probe.hidden_dim=32");
  apply_override(j, "layers=[1,5]");
  apply_override(j, "output_dir=runs/other");
  apply_override(j, "model.synthetic.causal_layer=3");
  const ExperimentConfig c = config_from_json(j);
  CHECK(c.hidden_dim == 32);
  CHECK(c.layers == std::vector<int>{1, 5});
  CHECK(c.output_dir == "runs/other");
  CHECK(c.model.synthetic.causal_layer == 3);
  CHECK_THROWS_AS(apply_override(j, "probe.hiden_dim=3"), ConfigError);
  CHECK_THROWS_AS(apply_override(j, "probe.hidden_dim"), ConfigError);
  CHECK_THROWS_AS(apply_override(j, "=3"), ConfigError);
}

TEST_CASE("config hash is canonical") {
  const ExperimentConfig a = config_from_json(small_config("/tmp/x"));
  const ExperimentConfig b = config_from_json(to_json(a));
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  ExperimentConfig c = a;
  c.step_size = 0.06;
  CHECK(config_hash(c) != config_hash(a));
}

TEST_CASE("probe sweep writes one checkpoint per cell and reruns identically") {
  testing::TempDir dir("sweep");
  const ExperimentConfig c = config_from_json(small_config(dir.str()));
  const ProbeSweepResult r = run_probe_sweep(c);
  REQUIRE(r.cells.size() == 8);
  std::size_t files = 0;
  for (const auto &entry : fs::directory_iterator(dir.path() / "probes")) {
    files += entry.path().extension() == ".probe";
  }
  CHECK(files == 8);
  for (const auto &cell : r.cells) CHECK(fs::exists(cell.checkpoint));
  const std::string first = slurp(dir.path() / "probe_metrics.tsv");
  const std::string first_ckpt = slurp(r.cells[5].checkpoint);

  ExperimentConfig serial = c;
  serial.threads = 1;
  run_probe_sweep(serial);
  CHECK(slurp(dir.path() / "probe_metrics.tsv") == first);
  CHECK(slurp(dir.path() / "probe_sweep.jsonl").find("\"seed\":1") != std::string::npos);
  CHECK(slurp(r.cells[5].checkpoint) == first_ckpt);

  const json manifest = json::parse(slurp(dir.path() / "manifests" / "train-probes.json"));
  CHECK(manifest["command"] == "train-probes");
  CHECK(manifest["seeds"] == json({0, 1}));
  CHECK(manifest["artifacts"].size() == 11);
  CHECK(manifest["config_hash"].get<std::string>() == config_hash(serial));
  CHECK(manifest["model_id"] == "synthetic-redundant-nli-0");
}

TEST_CASE("dropout lowers probe metrics on the synthetic model") {
  testing::TempDir dir("alpha");
  json j = small_config(dir.str());
  j["corpus"]["synthetic_sentences"] = 200;
  j["train"]["max_epochs"] = 30;
  j["layers"] = {3};
  j["seeds"] = {0, 1, 2};
  j["probe"]["hidden_dim"] = 64;
  j["probe"]["output_dim"] = 32;
  const ProbeSweepResult r = run_probe_sweep(config_from_json(j));
  double plain = 0.0, dropped = 0.0;
  for (const auto &cell : r.cells) {
    REQUIRE(cell.metrics.value);
    (cell.dropout_rate == 0.0 ? plain : dropped) += *cell.metrics.value / 3.0;
  }
  MESSAGE("spearman alpha=0 ", plain, " alpha=0.5 ", dropped);
  CHECK(plain >= dropped);
  CHECK(plain > 0.9);
}

TEST_CASE("missing corpus or checkpoint fails before any work") {
  testing::TempDir dir("missing");
  json j = small_config(dir.str());
  j["corpus"]["synthetic_sentences"] = 0;
  CHECK_THROWS_AS(run_probe_sweep(config_from_json(j)), ConfigError);
  j["corpus"]["train"] = (dir.path() / "nope.conllx").string();
  j["corpus"]["dev"] = j["corpus"]["train"];
  j["corpus"]["test"] = j["corpus"]["train"];
  CHECK_THROWS_AS(run_probe_sweep(config_from_json(j)), NotFoundError);
  CHECK_FALSE(fs::exists(dir.path() / "probes"));

  const ExperimentConfig c = config_from_json(small_config(dir.str()));
  const std::string expected = probe_checkpoint_path(c, 2, 0.0, 0);
  try {
    run_causal_suite(c);
    FAIL("no error");
  } catch (const NotFoundError &e) {
    CHECK(std::string(e.what()).find(expected) != std::string::npos);
  }
}

TEST_CASE("causal suite separates the copies") {
  testing::TempDir dir("causal");
  json j = small_config(dir.str());
  j["dropout_rates"] = {0.0};
  j["seeds"] = {0};
  j["loss_thresholds"] = {0.005, 0.02};
  j["counterfactual"]["max_steps"] = 2000;
  ExperimentConfig c = config_from_json(j);
  const auto model = model_of(c);

  save_copy_probes(c, model, 1);
  const CausalSuiteResult blind = run_causal_suite(c, model);
  REQUIRE(blind.cells.size() == 2);
  for (const auto &cell : blind.cells) {
    CHECK(cell.failures == 0);
    CHECK(std::abs(cell.report.aggregate) < 1e-9);
    CHECK(cell.report.per_layer.size() == 2);
  }

  save_copy_probes(c, model, 0);
  const CausalSuiteResult seeing = run_causal_suite(c, model);
  for (const auto &cell : seeing.cells) CHECK(cell.report.aggregate > 0.5);
  CHECK(seeing.summary.size() == 2);
  CHECK(fs::exists(dir.path() / "causal_nli_coord_curves.tsv"));
  const json manifest = json::parse(slurp(dir.path() / "manifests" / "causal.json"));
  CHECK(manifest["artifacts"].size() == 3);

  c.layers = {3};
  c.suite_limit = 1;
  const CausalSuiteResult single = run_causal_suite(c, model);
  REQUIRE(single.cells.size() == 2);
  CHECK(single.cells[0].report.per_layer.size() == 1);
  CHECK(single.cells[0].report.per_layer.count(3) == 1);
}

TEST_CASE("divergent counterfactuals become failure rows") {
  testing::TempDir dir("diverge");
  json j = small_config(dir.str());
  j["dropout_rates"] = {0.0};
  j["seeds"] = {0};
  j["layers"] = {3};
  j["loss_thresholds"] = {0.01, 0.02};
  j["counterfactual"]["step_size"] = 1e300;
  const ExperimentConfig c = config_from_json(j);
  const auto model = model_of(c);
  save_copy_probes(c, model, 0);
  const CausalSuiteResult r = run_causal_suite(c, model);
  CHECK(r.cells[0].failures == 6);
  std::istringstream lines(slurp(dir.path() / "causal_nli_coord.jsonl"));
  std::size_t rows = 0;
  for (std::string line; std::getline(lines, line);) {
    const json rec = json::parse(line);
    CHECK(rec["status"] == "diverged");
    CHECK(rec["outcome_a"].is_null());
    ++rows;
  }
  CHECK(rows == 12);
  const std::string summary = slurp(dir.path() / "causal_nli_coord_summary.tsv");
  CHECK(summary.find("inf") == std::string::npos);
}

TEST_CASE("injection with the gold parse") {
  testing::TempDir dir("inject");
  json j = small_config(dir.str());
  j["model"]["task"] = "qa_span";
  j["suite"] = {{"id", "qa_intervene"}, {"limit", 24}};
  j["dropout_rates"] = {0.0, 0.5};
  j["seeds"] = {0};
  j["loss_thresholds"] = {0.005, 0.01, 0.02};
  j["counterfactual"]["max_steps"] = 2000;
  j["intervention_layer"] = 4;
  ExperimentConfig c = config_from_json(j);
  c.layers = {4};
  const auto model = model_of(c);
  save_copy_probes(c, model, 0);

  const auto rows = run_intervention(c, model);
  REQUIRE(rows.size() == 6);
  for (const auto &row : rows) {
    CHECK(row.layer == 4);
    CHECK(row.counterfactual_exact.mean == 100.0);
    CHECK(row.counterfactual_f1.mean == 100.0);
    CHECK(row.original_exact.mean < 100.0);
  }
  CHECK(fs::exists(dir.path() / "intervene_qa_intervene.tsv"));

  c.max_steps = 0;
  for (const auto &row : run_intervention(c, model)) {
    CHECK(row.counterfactual_f1.mean == row.original_f1.mean);
    CHECK(row.counterfactual_exact.mean == row.original_exact.mean);
  }
}

TEST_CASE("layer sweep finds the causal layer") {
  testing::TempDir dir("sweep-layers");
  json j = small_config(dir.str());
  j["model"]["task"] = "qa_span";
  j["model"]["synthetic"]["causal_layer"] = 5;
  j["suite"] = {{"id", "qa_intervene_val"}, {"limit", 16}};
  j["dropout_rates"] = {0.0, 0.4};
  j["seeds"] = {0};
  j["loss_thresholds"] = {0.005, 0.01, 0.02, 0.03};
  j["counterfactual"]["max_steps"] = 2000;
  j["layers"] = {1, 2, 3, 4, 5, 6, 7};
  const ExperimentConfig c = config_from_json(j);
  const auto model = model_of(c);
  save_copy_probes(c, model, 0);
  const LayerSweepResult r = run_layer_sweep(c, model);
  CHECK(r.rows.size() == 56);
  for (double alpha : {0.0, 0.4}) {
    CHECK(std::count_if(r.rows.begin(), r.rows.end(),
                        [&](const InterventionRow &row) { return row.dropout_rate == alpha; }) == 28);
    CHECK(r.best_layer.at(alpha) == 5);
  }
  const std::string first = slurp(dir.path() / "layer_sweep_qa_intervene_val.tsv");
  run_layer_sweep(c, model);
  CHECK(slurp(dir.path() / "layer_sweep_qa_intervene_val.tsv") == first);
}

TEST_CASE("redundancy runs write per-layer records") {
  testing::TempDir dir("mine");
  json j = small_config(dir.str());
  j["layers"] = {2};
  j["mine"] = {{"epochs", 3}, {"hidden_width", 16}, {"encoder_width", 8}, {"max_tokens", 300}};
  const ExperimentConfig c = config_from_json(j);
  const auto out = run_mine(c);
  REQUIRE(out.size() == 1);
  CHECK(out[0].tokens >= 300);
  const json rec = json::parse(slurp(dir.path() / "mine.jsonl"));
  CHECK(rec["model_id"] == "synthetic-redundant-nli-0");
  CHECK(rec["layer"] == 2);
  CHECK(rec.contains("redundant"));
  CHECK(summarize_reports(dir.str()).find("mine") != std::string::npos);
}

TEST_CASE("embedding cache returns identical sets") {
  testing::TempDir dir("cache");
  const ExperimentConfig c = config_from_json(small_config(dir.str()));
  const auto model = model_of(c);
  const auto corpus = synthetic_corpus(10, 4, 8, 1);
  ::setenv("CAUSALPROBE_CACHE_DIR", dir.str().c_str(), 1);
  const LabeledSet fresh = embed_corpus(model, corpus, 2);
  const LabeledSet cached = embed_corpus(model, corpus, 2);
  ::unsetenv("CAUSALPROBE_CACHE_DIR");
  REQUIRE(cached.size() == fresh.size());
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    CHECK(cached[i].embeddings == fresh[i].embeddings);
  }
  CHECK_FALSE(fs::is_empty(dir.path()));
}

TEST_CASE("command line") {
  testing::TempDir dir("cli");
  const fs::path err = dir.path() / "err.txt";
  CHECK(run_cli("gen-suite -s qa_rc -o " + (dir.path() / "qa_rc.jsonl").string(), err) == 0);
  std::istringstream lines(slurp(dir.path() / "qa_rc.jsonl"));
  std::size_t n = 0;
  for (std::string line; std::getline(lines, line);) ++n;
  CHECK(n == 192);

  CHECK(run_cli("gen-suite -s nope", err) == 1);
  const json e = json::parse(slurp(err));
  CHECK(e["error"]["kind"] == "config");

  std::ofstream(dir.path() / "bad.json") << "{\"layers\": [1], \"bogus\": 1}";
  CHECK(run_cli("train-probes -c " + (dir.path() / "bad.json").string(), err) == 1);
  CHECK(json::parse(slurp(err))["error"]["message"].get<std::string>().find("bogus") !=
        std::string::npos);

  std::ofstream(dir.path() / "ok.json") << small_config((dir.path() / "run").string()).dump();
  CHECK(run_cli("causal -c " + (dir.path() / "ok.json").string(), err) == 1);
  CHECK(json::parse(slurp(err))["error"]["kind"] == "not_found");
  CHECK(run_cli("train-probes -c " + (dir.path() / "ok.json").string() +
                    " --set train.max_epochs=1 --set seeds=[0]",
                err) == 0);
  CHECK(fs::exists(dir.path() / "run" / "probes" / "distance_L3_a0.50_s0.probe"));
  CHECK_FALSE(fs::exists(dir.path() / "run" / "probes" / "distance_L3_a0.50_s1.probe"));
  CHECK(run_cli("report -d " + (dir.path() / "run").string(), err) == 0);
}
