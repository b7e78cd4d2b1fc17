// Experiment orchestration: probe sweeps, redundancy estimates, causal
// suites, injection interventions and layer sweeps, driven by one JSON
// config. Every run writes line-delimited reports, tab-separated summaries
// and a manifest under the configured output directory.

#ifndef CAUSALPROBE_RUNNER_H_
#define CAUSALPROBE_RUNNER_H_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "causalprobe/metrics.h"
#include "causalprobe/mine.h"
#include "causalprobe/model.h"
#include "causalprobe/parse_data.h"
#include "causalprobe/probe.h"
#include "causalprobe/synthetic_model.h"
#include "json.hpp"

namespace causalprobe {

struct ModelSpec {
  std::string kind = "synthetic";  // "synthetic" or "external"
  std::string command;             // worker command for "external"
  std::optional<Task> task;        // checked against the model when set
  SyntheticModelConfig synthetic;
};

struct CorpusSpec {
  std::string train, dev, test;  // corpus files
  // When positive and no files are given, random trees are generated.
  int synthetic_sentences = 0;
  int min_length = 4;
  int max_length = 14;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  ModelSpec model;
  ProbeKind probe_kind = ProbeKind::kDistance;
  int hidden_dim = 1024;
  int output_dim = 1024;
  TrainSchedule train;
  CorpusSpec corpus;

  std::vector<int> layers = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  std::vector<double> dropout_rates = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<double> loss_thresholds = {0.05, 0.1, 0.2, 0.3};

  std::string suite_id = "mask_coord";
  std::optional<std::size_t> suite_limit;
  Interpretation encoded_interpretation = Interpretation::kA;
  double step_size = 1e-3;
  int max_steps = 1000;
  bool absolute_effect = false;

  MineSchedule mine;
  double mine_margin = 0.0;
  std::size_t mine_max_tokens = 5000;

  int intervention_layer = 4;
  std::string output_dir = "runs/default";
  int threads = 1;

  void validate() const;  // throws ConfigError
};

ExperimentConfig config_from_json(const nlohmann::json &j);  // throws ConfigError
nlohmann::json to_json(const ExperimentConfig &config);
ExperimentConfig load_config(const std::string &path);

// Applies "a.b.c=value" to a JSON config. The value is parsed as JSON when
// possible and taken as a string otherwise. Unknown keys throw ConfigError.
void apply_override(nlohmann::json &config, const std::string &assignment);

// 16 hex digits over the canonical JSON form.
std::string config_hash(const ExperimentConfig &config);

std::unique_ptr<LayeredModel> make_model(const ModelSpec &spec);

// Random dependency trees over a small vocabulary; no punctuation.
std::vector<CorpusRecord> synthetic_corpus(int sentences, int min_length, int max_length,
                                           std::uint64_t seed);

struct CorpusSplits {
  std::vector<CorpusRecord> train, dev, test;
};
CorpusSplits load_corpus(const CorpusSpec &spec);  // throws ConfigError / CorpusError

// Word-level layer embeddings for each record, cached on disk when the
// CAUSALPROBE_CACHE_DIR environment variable names a directory.
LabeledSet embed_corpus(const LayeredModel &model, const std::vector<CorpusRecord> &records,
                        int layer);

std::string probe_checkpoint_path(const ExperimentConfig &config, int layer, double alpha,
                                  std::uint64_t seed);
std::uint64_t cell_seed(std::uint64_t seed, int layer, double alpha);

struct ProbeCell {
  int layer = 0;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;
  std::string checkpoint;
  ProbeMetrics metrics;
  int best_epoch = 0;
  double dev_loss = 0.0;
};

struct ProbeSweepResult {
  std::vector<ProbeCell> cells;
};

ProbeSweepResult run_probe_sweep(const ExperimentConfig &config);
ProbeSweepResult run_probe_sweep(const ExperimentConfig &config, const LayeredModel &model);

struct MineLayerResult {
  int layer = 0;
  std::size_t tokens = 0;
  RedundancyReport report;
};

std::vector<MineLayerResult> run_mine(const ExperimentConfig &config);
std::vector<MineLayerResult> run_mine(const ExperimentConfig &config, const LayeredModel &model);

struct CausalCell {
  double dropout_rate = 0.0;
  double loss_threshold = 0.0;
  std::uint64_t seed = 0;
  CausalEffectReport report;
  std::size_t failures = 0;  // prompt/layer pairs whose descent diverged
};

struct CausalSummary {
  double dropout_rate = 0.0;
  double loss_threshold = 0.0;
  MeanStd aggregate;
  std::map<int, MeanStd> per_layer;  // signed difference per layer over seeds
};

struct CausalSuiteResult {
  std::vector<CausalCell> cells;
  std::vector<CausalSummary> summary;
};

CausalSuiteResult run_causal_suite(const ExperimentConfig &config);
CausalSuiteResult run_causal_suite(const ExperimentConfig &config, const LayeredModel &model);

struct InterventionRow {
  double dropout_rate = 0.0;
  double loss_threshold = 0.0;
  int layer = 0;
  MeanStd original_f1, original_exact;  // percentages over seeds
  MeanStd counterfactual_f1, counterfactual_exact;
  std::size_t failures = 0;
};

// Table over (alpha, threshold) at config.intervention_layer.
std::vector<InterventionRow> run_intervention(const ExperimentConfig &config);
std::vector<InterventionRow> run_intervention(const ExperimentConfig &config,
                                              const LayeredModel &model);

struct LayerSweepResult {
  std::vector<InterventionRow> rows;  // alpha x layer x threshold
  std::map<double, int> best_layer;   // by mean counterfactual F1, then exact match
};

LayerSweepResult run_layer_sweep(const ExperimentConfig &config);
LayerSweepResult run_layer_sweep(const ExperimentConfig &config, const LayeredModel &model);

// Summarizes the reports present in an output directory as text.
std::string summarize_reports(const std::string &output_dir);

}  // namespace causalprobe

#endif  // CAUSALPROBE_RUNNER_H_
