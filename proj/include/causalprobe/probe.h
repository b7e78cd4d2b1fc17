// Structural depth/distance probes fronted by an input dropout layer.
//
// A probe maps each word embedding z_i through f = Dense -> ReLU -> Dense ->
// ReLU -> Dense and reads syntax from squared norms of the result:
//   depth:    yhat_i    = |f(z_i)|^2
//   distance: yhat_ij   = |f(z_i) - f(z_j)|^2
// During training a fresh Bernoulli mask with rate alpha zeroes input
// activations and survivors are scaled by 1/(1-alpha); inference never masks.

#ifndef CAUSALPROBE_PROBE_H_
#define CAUSALPROBE_PROBE_H_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "causalprobe/nn.h"
#include "causalprobe/parse_data.h"

namespace causalprobe {

enum class ProbeKind { kDepth, kDistance };

std::string_view to_string(ProbeKind kind);
ProbeKind probe_kind_from_string(std::string_view s);  // throws ConfigError

struct ProbeConfig {
  ProbeKind kind = ProbeKind::kDistance;
  double dropout_rate = 0.0;
  int input_dim = 768;
  int hidden_dim = 1024;
  int output_dim = 1024;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct TrainSchedule {
  int max_epochs = 100;
  int patience = 3;
  int batch_size = 32;
  double learning_rate = 1e-3;

  void validate() const;  // throws ConfigError
};

// Per-sentence predicted or gold syntax. Only the member matching `kind` is
// populated.
struct ParseLabels {
  ProbeKind kind = ProbeKind::kDistance;
  Eigen::VectorXd depths;
  Eigen::MatrixXd distances;

  Eigen::Index size() const {
    return kind == ProbeKind::kDepth ? depths.size() : distances.rows();
  }
};

ParseLabels gold_labels(const ParseTree &tree, ProbeKind kind);

// One sentence: word-level embeddings (one row per token) and its tree.
struct ProbeExample {
  Eigen::MatrixXd embeddings;
  ParseTree tree;
  std::vector<bool> punctuation;  // empty means "no punctuation"
};
using LabeledSet = std::vector<ProbeExample>;

class Probe {
 public:
  Probe() = default;

  // Hand-assembled probe; layer shapes must follow the config.
  static Probe from_layers(const ProbeConfig &config, std::array<nn::Dense, 3> layers,
                           bool trained);

  const ProbeConfig &config() const { return config_; }
  bool trained() const { return trained_; }
  const std::array<nn::Dense, 3> &layers() const { return layers_; }
  std::array<nn::Dense, 3> &mutable_layers() { return layers_; }
  const std::string &fingerprint() const { return fingerprint_; }

  void set_trained(bool trained) { trained_ = trained; }
  void set_fingerprint(std::string fp) { fingerprint_ = std::move(fp); }

  // f(z) applied row-wise. No dropout.
  Eigen::MatrixXd transform(const Eigen::MatrixXd &z) const;

 private:
  friend Probe init_probe(const ProbeConfig &config);
  ProbeConfig config_;
  std::array<nn::Dense, 3> layers_;
  bool trained_ = false;
  std::string fingerprint_;
};

// Deterministic in config.seed. Throws ConfigError for alpha outside [0, 1)
// or non-positive dims.
Probe init_probe(const ProbeConfig &config);

// Throws DimensionError when embeddings.cols() != input_dim.
ParseLabels probe_predict(const Probe &probe, const Eigen::MatrixXd &word_embeddings);

// Depth: mean_i |yhat_i - y_i|. Distance: sum_{i<j} |yhat_ij - y_ij| / n^2.
// Throws DimensionError on kind or shape mismatch.
double probe_loss(const ParseLabels &predicted, const ParseLabels &gold);

struct ProbeGradient {
  double loss = 0.0;
  std::array<nn::DenseGrad, 3> layers;
  Eigen::MatrixXd input;  // dL/dz, one row per token
};

// Loss of one sentence and its gradient with respect to the probe weights
// and the input embeddings. `input_scale`, when given, is an element-wise
// dropout mask (already scaled) applied to the input.
ProbeGradient probe_loss_gradient(const Probe &probe, const Eigen::MatrixXd &z,
                                  const ParseLabels &gold,
                                  const Eigen::MatrixXd *input_scale = nullptr);

// Element-wise inverted-dropout mask: each entry is 0 with probability `rate`
// and 1/(1-rate) otherwise.
Eigen::MatrixXd sample_dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate,
                                    Rng &rng);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_loss = 0.0;
};

struct TrainResult {
  Probe probe;  // weights of the best dev-loss epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

// Adam on mean per-sentence loss; fresh dropout mask per batch; early stop
// once `patience` epochs pass without dev improvement. Throws ConfigError on
// empty sets.
TrainResult train_probe(Probe probe, const LabeledSet &train, const LabeledSet &dev,
                        const TrainSchedule &schedule);

enum class ProbeMetric { kSpearman, kRootAccuracy };

std::string_view to_string(ProbeMetric metric);
ProbeMetric default_metric(ProbeKind kind);

struct ProbeMetrics {
  ProbeMetric metric = ProbeMetric::kSpearman;
  std::optional<double> value;  // empty when no sentence qualified
  std::size_t sentences = 0;    // sentences that contributed
};

// Spearman rank correlation with average ranks for ties. Empty when either
// side is constant.
std::optional<double> spearman_correlation(const std::vector<double> &a,
                                           const std::vector<double> &b);

// Mean over sentences with 5..50 non-punctuation tokens of the mean per-word
// Spearman correlation between predicted and gold distance rows (punctuation
// excluded on both axes).
ProbeMetrics spearman50(const std::vector<ParseLabels> &predicted, const LabeledSet &gold);

// Fraction of sentences whose argmin predicted depth over non-punctuation
// tokens (ties to the lowest index) is the gold root.
ProbeMetrics root_accuracy(const std::vector<ParseLabels> &predicted, const LabeledSet &gold);

// Distance probes report Spearman-50, depth probes root accuracy. Requesting
// the other metric throws ConfigError.
ProbeMetrics eval_probe(const Probe &probe, const LabeledSet &test,
                        std::optional<ProbeMetric> metric = std::nullopt);

// Checkpoint I/O through the payload container; header carries kind, alpha,
// dims, seed and the training fingerprint.
void save_probe(const std::string &path, const Probe &probe);
Probe load_probe(const std::string &path);

// Hex digest of the training inputs, stored as the probe fingerprint.
std::string training_fingerprint(const ProbeConfig &config, const TrainSchedule &schedule,
                                 const LabeledSet &train, const LabeledSet &dev);

}  // namespace causalprobe

#endif  // CAUSALPROBE_PROBE_H_
