// Counterfactual embeddings: gradient descent on layer embeddings through a
// frozen probe until the probe reads a chosen target parse.

#ifndef CAUSALPROBE_COUNTERFACTUAL_H_
#define CAUSALPROBE_COUNTERFACTUAL_H_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "causalprobe/model.h"
#include "causalprobe/parse_data.h"
#include "causalprobe/probe.h"
#include "json.hpp"

namespace causalprobe {

struct CounterfactualRequest {
  Eigen::MatrixXd embeddings;  // one row per model position
  ParseTree target;
  const Probe *probe = nullptr;
  double loss_threshold = 0.1;
  double step_size = 1e-3;
  int max_steps = 1000;
  // Rows allowed to change; empty means every row.
  std::vector<bool> update_mask;
  // When set, the probe reads word vectors pooled from these rows and the
  // word gradient is spread equally over each word's rows. Otherwise rows
  // are words.
  std::optional<SubwordMap> word_rows;

  void validate() const;  // throws ConfigError / DimensionError
};

struct CounterfactualResult {
  Eigen::MatrixXd embeddings_prime;
  double final_loss = 0.0;
  int steps_taken = 0;
  std::vector<double> loss_trajectory;  // loss before each step, then the final loss
};

// Plain gradient descent z' <- z' - step_size * dL/dz' on masked rows, with
// dropout disabled. Stops once loss <= loss_threshold or after max_steps
// updates. Throws DivergenceError on a non-finite loss or gradient.
CounterfactualResult generate_counterfactual(const CounterfactualRequest &request);

struct SweepLayer {
  int layer = 0;
  Eigen::MatrixXd embeddings;
  const Probe *probe = nullptr;
};

struct SweepParams {
  std::vector<double> thresholds = {0.05};
  double step_size = 1e-3;
  int max_steps = 1000;
  std::vector<bool> update_mask;
  std::optional<SubwordMap> word_rows;
};

struct SweepEntry {
  int layer = 0;
  double threshold = 0.0;
  int interpretation = 0;  // 0 for the first parse, 1 for the second
  CounterfactualResult result;
};

// Layer-major, then threshold, then interpretation order.
std::vector<SweepEntry> sweep_counterfactuals(const std::vector<SweepLayer> &layers,
                                              const std::pair<ParseTree, ParseTree> &parses,
                                              const SweepParams &params);

void save_counterfactual(const std::string &path, const CounterfactualResult &result,
                         const nlohmann::json &metadata = nlohmann::json::object());
CounterfactualResult load_counterfactual(const std::string &path,
                                         nlohmann::json *metadata = nullptr);

}  // namespace causalprobe

#endif  // CAUSALPROBE_COUNTERFACTUAL_H_
