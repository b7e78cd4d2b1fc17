// Layered-model abstraction: encode an input up to layer k, then resume the
// forward pass from (possibly edited) layer-k embeddings to a task output.
//
// Layers are transformer blocks indexed 1..n_layers; interventions are
// allowed at 0 < k < n_layers.

#ifndef CAUSALPROBE_MODEL_H_
#define CAUSALPROBE_MODEL_H_

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "causalprobe/parse_data.h"
#include "json.hpp"

namespace causalprobe {

enum class Task { kMaskedFill, kQaSpan, kNli };

std::string_view to_string(Task task);
Task task_from_string(std::string_view s);  // throws ConfigError

// Half-open row range [begin, end).
struct WordSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const WordSpan &) const = default;
};

// Rows of the model sequence that belong to each word, in word order.
using SubwordMap = std::vector<WordSpan>;

struct ModelInput {
  std::vector<std::string> words;       // the sentence under study
  std::vector<std::string> pair_words;  // question (qa_span) or hypothesis (nli)
  std::optional<std::size_t> mask_index;
  // masked_fill: candidate word groups whose probabilities are reported.
  std::vector<std::vector<std::string>> answer_words;
  // qa_span: candidate answers as word ranges into `words`.
  std::vector<WordSpan> answer_spans;

  // Side information read only by oracle models.
  std::optional<ParseTree> parse;
  std::optional<std::pair<ParseTree, ParseTree>> readings;
};

struct EncodedInput {
  Eigen::MatrixXd embeddings;  // one row per model position
  SubwordMap word_rows;        // rows covered by each entry of ModelInput::words
};

struct TaskOutput {
  Task task = Task::kMaskedFill;
  // masked_fill: probabilities at the mask over `vocabulary`.
  std::vector<std::string> vocabulary;
  Eigen::VectorXd word_probs;
  // qa_span: start/end distributions over model rows.
  Eigen::VectorXd start_probs;
  Eigen::VectorXd end_probs;
  SubwordMap word_rows;
  // nli: (entailment, contradiction, neutral).
  Eigen::VectorXd class_probs;

  // Probability of a vocabulary word; throws NotFoundError if absent.
  double word_prob(std::string_view word) const;
};

class LayeredModel {
 public:
  virtual ~LayeredModel() = default;

  virtual std::string model_id() const = 0;
  virtual int n_layers() const = 0;
  virtual int embedding_width() const = 0;
  virtual Task task() const = 0;
  virtual std::size_t max_positions() const = 0;

  virtual EncodedInput encode(const ModelInput &input, int layer) const = 0;
  virtual TaskOutput resume(const ModelInput &input, const Eigen::MatrixXd &embeddings,
                            int layer) const = 0;
  virtual TaskOutput forward(const ModelInput &input) const = 0;

  // Gradient of the model's primary outcome scalar with respect to the
  // layer embeddings, when the backend can provide it.
  virtual std::optional<Eigen::MatrixXd> outcome_gradient(const ModelInput &input,
                                                          const Eigen::MatrixXd &embeddings,
                                                          int layer) const;
};

// Range-checked entry points. Throw ConfigError for k outside (0, n_layers),
// ModelError for inputs longer than max_positions, DimensionError for
// embeddings of the wrong width.
EncodedInput encode_to_layer(const LayeredModel &model, const ModelInput &input, int layer);
TaskOutput continue_from_layer(const LayeredModel &model, const ModelInput &input,
                               const Eigen::MatrixXd &embeddings, int layer);

// Throws DimensionError unless spans are non-empty, contiguous, in order and
// inside [0, rows).
void validate_subword_map(const SubwordMap &map, Eigen::Index rows);

// Mean of each word's rows.
Eigen::MatrixXd align_words(const Eigen::MatrixXd &embeddings, const SubwordMap &map);

// Adjoint of align_words: each word gradient is divided equally among its
// rows; rows outside the map receive zero.
Eigen::MatrixXd scatter_word_gradient(const Eigen::MatrixXd &word_grad, const SubwordMap &map,
                                      Eigen::Index rows);

SubwordMap identity_word_map(std::size_t words);

// Total-variation distance between two outputs of the same task.
double total_variation(const TaskOutput &a, const TaskOutput &b);

// JSON encodings used by the external worker protocol and reports.
nlohmann::json to_json(const ModelInput &input);
ModelInput model_input_from_json(const nlohmann::json &j);
nlohmann::json to_json(const TaskOutput &output);
TaskOutput task_output_from_json(const nlohmann::json &j);
nlohmann::json matrix_to_json(const Eigen::MatrixXd &m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json &j);

}  // namespace causalprobe

#endif  // CAUSALPROBE_MODEL_H_
