// A layered model with a known redundant syntax encoding.
//
// Each token i gets a dependency code z_dep(i) = [Q x_i, lex(word_i)], where
// x_i is the 0/1 indicator of the non-root ancestors of i (itself included)
// and Q is a fixed random rotation. Tree depth is |x_i|^2 and tree distance is
// |x_i - x_j|^2, so both are linearly readable. Every layer holds
// z_dep ++ z_dep; the task head reads only the first copy.
//
// The head decodes the first copy, forms the squared distances between all
// decoded codes and the origin (the origin stands for the root, so depths are
// included), and projects them onto the line joining the same quantities
// for the two readings carried by the input. Outcome 0 gets probability
// sigmoid(-gain * t), where t is -1 at the first reading and +1 at the
// second.

#ifndef CAUSALPROBE_SYNTHETIC_MODEL_H_
#define CAUSALPROBE_SYNTHETIC_MODEL_H_

#include <cstdint>
#include <optional>

#include "causalprobe/model.h"

namespace causalprobe {

struct SyntheticModelConfig {
  std::uint64_t seed = 0;
  int codebook_size = 16;  // longest supported sentence
  int lexical_dims = 4;
  double lexical_scale = 0.5;
  int n_layers = 12;
  Task task = Task::kMaskedFill;
  double gain = 4.0;
  // When set, edits at any other layer are ignored and the head sees the
  // input's own parse.
  std::optional<int> causal_layer;

  void validate() const;  // throws ConfigError
};

// n x size matrix of ancestor indicators. Throws ModelError if the tree is
// longer than size.
Eigen::MatrixXd ancestor_codes(const ParseTree &tree, int size);

class SyntheticRedundantModel : public LayeredModel {
 public:
  explicit SyntheticRedundantModel(const SyntheticModelConfig &config);

  const SyntheticModelConfig &config() const { return config_; }
  int half_width() const { return config_.codebook_size + config_.lexical_dims; }
  const Eigen::MatrixXd &rotation() const { return rotation_; }

  // z_dep rows for a sentence under a given parse.
  Eigen::MatrixXd dependency_code(const std::vector<std::string> &words,
                                  const ParseTree &parse) const;

  // Decision coordinate t for the first-half codes of the given embeddings.
  double reading_coordinate(const ModelInput &input, const Eigen::MatrixXd &embeddings) const;

  std::string model_id() const override;
  int n_layers() const override { return config_.n_layers; }
  int embedding_width() const override { return 2 * half_width(); }
  Task task() const override { return config_.task; }
  std::size_t max_positions() const override;

  EncodedInput encode(const ModelInput &input, int layer) const override;
  TaskOutput resume(const ModelInput &input, const Eigen::MatrixXd &embeddings,
                    int layer) const override;
  TaskOutput forward(const ModelInput &input) const override;
  std::optional<Eigen::MatrixXd> outcome_gradient(const ModelInput &input,
                                                  const Eigen::MatrixXd &embeddings,
                                                  int layer) const override;

 private:
  Eigen::RowVectorXd lexical_vector(const std::string &word) const;
  Eigen::MatrixXd embed(const ModelInput &input, const ParseTree &parse) const;
  TaskOutput head(const ModelInput &input, double t) const;

  SyntheticModelConfig config_;
  Eigen::MatrixXd rotation_;  // codebook_size x codebook_size, orthogonal
};

}  // namespace causalprobe

#endif  // CAUSALPROBE_SYNTHETIC_MODEL_H_
