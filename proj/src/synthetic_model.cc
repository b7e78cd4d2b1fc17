#include "causalprobe/synthetic_model.h"

#include <cmath>
#include <random>

#include "causalprobe/error.h"
#include "causalprobe/rng.h"

namespace causalprobe {

void SyntheticModelConfig::validate() const {
  if (codebook_size < 1) throw ConfigError("synthetic codebook_size must be >= 1");
  if (lexical_dims < 0) throw ConfigError("synthetic lexical_dims must be >= 0");
  if (n_layers < 2) throw ConfigError("synthetic n_layers must be >= 2");
  if (!(gain > 0.0)) throw ConfigError("synthetic gain must be positive");
  if (causal_layer && (*causal_layer <= 0 || *causal_layer >= n_layers)) {
    throw ConfigError("synthetic causal_layer outside (0, n_layers)");
  }
}

Eigen::MatrixXd ancestor_codes(const ParseTree &tree, int size) {
  const auto n = static_cast<int>(tree.size());
  if (n > size) {
    throw ModelError("sentence of " + std::to_string(n) + " tokens exceeds codebook size " +
                     std::to_string(size));
  }
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, size);
  for (int i = 0; i < n; ++i) {
    for (int a = i; tree.head(static_cast<std::size_t>(a)) != ParseTree::kRoot;
         a = tree.head(static_cast<std::size_t>(a))) {
      x(i, a) = 1.0;
    }
  }
  return x;
}

SyntheticRedundantModel::SyntheticRedundantModel(const SyntheticModelConfig &config)
    : config_(config) {
  config_.validate();
  Rng rng(derive_seed(config_.seed, {0x726f74ULL}));
  std::normal_distribution<double> normal;
  Eigen::MatrixXd g(config_.codebook_size, config_.codebook_size);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  rotation_ = qr.householderQ();
}

std::string SyntheticRedundantModel::model_id() const {
  return "synthetic-redundant-" + std::string(to_string(config_.task)) + "-" +
         std::to_string(config_.seed);
}

std::size_t SyntheticRedundantModel::max_positions() const {
  return static_cast<std::size_t>(config_.codebook_size) + 64;
}

Eigen::RowVectorXd SyntheticRedundantModel::lexical_vector(const std::string &word) const {
  Rng rng(derive_seed(config_.seed, {fnv1a(word)}));
  std::normal_distribution<double> normal(0.0, config_.lexical_scale);
  Eigen::RowVectorXd v(config_.lexical_dims);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
  return v;
}

Eigen::MatrixXd SyntheticRedundantModel::dependency_code(const std::vector<std::string> &words,
                                                         const ParseTree &parse) const {
  if (parse.size() != words.size()) {
    throw DimensionError("parse covers " + std::to_string(parse.size()) + " tokens, sentence has " +
                         std::to_string(words.size()));
  }
  const auto n = static_cast<Eigen::Index>(words.size());
  Eigen::MatrixXd z(n, half_width());
  z.leftCols(config_.codebook_size) =
      ancestor_codes(parse, config_.codebook_size) * rotation_.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    z.row(i).tail(config_.lexical_dims) = lexical_vector(words[static_cast<std::size_t>(i)]);
  }
  return z;
}

Eigen::MatrixXd SyntheticRedundantModel::embed(const ModelInput &input,
                                               const ParseTree &parse) const {
  const Eigen::MatrixXd z = dependency_code(input.words, parse);
  Eigen::MatrixXd out(z.rows(), 2 * z.cols());
  out << z, z;
  return out;
}

namespace {

const ParseTree &require_parse(const ModelInput &input) {
  if (!input.parse) throw ModelError("synthetic model needs the input parse");
  return *input.parse;
}

const std::pair<ParseTree, ParseTree> &require_readings(const ModelInput &input) {
  if (!input.readings) throw ModelError("synthetic model needs the two readings");
  return *input.readings;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Squared distances between the rows of codes and an appended origin row.
Eigen::MatrixXd code_distances(const Eigen::MatrixXd &codes) {
  const Eigen::Index n = codes.rows();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n + 1, codes.cols());
  y.topRows(n) = codes;
  const Eigen::VectorXd sq = y.rowwise().squaredNorm();
  Eigen::MatrixXd d = -2.0 * y * y.transpose();
  d.colwise() += sq;
  d.rowwise() += sq.transpose();
  return d;
}

}  // namespace

double SyntheticRedundantModel::reading_coordinate(const ModelInput &input,
                                                   const Eigen::MatrixXd &embeddings) const {
  const auto &[a, b] = require_readings(input);
  const Eigen::MatrixXd fa = code_distances(ancestor_codes(a, config_.codebook_size));
  const Eigen::MatrixXd fb = code_distances(ancestor_codes(b, config_.codebook_size));
  if (embeddings.rows() + 1 != fa.rows() || fb.rows() != fa.rows()) {
    throw DimensionError("readings and embeddings differ in length");
  }
  const Eigen::MatrixXd delta = fb - fa;
  const double norm2 = delta.squaredNorm();
  if (norm2 == 0.0) return 0.0;
  const Eigen::MatrixXd fx =
      code_distances(embeddings.leftCols(config_.codebook_size) * rotation_);
  return 2.0 * (delta.array() * (fx - 0.5 * (fa + fb)).array()).sum() / norm2;
}

TaskOutput SyntheticRedundantModel::head(const ModelInput &input, double t) const {
  const double p0 = sigmoid(-config_.gain * t);
  TaskOutput out;
  out.task = config_.task;
  switch (config_.task) {
    case Task::kMaskedFill: {
      auto groups = input.answer_words;
      if (groups.size() != 2 || groups[0].empty() || groups[1].empty()) {
        throw ModelError("synthetic masked_fill needs two non-empty answer groups");
      }
      const std::size_t total = groups[0].size() + groups[1].size();
      out.vocabulary.reserve(total);
      out.word_probs.resize(static_cast<Eigen::Index>(total));
      Eigen::Index k = 0;
      for (int g = 0; g < 2; ++g) {
        const double mass = g == 0 ? p0 : 1.0 - p0;
        for (const auto &w : groups[static_cast<std::size_t>(g)]) {
          out.vocabulary.push_back(w);
          out.word_probs(k++) = mass / static_cast<double>(groups[static_cast<std::size_t>(g)].size());
        }
      }
      break;
    }
    case Task::kQaSpan: {
      if (input.answer_spans.size() != 2) {
        throw ModelError("synthetic qa_span needs two answer spans");
      }
      const auto n = static_cast<Eigen::Index>(input.words.size());
      out.start_probs = Eigen::VectorXd::Zero(n);
      out.end_probs = Eigen::VectorXd::Zero(n);
      for (int g = 0; g < 2; ++g) {
        const auto &span = input.answer_spans[static_cast<std::size_t>(g)];
        if (span.begin >= span.end || span.end > input.words.size()) {
          throw ModelError("synthetic qa_span answer span out of range");
        }
        const double mass = g == 0 ? p0 : 1.0 - p0;
        out.start_probs(static_cast<Eigen::Index>(span.begin)) += mass;
        out.end_probs(static_cast<Eigen::Index>(span.end - 1)) += mass;
      }
      out.word_rows = identity_word_map(input.words.size());
      break;
    }
    case Task::kNli:
      out.class_probs = Eigen::Vector3d(p0, 0.0, 1.0 - p0);
      break;
  }
  return out;
}

EncodedInput SyntheticRedundantModel::encode(const ModelInput &input, int) const {
  return {embed(input, require_parse(input)), identity_word_map(input.words.size())};
}

TaskOutput SyntheticRedundantModel::resume(const ModelInput &input,
                                           const Eigen::MatrixXd &embeddings, int layer) const {
  if (config_.causal_layer && layer != *config_.causal_layer) return forward(input);
  if (embeddings.rows() != static_cast<Eigen::Index>(input.words.size()) ||
      embeddings.cols() != embedding_width()) {
    throw DimensionError("synthetic model embeddings have the wrong shape");
  }
  return head(input, reading_coordinate(input, embeddings));
}

TaskOutput SyntheticRedundantModel::forward(const ModelInput &input) const {
  return head(input, reading_coordinate(input, embed(input, require_parse(input))));
}

std::optional<Eigen::MatrixXd> SyntheticRedundantModel::outcome_gradient(
    const ModelInput &input, const Eigen::MatrixXd &embeddings, int layer) const {
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(embeddings.rows(), embeddings.cols());
  if (config_.causal_layer && layer != *config_.causal_layer) return grad;
  const auto &[a, b] = require_readings(input);
  const Eigen::MatrixXd delta = code_distances(ancestor_codes(b, config_.codebook_size)) -
                                code_distances(ancestor_codes(a, config_.codebook_size));
  const double norm2 = delta.squaredNorm();
  if (norm2 == 0.0) return grad;
  const double p0 = sigmoid(-config_.gain * reading_coordinate(input, embeddings));
  const double dp_dt = -config_.gain * p0 * (1.0 - p0);
  // t = 2 <delta, D(Y)> / |delta|^2 + const with D_jk = |y_j - y_k|^2.
  const Eigen::MatrixXd g = (2.0 / norm2) * delta;
  const Eigen::Index n = embeddings.rows();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n + 1, config_.codebook_size);
  y.topRows(n) = embeddings.leftCols(config_.codebook_size) * rotation_;
  const Eigen::MatrixXd lap = Eigen::MatrixXd(g.rowwise().sum().asDiagonal()) - g;
  const Eigen::MatrixXd dy = 4.0 * lap * y;
  grad.leftCols(config_.codebook_size) = dp_dt * dy.topRows(n) * rotation_.transpose();
  return grad;
}

}  // namespace causalprobe
