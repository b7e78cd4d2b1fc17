#include "causalprobe/model.h"

#include <cmath>

#include "causalprobe/error.h"

namespace causalprobe {

std::string_view to_string(Task task) {
  switch (task) {
    case Task::kMaskedFill: return "masked_fill";
    case Task::kQaSpan: return "qa_span";
    case Task::kNli: return "nli";
  }
  return "unknown";
}

Task task_from_string(std::string_view s) {
  if (s == "masked_fill") return Task::kMaskedFill;
  if (s == "qa_span") return Task::kQaSpan;
  if (s == "nli") return Task::kNli;
  throw ConfigError("unknown task '" + std::string(s) + "'");
}

double TaskOutput::word_prob(std::string_view word) const {
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    if (vocabulary[i] == word) return word_probs(static_cast<Eigen::Index>(i));
  }
  throw NotFoundError("word '" + std::string(word) + "' not in output vocabulary");
}

std::optional<Eigen::MatrixXd> LayeredModel::outcome_gradient(const ModelInput &,
                                                              const Eigen::MatrixXd &,
                                                              int) const {
  return std::nullopt;
}

namespace {

void check_layer(const LayeredModel &model, int layer) {
  if (layer <= 0 || layer >= model.n_layers()) {
    throw ConfigError("layer " + std::to_string(layer) + " outside (0, " +
                      std::to_string(model.n_layers()) + ")");
  }
}

void check_length(const LayeredModel &model, const ModelInput &input) {
  const std::size_t len = input.words.size() + input.pair_words.size();
  if (input.words.empty()) throw ModelError("model input has no words");
  if (len > model.max_positions()) {
    throw ModelError("input of " + std::to_string(len) + " words exceeds the model limit of " +
                     std::to_string(model.max_positions()));
  }
}

}  // namespace

EncodedInput encode_to_layer(const LayeredModel &model, const ModelInput &input, int layer) {
  check_layer(model, layer);
  check_length(model, input);
  EncodedInput out = model.encode(input, layer);
  validate_subword_map(out.word_rows, out.embeddings.rows());
  if (out.word_rows.size() != input.words.size()) {
    throw ModelError("model returned a word map of the wrong length");
  }
  return out;
}

TaskOutput continue_from_layer(const LayeredModel &model, const ModelInput &input,
                               const Eigen::MatrixXd &embeddings, int layer) {
  check_layer(model, layer);
  check_length(model, input);
  if (embeddings.cols() != model.embedding_width()) {
    throw DimensionError("embeddings have width " + std::to_string(embeddings.cols()) +
                         ", model expects " + std::to_string(model.embedding_width()));
  }
  return model.resume(input, embeddings, layer);
}

void validate_subword_map(const SubwordMap &map, Eigen::Index rows) {
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i].begin >= map[i].end) throw DimensionError("word span " + std::to_string(i) + " is empty");
    if (static_cast<Eigen::Index>(map[i].end) > rows) {
      throw DimensionError("word span " + std::to_string(i) + " exceeds the sequence");
    }
    if (i > 0 && map[i].begin != map[i - 1].end) {
      throw DimensionError(map[i].begin < map[i - 1].end
                               ? "word spans " + std::to_string(i - 1) + " and " +
                                     std::to_string(i) + " overlap"
                               : "gap between word spans " + std::to_string(i - 1) + " and " +
                                     std::to_string(i));
    }
  }
}

Eigen::MatrixXd align_words(const Eigen::MatrixXd &embeddings, const SubwordMap &map) {
  validate_subword_map(map, embeddings.rows());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(map.size()), embeddings.cols());
  for (std::size_t w = 0; w < map.size(); ++w) {
    out.row(static_cast<Eigen::Index>(w)) =
        embeddings
            .middleRows(static_cast<Eigen::Index>(map[w].begin),
                        static_cast<Eigen::Index>(map[w].size()))
            .colwise()
            .mean();
  }
  return out;
}

Eigen::MatrixXd scatter_word_gradient(const Eigen::MatrixXd &word_grad, const SubwordMap &map,
                                      Eigen::Index rows) {
  validate_subword_map(map, rows);
  if (word_grad.rows() != static_cast<Eigen::Index>(map.size())) {
    throw DimensionError("word gradient rows do not match the word map");
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, word_grad.cols());
  for (std::size_t w = 0; w < map.size(); ++w) {
    const double share = 1.0 / static_cast<double>(map[w].size());
    for (std::size_t r = map[w].begin; r < map[w].end; ++r) {
      out.row(static_cast<Eigen::Index>(r)) = share * word_grad.row(static_cast<Eigen::Index>(w));
    }
  }
  return out;
}

SubwordMap identity_word_map(std::size_t words) {
  SubwordMap m(words);
  for (std::size_t i = 0; i < words; ++i) m[i] = {i, i + 1};
  return m;
}

double total_variation(const TaskOutput &a, const TaskOutput &b) {
  if (a.task != b.task) throw DimensionError("total_variation: task mismatch");
  auto tv = [](const Eigen::VectorXd &p, const Eigen::VectorXd &q) {
    if (p.size() != q.size()) throw DimensionError("total_variation: support mismatch");
    return 0.5 * (p - q).cwiseAbs().sum();
  };
  switch (a.task) {
    case Task::kMaskedFill: return tv(a.word_probs, b.word_probs);
    case Task::kQaSpan: return tv(a.start_probs, b.start_probs);
    case Task::kNli: return tv(a.class_probs, b.class_probs);
  }
  return 0.0;
}

namespace {

nlohmann::json spans_to_json(const std::vector<WordSpan> &spans) {
  auto j = nlohmann::json::array();
  for (const auto &s : spans) j.push_back({s.begin, s.end});
  return j;
}

std::vector<WordSpan> spans_from_json(const nlohmann::json &j) {
  std::vector<WordSpan> out;
  for (const auto &s : j) out.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
  return out;
}

nlohmann::json heads_to_json(const ParseTree &t) { return t.heads(); }

ParseTree heads_from_json(const nlohmann::json &j) {
  return ParseTree::from_heads(j.get<std::vector<int>>());
}

nlohmann::json vector_to_json(const Eigen::VectorXd &v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const nlohmann::json &j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json to_json(const ModelInput &in) {
  nlohmann::json j = {{"words", in.words},
                      {"pair_words", in.pair_words},
                      {"answer_words", in.answer_words},
                      {"answer_spans", spans_to_json(in.answer_spans)}};
  j["mask_index"] = in.mask_index ? nlohmann::json(*in.mask_index) : nlohmann::json(nullptr);
  if (in.parse) j["parse"] = heads_to_json(*in.parse);
  if (in.readings) {
    j["readings"] = {heads_to_json(in.readings->first), heads_to_json(in.readings->second)};
  }
  return j;
}

ModelInput model_input_from_json(const nlohmann::json &j) {
  try {
    ModelInput in;
    in.words = j.at("words").get<std::vector<std::string>>();
    in.pair_words = j.value("pair_words", std::vector<std::string>{});
    if (j.contains("mask_index") && !j["mask_index"].is_null()) {
      in.mask_index = j["mask_index"].get<std::size_t>();
    }
    in.answer_words = j.value("answer_words", std::vector<std::vector<std::string>>{});
    if (j.contains("answer_spans")) in.answer_spans = spans_from_json(j["answer_spans"]);
    if (j.contains("parse")) in.parse = heads_from_json(j["parse"]);
    if (j.contains("readings")) {
      in.readings.emplace(heads_from_json(j["readings"].at(0)), heads_from_json(j["readings"].at(1)));
    }
    return in;
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("bad model input record: ") + e.what());
  }
}

nlohmann::json to_json(const TaskOutput &out) {
  nlohmann::json j = {{"task", std::string(to_string(out.task))}};
  switch (out.task) {
    case Task::kMaskedFill:
      j["vocabulary"] = out.vocabulary;
      j["word_probs"] = vector_to_json(out.word_probs);
      break;
    case Task::kQaSpan:
      j["start_probs"] = vector_to_json(out.start_probs);
      j["end_probs"] = vector_to_json(out.end_probs);
      j["word_rows"] = spans_to_json(out.word_rows);
      break;
    case Task::kNli:
      j["class_probs"] = vector_to_json(out.class_probs);
      break;
  }
  return j;
}

TaskOutput task_output_from_json(const nlohmann::json &j) {
  try {
    TaskOutput out;
    out.task = task_from_string(j.at("task").get<std::string>());
    switch (out.task) {
      case Task::kMaskedFill:
        out.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
        out.word_probs = vector_from_json(j.at("word_probs"));
        if (out.word_probs.size() != static_cast<Eigen::Index>(out.vocabulary.size())) {
          throw FormatError("vocabulary and probabilities differ in length");
        }
        break;
      case Task::kQaSpan:
        out.start_probs = vector_from_json(j.at("start_probs"));
        out.end_probs = vector_from_json(j.at("end_probs"));
        out.word_rows = spans_from_json(j.at("word_rows"));
        break;
      case Task::kNli:
        out.class_probs = vector_from_json(j.at("class_probs"));
        if (out.class_probs.size() != 3) throw FormatError("nli output needs 3 classes");
        break;
    }
    return out;
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("bad task output record: ") + e.what());
  }
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd &m) {
  auto j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    j.push_back(std::move(row));
  }
  return j;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json &j) {
  if (!j.is_array()) throw FormatError("matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto &row = j[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) throw FormatError("ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace causalprobe
