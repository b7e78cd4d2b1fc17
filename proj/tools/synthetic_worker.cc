// Reference worker for the external-model protocol, serving the synthetic
// redundant model over stdin/stdout.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "causalprobe/error.h"
#include "causalprobe/model.h"
#include "causalprobe/synthetic_model.h"
#include "json.hpp"

using nlohmann::json;
using namespace causalprobe;

namespace {

json word_rows_json(const SubwordMap &map) {
  json out = json::array();
  for (const auto &s : map) out.push_back({s.begin, s.end});
  return out;
}

json handle(const SyntheticRedundantModel &model, const json &req) {
  const std::string op = req.at("op").get<std::string>();
  if (op == "info") {
    return {{"ok", true},
            {"model_id", model.model_id()},
            {"n_layers", model.n_layers()},
            {"embedding_width", model.embedding_width()},
            {"task", std::string(to_string(model.task()))},
            {"max_positions", model.max_positions()},
            {"gradient", true}};
  }
  if (op == "encode") {
    const EncodedInput e =
        model.encode(model_input_from_json(req.at("input")), req.at("layer").get<int>());
    return {{"ok", true},
            {"embeddings", matrix_to_json(e.embeddings)},
            {"word_rows", word_rows_json(e.word_rows)}};
  }
  if (op == "continue") {
    const TaskOutput out = model.resume(model_input_from_json(req.at("input")),
                                        matrix_from_json(req.at("embeddings")),
                                        req.at("layer").get<int>());
    return {{"ok", true}, {"output", to_json(out)}};
  }
  if (op == "forward") {
    return {{"ok", true}, {"output", to_json(model.forward(model_input_from_json(req.at("input"))))}};
  }
  if (op == "gradient") {
    const auto g = model.outcome_gradient(model_input_from_json(req.at("input")),
                                          matrix_from_json(req.at("embeddings")),
                                          req.at("layer").get<int>());
    if (!g) return {{"ok", false}, {"error", "no gradient available"}};
    return {{"ok", true}, {"gradient", matrix_to_json(*g)}};
  }
  return {{"ok", false}, {"error", "unknown op '" + op + "'"}};
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Synthetic redundant model worker"};
  SyntheticModelConfig config;
  std::string task = "masked_fill";
  int causal_layer = -1;
  app.add_option("--seed", config.seed, "model seed");
  app.add_option("--task", task, "masked_fill, qa_span or nli");
  app.add_option("--n-layers", config.n_layers, "number of layers");
  app.add_option("--codebook", config.codebook_size, "code width");
  app.add_option("--causal-layer", causal_layer, "only layer whose edits reach the output");
  CLI11_PARSE(app, argc, argv);
  try {
    config.task = task_from_string(task);
    if (causal_layer >= 0) config.causal_layer = causal_layer;
    const SyntheticRedundantModel model(config);
    std::string line;
    while (std::getline(std::cin, line)) {
      if (line.empty()) continue;
      json reply;
      try {
        const json req = json::parse(line);
        if (req.value("op", std::string()) == "shutdown") break;
        reply = handle(model, req);
      } catch (const std::exception &e) {
        reply = {{"ok", false}, {"error", e.what()}};
      }
      std::cout << reply.dump() << '\n' << std::flush;
    }
  } catch (const Error &e) {
    std::cerr << json{{"error", {{"kind", e.kind()}, {"message", e.what()}}}}.dump() << '\n';
    return 1;
  }
  return 0;
}
