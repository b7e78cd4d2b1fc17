#include "causalprobe/counterfactual.h"

#include <cmath>

#include "causalprobe/error.h"
#include "causalprobe/payload.h"

namespace causalprobe {

void CounterfactualRequest::validate() const {
  if (!probe) throw ConfigError("counterfactual request has no probe");
  if (!probe->trained()) throw ConfigError("counterfactual probe is not trained");
  if (!(loss_threshold > 0.0)) throw ConfigError("loss_threshold must be positive");
  if (!(step_size > 0.0)) throw ConfigError("step_size must be positive");
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
  if (!update_mask.empty() && update_mask.size() != static_cast<std::size_t>(embeddings.rows())) {
    throw DimensionError("update_mask has " + std::to_string(update_mask.size()) +
                         " entries for " + std::to_string(embeddings.rows()) + " rows");
  }
  if (embeddings.cols() != probe->config().input_dim) {
    throw DimensionError("embedding width does not match the probe input");
  }
  std::size_t words = static_cast<std::size_t>(embeddings.rows());
  if (word_rows) {
    validate_subword_map(*word_rows, embeddings.rows());
    words = word_rows->size();
  }
  if (target.size() != words) {
    throw DimensionError("target parse covers " + std::to_string(target.size()) +
                         " words, embeddings hold " + std::to_string(words));
  }
}

namespace {

struct Evaluation {
  double loss;
  Eigen::MatrixXd grad;  // per row of the request embeddings
};

Evaluation evaluate(const CounterfactualRequest &req, const Eigen::MatrixXd &z,
                    const ParseLabels &gold) {
  if (!req.word_rows) {
    ProbeGradient g = probe_loss_gradient(*req.probe, z, gold);
    return {g.loss, std::move(g.input)};
  }
  ProbeGradient g = probe_loss_gradient(*req.probe, align_words(z, *req.word_rows), gold);
  return {g.loss, scatter_word_gradient(g.input, *req.word_rows, z.rows())};
}

}  // namespace

CounterfactualResult generate_counterfactual(const CounterfactualRequest &req) {
  req.validate();
  const ParseLabels gold = gold_labels(req.target, req.probe->config().kind);
  CounterfactualResult res;
  res.embeddings_prime = req.embeddings;
  Eigen::MatrixXd &z = res.embeddings_prime;

  for (int step = 0;; ++step) {
    Evaluation e = evaluate(req, z, gold);
    if (!std::isfinite(e.loss)) throw DivergenceError(static_cast<std::size_t>(step), "loss is not finite");
    res.loss_trajectory.push_back(e.loss);
    res.final_loss = e.loss;
    res.steps_taken = step;
    if (e.loss <= req.loss_threshold || step >= req.max_steps) break;
    if (!e.grad.allFinite()) throw DivergenceError(static_cast<std::size_t>(step), "gradient is not finite");
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      if (req.update_mask.empty() || req.update_mask[static_cast<std::size_t>(r)]) {
        z.row(r) -= req.step_size * e.grad.row(r);
      }
    }
  }
  return res;
}

std::vector<SweepEntry> sweep_counterfactuals(const std::vector<SweepLayer> &layers,
                                              const std::pair<ParseTree, ParseTree> &parses,
                                              const SweepParams &params) {
  if (params.thresholds.empty()) throw ConfigError("sweep needs at least one threshold");
  std::vector<SweepEntry> out;
  out.reserve(layers.size() * params.thresholds.size() * 2);
  for (const auto &layer : layers) {
    for (double threshold : params.thresholds) {
      for (int interp = 0; interp < 2; ++interp) {
        CounterfactualRequest req;
        req.embeddings = layer.embeddings;
        req.target = interp == 0 ? parses.first : parses.second;
        req.probe = layer.probe;
        req.loss_threshold = threshold;
        req.step_size = params.step_size;
        req.max_steps = params.max_steps;
        req.update_mask = params.update_mask;
        req.word_rows = params.word_rows;
        out.push_back({layer.layer, threshold, interp, generate_counterfactual(req)});
      }
    }
  }
  return out;
}

void save_counterfactual(const std::string &path, const CounterfactualResult &result,
                         const nlohmann::json &metadata) {
  Payload p;
  p.header = {{"format", "causalprobe.counterfactual"},
              {"version", 1},
              {"final_loss", result.final_loss},
              {"steps_taken", result.steps_taken},
              {"metadata", metadata}};
  p.tensors.push_back({"embeddings_prime", result.embeddings_prime});
  Eigen::MatrixXd traj(1, static_cast<Eigen::Index>(result.loss_trajectory.size()));
  for (std::size_t i = 0; i < result.loss_trajectory.size(); ++i) {
    traj(0, static_cast<Eigen::Index>(i)) = result.loss_trajectory[i];
  }
  p.tensors.push_back({"loss_trajectory", traj});
  save_payload(path, p);
}

CounterfactualResult load_counterfactual(const std::string &path, nlohmann::json *metadata) {
  const Payload p = load_payload(path);
  if (p.header.value("format", std::string()) != "causalprobe.counterfactual") {
    throw FormatError(path + " is not a counterfactual payload");
  }
  CounterfactualResult r;
  try {
    r.final_loss = p.header.at("final_loss").get<double>();
    r.steps_taken = p.header.at("steps_taken").get<int>();
    if (metadata) *metadata = p.header.value("metadata", nlohmann::json::object());
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("bad counterfactual header: ") + e.what());
  }
  r.embeddings_prime = p.tensor("embeddings_prime");
  const Eigen::MatrixXd &traj = p.tensor("loss_trajectory");
  r.loss_trajectory.assign(traj.data(), traj.data() + traj.size());
  return r;
}

}  // namespace causalprobe
