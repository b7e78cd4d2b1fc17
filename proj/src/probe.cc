#include "causalprobe/probe.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "causalprobe/error.h"
#include "causalprobe/payload.h"

namespace causalprobe {
namespace {

using nn::Matrix;

struct Activations {
  Matrix input;  // after dropout scaling
  Matrix pre1, h1, pre2, h2, out;
};

Activations forward(const Probe &probe, const Matrix &z, const Matrix *scale) {
  const auto &l = probe.layers();
  Activations a;
  a.input = scale ? Matrix(z.cwiseProduct(*scale)) : z;
  a.pre1 = l[0].forward(a.input);
  a.h1 = nn::relu(a.pre1);
  a.pre2 = l[1].forward(a.h1);
  a.h2 = nn::relu(a.pre2);
  a.out = l[2].forward(a.h2);
  return a;
}

double sgn(double x) { return (x > 0.0) - (x < 0.0); }

ParseLabels labels_from_transform(ProbeKind kind, const Matrix &f) {
  ParseLabels out;
  out.kind = kind;
  const Eigen::Index n = f.rows();
  if (kind == ProbeKind::kDepth) {
    out.depths = f.rowwise().squaredNorm();
  } else {
    out.distances = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double d = (f.row(i) - f.row(j)).squaredNorm();
        out.distances(i, j) = d;
        out.distances(j, i) = d;
      }
    }
  }
  return out;
}

// Loss of one sentence given its transformed rows, plus dL/df.
double sentence_loss_grad(ProbeKind kind, const Matrix &f, const ParseLabels &gold,
                          Matrix *df) {
  const Eigen::Index n = f.rows();
  const double nd = static_cast<double>(n);
  if (kind == ProbeKind::kDepth) {
    double loss = 0.0;
    df->resize(n, f.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = f.row(i).squaredNorm() - gold.depths(i);
      loss += std::abs(r);
      df->row(i) = (2.0 * sgn(r) / nd) * f.row(i);
    }
    return loss / nd;
  }
  Matrix s = Matrix::Zero(n, n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = (f.row(i) - f.row(j)).squaredNorm() - gold.distances(i, j);
      loss += std::abs(r);
      s(i, j) = s(j, i) = sgn(r);
    }
  }
  const double scale = 2.0 / (nd * nd);
  *df = scale * (s.rowwise().sum().asDiagonal() * f - s * f);
  return loss / (nd * nd);
}

// Runs the probe over stacked sentences. Returns the summed sentence loss;
// gradients (when requested) are of loss_sum * grad_scale.
double batch_backward(const Probe &probe, const std::vector<const Matrix *> &inputs,
                      const std::vector<const ParseLabels *> &golds, const Matrix *scale,
                      double grad_scale, std::array<nn::DenseGrad, 3> *grads,
                      Matrix *dinput) {
  Eigen::Index total = 0;
  for (const auto *z : inputs) total += z->rows();
  const Eigen::Index dim = probe.config().input_dim;
  Matrix z(total, dim);
  Eigen::Index row = 0;
  for (const auto *zi : inputs) {
    if (zi->cols() != dim) {
      throw DimensionError("embedding width " + std::to_string(zi->cols()) +
                           " does not match probe input_dim " + std::to_string(dim));
    }
    z.middleRows(row, zi->rows()) = *zi;
    row += zi->rows();
  }
  const Activations a = forward(probe, z, scale);
  Matrix df(total, a.out.cols());
  double loss_sum = 0.0;
  row = 0;
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    const Eigen::Index n = inputs[s]->rows();
    if (golds[s]->kind != probe.config().kind || golds[s]->size() != n) {
      throw DimensionError("gold labels do not match sentence length or probe kind");
    }
    Matrix block;
    loss_sum += sentence_loss_grad(probe.config().kind, a.out.middleRows(row, n),
                                   *golds[s], &block);
    df.middleRows(row, n) = block * grad_scale;
    row += n;
  }
  if (grads == nullptr && dinput == nullptr) return loss_sum;

  const auto &l = probe.layers();
  Matrix dh2, dh1, dz;
  nn::DenseGrad g3 = nn::dense_backward(l[2], a.h2, df, &dh2);
  const Matrix dpre2 = nn::relu_backward(a.pre2, dh2);
  nn::DenseGrad g2 = nn::dense_backward(l[1], a.h1, dpre2, &dh1);
  const Matrix dpre1 = nn::relu_backward(a.pre1, dh1);
  nn::DenseGrad g1 = nn::dense_backward(l[0], a.input, dpre1, dinput ? &dz : nullptr);
  if (grads) *grads = {std::move(g1), std::move(g2), std::move(g3)};
  if (dinput) *dinput = scale ? Matrix(dz.cwiseProduct(*scale)) : dz;
  return loss_sum;
}

double mean_loss(const Probe &probe, const LabeledSet &set,
                 const std::vector<ParseLabels> &gold) {
  double total = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    total += probe_loss(probe_predict(probe, set[i].embeddings), gold[i]);
  }
  return total / static_cast<double>(set.size());
}

void check_shapes(const ProbeConfig &c, const std::array<nn::Dense, 3> &l) {
  const bool ok = l[0].in() == c.input_dim && l[0].out() == c.hidden_dim &&
                  l[1].in() == c.hidden_dim && l[1].out() == c.hidden_dim &&
                  l[2].in() == c.hidden_dim && l[2].out() == c.output_dim &&
                  l[0].bias.size() == c.hidden_dim && l[1].bias.size() == c.hidden_dim &&
                  l[2].bias.size() == c.output_dim;
  if (!ok) throw DimensionError("probe layer shapes do not follow the config");
}

bool is_punct(const ProbeExample &ex, std::size_t i) {
  return !ex.punctuation.empty() && ex.punctuation[i];
}

std::vector<double> average_ranks(const std::vector<double> &v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::string_view to_string(ProbeKind kind) {
  return kind == ProbeKind::kDepth ? "depth" : "distance";
}

ProbeKind probe_kind_from_string(std::string_view s) {
  if (s == "depth") return ProbeKind::kDepth;
  if (s == "distance") return ProbeKind::kDistance;
  throw ConfigError("unknown probe kind '" + std::string(s) + "'");
}

std::string_view to_string(ProbeMetric metric) {
  return metric == ProbeMetric::kSpearman ? "spearman50" : "root_accuracy";
}

ProbeMetric default_metric(ProbeKind kind) {
  return kind == ProbeKind::kDistance ? ProbeMetric::kSpearman : ProbeMetric::kRootAccuracy;
}

void ProbeConfig::validate() const {
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout_rate must lie in [0, 1), got " + std::to_string(dropout_rate));
  }
  if (input_dim <= 0 || hidden_dim <= 0 || output_dim <= 0) {
    throw ConfigError("probe dimensions must be positive");
  }
}

void TrainSchedule::validate() const {
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
}

ParseLabels gold_labels(const ParseTree &tree, ProbeKind kind) {
  ParseLabels out;
  out.kind = kind;
  const auto n = static_cast<Eigen::Index>(tree.size());
  if (kind == ProbeKind::kDepth) {
    const DepthVector d = parse_depths(tree);
    out.depths.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) out.depths(i) = d[static_cast<std::size_t>(i)];
  } else {
    const DistanceMatrix d = parse_distances(tree);
    out.distances.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        out.distances(i, j) = d(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      }
    }
  }
  return out;
}

Probe Probe::from_layers(const ProbeConfig &config, std::array<nn::Dense, 3> layers,
                         bool trained) {
  config.validate();
  check_shapes(config, layers);
  Probe p;
  p.config_ = config;
  p.layers_ = std::move(layers);
  p.trained_ = trained;
  return p;
}

Matrix Probe::transform(const Matrix &z) const { return forward(*this, z, nullptr).out; }

Probe init_probe(const ProbeConfig &config) {
  config.validate();
  Rng rng(derive_seed(config.seed, {0x70726f6265ULL}));
  Probe p;
  p.config_ = config;
  p.layers_[0] = nn::Dense::init(config.input_dim, config.hidden_dim, rng);
  p.layers_[1] = nn::Dense::init(config.hidden_dim, config.hidden_dim, rng);
  p.layers_[2] = nn::Dense::init(config.hidden_dim, config.output_dim, rng);
  return p;
}

ParseLabels probe_predict(const Probe &probe, const Matrix &word_embeddings) {
  if (word_embeddings.cols() != probe.config().input_dim) {
    throw DimensionError("embedding width " + std::to_string(word_embeddings.cols()) +
                         " does not match probe input_dim " +
                         std::to_string(probe.config().input_dim));
  }
  return labels_from_transform(probe.config().kind, probe.transform(word_embeddings));
}

double probe_loss(const ParseLabels &predicted, const ParseLabels &gold) {
  if (predicted.kind != gold.kind) throw DimensionError("probe_loss: label kinds differ");
  const Eigen::Index n = gold.size();
  if (predicted.size() != n || n == 0) throw DimensionError("probe_loss: shape mismatch");
  const double nd = static_cast<double>(n);
  if (gold.kind == ProbeKind::kDepth) {
    return (predicted.depths - gold.depths).cwiseAbs().sum() / nd;
  }
  if (predicted.distances.cols() != n || gold.distances.cols() != n) {
    throw DimensionError("probe_loss: distance matrices must be square");
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      loss += std::abs(predicted.distances(i, j) - gold.distances(i, j));
    }
  }
  return loss / (nd * nd);
}

ProbeGradient probe_loss_gradient(const Probe &probe, const Matrix &z, const ParseLabels &gold,
                                  const Matrix *input_scale) {
  ProbeGradient g;
  g.loss = batch_backward(probe, {&z}, {&gold}, input_scale, 1.0, &g.layers, &g.input);
  return g;
}

Matrix sample_dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng &rng) {
  if (rate <= 0.0) return Matrix::Ones(rows, cols);
  std::bernoulli_distribution drop(rate);
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = drop(rng) ? 0.0 : keep_scale;
  }
  return m;
}

TrainResult train_probe(Probe probe, const LabeledSet &train, const LabeledSet &dev,
                        const TrainSchedule &schedule) {
  schedule.validate();
  if (train.empty() || dev.empty()) throw ConfigError("train_probe: empty train or dev set");
  const ProbeConfig &cfg = probe.config();
  const std::string fingerprint = training_fingerprint(cfg, schedule, train, dev);

  std::vector<ParseLabels> train_gold, dev_gold;
  for (const auto &ex : train) train_gold.push_back(gold_labels(ex.tree, cfg.kind));
  for (const auto &ex : dev) dev_gold.push_back(gold_labels(ex.tree, cfg.kind));

  Rng rng(derive_seed(cfg.seed, {0x747261696eULL}));
  nn::Adam adam(schedule.learning_rate);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  double best_dev = std::numeric_limits<double>::infinity();
  std::array<nn::Dense, 3> best_layers = probe.layers();

  for (int epoch = 1; epoch <= schedule.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(schedule.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(schedule.batch_size));
      std::vector<const Matrix *> inputs;
      std::vector<const ParseLabels *> golds;
      Eigen::Index tokens = 0;
      for (std::size_t k = start; k < end; ++k) {
        inputs.push_back(&train[order[k]].embeddings);
        golds.push_back(&train_gold[order[k]]);
        tokens += train[order[k]].embeddings.rows();
      }
      const Matrix mask = sample_dropout_mask(tokens, cfg.input_dim, cfg.dropout_rate, rng);
      std::array<nn::DenseGrad, 3> grads;
      train_sum += batch_backward(probe, inputs, golds, cfg.dropout_rate > 0 ? &mask : nullptr,
                                  1.0 / static_cast<double>(end - start), &grads, nullptr);
      auto &l = probe.mutable_layers();
      adam.step({nn::param(l[0].weight, grads[0].weight), nn::param(l[0].bias, grads[0].bias),
                 nn::param(l[1].weight, grads[1].weight), nn::param(l[1].bias, grads[1].bias),
                 nn::param(l[2].weight, grads[2].weight), nn::param(l[2].bias, grads[2].bias)});
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_sum / static_cast<double>(train.size());
    rec.dev_loss = mean_loss(probe, dev, dev_gold);
    result.history.push_back(rec);
    if (rec.dev_loss < best_dev) {
      best_dev = rec.dev_loss;
      best_layers = probe.layers();
      result.best_epoch = epoch;
    } else if (epoch - result.best_epoch >= schedule.patience) {
      break;
    }
  }
  probe.mutable_layers() = std::move(best_layers);
  probe.set_trained(true);
  probe.set_fingerprint(fingerprint);
  result.probe = std::move(probe);
  return result;
}

std::optional<double> spearman_correlation(const std::vector<double> &a,
                                           const std::vector<double> &b) {
  if (a.size() != b.size()) throw DimensionError("spearman: length mismatch");
  if (a.size() < 2) return std::nullopt;
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

ProbeMetrics spearman50(const std::vector<ParseLabels> &predicted, const LabeledSet &gold) {
  if (predicted.size() != gold.size()) throw DimensionError("spearman50: set size mismatch");
  ProbeMetrics m;
  m.metric = ProbeMetric::kSpearman;
  double total = 0.0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const ProbeExample &ex = gold[s];
    if (predicted[s].kind != ProbeKind::kDistance) {
      throw ConfigError("spearman50 requires distance predictions");
    }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ex.tree.size(); ++i) {
      if (!is_punct(ex, i)) keep.push_back(i);
    }
    if (keep.size() < 5 || keep.size() > 50) continue;
    const DistanceMatrix d = parse_distances(ex.tree);
    double row_total = 0.0;
    std::size_t rows = 0;
    for (std::size_t i : keep) {
      std::vector<double> p, g;
      for (std::size_t j : keep) {
        p.push_back(predicted[s].distances(static_cast<Eigen::Index>(i),
                                           static_cast<Eigen::Index>(j)));
        g.push_back(d(i, j));
      }
      if (auto r = spearman_correlation(p, g)) {
        row_total += *r;
        ++rows;
      }
    }
    if (rows == 0) continue;
    total += row_total / static_cast<double>(rows);
    ++m.sentences;
  }
  if (m.sentences > 0) m.value = total / static_cast<double>(m.sentences);
  return m;
}

ProbeMetrics root_accuracy(const std::vector<ParseLabels> &predicted, const LabeledSet &gold) {
  if (predicted.size() != gold.size()) throw DimensionError("root_accuracy: set size mismatch");
  ProbeMetrics m;
  m.metric = ProbeMetric::kRootAccuracy;
  std::size_t correct = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const ProbeExample &ex = gold[s];
    if (predicted[s].kind != ProbeKind::kDepth) {
      throw ConfigError("root_accuracy requires depth predictions");
    }
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < ex.tree.size(); ++i) {
      if (is_punct(ex, i)) continue;
      if (!best || predicted[s].depths(static_cast<Eigen::Index>(i)) <
                       predicted[s].depths(static_cast<Eigen::Index>(*best))) {
        best = i;
      }
    }
    if (!best) continue;
    ++m.sentences;
    if (*best == ex.tree.root()) ++correct;
  }
  if (m.sentences > 0) {
    m.value = static_cast<double>(correct) / static_cast<double>(m.sentences);
  }
  return m;
}

ProbeMetrics eval_probe(const Probe &probe, const LabeledSet &test,
                        std::optional<ProbeMetric> metric) {
  const ProbeMetric expected = default_metric(probe.config().kind);
  if (metric && *metric != expected) {
    throw ConfigError(std::string(to_string(*metric)) + " is not defined for " +
                      std::string(to_string(probe.config().kind)) + " probes");
  }
  std::vector<ParseLabels> predicted;
  predicted.reserve(test.size());
  for (const auto &ex : test) predicted.push_back(probe_predict(probe, ex.embeddings));
  return expected == ProbeMetric::kSpearman ? spearman50(predicted, test)
                                            : root_accuracy(predicted, test);
}

std::string training_fingerprint(const ProbeConfig &config, const TrainSchedule &schedule,
                                 const LabeledSet &train, const LabeledSet &dev) {
  std::string meta = std::string(to_string(config.kind)) + "|" +
                     std::to_string(config.dropout_rate) + "|" +
                     std::to_string(config.input_dim) + "|" + std::to_string(config.hidden_dim) +
                     "|" + std::to_string(config.output_dim) + "|" + std::to_string(config.seed) +
                     "|" + std::to_string(schedule.max_epochs) + "|" +
                     std::to_string(schedule.patience) + "|" + std::to_string(schedule.batch_size) +
                     "|" + std::to_string(schedule.learning_rate);
  std::uint64_t h = fnv1a(meta);
  for (const LabeledSet *set : {&train, &dev}) {
    for (const auto &ex : *set) {
      const auto &e = ex.embeddings;
      h = fnv1a(std::string_view(reinterpret_cast<const char *>(e.data()),
                                 static_cast<std::size_t>(e.size()) * sizeof(double)),
                h);
      const auto &heads = ex.tree.heads();
      h = fnv1a(std::string_view(reinterpret_cast<const char *>(heads.data()),
                                 heads.size() * sizeof(int)),
                h);
    }
    h = fnv1a("/", h);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_probe(const std::string &path, const Probe &probe) {
  Payload p;
  const ProbeConfig &c = probe.config();
  p.header = {{"format", "causalprobe.probe"},
              {"version", 1},
              {"kind", std::string(to_string(c.kind))},
              {"dropout_rate", c.dropout_rate},
              {"input_dim", c.input_dim},
              {"hidden_dim", c.hidden_dim},
              {"output_dim", c.output_dim},
              {"seed", c.seed},
              {"trained", probe.trained()},
              {"fingerprint", probe.fingerprint()}};
  const char *names[3] = {"layer1", "layer2", "layer3"};
  for (int i = 0; i < 3; ++i) {
    const auto &l = probe.layers()[static_cast<std::size_t>(i)];
    p.tensors.push_back({std::string(names[i]) + ".weight", l.weight});
    p.tensors.push_back({std::string(names[i]) + ".bias", Matrix(l.bias)});
  }
  save_payload(path, p);
}

Probe load_probe(const std::string &path) {
  const Payload p = load_payload(path);
  const auto &h = p.header;
  if (h.value("format", "") != "causalprobe.probe") {
    throw FormatError("'" + path + "' is not a probe checkpoint");
  }
  ProbeConfig c;
  try {
    c.kind = probe_kind_from_string(h.at("kind").get<std::string>());
    c.dropout_rate = h.at("dropout_rate").get<double>();
    c.input_dim = h.at("input_dim").get<int>();
    c.hidden_dim = h.at("hidden_dim").get<int>();
    c.output_dim = h.at("output_dim").get<int>();
    c.seed = h.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception &e) {
    throw FormatError("probe header in '" + path + "': " + e.what());
  }
  const char *names[3] = {"layer1", "layer2", "layer3"};
  std::array<nn::Dense, 3> layers;
  for (int i = 0; i < 3; ++i) {
    layers[static_cast<std::size_t>(i)].weight = p.tensor(std::string(names[i]) + ".weight");
    const Matrix &b = p.tensor(std::string(names[i]) + ".bias");
    layers[static_cast<std::size_t>(i)].bias = Eigen::Map<const Eigen::VectorXd>(b.data(), b.size());
  }
  Probe probe = Probe::from_layers(c, std::move(layers), h.value("trained", false));
  probe.set_fingerprint(h.value("fingerprint", ""));
  return probe;
}

}  // namespace causalprobe
