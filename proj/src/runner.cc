#include "causalprobe/runner.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "causalprobe/counterfactual.h"
#include "causalprobe/error.h"
#include "causalprobe/external_model.h"
#include "causalprobe/payload.h"
#include "causalprobe/rng.h"
#include "causalprobe/suites.h"

namespace causalprobe {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
  if (model.kind != "synthetic" && model.kind != "external") {
    throw ConfigError("model.kind must be 'synthetic' or 'external'");
  }
  if (model.kind == "external" && model.command.empty()) {
    throw ConfigError("model.command is required for external models");
  }
  if (model.kind == "synthetic") model.synthetic.validate();
  if (hidden_dim < 1 || output_dim < 1) throw ConfigError("probe dims must be positive");
  train.validate();
  if (layers.empty()) throw ConfigError("layers must not be empty");
  if (dropout_rates.empty()) throw ConfigError("dropout_rates must not be empty");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (loss_thresholds.empty()) throw ConfigError("loss_thresholds must not be empty");
  for (double a : dropout_rates) {
    if (!(a >= 0.0 && a < 1.0)) throw ConfigError("dropout rates must lie in [0, 1)");
  }
  for (double t : loss_thresholds) {
    if (!(t > 0.0)) throw ConfigError("loss thresholds must be positive");
  }
  if (!(step_size > 0.0)) throw ConfigError("counterfactual.step_size must be positive");
  if (max_steps < 0) throw ConfigError("counterfactual.max_steps must be non-negative");
  mine.validate();
  if (mine_max_tokens < 2) throw ConfigError("mine.max_tokens must be >= 2");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (corpus.min_length < 1 || corpus.max_length < corpus.min_length) {
    throw ConfigError("corpus lengths must satisfy 1 <= min_length <= max_length");
  }
}

nlohmann::json to_json(const ExperimentConfig &c) {
  const auto &s = c.model.synthetic;
  return {
      {"model",
       {{"kind", c.model.kind},
        {"command", c.model.command},
        {"task", c.model.task ? json(std::string(to_string(*c.model.task))) : json(nullptr)},
        {"synthetic",
         {{"seed", s.seed},
          {"codebook_size", s.codebook_size},
          {"lexical_dims", s.lexical_dims},
          {"lexical_scale", s.lexical_scale},
          {"n_layers", s.n_layers},
          {"gain", s.gain},
          {"causal_layer", s.causal_layer ? json(*s.causal_layer) : json(nullptr)}}}}},
      {"probe",
       {{"kind", std::string(to_string(c.probe_kind))},
        {"hidden_dim", c.hidden_dim},
        {"output_dim", c.output_dim}}},
      {"train",
       {{"max_epochs", c.train.max_epochs},
        {"patience", c.train.patience},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate}}},
      {"corpus",
       {{"train", c.corpus.train},
        {"dev", c.corpus.dev},
        {"test", c.corpus.test},
        {"synthetic_sentences", c.corpus.synthetic_sentences},
        {"min_length", c.corpus.min_length},
        {"max_length", c.corpus.max_length},
        {"seed", c.corpus.seed}}},
      {"layers", c.layers},
      {"dropout_rates", c.dropout_rates},
      {"seeds", c.seeds},
      {"loss_thresholds", c.loss_thresholds},
      {"suite",
       {{"id", c.suite_id},
        {"limit", c.suite_limit ? json(*c.suite_limit) : json(nullptr)},
        {"encoded_interpretation", std::string(to_string(c.encoded_interpretation))}}},
      {"counterfactual",
       {{"step_size", c.step_size},
        {"max_steps", c.max_steps},
        {"absolute_effect", c.absolute_effect}}},
      {"mine",
       {{"epochs", c.mine.epochs},
        {"batch_size", c.mine.batch_size},
        {"learning_rate", c.mine.learning_rate},
        {"encoder_width", c.mine.encoder_width},
        {"hidden_width", c.mine.hidden_width},
        {"smoothing_window", c.mine.smoothing_window},
        {"seed", c.mine.seed},
        {"margin", c.mine_margin},
        {"max_tokens", c.mine_max_tokens}}},
      {"intervention_layer", c.intervention_layer},
      {"output_dir", c.output_dir},
      {"threads", c.threads}};
}

namespace {

// Overlays `user` onto `base`, rejecting keys the base does not define.
void overlay(json &base, const json &user, const std::string &path) {
  if (!user.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json &slot = base[it.key()];
    if (slot.is_object() && it.value().is_object()) {
      overlay(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

template <typename T>
T read(const json &j, const char *section, const char *key) {
  const json &v = section ? j.at(section).at(key) : j.at(key);
  try {
    return v.get<T>();
  } catch (const json::exception &) {
    throw ConfigError(std::string("config key '") + (section ? std::string(section) + "." : "") +
                      key + "' has the wrong type");
  }
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json &user) {
  json j = to_json(ExperimentConfig{});
  overlay(j, user, "");
  ExperimentConfig c;
  const json &m = j["model"];
  c.model.kind = read<std::string>(j, "model", "kind");
  c.model.command = read<std::string>(j, "model", "command");
  if (!m["task"].is_null()) c.model.task = task_from_string(read<std::string>(j, "model", "task"));
  const json &s = m["synthetic"];
  auto &sc = c.model.synthetic;
  sc.seed = read<std::uint64_t>(m, "synthetic", "seed");
  sc.codebook_size = read<int>(m, "synthetic", "codebook_size");
  sc.lexical_dims = read<int>(m, "synthetic", "lexical_dims");
  sc.lexical_scale = read<double>(m, "synthetic", "lexical_scale");
  sc.n_layers = read<int>(m, "synthetic", "n_layers");
  sc.gain = read<double>(m, "synthetic", "gain");
  if (!s["causal_layer"].is_null()) sc.causal_layer = read<int>(m, "synthetic", "causal_layer");
  if (c.model.task) sc.task = *c.model.task;

  c.probe_kind = probe_kind_from_string(read<std::string>(j, "probe", "kind"));
  c.hidden_dim = read<int>(j, "probe", "hidden_dim");
  c.output_dim = read<int>(j, "probe", "output_dim");
  c.train.max_epochs = read<int>(j, "train", "max_epochs");
  c.train.patience = read<int>(j, "train", "patience");
  c.train.batch_size = read<int>(j, "train", "batch_size");
  c.train.learning_rate = read<double>(j, "train", "learning_rate");
  c.corpus.train = read<std::string>(j, "corpus", "train");
  c.corpus.dev = read<std::string>(j, "corpus", "dev");
  c.corpus.test = read<std::string>(j, "corpus", "test");
  c.corpus.synthetic_sentences = read<int>(j, "corpus", "synthetic_sentences");
  c.corpus.min_length = read<int>(j, "corpus", "min_length");
  c.corpus.max_length = read<int>(j, "corpus", "max_length");
  c.corpus.seed = read<std::uint64_t>(j, "corpus", "seed");
  c.layers = read<std::vector<int>>(j, nullptr, "layers");
  c.dropout_rates = read<std::vector<double>>(j, nullptr, "dropout_rates");
  c.seeds = read<std::vector<std::uint64_t>>(j, nullptr, "seeds");
  c.loss_thresholds = read<std::vector<double>>(j, nullptr, "loss_thresholds");
  c.suite_id = read<std::string>(j, "suite", "id");
  if (!j["suite"]["limit"].is_null()) c.suite_limit = read<std::size_t>(j, "suite", "limit");
  c.encoded_interpretation =
      interpretation_from_string(read<std::string>(j, "suite", "encoded_interpretation"));
  c.step_size = read<double>(j, "counterfactual", "step_size");
  c.max_steps = read<int>(j, "counterfactual", "max_steps");
  c.absolute_effect = read<bool>(j, "counterfactual", "absolute_effect");
  c.mine.epochs = read<int>(j, "mine", "epochs");
  c.mine.batch_size = read<int>(j, "mine", "batch_size");
  c.mine.learning_rate = read<double>(j, "mine", "learning_rate");
  c.mine.encoder_width = read<int>(j, "mine", "encoder_width");
  c.mine.hidden_width = read<int>(j, "mine", "hidden_width");
  c.mine.smoothing_window = read<int>(j, "mine", "smoothing_window");
  c.mine.seed = read<std::uint64_t>(j, "mine", "seed");
  c.mine_margin = read<double>(j, "mine", "margin");
  c.mine_max_tokens = read<std::size_t>(j, "mine", "max_tokens");
  c.intervention_layer = read<int>(j, nullptr, "intervention_layer");
  c.output_dir = read<std::string>(j, nullptr, "output_dir");
  c.threads = read<int>(j, nullptr, "threads");
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void apply_override(nlohmann::json &config, const std::string &assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must look like key.path=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error &) {
    value = raw;
  }
  const json schema = to_json(ExperimentConfig{});
  const json *s = &schema;
  json *target = &config;
  if (!target->is_object()) *target = json::object();
  std::stringstream parts(key);
  std::vector<std::string> path;
  for (std::string p; std::getline(parts, p, '.');) path.push_back(p);
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (!s->is_object() || !s->contains(path[i])) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    s = &(*s)[path[i]];
    if (i + 1 == path.size()) {
      (*target)[path[i]] = value;
    } else {
      json &next = (*target)[path[i]];
      if (!next.is_object()) next = json::object();
      target = &next;
    }
  }
}

namespace {

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt_alpha(double a) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", a);
  return buf;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::uint64_t file_fingerprint(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a(bytes);
}

void write_text(const fs::path &p, const std::string &text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << text;
}

void write_manifest(const ExperimentConfig &config, const std::string &command,
                    const LayeredModel &model, const std::vector<fs::path> &artifacts) {
  json arts = json::array();
  for (const auto &a : artifacts) {
    arts.push_back({{"path", fs::relative(a, config.output_dir).generic_string()},
                    {"fnv1a", hex16(file_fingerprint(a))}});
  }
  json m = {{"command", command},
            {"config_hash", config_hash(config)},
            {"config", to_json(config)},
            {"seeds", config.seeds},
            {"model_id", model.model_id()},
            {"artifacts", arts}};
  write_text(fs::path(config.output_dir) / "manifests" / (command + ".json"), m.dump(2) + "\n");
}

// Runs fn(i) for i in [0, n) on up to `threads` threads; rethrows the first
// failure.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex mu;
  std::exception_ptr error;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= n || error) return;
        i = next++;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min<int>(threads, static_cast<int>(n)); ++t) pool.emplace_back(worker);
  for (auto &t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void check_layers(const ExperimentConfig &config, const LayeredModel &model) {
  for (int k : config.layers) {
    if (k <= 0 || k >= model.n_layers()) {
      throw ConfigError("layer " + std::to_string(k) + " outside (0, " +
                        std::to_string(model.n_layers()) + ") for model " + model.model_id());
    }
  }
}

}  // namespace

std::string config_hash(const ExperimentConfig &config) {
  return hex16(fnv1a(to_json(config).dump()));
}

std::unique_ptr<LayeredModel> make_model(const ModelSpec &spec) {
  std::unique_ptr<LayeredModel> m;
  if (spec.kind == "synthetic") {
    SyntheticModelConfig c = spec.synthetic;
    if (spec.task) c.task = *spec.task;
    m = std::make_unique<SyntheticRedundantModel>(c);
  } else if (spec.kind == "external") {
    m = std::make_unique<ExternalProcessModel>(spec.command);
  } else {
    throw ConfigError("unknown model kind '" + spec.kind + "'");
  }
  if (spec.task && m->task() != *spec.task) {
    throw ConfigError("model " + m->model_id() + " serves " + std::string(to_string(m->task())) +
                      ", config asks for " + std::string(to_string(*spec.task)));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Corpora and embeddings

std::vector<CorpusRecord> synthetic_corpus(int sentences, int min_length, int max_length,
                                           std::uint64_t seed) {
  if (sentences < 1) throw ConfigError("synthetic corpus needs at least one sentence");
  if (min_length < 1 || max_length < min_length) throw ConfigError("bad synthetic lengths");
  static const std::vector<std::string> vocab = {
      "the", "a",     "man",   "woman", "dog",  "saw",   "heard", "tall",  "red",  "box",
      "on",  "with",  "and",   "ran",   "quickly", "girl", "cat", "table", "old",  "gave"};
  Rng rng(derive_seed(seed, {0x636f72ULL}));
  std::uniform_int_distribution<int> length(min_length, max_length);
  std::uniform_int_distribution<std::size_t> word(0, vocab.size() - 1);
  std::vector<CorpusRecord> out;
  for (int s = 0; s < sentences; ++s) {
    const int n = length(rng);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> heads(static_cast<std::size_t>(n));
    heads[static_cast<std::size_t>(order[0])] = ParseTree::kRoot;
    for (int k = 1; k < n; ++k) {
      std::uniform_int_distribution<int> parent(0, k - 1);
      heads[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] =
          order[static_cast<std::size_t>(parent(rng))];
    }
    std::vector<std::string> tokens;
    for (int i = 0; i < n; ++i) tokens.push_back(vocab[word(rng)]);
    out.push_back(make_record("synthetic:" + std::to_string(s + 1), tokens, heads));
  }
  return out;
}

CorpusSplits load_corpus(const CorpusSpec &spec) {
  CorpusSplits c;
  if (!spec.train.empty()) {
    if (spec.dev.empty()) throw ConfigError("corpus.dev is required with corpus.train");
    c.train = ingest_corpus_file(spec.train);
    c.dev = ingest_corpus_file(spec.dev);
    c.test = spec.test.empty() ? c.dev : ingest_corpus_file(spec.test);
  } else if (spec.synthetic_sentences > 0) {
    const int held = std::max(10, spec.synthetic_sentences / 5);
    c.train = synthetic_corpus(spec.synthetic_sentences, spec.min_length, spec.max_length,
                               derive_seed(spec.seed, {1}));
    c.dev = synthetic_corpus(held, spec.min_length, spec.max_length, derive_seed(spec.seed, {2}));
    c.test = synthetic_corpus(held, spec.min_length, spec.max_length, derive_seed(spec.seed, {3}));
  } else {
    throw ConfigError("no corpus: set corpus.train/corpus.dev or corpus.synthetic_sentences");
  }
  if (c.train.empty() || c.dev.empty()) throw ConfigError("corpus split is empty");
  return c;
}

namespace {

std::uint64_t records_fingerprint(const std::vector<CorpusRecord> &records) {
  std::uint64_t h = fnv1a("records");
  for (const auto &r : records) {
    for (const auto &t : r.sentence.tokens) h = fnv1a(t + "\x1f", h);
    for (int x : r.tree.heads()) h = fnv1a(std::to_string(x) + ",", h);
    h = fnv1a("\x1e", h);
  }
  return h;
}

}  // namespace

LabeledSet embed_corpus(const LayeredModel &model, const std::vector<CorpusRecord> &records,
                        int layer) {
  fs::path cache_file;
  if (const char *dir = std::getenv("CAUSALPROBE_CACHE_DIR"); dir && *dir) {
    std::uint64_t key = fnv1a(model.model_id());
    key = fnv1a("|" + std::to_string(layer) + "|" + hex16(records_fingerprint(records)), key);
    cache_file = fs::path(dir) / ("emb-" + hex16(key) + ".bin");
    if (fs::exists(cache_file)) {
      const Payload p = load_payload(cache_file.string());
      const auto rows = p.header.at("rows").get<std::vector<Eigen::Index>>();
      if (rows.size() == records.size()) {
        const Eigen::MatrixXd &all = p.tensor("embeddings");
        LabeledSet out;
        Eigen::Index off = 0;
        for (std::size_t i = 0; i < records.size(); ++i) {
          out.push_back({all.middleRows(off, rows[i]), records[i].tree, records[i].punctuation});
          off += rows[i];
        }
        return out;
      }
    }
  }
  LabeledSet out;
  out.reserve(records.size());
  for (const auto &r : records) {
    ModelInput in;
    in.words = r.sentence.tokens;
    in.parse = r.tree;
    const EncodedInput e = encode_to_layer(model, in, layer);
    out.push_back({align_words(e.embeddings, e.word_rows), r.tree, r.punctuation});
  }
  if (!cache_file.empty()) {
    Payload p;
    std::vector<Eigen::Index> rows;
    Eigen::Index total = 0;
    for (const auto &ex : out) {
      rows.push_back(ex.embeddings.rows());
      total += ex.embeddings.rows();
    }
    Eigen::MatrixXd all(total, model.embedding_width());
    Eigen::Index off = 0;
    for (const auto &ex : out) {
      all.middleRows(off, ex.embeddings.rows()) = ex.embeddings;
      off += ex.embeddings.rows();
    }
    p.header = {{"format", "causalprobe.embeddings"},
                {"model_id", model.model_id()},
                {"layer", layer},
                {"rows", rows}};
    p.tensors.push_back({"embeddings", std::move(all)});
    fs::create_directories(cache_file.parent_path());
    save_payload(cache_file.string(), p);
  }
  return out;
}

std::uint64_t cell_seed(std::uint64_t seed, int layer, double alpha) {
  return derive_seed(seed, {static_cast<std::uint64_t>(layer),
                            static_cast<std::uint64_t>(std::llround(alpha * 1e6))});
}

std::string probe_checkpoint_path(const ExperimentConfig &config, int layer, double alpha,
                                  std::uint64_t seed) {
  return (fs::path(config.output_dir) / "probes" /
          (std::string(to_string(config.probe_kind)) + "_L" + std::to_string(layer) + "_a" +
           fmt_alpha(alpha) + "_s" + std::to_string(seed) + ".probe"))
      .string();
}

// ---------------------------------------------------------------------------
// Probe sweep

ProbeSweepResult run_probe_sweep(const ExperimentConfig &config) {
  config.validate();
  const CorpusSplits corpus = load_corpus(config.corpus);
  auto model = make_model(config.model);
  return run_probe_sweep(config, *model);
}

ProbeSweepResult run_probe_sweep(const ExperimentConfig &config, const LayeredModel &model) {
  config.validate();
  check_layers(config, model);
  const CorpusSplits corpus = load_corpus(config.corpus);
  ProbeSweepResult result;
  for (int layer : config.layers) {
    const LabeledSet train = embed_corpus(model, corpus.train, layer);
    const LabeledSet dev = embed_corpus(model, corpus.dev, layer);
    const LabeledSet test = embed_corpus(model, corpus.test, layer);
    std::vector<ProbeCell> cells;
    for (double alpha : config.dropout_rates) {
      for (std::uint64_t seed : config.seeds) {
        ProbeCell c;
        c.layer = layer;
        c.dropout_rate = alpha;
        c.seed = seed;
        c.checkpoint = probe_checkpoint_path(config, layer, alpha, seed);
        cells.push_back(c);
      }
    }
    parallel_for(cells.size(), config.threads, [&](std::size_t i) {
      ProbeCell &c = cells[i];
      ProbeConfig pc;
      pc.kind = config.probe_kind;
      pc.dropout_rate = c.dropout_rate;
      pc.input_dim = model.embedding_width();
      pc.hidden_dim = config.hidden_dim;
      pc.output_dim = config.output_dim;
      pc.seed = cell_seed(c.seed, c.layer, c.dropout_rate);
      TrainResult tr = train_probe(init_probe(pc), train, dev, config.train);
      c.best_epoch = tr.best_epoch;
      c.dev_loss = tr.history[static_cast<std::size_t>(tr.best_epoch - 1)].dev_loss;
      c.metrics = eval_probe(tr.probe, test);
      fs::create_directories(fs::path(c.checkpoint).parent_path());
      save_probe(c.checkpoint, tr.probe);
    });
    result.cells.insert(result.cells.end(), cells.begin(), cells.end());
  }

  const fs::path dir(config.output_dir);
  std::ostringstream tsv, jsonl, summary;
  tsv << "layer\tdropout_rate\tseed\tmetric\tvalue\tsentences\tbest_epoch\tdev_loss\n";
  std::map<std::pair<int, double>, std::vector<double>> by_cell;
  for (const auto &c : result.cells) {
    tsv << c.layer << '\t' << fmt_alpha(c.dropout_rate) << '\t' << c.seed << '\t'
        << to_string(c.metrics.metric) << '\t' << (c.metrics.value ? fmt(*c.metrics.value) : "NA")
        << '\t' << c.metrics.sentences << '\t' << c.best_epoch << '\t' << fmt(c.dev_loss) << '\n';
    jsonl << json{{"layer", c.layer},
                  {"dropout_rate", c.dropout_rate},
                  {"seed", c.seed},
                  {"checkpoint", fs::relative(c.checkpoint, dir).generic_string()},
                  {"metric", std::string(to_string(c.metrics.metric))},
                  {"value", c.metrics.value ? finite_or_null(*c.metrics.value) : json(nullptr)},
                  {"sentences", c.metrics.sentences},
                  {"best_epoch", c.best_epoch},
                  {"dev_loss", finite_or_null(c.dev_loss)}}
                 .dump()
          << '\n';
    if (c.metrics.value) by_cell[{c.layer, c.dropout_rate}].push_back(*c.metrics.value);
  }
  summary << "layer\tdropout_rate\tmetric\tmean\tstd\tseeds\n";
  for (const auto &[key, values] : by_cell) {
    const MeanStd ms = mean_std(values);
    summary << key.first << '\t' << fmt_alpha(key.second) << '\t'
            << to_string(default_metric(config.probe_kind)) << '\t' << fmt(ms.mean) << '\t'
            << fmt(ms.std) << '\t' << values.size() << '\n';
  }
  write_text(dir / "probe_metrics.tsv", tsv.str());
  write_text(dir / "probe_sweep.jsonl", jsonl.str());
  write_text(dir / "probe_metrics_summary.tsv", summary.str());
  std::vector<fs::path> artifacts = {dir / "probe_metrics.tsv", dir / "probe_sweep.jsonl",
                                     dir / "probe_metrics_summary.tsv"};
  for (const auto &c : result.cells) artifacts.emplace_back(c.checkpoint);
  write_manifest(config, "train-probes", model, artifacts);
  return result;
}

// ---------------------------------------------------------------------------
// Redundancy

std::vector<MineLayerResult> run_mine(const ExperimentConfig &config) {
  config.validate();
  load_corpus(config.corpus);
  auto model = make_model(config.model);
  return run_mine(config, *model);
}

std::vector<MineLayerResult> run_mine(const ExperimentConfig &config, const LayeredModel &model) {
  config.validate();
  check_layers(config, model);
  const CorpusSplits corpus = load_corpus(config.corpus);
  std::vector<CorpusRecord> records;
  std::size_t tokens = 0;
  for (const auto &r : corpus.train) {
    if (tokens >= config.mine_max_tokens) break;
    records.push_back(r);
    tokens += r.sentence.tokens.size();
  }
  std::vector<MineLayerResult> out;
  for (int layer : config.layers) {
    const LabeledSet set = embed_corpus(model, records, layer);
    std::vector<std::pair<const ProbeExample *, std::size_t>> rows;
    for (const auto &ex : set) {
      for (std::size_t i = 0; i < ex.tree.size(); ++i) {
        if (!ex.punctuation.empty() && ex.punctuation[i]) continue;
        if (rows.size() < config.mine_max_tokens) rows.push_back({&ex, i});
      }
    }
    RedundancySamples s;
    s.z.resize(static_cast<Eigen::Index>(rows.size()), model.embedding_width());
    s.d.resize(static_cast<Eigen::Index>(rows.size()), 1);
    std::map<const ProbeExample *, DepthVector> depths;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto [ex, i] = rows[k];
      auto it = depths.find(ex);
      if (it == depths.end()) it = depths.emplace(ex, parse_depths(ex->tree)).first;
      s.z.row(static_cast<Eigen::Index>(k)) = ex->embeddings.row(static_cast<Eigen::Index>(i));
      s.d(static_cast<Eigen::Index>(k), 0) = it->second[i];
    }
    MineSchedule schedule = config.mine;
    schedule.seed = derive_seed(config.mine.seed, {static_cast<std::uint64_t>(layer)});
    out.push_back({layer, rows.size(), redundancy_test(s, schedule, config.mine_margin)});
  }

  const fs::path dir(config.output_dir);
  std::ostringstream jsonl, tsv;
  tsv << "layer\ttokens\ti_z1\ti_z2\ti_z\tredundant\n";
  for (const auto &r : out) {
    jsonl << json{{"model_id", model.model_id()},
                  {"layer", r.layer},
                  {"tokens", r.tokens},
                  {"i_z1", finite_or_null(r.report.i_z1)},
                  {"i_z2", finite_or_null(r.report.i_z2)},
                  {"i_z", finite_or_null(r.report.i_z)},
                  {"margin", config.mine_margin},
                  {"redundant", r.report.redundant}}
                 .dump()
          << '\n';
    tsv << r.layer << '\t' << r.tokens << '\t' << fmt(r.report.i_z1) << '\t' << fmt(r.report.i_z2)
        << '\t' << fmt(r.report.i_z) << '\t' << (r.report.redundant ? "true" : "false") << '\n';
  }
  write_text(dir / "mine.jsonl", jsonl.str());
  write_text(dir / "mine_summary.tsv", tsv.str());
  write_manifest(config, "mine", model, {dir / "mine.jsonl", dir / "mine_summary.tsv"});
  return out;
}

// ---------------------------------------------------------------------------
// Counterfactual experiments

namespace {

std::vector<Prompt> load_prompts(const ExperimentConfig &config, const LayeredModel &model) {
  std::vector<Prompt> prompts = generate_suite(config.suite_id);
  if (config.suite_limit && *config.suite_limit < prompts.size()) {
    prompts.resize(*config.suite_limit);
  }
  if (prompts.empty()) throw ConfigError("suite " + config.suite_id + " produced no prompts");
  if (prompts.front().task != model.task()) {
    throw ConfigError("suite " + config.suite_id + " needs a " +
                      std::string(to_string(prompts.front().task)) + " model, got " +
                      std::string(to_string(model.task())));
  }
  return prompts;
}

using ProbeKey = std::tuple<int, double, std::uint64_t>;

std::map<ProbeKey, Probe> load_probes(const ExperimentConfig &config, const LayeredModel &model,
                                      const std::vector<int> &layers) {
  std::map<ProbeKey, Probe> probes;
  for (int layer : layers) {
    for (double alpha : config.dropout_rates) {
      for (std::uint64_t seed : config.seeds) {
        const std::string path = probe_checkpoint_path(config, layer, alpha, seed);
        if (!fs::exists(path)) {
          throw NotFoundError("missing probe checkpoint " + path +
                              " (layer " + std::to_string(layer) + ", dropout " + fmt_alpha(alpha) +
                              ", seed " + std::to_string(seed) + "); run train-probes first");
        }
        Probe p = load_probe(path);
        if (p.config().input_dim != model.embedding_width()) {
          throw DimensionError("probe " + path + " expects width " +
                               std::to_string(p.config().input_dim) + ", model has " +
                               std::to_string(model.embedding_width()));
        }
        probes.emplace(ProbeKey{layer, alpha, seed}, std::move(p));
      }
    }
  }
  return probes;
}

struct Encoded {
  ModelInput input;
  EncodedInput encoded;
  std::vector<bool> mask;
};

Encoded encode_prompt(const Prompt &prompt, Interpretation encoded, const LayeredModel &model,
                      int layer) {
  Encoded e;
  e.input = to_model_input(prompt, encoded);
  e.encoded = encode_to_layer(model, e.input, layer);
  e.mask.assign(static_cast<std::size_t>(e.encoded.embeddings.rows()), false);
  for (const auto &span : e.encoded.word_rows) {
    for (std::size_t r = span.begin; r < span.end; ++r) e.mask[r] = true;
  }
  return e;
}

CounterfactualResult counterfactual_for(const Encoded &e, const ParseTree &target,
                                        const Probe &probe, double threshold,
                                        const ExperimentConfig &config) {
  CounterfactualRequest req;
  req.embeddings = e.encoded.embeddings;
  req.target = target;
  req.probe = &probe;
  req.loss_threshold = threshold;
  req.step_size = config.step_size;
  req.max_steps = config.max_steps;
  req.update_mask = e.mask;
  req.word_rows = e.encoded.word_rows;
  return generate_counterfactual(req);
}

Interpretation other(Interpretation i) {
  return i == Interpretation::kA ? Interpretation::kB : Interpretation::kA;
}

}  // namespace

CausalSuiteResult run_causal_suite(const ExperimentConfig &config) {
  config.validate();
  auto model = make_model(config.model);
  return run_causal_suite(config, *model);
}

CausalSuiteResult run_causal_suite(const ExperimentConfig &config, const LayeredModel &model) {
  config.validate();
  check_layers(config, model);
  const std::vector<Prompt> prompts = load_prompts(config, model);
  const auto probes = load_probes(config, model, config.layers);

  // encodings[layer index][prompt]
  std::vector<std::vector<Encoded>> encodings(config.layers.size());
  std::vector<double> original(prompts.size());
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    const ModelInput in = to_model_input(prompts[p], config.encoded_interpretation);
    original[p] = prompt_outcome(model.forward(in), prompts[p]);
  }
  for (std::size_t li = 0; li < config.layers.size(); ++li) {
    for (const auto &prompt : prompts) {
      encodings[li].push_back(
          encode_prompt(prompt, config.encoded_interpretation, model, config.layers[li]));
    }
  }

  struct Job {
    double alpha;
    std::uint64_t seed;
    std::vector<CausalCell> cells;  // one per threshold
    std::vector<json> records;
  };
  std::vector<Job> jobs;
  for (double alpha : config.dropout_rates) {
    for (std::uint64_t seed : config.seeds) jobs.push_back({alpha, seed, {}, {}});
  }

  parallel_for(jobs.size(), config.threads, [&](std::size_t j) {
    Job &job = jobs[j];
    for (double threshold : config.loss_thresholds) {
      CausalCell cell;
      cell.dropout_rate = job.alpha;
      cell.loss_threshold = threshold;
      cell.seed = job.seed;
      std::map<int, LayerOutcome> per_layer;
      for (std::size_t li = 0; li < config.layers.size(); ++li) {
        const int layer = config.layers[li];
        const Probe &probe = probes.at(ProbeKey{layer, job.alpha, job.seed});
        double sum_o = 0.0, sum_a = 0.0, sum_b = 0.0;
        std::size_t ok = 0;
        for (std::size_t p = 0; p < prompts.size(); ++p) {
          const Prompt &prompt = prompts[p];
          const Encoded &e = encodings[li][p];
          json rec = {{"dropout_rate", job.alpha},
                      {"seed", job.seed},
                      {"loss_threshold", threshold},
                      {"layer", layer},
                      {"prompt_index", prompt.index},
                      {"original", finite_or_null(original[p])}};
          try {
            const Interpretation raise = prompt.outcome_parse;
            const CounterfactualResult ca =
                counterfactual_for(e, gold_parse(prompt, raise), probe, threshold, config);
            const CounterfactualResult cb =
                counterfactual_for(e, gold_parse(prompt, other(raise)), probe, threshold, config);
            const double oa = prompt_outcome(
                continue_from_layer(model, e.input, ca.embeddings_prime, layer), prompt);
            const double ob = prompt_outcome(
                continue_from_layer(model, e.input, cb.embeddings_prime, layer), prompt);
            if (!std::isfinite(oa) || !std::isfinite(ob)) throw MetricError("non-finite outcome");
            rec["outcome_a"] = oa;
            rec["outcome_b"] = ob;
            rec["steps_a"] = ca.steps_taken;
            rec["steps_b"] = cb.steps_taken;
            rec["loss_a"] = finite_or_null(ca.final_loss);
            rec["loss_b"] = finite_or_null(cb.final_loss);
            rec["status"] = "ok";
            sum_o += original[p];
            sum_a += oa;
            sum_b += ob;
            ++ok;
          } catch (const DivergenceError &err) {
            rec["outcome_a"] = nullptr;
            rec["outcome_b"] = nullptr;
            rec["status"] = "diverged";
            rec["error"] = err.what();
            ++cell.failures;
          } catch (const MetricError &err) {
            rec["outcome_a"] = nullptr;
            rec["outcome_b"] = nullptr;
            rec["status"] = "undefined";
            rec["error"] = err.what();
            ++cell.failures;
          }
          job.records.push_back(std::move(rec));
        }
        if (ok > 0) {
          const double n = static_cast<double>(ok);
          per_layer[layer] = {sum_o / n, sum_a / n, sum_b / n};
        }
      }
      if (!per_layer.empty()) {
        cell.report = causal_effect(per_layer, job.alpha, threshold, config.absolute_effect);
      } else {
        cell.report.dropout_rate = job.alpha;
        cell.report.loss_threshold = threshold;
        cell.report.aggregate = std::numeric_limits<double>::quiet_NaN();
      }
      job.cells.push_back(std::move(cell));
    }
  });

  CausalSuiteResult result;
  std::ostringstream jsonl;
  for (const auto &job : jobs) {
    for (const auto &r : job.records) jsonl << r.dump() << '\n';
    result.cells.insert(result.cells.end(), job.cells.begin(), job.cells.end());
  }
  for (double alpha : config.dropout_rates) {
    for (double threshold : config.loss_thresholds) {
      CausalSummary s;
      s.dropout_rate = alpha;
      s.loss_threshold = threshold;
      std::vector<double> aggregates;
      std::map<int, std::vector<double>> diffs;
      for (const auto &c : result.cells) {
        if (c.dropout_rate != alpha || c.loss_threshold != threshold) continue;
        if (std::isfinite(c.report.aggregate)) aggregates.push_back(c.report.aggregate);
        for (const auto &[layer, o] : c.report.per_layer) {
          const double d = o.parse_a - o.parse_b;
          diffs[layer].push_back(config.absolute_effect ? std::abs(d) : d);
        }
      }
      s.aggregate = mean_std(aggregates);
      for (const auto &[layer, v] : diffs) s.per_layer[layer] = mean_std(v);
      result.summary.push_back(std::move(s));
    }
  }

  const fs::path dir(config.output_dir);
  const std::string stem = "causal_" + config.suite_id;
  std::ostringstream summary, curves;
  summary << "dropout_rate\tloss_threshold\taggregate_mean\taggregate_std\tseeds\tfailures\n";
  curves << "dropout_rate\tloss_threshold\tlayer\tdiff_mean\tdiff_std\n";
  for (const auto &s : result.summary) {
    std::size_t failures = 0, seeds = 0;
    for (const auto &c : result.cells) {
      if (c.dropout_rate == s.dropout_rate && c.loss_threshold == s.loss_threshold) {
        failures += c.failures;
        if (std::isfinite(c.report.aggregate)) ++seeds;
      }
    }
    summary << fmt_alpha(s.dropout_rate) << '\t' << fmt(s.loss_threshold) << '\t'
            << fmt(s.aggregate.mean) << '\t' << fmt(s.aggregate.std) << '\t' << seeds << '\t'
            << failures << '\n';
    for (const auto &[layer, ms] : s.per_layer) {
      curves << fmt_alpha(s.dropout_rate) << '\t' << fmt(s.loss_threshold) << '\t' << layer << '\t'
             << fmt(ms.mean) << '\t' << fmt(ms.std) << '\n';
    }
  }
  write_text(dir / (stem + ".jsonl"), jsonl.str());
  write_text(dir / (stem + "_summary.tsv"), summary.str());
  write_text(dir / (stem + "_curves.tsv"), curves.str());
  write_manifest(config, "causal", model,
                 {dir / (stem + ".jsonl"), dir / (stem + "_summary.tsv"),
                  dir / (stem + "_curves.tsv")});
  return result;
}

namespace {

struct PromptScores {
  double f1 = 0.0;
  bool exact = false;
};

PromptScores score_output(const TaskOutput &out, const Prompt &prompt,
                          const std::vector<std::string> &words) {
  const QaScores s = qa_scores(span_text(words, predicted_span(out)), *prompt.gold_answer);
  return {s.f1, s.exact};
}

struct InjectionCell {
  double original_f1 = 0.0, original_exact = 0.0;
  double counterfactual_f1 = 0.0, counterfactual_exact = 0.0;
  std::size_t failures = 0;
};

std::vector<Prompt> load_gold_prompts(const ExperimentConfig &config, const LayeredModel &model) {
  std::vector<Prompt> prompts = load_prompts(config, model);
  if (prompts.front().task != Task::kQaSpan || !prompts.front().gold_answer ||
      !prompts.front().gold_interpretation) {
    throw ConfigError("suite " + config.suite_id + " has no gold answers to score");
  }
  return prompts;
}

// Percent F1 / exact match over prompts, before and after injecting the
// gold parse at one layer.
InjectionCell inject(const ExperimentConfig &config, const LayeredModel &model,
                     const std::vector<Prompt> &prompts, const std::vector<Encoded> &encodings,
                     const std::vector<PromptScores> &original, int layer, const Probe &probe,
                     double threshold, std::vector<json> *records, double alpha,
                     std::uint64_t seed) {
  InjectionCell c;
  std::size_t ok = 0;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    const Prompt &prompt = prompts[p];
    c.original_f1 += original[p].f1;
    c.original_exact += original[p].exact ? 1.0 : 0.0;
    json rec = {{"dropout_rate", alpha},        {"seed", seed},
                {"loss_threshold", threshold},  {"layer", layer},
                {"prompt_index", prompt.index}, {"original_f1", original[p].f1},
                {"original_exact", original[p].exact}};
    try {
      const CounterfactualResult cf = counterfactual_for(
          encodings[p], gold_parse(prompt, *prompt.gold_interpretation), probe, threshold, config);
      const TaskOutput out =
          continue_from_layer(model, encodings[p].input, cf.embeddings_prime, layer);
      const PromptScores s = score_output(out, prompt, encodings[p].input.words);
      c.counterfactual_f1 += s.f1;
      c.counterfactual_exact += s.exact ? 1.0 : 0.0;
      rec["f1"] = s.f1;
      rec["exact"] = s.exact;
      rec["steps"] = cf.steps_taken;
      rec["loss"] = finite_or_null(cf.final_loss);
      rec["status"] = "ok";
      ++ok;
    } catch (const DivergenceError &err) {
      rec["f1"] = nullptr;
      rec["exact"] = nullptr;
      rec["status"] = "diverged";
      rec["error"] = err.what();
      ++c.failures;
    }
    if (records) records->push_back(std::move(rec));
  }
  const double n = static_cast<double>(prompts.size());
  c.original_f1 *= 100.0 / n;
  c.original_exact *= 100.0 / n;
  if (ok > 0) {
    c.counterfactual_f1 *= 100.0 / static_cast<double>(ok);
    c.counterfactual_exact *= 100.0 / static_cast<double>(ok);
  } else {
    c.counterfactual_f1 = std::numeric_limits<double>::quiet_NaN();
    c.counterfactual_exact = std::numeric_limits<double>::quiet_NaN();
  }
  return c;
}

std::vector<PromptScores> original_scores(const ExperimentConfig &config,
                                          const LayeredModel &model,
                                          const std::vector<Prompt> &prompts) {
  std::vector<PromptScores> out;
  for (const auto &p : prompts) {
    const ModelInput in = to_model_input(p, config.encoded_interpretation);
    out.push_back(score_output(model.forward(in), p, in.words));
  }
  return out;
}

// Rows for every (alpha, layer, threshold) in the given layers.
std::vector<InterventionRow> injection_table(const ExperimentConfig &config,
                                             const LayeredModel &model,
                                             const std::vector<int> &layers,
                                             std::vector<json> *records) {
  const std::vector<Prompt> prompts = load_gold_prompts(config, model);
  const auto probes = load_probes(config, model, layers);
  const std::vector<PromptScores> original = original_scores(config, model, prompts);

  struct Job {
    double alpha;
    int layer;
    std::size_t layer_index;
    std::uint64_t seed;
    std::vector<InjectionCell> cells;  // per threshold
    std::vector<json> records;
  };
  std::vector<std::vector<Encoded>> encodings(layers.size());
  for (std::size_t li = 0; li < layers.size(); ++li) {
    for (const auto &p : prompts) {
      encodings[li].push_back(encode_prompt(p, config.encoded_interpretation, model, layers[li]));
    }
  }
  std::vector<Job> jobs;
  for (double alpha : config.dropout_rates) {
    for (std::size_t li = 0; li < layers.size(); ++li) {
      for (std::uint64_t seed : config.seeds) jobs.push_back({alpha, layers[li], li, seed, {}, {}});
    }
  }
  parallel_for(jobs.size(), config.threads, [&](std::size_t j) {
    Job &job = jobs[j];
    const Probe &probe = probes.at(ProbeKey{job.layer, job.alpha, job.seed});
    for (double threshold : config.loss_thresholds) {
      job.cells.push_back(inject(config, model, prompts, encodings[job.layer_index], original,
                                 job.layer, probe, threshold, records ? &job.records : nullptr,
                                 job.alpha, job.seed));
    }
  });

  std::vector<InterventionRow> rows;
  for (double alpha : config.dropout_rates) {
    for (int layer : layers) {
      for (std::size_t t = 0; t < config.loss_thresholds.size(); ++t) {
        InterventionRow row;
        row.dropout_rate = alpha;
        row.loss_threshold = config.loss_thresholds[t];
        row.layer = layer;
        std::vector<double> of, oe, cf, ce;
        for (const auto &job : jobs) {
          if (job.alpha != alpha || job.layer != layer) continue;
          const InjectionCell &c = job.cells[t];
          of.push_back(c.original_f1);
          oe.push_back(c.original_exact);
          if (std::isfinite(c.counterfactual_f1)) {
            cf.push_back(c.counterfactual_f1);
            ce.push_back(c.counterfactual_exact);
          }
          row.failures += c.failures;
        }
        row.original_f1 = mean_std(of);
        row.original_exact = mean_std(oe);
        row.counterfactual_f1 = mean_std(cf);
        row.counterfactual_exact = mean_std(ce);
        rows.push_back(row);
      }
    }
  }
  if (records) {
    for (auto &job : jobs) {
      for (auto &r : job.records) records->push_back(std::move(r));
    }
  }
  return rows;
}

std::string injection_tsv(const std::vector<InterventionRow> &rows) {
  std::ostringstream out;
  out << "dropout_rate\tlayer\tloss_threshold\toriginal_f1\toriginal_exact\tf1_mean\tf1_std\t"
         "exact_mean\texact_std\tfailures\n";
  for (const auto &r : rows) {
    out << fmt_alpha(r.dropout_rate) << '\t' << r.layer << '\t' << fmt(r.loss_threshold) << '\t'
        << fmt(r.original_f1.mean) << '\t' << fmt(r.original_exact.mean) << '\t'
        << fmt(r.counterfactual_f1.mean) << '\t' << fmt(r.counterfactual_f1.std) << '\t'
        << fmt(r.counterfactual_exact.mean) << '\t' << fmt(r.counterfactual_exact.std) << '\t'
        << r.failures << '\n';
  }
  return out.str();
}

}  // namespace

std::vector<InterventionRow> run_intervention(const ExperimentConfig &config) {
  config.validate();
  auto model = make_model(config.model);
  return run_intervention(config, *model);
}

std::vector<InterventionRow> run_intervention(const ExperimentConfig &config,
                                              const LayeredModel &model) {
  config.validate();
  ExperimentConfig c = config;
  c.layers = {config.intervention_layer};
  check_layers(c, model);
  std::vector<json> records;
  const auto rows = injection_table(c, model, c.layers, &records);
  const fs::path dir(config.output_dir);
  const std::string stem = "intervene_" + config.suite_id;
  std::ostringstream jsonl;
  for (const auto &r : records) jsonl << r.dump() << '\n';
  write_text(dir / (stem + ".jsonl"), jsonl.str());
  write_text(dir / (stem + ".tsv"), injection_tsv(rows));
  write_manifest(config, "intervene", model, {dir / (stem + ".jsonl"), dir / (stem + ".tsv")});
  return rows;
}

LayerSweepResult run_layer_sweep(const ExperimentConfig &config) {
  config.validate();
  auto model = make_model(config.model);
  return run_layer_sweep(config, *model);
}

LayerSweepResult run_layer_sweep(const ExperimentConfig &config, const LayeredModel &model) {
  config.validate();
  check_layers(config, model);
  LayerSweepResult result;
  result.rows = injection_table(config, model, config.layers, nullptr);
  for (double alpha : config.dropout_rates) {
    std::map<int, std::pair<double, double>> by_layer;  // mean F1, mean EM over thresholds
    for (const auto &r : result.rows) {
      if (r.dropout_rate != alpha) continue;
      auto &acc = by_layer[r.layer];
      acc.first += r.counterfactual_f1.mean;
      acc.second += r.counterfactual_exact.mean;
    }
    int best = by_layer.begin()->first;
    for (const auto &[layer, score] : by_layer) {
      if (score > by_layer[best]) best = layer;
    }
    result.best_layer[alpha] = best;
  }
  const fs::path dir(config.output_dir);
  const std::string stem = "layer_sweep_" + config.suite_id;
  std::ostringstream best;
  best << "dropout_rate\tbest_layer\n";
  for (const auto &[alpha, layer] : result.best_layer) best << fmt_alpha(alpha) << '\t' << layer << '\n';
  write_text(dir / (stem + ".tsv"), injection_tsv(result.rows));
  write_text(dir / (stem + "_best.tsv"), best.str());
  write_manifest(config, "layer-sweep", model,
                 {dir / (stem + ".tsv"), dir / (stem + "_best.tsv")});
  return result;
}

std::string summarize_reports(const std::string &output_dir) {
  if (!fs::is_directory(output_dir)) throw NotFoundError("no run directory " + output_dir);
  std::vector<fs::path> tables;
  for (const auto &entry : fs::directory_iterator(output_dir)) {
    if (entry.path().extension() == ".tsv") tables.push_back(entry.path());
  }
  std::sort(tables.begin(), tables.end());
  std::ostringstream out;
  for (const auto &t : tables) {
    std::ifstream in(t);
    out << "== " << t.filename().string() << " ==\n" << in.rdbuf() << '\n';
  }
  if (tables.empty()) out << "no reports in " << output_dir << '\n';
  return out.str();
}

}  // namespace causalprobe
