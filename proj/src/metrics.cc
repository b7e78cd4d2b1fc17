#include "causalprobe/metrics.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "causalprobe/error.h"

namespace causalprobe {

double candidate_probability(const TaskOutput &output,
                             const std::vector<std::string> &outcome_words,
                             const std::vector<std::string> &other_words) {
  if (output.task != Task::kMaskedFill) throw MetricError("candidate probability needs masked_fill output");
  long double hit = 0.0L, rest = 0.0L;
  for (const auto &w : outcome_words) hit += output.word_prob(w);
  for (const auto &w : other_words) rest += output.word_prob(w);
  if (!(hit + rest > 0.0L)) throw MetricError("candidate words carry no probability mass");
  return static_cast<double>(hit / (hit + rest));
}

double plural_probability(const TaskOutput &output) {
  return candidate_probability(output, {"were", "are", "as"}, {"was", "is"});
}

namespace {

long double span_mass(const TaskOutput &output, WordSpan words) {
  long double m = 0.0L;
  for (std::size_t w = words.begin; w < words.end; ++w) {
    if (w >= output.word_rows.size()) throw MetricError("answer span outside the output");
    const WordSpan rows = output.word_rows[w];
    for (std::size_t r = rows.begin; r < rows.end; ++r) {
      m += output.start_probs(static_cast<Eigen::Index>(r));
    }
  }
  return m;
}

}  // namespace

double np1_probability(const TaskOutput &output, const Prompt &prompt) {
  if (output.task != Task::kQaSpan) throw MetricError("np1 probability needs qa_span output");
  if (!prompt.answer.np1 || !prompt.answer.np2) throw MetricError("prompt has no noun phrase spans");
  const long double a = span_mass(output, *prompt.answer.np1);
  const long double b = span_mass(output, *prompt.answer.np2);
  if (!(a + b > 0.0L)) throw MetricError("no start mass on either noun phrase");
  return static_cast<double>(a / (a + b));
}

double prompt_outcome(const TaskOutput &output, const Prompt &prompt) {
  switch (prompt.task) {
    case Task::kMaskedFill:
      return candidate_probability(output, prompt.answer.outcome_words, prompt.answer.other_words);
    case Task::kQaSpan:
      return np1_probability(output, prompt);
    case Task::kNli:
      if (output.class_probs.size() != 3) throw MetricError("nli output needs 3 classes");
      return output.class_probs(0);
  }
  throw MetricError("unknown task");
}

CausalEffectReport causal_effect(const std::map<int, LayerOutcome> &per_layer,
                                 double dropout_rate, double loss_threshold, bool absolute) {
  if (per_layer.empty()) throw MetricError("causal effect over an empty layer set");
  CausalEffectReport r;
  r.per_layer = per_layer;
  r.dropout_rate = dropout_rate;
  r.loss_threshold = loss_threshold;
  r.absolute = absolute;
  double sum = 0.0;
  for (const auto &[layer, o] : per_layer) {
    const double d = o.parse_a - o.parse_b;
    sum += absolute ? std::abs(d) : d;
  }
  r.aggregate = sum / static_cast<double>(per_layer.size());
  return r;
}

namespace {

std::vector<std::string> normalized_tokens(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::istringstream in(lower);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

QaScores qa_scores(std::string_view predicted, std::string_view gold) {
  const auto p = normalized_tokens(predicted);
  const auto g = normalized_tokens(gold);
  QaScores s;
  s.exact = p == g;
  if (p.empty() || g.empty()) {
    s.f1 = s.exact ? 1.0 : 0.0;
    return s;
  }
  std::vector<std::string> ps = p, gs = g;
  std::sort(ps.begin(), ps.end());
  std::sort(gs.begin(), gs.end());
  std::vector<std::string> common;
  std::set_intersection(ps.begin(), ps.end(), gs.begin(), gs.end(), std::back_inserter(common));
  if (common.empty()) return s;
  s.f1 = 2.0 * static_cast<double>(common.size()) / static_cast<double>(p.size() + g.size());
  return s;
}

double nli_shift(const TaskOutput &original, const TaskOutput &counterfactual) {
  if (original.class_probs.size() != 3 || counterfactual.class_probs.size() != 3) {
    throw MetricError("nli shift needs two 3-class distributions");
  }
  return (original.class_probs - counterfactual.class_probs).cwiseAbs().maxCoeff();
}

WordSpan predicted_span(const TaskOutput &output, std::size_t max_words) {
  if (output.task != Task::kQaSpan) throw MetricError("predicted span needs qa_span output");
  const auto &rows = output.word_rows;
  if (rows.empty()) throw MetricError("qa output has no words");
  WordSpan best{0, 1};
  double best_score = -1.0;
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const double s = output.start_probs(static_cast<Eigen::Index>(rows[b].begin));
    for (std::size_t e = b; e < rows.size() && e < b + max_words; ++e) {
      const double score = s * output.end_probs(static_cast<Eigen::Index>(rows[e].end - 1));
      if (score > best_score) {
        best_score = score;
        best = {b, e + 1};
      }
    }
  }
  return best;
}

std::string span_text(const std::vector<std::string> &words, WordSpan span) {
  std::string out;
  for (std::size_t i = span.begin; i < span.end && i < words.size(); ++i) {
    if (!out.empty()) out += ' ';
    out += words[i];
  }
  return out;
}

MeanStd mean_std(const std::vector<double> &values) {
  MeanStd r;
  if (values.empty()) return r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(var / static_cast<double>(values.size()));
  return r;
}

}  // namespace causalprobe
