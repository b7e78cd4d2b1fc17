// Outcome measures computed from task outputs.

#ifndef CAUSALPROBE_METRICS_H_
#define CAUSALPROBE_METRICS_H_

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "causalprobe/model.h"
#include "causalprobe/suites.h"

namespace causalprobe {

// mass(outcome_words) / (mass(outcome_words) + mass(other_words)). Throws
// NotFoundError for a word missing from the vocabulary and MetricError when
// the combined mass is zero.
double candidate_probability(const TaskOutput &output,
                             const std::vector<std::string> &outcome_words,
                             const std::vector<std::string> &other_words);

// Plural agreement words (were, are, as) against singular ones (was, is).
double plural_probability(const TaskOutput &output);

// Start mass on NP1's words normalized over the words of NP1 and NP2.
// Throws MetricError when the prompt lacks spans or the normalizer is zero.
double np1_probability(const TaskOutput &output, const Prompt &prompt);

// The prompt's outcome: candidate probability for masked_fill, NP1
// probability for qa_span, entailment probability for nli.
double prompt_outcome(const TaskOutput &output, const Prompt &prompt);

struct LayerOutcome {
  double original = 0.0;
  double parse_a = 0.0;  // counterfactual from the reading expected to raise the outcome
  double parse_b = 0.0;
};

struct CausalEffectReport {
  std::map<int, LayerOutcome> per_layer;
  double aggregate = 0.0;
  double dropout_rate = 0.0;
  double loss_threshold = 0.0;
  bool absolute = false;
};

// aggregate = mean over layers of (parse_a - parse_b), or of its magnitude
// when `absolute`. Throws MetricError for an empty layer set.
CausalEffectReport causal_effect(const std::map<int, LayerOutcome> &per_layer,
                                 double dropout_rate = 0.0, double loss_threshold = 0.0,
                                 bool absolute = false);

struct QaScores {
  double f1 = 0.0;
  bool exact = false;
};

// Token-overlap F1 and exact match after lowercasing and whitespace
// normalization.
QaScores qa_scores(std::string_view predicted, std::string_view gold);

// Largest absolute change in class probability.
double nli_shift(const TaskOutput &original, const TaskOutput &counterfactual);

// Best word span by start(first row) * end(last row) with at most
// max_words words. Returns [begin, end) over words.
WordSpan predicted_span(const TaskOutput &output, std::size_t max_words = 30);
std::string span_text(const std::vector<std::string> &words, WordSpan span);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};
MeanStd mean_std(const std::vector<double> &values);

}  // namespace causalprobe

#endif  // CAUSALPROBE_METRICS_H_
