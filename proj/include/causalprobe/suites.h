// Template-generated ambiguity suites. Each prompt carries the two competing
// parses of its ambiguous sentence and the answer contract used to score a
// model's output.

#ifndef CAUSALPROBE_SUITES_H_
#define CAUSALPROBE_SUITES_H_

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "causalprobe/model.h"
#include "causalprobe/parse_data.h"
#include "json.hpp"

namespace causalprobe {

enum class Interpretation { kA, kB };

std::string_view to_string(Interpretation i);
Interpretation interpretation_from_string(std::string_view s);  // throws ConfigError

// A slot binds one or more pattern names to one value each. Tuple slots bind
// several names together (for example a verb and the only noun it fits).
// An empty value means the word is omitted from the rendering.
struct Slot {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> values;
};

using Binding = std::map<std::string, std::string>;

struct Exclusion {
  std::string description;
  std::vector<std::string> slots;  // names the predicate reads
  std::function<bool(const Binding &)> excluded;
};

struct Template {
  std::string suite_id;
  Task task = Task::kMaskedFill;
  std::string pattern;     // space-separated tokens; slot names are substituted
  std::string question;    // qa_span only
  std::string hypothesis;  // nli only
  std::vector<Slot> slots;
  std::vector<Exclusion> exclusions;
  // Per pattern token, the pattern index of its head (-1 for the root).
  std::vector<int> heads_a;
  std::vector<int> heads_b;
  Interpretation outcome_parse = Interpretation::kA;
  // qa_span noun phrases as half-open pattern token ranges.
  std::optional<std::pair<int, int>> np1, np2;

  void validate() const;  // throws ConfigError
};

struct AnswerContract {
  // masked_fill: words whose mass is the outcome, and their competitors.
  std::vector<std::string> outcome_words;
  std::vector<std::string> other_words;
  // qa_span: token ranges of the noun phrases in the ambiguous sentence.
  std::optional<WordSpan> np1, np2;
  // nli: gold label under the intended reading.
  std::optional<std::string> gold_label;
};

struct Prompt {
  std::string suite_id;
  std::size_t index = 0;
  Task task = Task::kMaskedFill;
  std::string text;  // the ambiguous sentence
  std::vector<std::string> tokens;
  std::optional<std::string> question;
  std::optional<std::string> hypothesis;
  std::optional<std::size_t> mask_index;
  ParseTree parse_a;
  ParseTree parse_b;
  Interpretation outcome_parse = Interpretation::kA;  // reading that raises the outcome
  AnswerContract answer;
  std::optional<std::string> gold_answer;
  std::optional<Interpretation> gold_interpretation;
  Binding binding;
};

std::vector<std::string> suite_ids();
const Template &suite_template(std::string_view suite_id);  // throws ConfigError

// Deterministic, duplicate-free, in lexicographic order of slot value
// indices. Throws ConfigError for an unknown suite.
std::vector<Prompt> generate_suite(std::string_view suite_id);

ParseTree gold_parse(const Prompt &prompt, Interpretation interpretation);

// Model input for a prompt whose sentence is encoded under `encoded`. The
// readings are ordered (outcome reading, other reading).
ModelInput to_model_input(const Prompt &prompt, Interpretation encoded);

// Export records; parses are CoNLL-style head arrays (1-based, 0 = root).
nlohmann::json to_json(const Prompt &prompt);
Prompt prompt_from_json(const nlohmann::json &j);
void write_suite_jsonl(std::ostream &out, const std::vector<Prompt> &prompts);
std::vector<Prompt> read_suite_jsonl(std::istream &in);

}  // namespace causalprobe

#endif  // CAUSALPROBE_SUITES_H_
