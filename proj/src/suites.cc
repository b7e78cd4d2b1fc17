#include "causalprobe/suites.h"

#include <cctype>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "causalprobe/error.h"

namespace causalprobe {

std::string_view to_string(Interpretation i) { return i == Interpretation::kA ? "A" : "B"; }

Interpretation interpretation_from_string(std::string_view s) {
  if (s == "A" || s == "a") return Interpretation::kA;
  if (s == "B" || s == "b") return Interpretation::kB;
  throw ConfigError("interpretation must be A or B, got '" + std::string(s) + "'");
}

namespace {

std::vector<std::string> split(const std::string &s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string join_text(const std::vector<std::string> &tokens) {
  std::string out;
  for (const auto &t : tokens) {
    const bool attach = !out.empty() && (t == "." || t == "?" || t == "," || t == "!");
    if (!out.empty() && !attach) out += ' ';
    out += t;
  }
  return out;
}

Slot single(std::string name, std::vector<std::string> words) {
  Slot s;
  s.names = {std::move(name)};
  for (auto &w : words) s.values.push_back({std::move(w)});
  return s;
}

// Expands rows of alternatives, e.g. {{"dog","child"},{"bit"}} into every tuple.
void expand_rows(const std::vector<std::vector<std::string>> &row, std::size_t pos,
                 std::vector<std::string> &cur, std::vector<std::vector<std::string>> &out) {
  if (pos == row.size()) {
    out.push_back(cur);
    return;
  }
  for (const auto &w : row[pos]) {
    cur.push_back(w);
    expand_rows(row, pos + 1, cur, out);
    cur.pop_back();
  }
}

Slot tuples(std::vector<std::string> names,
            const std::vector<std::vector<std::vector<std::string>>> &rows) {
  Slot s;
  s.names = std::move(names);
  for (const auto &row : rows) {
    std::vector<std::string> cur;
    expand_rows(row, 0, cur, s.values);
  }
  return s;
}

const std::set<std::string> kPlural = {"keys",  "gadgets", "cabinets", "vases",   "boxes",
                                       "lamps", "shelves", "tables",   "men",     "women",
                                       "kids",  "children", "girls",   "boys",    "people",
                                       "spectators", "lawyers", "judges", "viewers", "conventions",
                                       "stalls"};

bool plural(const std::string &w) { return kPlural.count(w) > 0; }

Exclusion exactly_one_plural() {
  return {"exactly one of NN2 and NN3 is plural",
          {"NN2", "NN3"},
          [](const Binding &b) { return plural(b.at("NN2")) == plural(b.at("NN3")); }};
}

Exclusion distinct(const std::string &a, const std::string &b) {
  return {a + " differs from " + b, {a, b},
          [a, b](const Binding &x) { return x.at(a) == x.at(b); }};
}

struct SuiteDef {
  Template tmpl;
  std::function<void(Prompt &)> finish;
};

// The relative clause's verb agrees with exactly one of NN2 and NN3; that
// noun is the intended attachment site.
void attach_by_agreement(Prompt &p, const std::string &plural_verb) {
  const bool verb_plural = p.binding.at("BE") == plural_verb;
  p.gold_interpretation =
      verb_plural == plural(p.binding.at("NN2")) ? Interpretation::kA : Interpretation::kB;
}

std::vector<SuiteDef> build_suites() {
  std::vector<SuiteDef> defs;

  {
    Template t;
    t.suite_id = "mask_coord";
    t.task = Task::kMaskedFill;
    t.pattern = "The NN1 V the NN2 and the NN3 [MASK] ADJ .";
    t.slots = {single("NN1", {"man", "woman", "child"}), single("NN2", {"boy", "building", "cat"}),
               single("NN3", {"dog", "girl", "truck"}), single("V", {"saw", "feared", "heard"}),
               single("ADJ", {"tall", "falling", "orange"})};
    // A: sentence conjunction. B: noun-phrase conjunction as a small clause.
    t.heads_a = {1, 2, -1, 4, 2, 2, 7, 9, 9, 2, 2};
    t.heads_b = {1, 2, -1, 4, 9, 4, 7, 4, 9, 2, 2};
    t.outcome_parse = Interpretation::kB;
    defs.push_back({t, [](Prompt &p) {
                      p.answer.outcome_words = {"were", "are", "as"};
                      p.answer.other_words = {"was", "is"};
                    }});
  }
  {
    Template t;
    t.suite_id = "mask_npz";
    t.task = Task::kMaskedFill;
    t.pattern = "When the NN1 V1 DET NN2 [MASK] V2 .";
    t.slots = {tuples({"NN1", "V1", "NN2", "V2"},
                      {{{"dog", "child"}, {"scratched", "bit"}, {"vet", "girl", "boy"},
                        {"ran", "screamed", "smiled"}},
                       {{"author"}, {"wrote"}, {"book"}, {"grew"}},
                       {{"doctor", "professor"}, {"lectured"}, {"student"}, {"listened"}},
                       {{"girls", "boys"}, {"raced"}, {"kids", "children"}, {"watched", "cheered"}},
                       {{"people", "spectators"}, {"watched"}, {"show", "movie"}, {"stopped", "paused"}},
                       {{"lawyers", "judges"}, {"studied", "considered"}, {"case"},
                        {"languished", "proceeded"}},
                       {{"people", "viewers"}, {"notice", "spot"}, {"actor"}, {"departs", "stays"}},
                       {{"band", "conventions"}, {"left"}, {"hotel", "stalls"}, {"closed"}}}),
               single("DET", {"the", "his"})};
    // A: NN2 is the object of V1 and the mask is V2's subject.
    // B: NN2 is V2's subject and the mask modifies V2.
    t.heads_a = {3, 2, 3, 7, 5, 3, 7, -1, 7};
    t.heads_b = {3, 2, 3, 7, 5, 7, 7, -1, 7};
    t.outcome_parse = Interpretation::kA;
    defs.push_back({t, [](Prompt &p) {
                      p.answer.outcome_words = {"she", "he", "they", "it"};
                      p.answer.other_words = {"quickly", "suddenly", "slowly"};
                    }});
  }
  {
    Template t;
    t.suite_id = "qa_coord";
    t.task = Task::kQaSpan;
    t.pattern = "The ADJ2 NN1 V the ADJ3 NN3 and the ADJ4 NN4 were ADJ1 .";
    t.question = "Who was ADJ1 ?";
    t.slots = {single("ADJ1", {"tall", "short"}), single("ADJ2", {"happy", ""}),
               single("ADJ3", {"angry", ""}),      single("ADJ4", {"angry", ""}),
               single("NN1", {"stranger", "child"}), single("NN3", {"men", "women"}),
               single("NN4", {"women", "men"}),     single("V", {"saw", "believed"})};
    t.heads_a = {2, 2, 3, -1, 6, 6, 3, 3, 10, 10, 12, 12, 3, 3};
    t.heads_b = {2, 2, 3, -1, 6, 6, 12, 6, 10, 10, 6, 12, 3, 3};
    t.outcome_parse = Interpretation::kB;
    t.np1 = {4, 7};
    t.np2 = {8, 11};
    defs.push_back({t, nullptr});
  }
  {
    Template t;
    t.suite_id = "qa_npvp";
    t.task = Task::kQaSpan;
    t.pattern = "The ADJ1 NN1 ADV V the ADJ2 NN2 with the ADJ3 NN4 .";
    t.question = "Who had the NN4 ?";
    t.slots = {tuples({"V", "NN4"}, {{{"saw"}, {"telescope"}}, {{"poked"}, {"stick"}}}),
               single("ADJ1", {"tall", ""}),
               single("ADJ2", {"short", ""}),
               single("ADJ3", {"special", ""}),
               single("NN1", {"man", "woman"}),
               single("NN2", {"boy", "girl"}),
               single("ADV", {"", "quickly", "quietly", "suddenly"})};
    // A: the with-phrase modifies NN2. B: it modifies the verb.
    t.heads_a = {2, 2, 4, 4, -1, 7, 7, 4, 11, 11, 11, 7, 4};
    t.heads_b = {2, 2, 4, 4, -1, 7, 7, 4, 11, 11, 11, 4, 4};
    t.outcome_parse = Interpretation::kB;
    t.np1 = {0, 3};
    t.np2 = {5, 8};
    defs.push_back({t, nullptr});
  }
  {
    Template t;
    t.suite_id = "qa_rc";
    t.task = Task::kQaSpan;
    t.pattern = "The ADJ2 NN1 and the ADJ3 NN2 who were ADJ1 V the NN3 .";
    t.question = "Who was ADJ1 ?";
    t.slots = {single("ADJ1", {"corrupt", "desperate"}), single("ADJ2", {"tall", "smart", "rich"}),
               single("ADJ3", {"tall", "smart", "rich"}), single("NN1", {"men", "women"}),
               single("NN2", {"men", "women"}),           single("NN3", {"judge", "politician"}),
               single("V", {"bribed", "sued", "thanked", "visited"})};
    t.exclusions = {distinct("NN1", "NN2"), distinct("ADJ2", "ADJ3")};
    // A: the relative clause modifies NN2. B: it modifies the coordination.
    t.heads_a = {2, 2, 10, 2, 6, 6, 2, 9, 9, 6, -1, 12, 10, 10};
    t.heads_b = {2, 2, 10, 2, 6, 6, 2, 9, 9, 2, -1, 12, 10, 10};
    t.outcome_parse = Interpretation::kB;
    t.np1 = {0, 3};
    t.np2 = {4, 7};
    defs.push_back({t, nullptr});
  }
  auto intervene = [](std::string id, std::vector<std::string> adj, std::vector<std::string> nn1,
                      std::vector<std::string> verbs, std::vector<std::string> nn2,
                      std::vector<std::string> nn3) {
    Template t;
    t.suite_id = std::move(id);
    t.task = Task::kQaSpan;
    t.pattern = "The NN1 V the NN2 by the NN3 which BE ADJ1 .";
    t.question = "What was ADJ1 ?";
    t.slots = {single("ADJ1", std::move(adj)), single("NN1", std::move(nn1)),
               single("V", std::move(verbs)), single("NN2", std::move(nn2)),
               single("NN3", std::move(nn3)), single("BE", {"was", "were"})};
    t.exclusions = {exactly_one_plural()};
    // A: the relative clause modifies NN2. B: it modifies NN3.
    t.heads_a = {1, 2, -1, 4, 2, 7, 7, 4, 10, 10, 4, 2};
    t.heads_b = {1, 2, -1, 4, 2, 7, 7, 4, 10, 10, 7, 2};
    t.outcome_parse = Interpretation::kA;
    t.np1 = {3, 5};
    t.np2 = {6, 8};
    return SuiteDef{t, [](Prompt &p) {
                      attach_by_agreement(p, "were");
                      p.gold_answer = "the " + p.binding.at(*p.gold_interpretation ==
                                                                    Interpretation::kA
                                                                ? "NN2"
                                                                : "NN3");
                    }};
  };
  defs.push_back(intervene("qa_intervene", {"green", "large", "dirty"},
                           {"human", "stranger", "child"}, {"saw", "noticed"},
                           {"key", "keys", "gadget", "gadgets"},
                           {"cabinet", "cabinets", "vase", "vases"}));
  defs.push_back(intervene("qa_intervene_val", {"red", "small", "wet"},
                           {"man", "visitor", "teenager"}, {"spotted", "found"},
                           {"box", "boxes", "lamp", "lamps"},
                           {"shelf", "shelves", "table", "tables"}));
  {
    Template t;
    t.suite_id = "nli_coord";
    t.task = Task::kNli;
    t.pattern = "The NN1 V the NN2 in the NN3 which BE ADJ1 .";
    t.hypothesis = "The NN2 BE2 ADJ1 .";
    t.slots = {single("ADJ1", {"green", "large", "dirty"}),
               single("NN1", {"person", "human", "stranger"}),
               single("V", {"saw"}),
               single("NN2", {"key", "keys", "gadget", "gadgets"}),
               single("NN3", {"cabinet", "cabinets", "vase", "vases"}),
               single("BE", {"is", "are"})};
    t.exclusions = {exactly_one_plural()};
    t.heads_a = {1, 2, -1, 4, 2, 7, 7, 4, 10, 10, 4, 2};
    t.heads_b = {1, 2, -1, 4, 2, 7, 7, 4, 10, 10, 7, 2};
    t.outcome_parse = Interpretation::kA;
    defs.push_back({t, [](Prompt &p) {
                      attach_by_agreement(p, "are");
                      p.answer.gold_label =
                          *p.gold_interpretation == Interpretation::kA ? "entailment" : "neutral";
                    }});
  }
  for (const auto &d : defs) d.tmpl.validate();
  return defs;
}

const std::vector<SuiteDef> &registry() {
  static const std::vector<SuiteDef> defs = build_suites();
  return defs;
}

const SuiteDef &find_suite(std::string_view id) {
  for (const auto &d : registry()) {
    if (d.tmpl.suite_id == id) return d;
  }
  throw ConfigError("unknown suite '" + std::string(id) + "'");
}

std::string render(const std::string &pattern, const Binding &b) {
  std::vector<std::string> out;
  for (const auto &tok : split(pattern)) {
    auto it = b.find(tok);
    const std::string w = it == b.end() ? tok : it->second;
    if (!w.empty()) out.push_back(w);
  }
  return join_text(out);
}

ParseTree remap_heads(const std::vector<int> &heads, const std::vector<int> &new_index) {
  std::vector<int> out;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    if (new_index[i] < 0) continue;
    const int h = heads[i];
    if (h >= 0 && new_index[static_cast<std::size_t>(h)] < 0) {
      throw ConfigError("template omits a word that heads another word");
    }
    out.push_back(h < 0 ? ParseTree::kRoot : new_index[static_cast<std::size_t>(h)]);
  }
  return ParseTree::from_heads(out);
}

WordSpan remap_span(std::pair<int, int> span, const std::vector<int> &new_index) {
  WordSpan s{0, 0};
  bool found = false;
  for (int i = span.first; i < span.second; ++i) {
    const int k = new_index[static_cast<std::size_t>(i)];
    if (k < 0) continue;
    if (!found) s.begin = static_cast<std::size_t>(k);
    s.end = static_cast<std::size_t>(k) + 1;
    found = true;
  }
  if (!found) throw ConfigError("noun phrase renders empty");
  return s;
}

Prompt instantiate(const SuiteDef &def, const Binding &binding, std::size_t index) {
  const Template &t = def.tmpl;
  Prompt p;
  p.suite_id = t.suite_id;
  p.index = index;
  p.task = t.task;
  p.binding = binding;
  p.outcome_parse = t.outcome_parse;
  const auto pattern = split(t.pattern);
  std::vector<int> new_index(pattern.size(), -1);
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    auto it = binding.find(pattern[i]);
    const std::string w = it == binding.end() ? pattern[i] : it->second;
    if (w.empty()) continue;
    new_index[i] = static_cast<int>(p.tokens.size());
    if (w == "[MASK]") p.mask_index = p.tokens.size();
    p.tokens.push_back(w);
  }
  p.text = join_text(p.tokens);
  p.parse_a = remap_heads(t.heads_a, new_index);
  p.parse_b = remap_heads(t.heads_b, new_index);
  if (!t.question.empty()) p.question = render(t.question, binding);
  if (!t.hypothesis.empty()) {
    Binding b = binding;
    b["BE2"] = plural(binding.at("NN2")) ? "are" : "is";
    p.hypothesis = render(t.hypothesis, b);
  }
  if (t.np1) p.answer.np1 = remap_span(*t.np1, new_index);
  if (t.np2) p.answer.np2 = remap_span(*t.np2, new_index);
  if (def.finish) def.finish(p);
  return p;
}

void enumerate(const SuiteDef &def, std::size_t slot, Binding &binding,
               std::vector<Prompt> &out) {
  const Template &t = def.tmpl;
  if (slot == t.slots.size()) {
    for (const auto &ex : t.exclusions) {
      if (ex.excluded(binding)) return;
    }
    out.push_back(instantiate(def, binding, out.size()));
    return;
  }
  const Slot &s = t.slots[slot];
  for (const auto &value : s.values) {
    for (std::size_t k = 0; k < s.names.size(); ++k) binding[s.names[k]] = value[k];
    enumerate(def, slot + 1, binding, out);
  }
  for (const auto &name : s.names) binding.erase(name);
}

}  // namespace

void Template::validate() const {
  const auto tokens = split(pattern);
  if (heads_a.size() != tokens.size() || heads_b.size() != tokens.size()) {
    throw ConfigError(suite_id + ": head maps do not cover the pattern");
  }
  if (heads_a == heads_b) throw ConfigError(suite_id + ": readings are identical");
  std::set<std::string> names;
  for (const auto &s : slots) {
    if (s.values.empty()) throw ConfigError(suite_id + ": slot without values");
    for (const auto &v : s.values) {
      if (v.size() != s.names.size()) throw ConfigError(suite_id + ": ragged tuple slot");
    }
    names.insert(s.names.begin(), s.names.end());
  }
  for (const auto &tok : tokens) {
    const bool slot_like = tok.size() > 1 && std::isupper(static_cast<unsigned char>(tok[0])) &&
                           std::isupper(static_cast<unsigned char>(tok[1]));
    if (slot_like && !names.count(tok)) throw ConfigError(suite_id + ": slot " + tok + " has no values");
  }
  for (const auto &ex : exclusions) {
    for (const auto &n : ex.slots) {
      if (!names.count(n)) throw ConfigError(suite_id + ": exclusion references unknown slot " + n);
    }
  }
}

std::vector<std::string> suite_ids() {
  std::vector<std::string> ids;
  for (const auto &d : registry()) ids.push_back(d.tmpl.suite_id);
  return ids;
}

const Template &suite_template(std::string_view suite_id) { return find_suite(suite_id).tmpl; }

std::vector<Prompt> generate_suite(std::string_view suite_id) {
  const SuiteDef &def = find_suite(suite_id);
  std::vector<Prompt> out;
  Binding binding;
  enumerate(def, 0, binding, out);
  return out;
}

ParseTree gold_parse(const Prompt &prompt, Interpretation interpretation) {
  return interpretation == Interpretation::kA ? prompt.parse_a : prompt.parse_b;
}

ModelInput to_model_input(const Prompt &prompt, Interpretation encoded) {
  ModelInput in;
  in.words = prompt.tokens;
  if (prompt.question) in.pair_words = tokenize(*prompt.question);
  if (prompt.hypothesis) in.pair_words = tokenize(*prompt.hypothesis);
  in.mask_index = prompt.mask_index;
  if (prompt.task == Task::kMaskedFill) {
    in.answer_words = {prompt.answer.outcome_words, prompt.answer.other_words};
  }
  if (prompt.answer.np1 && prompt.answer.np2) {
    in.answer_spans = {*prompt.answer.np1, *prompt.answer.np2};
  }
  in.parse = gold_parse(prompt, encoded);
  const Interpretation other =
      prompt.outcome_parse == Interpretation::kA ? Interpretation::kB : Interpretation::kA;
  in.readings.emplace(gold_parse(prompt, prompt.outcome_parse), gold_parse(prompt, other));
  return in;
}

namespace {

nlohmann::json conll_heads(const ParseTree &t) {
  std::vector<int> h;
  for (int x : t.heads()) h.push_back(x + 1);
  return h;
}

ParseTree from_conll_heads(const nlohmann::json &j) {
  std::vector<int> h = j.get<std::vector<int>>();
  for (int &x : h) x -= 1;
  return ParseTree::from_heads(h);
}

nlohmann::json span_json(const std::optional<WordSpan> &s) {
  if (!s) return nullptr;
  return {s->begin, s->end};
}

std::optional<WordSpan> span_from(const nlohmann::json &j) {
  if (j.is_null()) return std::nullopt;
  return WordSpan{j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>()};
}

template <typename T>
nlohmann::json opt(const std::optional<T> &v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json to_json(const Prompt &p) {
  nlohmann::json contract = {{"outcome_words", p.answer.outcome_words},
                             {"other_words", p.answer.other_words},
                             {"np1", span_json(p.answer.np1)},
                             {"np2", span_json(p.answer.np2)},
                             {"gold_label", opt(p.answer.gold_label)}};
  return {{"suite_id", p.suite_id},
          {"prompt_index", p.index},
          {"task", std::string(to_string(p.task))},
          {"text", p.text},
          {"tokens", p.tokens},
          {"question", opt(p.question)},
          {"hypothesis", opt(p.hypothesis)},
          {"mask_index", opt(p.mask_index)},
          {"parses", {{"A", conll_heads(p.parse_a)}, {"B", conll_heads(p.parse_b)}}},
          {"outcome_parse", std::string(to_string(p.outcome_parse))},
          {"answer_contract", contract},
          {"gold_answer", opt(p.gold_answer)},
          {"gold_interpretation",
           p.gold_interpretation ? nlohmann::json(std::string(to_string(*p.gold_interpretation)))
                                 : nlohmann::json(nullptr)},
          {"slots", p.binding}};
}

Prompt prompt_from_json(const nlohmann::json &j) {
  try {
    Prompt p;
    p.suite_id = j.at("suite_id").get<std::string>();
    p.index = j.at("prompt_index").get<std::size_t>();
    p.task = task_from_string(j.at("task").get<std::string>());
    p.text = j.at("text").get<std::string>();
    p.tokens = j.at("tokens").get<std::vector<std::string>>();
    if (!j.at("question").is_null()) p.question = j["question"].get<std::string>();
    if (!j.at("hypothesis").is_null()) p.hypothesis = j["hypothesis"].get<std::string>();
    if (!j.at("mask_index").is_null()) p.mask_index = j["mask_index"].get<std::size_t>();
    p.parse_a = from_conll_heads(j.at("parses").at("A"));
    p.parse_b = from_conll_heads(j.at("parses").at("B"));
    p.outcome_parse = interpretation_from_string(j.at("outcome_parse").get<std::string>());
    const auto &c = j.at("answer_contract");
    p.answer.outcome_words = c.at("outcome_words").get<std::vector<std::string>>();
    p.answer.other_words = c.at("other_words").get<std::vector<std::string>>();
    p.answer.np1 = span_from(c.at("np1"));
    p.answer.np2 = span_from(c.at("np2"));
    if (!c.at("gold_label").is_null()) p.answer.gold_label = c["gold_label"].get<std::string>();
    if (!j.at("gold_answer").is_null()) p.gold_answer = j["gold_answer"].get<std::string>();
    if (!j.at("gold_interpretation").is_null()) {
      p.gold_interpretation = interpretation_from_string(j["gold_interpretation"].get<std::string>());
    }
    p.binding = j.value("slots", Binding{});
    if (p.parse_a.size() != p.tokens.size() || p.parse_b.size() != p.tokens.size()) {
      throw FormatError("prompt parses do not cover its tokens");
    }
    return p;
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("bad suite record: ") + e.what());
  }
}

void write_suite_jsonl(std::ostream &out, const std::vector<Prompt> &prompts) {
  for (const auto &p : prompts) out << to_json(p).dump() << '\n';
}

std::vector<Prompt> read_suite_jsonl(std::istream &in) {
  std::vector<Prompt> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(prompt_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error &e) {
      throw FormatError("suite line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace causalprobe
