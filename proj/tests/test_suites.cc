#include <set>
#include <sstream>

#include "causalprobe/error.h"
#include "causalprobe/metrics.h"
#include "causalprobe/rng.h"
#include "causalprobe/suites.h"
#include "doctest.h"

using namespace causalprobe;

namespace {

std::string suite_bytes(const std::string &id) {
  std::ostringstream out;
  write_suite_jsonl(out, generate_suite(id));
  return out.str();
}

}  // namespace

TEST_CASE("suite sizes") {
  const std::map<std::string, std::size_t> expected = {
      {"mask_coord", 243}, {"mask_npz", 150},     {"qa_coord", 256},
      {"qa_npvp", 256},    {"qa_rc", 192},        {"qa_intervene", 288},
      {"qa_intervene_val", 288}, {"nli_coord", 144}};
  CHECK(suite_ids().size() == expected.size());
  for (const auto &id : suite_ids()) {
    REQUIRE(expected.count(id) == 1);
    CHECK(generate_suite(id).size() == expected.at(id));
  }
  CHECK_THROWS_AS(generate_suite("no_such_suite"), ConfigError);
}

TEST_CASE("regeneration is byte-stable") {
  for (const auto &id : suite_ids()) CHECK(fnv1a(suite_bytes(id)) == fnv1a(suite_bytes(id)));
}

TEST_CASE("prompts are well formed") {
  for (const auto &id : suite_ids()) {
    const auto prompts = generate_suite(id);
    std::set<std::string> texts;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      const Prompt &p = prompts[i];
      CAPTURE(p.text);
      CHECK(p.index == i);
      CHECK(p.suite_id == id);
      CHECK(texts.insert(p.text + "|" + p.question.value_or("") + "|" +
                         p.hypothesis.value_or(""))
                .second);
      CHECK(tokenize(p.text) == p.tokens);
      CHECK(p.parse_a.size() == p.tokens.size());
      CHECK(p.parse_b.size() == p.tokens.size());
      CHECK_FALSE(p.parse_a == p.parse_b);
      CHECK(gold_parse(p, Interpretation::kA) == p.parse_a);
      CHECK(gold_parse(p, Interpretation::kB) == p.parse_b);
      const int populated = (p.mask_index ? 1 : 0) + (p.question ? 1 : 0) + (p.hypothesis ? 1 : 0);
      CHECK(populated == 1);
      switch (p.task) {
        case Task::kMaskedFill:
          REQUIRE(p.mask_index);
          CHECK(p.tokens[*p.mask_index] == "[MASK]");
          CHECK_FALSE(p.answer.outcome_words.empty());
          CHECK_FALSE(p.answer.other_words.empty());
          break;
        case Task::kQaSpan:
          REQUIRE(p.answer.np1);
          REQUIRE(p.answer.np2);
          CHECK(p.answer.np1->end <= p.answer.np2->begin);
          CHECK(p.answer.np2->end <= p.tokens.size());
          break;
        case Task::kNli:
          REQUIRE(p.answer.gold_label);
          break;
      }
    }
  }
}

TEST_CASE("mask_coord readings") {
  const auto prompts = generate_suite("mask_coord");
  const Prompt &p = prompts.front();
  CHECK(p.text == "The man saw the boy and the dog [MASK] tall.");
  // tokens: The man saw the boy and the dog [MASK] tall .
  CHECK(p.parse_a.head(7) == 9);
  CHECK(p.parse_a.head(4) == 2);
  CHECK(p.parse_b.head(7) == 4);
  CHECK(p.parse_b.head(4) == 9);
  CHECK(p.outcome_parse == Interpretation::kB);
  bool found = false;
  for (const auto &q : prompts) found |= q.text == "The woman heard the cat and the girl [MASK] orange.";
  CHECK(found);
}

TEST_CASE("qa_rc exclusions") {
  for (const auto &p : generate_suite("qa_rc")) {
    CHECK(p.binding.at("NN1") != p.binding.at("NN2"));
    CHECK(p.binding.at("ADJ2") != p.binding.at("ADJ3"));
  }
}

TEST_CASE("qa_intervene attachment follows agreement") {
  for (const std::string id : {"qa_intervene", "qa_intervene_val"}) {
    for (const auto &p : generate_suite(id)) {
      CAPTURE(p.text);
      REQUIRE(p.gold_answer);
      REQUIRE(p.gold_interpretation);
      const bool nn2_plural = p.binding.at("NN2").back() == 's';
      const bool nn3_plural = p.binding.at("NN3").back() == 's';
      CHECK(nn2_plural != nn3_plural);
      const bool verb_plural = p.binding.at("BE") == "were";
      const std::string site = verb_plural == nn2_plural ? "NN2" : "NN3";
      CHECK(*p.gold_answer == "the " + p.binding.at(site));
      const ParseTree gold = gold_parse(p, *p.gold_interpretation);
      const std::size_t pred = 10;  // The NN1 V the NN2 by the NN3 which BE ADJ1 .
      CHECK(p.tokens[pred] == p.binding.at("ADJ1"));
      CHECK(p.tokens[static_cast<std::size_t>(gold.head(pred))] == p.binding.at(site));
      CHECK(span_text(p.tokens, site == "NN2" ? *p.answer.np1 : *p.answer.np2) == *p.gold_answer);
    }
  }
  bool example = false;
  for (const auto &p : generate_suite("qa_intervene")) {
    if (p.text == "The human saw the keys by the cabinet which was green.") {
      example = true;
      CHECK(*p.gold_answer == "the cabinet");
    }
  }
  CHECK(example);
}

TEST_CASE("noun phrase spans cover their nouns after empty slots drop out") {
  for (const std::string id : {"qa_coord", "qa_npvp", "qa_rc"}) {
    for (const auto &p : generate_suite(id)) {
      const std::string np1 = span_text(p.tokens, *p.answer.np1);
      const std::string np2 = span_text(p.tokens, *p.answer.np2);
      CAPTURE(p.text);
      CHECK((np1.rfind("The ", 0) == 0 || np1.rfind("the ", 0) == 0));
      CHECK(np2.rfind("the ", 0) == 0);
      const std::string n1 = p.binding.at("NN1");
      const std::string n2 = id == "qa_coord" ? p.binding.at("NN4") : p.binding.at("NN2");
      const std::string first = id == "qa_coord" ? p.binding.at("NN3") : n1;
      CHECK(np1.substr(np1.size() - first.size()) == first);
      CHECK(np2.substr(np2.size() - n2.size()) == n2);
    }
  }
}

TEST_CASE("export records round trip") {
  for (const auto &id : suite_ids()) {
    const auto prompts = generate_suite(id);
    std::stringstream buf;
    write_suite_jsonl(buf, prompts);
    const auto back = read_suite_jsonl(buf);
    REQUIRE(back.size() == prompts.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].text == prompts[i].text);
      CHECK(back[i].tokens == prompts[i].tokens);
      CHECK(back[i].parse_a == prompts[i].parse_a);
      CHECK(back[i].parse_b == prompts[i].parse_b);
      CHECK(back[i].question == prompts[i].question);
      CHECK(back[i].hypothesis == prompts[i].hypothesis);
      CHECK(back[i].answer.np1 == prompts[i].answer.np1);
      CHECK(back[i].answer.outcome_words == prompts[i].answer.outcome_words);
      CHECK(back[i].gold_answer == prompts[i].gold_answer);
      CHECK(back[i].gold_interpretation == prompts[i].gold_interpretation);
      CHECK(back[i].outcome_parse == prompts[i].outcome_parse);
      CHECK(back[i].binding == prompts[i].binding);
    }
  }
  const auto j = to_json(generate_suite("mask_coord")[0]);
  CHECK(j.at("parses").at("A")[2] == 0);
  CHECK(j.at("suite_id") == "mask_coord");
  CHECK(j.at("prompt_index") == 0);
}

TEST_CASE("model input carries both readings in outcome order") {
  const Prompt p = generate_suite("mask_coord")[0];
  const ModelInput in = to_model_input(p, Interpretation::kA);
  CHECK(*in.parse == p.parse_a);
  REQUIRE(in.readings);
  CHECK(in.readings->first == p.parse_b);
  CHECK(in.readings->second == p.parse_a);
  CHECK(in.answer_words.size() == 2);
  const Prompt q = generate_suite("qa_coord")[0];
  const ModelInput qi = to_model_input(q, Interpretation::kB);
  CHECK(qi.pair_words == tokenize(*q.question));
  CHECK(qi.answer_spans.size() == 2);
}

TEST_CASE("templates validate") {
  for (const auto &id : suite_ids()) CHECK_NOTHROW(suite_template(id).validate());
  Template broken = suite_template("mask_coord");
  broken.heads_b = broken.heads_a;
  CHECK_THROWS_AS(broken.validate(), ConfigError);
}
