#include "causalprobe/parse_data.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "causalprobe/error.h"

namespace causalprobe {
namespace {

bool has_whitespace(std::string_view s) {
  return std::any_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

bool is_split_punct(char c) {
  return c == '.' || c == ',' || c == '?' || c == '!' || c == ';' || c == ':';
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

bool parse_int(std::string_view s, int *out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), *out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

void Sentence::validate() const {
  if (tokens.empty()) throw InvalidTreeError("sentence '" + id + "' is empty");
  for (const auto &t : tokens) {
    if (t.empty() || has_whitespace(t)) {
      throw InvalidTreeError("sentence '" + id +
                             "' has an empty or whitespace-bearing token");
    }
  }
}

std::string Sentence::text() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (start == i) break;
    std::string_view word = text.substr(start, i - start);
    std::size_t cut = word.size();
    while (cut > 0 && is_split_punct(word[cut - 1])) --cut;
    if (cut > 0) tokens.emplace_back(word.substr(0, cut));
    for (std::size_t k = cut; k < word.size(); ++k) tokens.emplace_back(1, word[k]);
  }
  return tokens;
}

ParseTree ParseTree::from_heads(std::vector<int> heads) {
  const int n = static_cast<int>(heads.size());
  if (n == 0) throw InvalidTreeError("tree has no tokens");
  int root = -1;
  for (int i = 0; i < n; ++i) {
    const int h = heads[i];
    if (h == kRoot) {
      if (root != -1) {
        throw InvalidTreeError("multiple roots (tokens " + std::to_string(root + 1) +
                               " and " + std::to_string(i + 1) + ")");
      }
      root = i;
    } else if (h < 0 || h >= n) {
      throw InvalidTreeError("head index out of range at token " +
                             std::to_string(i + 1));
    } else if (h == i) {
      throw InvalidTreeError("token " + std::to_string(i + 1) + " heads itself");
    }
  }
  if (root == -1) {
    int cur = 0;
    for (int k = 0; k < n; ++k) cur = heads[cur];
    throw InvalidTreeError("no root token; cycle through token " + std::to_string(cur + 1));
  }

  // Every token must reach the root within n hops; otherwise it sits on a cycle.
  std::vector<char> state(n, 0);  // 0 unknown, 1 on current walk, 2 reaches root
  state[root] = 2;
  for (int i = 0; i < n; ++i) {
    std::vector<int> walk;
    int cur = i;
    while (state[cur] == 0) {
      state[cur] = 1;
      walk.push_back(cur);
      cur = heads[cur];
    }
    if (state[cur] == 1) {
      throw InvalidTreeError("cycle through token " + std::to_string(cur + 1));
    }
    for (int w : walk) state[w] = 2;
  }

  ParseTree tree;
  tree.heads_ = std::move(heads);
  tree.root_ = static_cast<std::size_t>(root);
  return tree;
}

std::vector<std::vector<std::size_t>> ParseTree::children() const {
  std::vector<std::vector<std::size_t>> out(heads_.size());
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    if (heads_[i] != kRoot) out[heads_[i]].push_back(i);
  }
  return out;
}

DepthVector parse_depths(const ParseTree &tree) {
  const std::size_t n = tree.size();
  DepthVector out;
  out.depths.assign(n, -1);
  out.depths[tree.root()] = 0;
  for (std::size_t i = 0; i < n; ++i) {
    // Climb until a token with known depth, then unwind.
    std::vector<std::size_t> path;
    std::size_t cur = i;
    while (out.depths[cur] < 0) {
      path.push_back(cur);
      cur = static_cast<std::size_t>(tree.head(cur));
    }
    int d = out.depths[cur];
    for (auto it = path.rbegin(); it != path.rend(); ++it) out.depths[*it] = ++d;
  }
  return out;
}

// d(i, j) = depth(i) + depth(j) - 2 depth(lca(i, j)).
DistanceMatrix parse_distances(const ParseTree &tree) {
  const std::size_t n = tree.size();
  const DepthVector depth = parse_depths(tree);
  DistanceMatrix out;
  out.n = n;
  out.d.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      std::size_t a = i, b = j;
      while (depth[a] > depth[b]) a = static_cast<std::size_t>(tree.head(a));
      while (depth[b] > depth[a]) b = static_cast<std::size_t>(tree.head(b));
      while (a != b) {
        a = static_cast<std::size_t>(tree.head(a));
        b = static_cast<std::size_t>(tree.head(b));
      }
      const int dist = depth[i] + depth[j] - 2 * depth[a];
      out.d[i * n + j] = dist;
      out.d[j * n + i] = dist;
    }
  }
  return out;
}

bool is_punctuation(std::string_view form, std::string_view relation) {
  if (relation == "punct") return true;
  if (form.empty()) return false;
  return std::all_of(form.begin(), form.end(),
                     [](unsigned char c) { return std::ispunct(c) != 0; });
}

CorpusRecord make_record(std::string id, std::vector<std::string> tokens,
                         std::vector<int> heads,
                         std::vector<std::string> relations) {
  CorpusRecord rec;
  rec.sentence.id = std::move(id);
  rec.sentence.tokens = std::move(tokens);
  rec.sentence.validate();
  if (heads.size() != rec.sentence.tokens.size()) {
    throw InvalidTreeError("head count does not match token count");
  }
  rec.tree = ParseTree::from_heads(std::move(heads));
  if (relations.empty()) relations.assign(rec.sentence.tokens.size(), "_");
  rec.relations = std::move(relations);
  rec.punctuation.resize(rec.sentence.tokens.size());
  for (std::size_t i = 0; i < rec.punctuation.size(); ++i) {
    rec.punctuation[i] = is_punctuation(rec.sentence.tokens[i], rec.relations[i]);
  }
  return rec;
}

std::vector<CorpusRecord> ingest_corpus(std::istream &in, const std::string &source) {
  std::vector<CorpusRecord> records;
  std::vector<std::string> forms, relations;
  std::vector<int> heads;
  std::size_t block_start = 0;
  std::size_t line_no = 0;

  auto flush = [&](std::size_t end_line) {
    if (forms.empty()) return;
    std::vector<int> zero_based(heads.size());
    for (std::size_t i = 0; i < heads.size(); ++i) {
      if (heads[i] > static_cast<int>(heads.size())) {
        throw CorpusError(block_start + i, "head index " + std::to_string(heads[i]) +
                                               " exceeds sentence length");
      }
      zero_based[i] = heads[i] == 0 ? ParseTree::kRoot : heads[i] - 1;
    }
    try {
      records.push_back(make_record(source + ":" + std::to_string(records.size() + 1),
                                    std::move(forms), std::move(zero_based),
                                    std::move(relations)));
    } catch (const InvalidTreeError &e) {
      throw CorpusError(block_start, std::string("sentence ending at line ") +
                                         std::to_string(end_line) + ": " + e.what());
    }
    forms.clear();
    relations.clear();
    heads.clear();
  };

  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush(line_no - 1);
      continue;
    }
    if (line[0] == '#') continue;
    auto fields = split_tabs(line);
    std::string_view index_field, form, head_field, rel;
    if (fields.size() == 4) {
      index_field = fields[0];
      form = fields[1];
      head_field = fields[2];
      rel = fields[3];
    } else if (fields.size() >= 8) {
      index_field = fields[0];
      if (index_field.find_first_of("-.") != std::string_view::npos) continue;
      form = fields[1];
      head_field = fields[6];
      rel = fields[7];
    } else {
      throw CorpusError(line_no, "expected 4 tab-separated columns, got " +
                                     std::to_string(fields.size()));
    }
    int index = 0, head = 0;
    if (!parse_int(index_field, &index)) {
      throw CorpusError(line_no, "bad token index '" + std::string(index_field) + "'");
    }
    if (!parse_int(head_field, &head) || head < 0) {
      throw CorpusError(line_no, "bad head index '" + std::string(head_field) + "'");
    }
    if (forms.empty()) block_start = line_no;
    if (index != static_cast<int>(forms.size()) + 1) {
      throw CorpusError(line_no, "token index " + std::to_string(index) +
                                     " out of sequence");
    }
    if (form.empty() || has_whitespace(form)) {
      throw CorpusError(line_no, "empty or whitespace-bearing word form");
    }
    forms.emplace_back(form);
    heads.push_back(head);
    relations.emplace_back(rel.empty() ? std::string_view("_") : rel);
  }
  flush(line_no);
  return records;
}

std::vector<CorpusRecord> ingest_corpus_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open corpus '" + path + "'");
  return ingest_corpus(in, path);
}

void write_corpus(std::ostream &out, const std::vector<CorpusRecord> &records) {
  for (const auto &rec : records) {
    const auto &toks = rec.sentence.tokens;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      const int h = rec.tree.head(i);
      out << (i + 1) << '\t' << toks[i] << '\t' << (h == ParseTree::kRoot ? 0 : h + 1)
          << '\t' << (i < rec.relations.size() ? rec.relations[i] : "_") << '\n';
    }
    out << '\n';
  }
}

}  // namespace causalprobe
