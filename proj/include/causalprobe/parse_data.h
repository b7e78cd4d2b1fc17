// Dependency trees over tokenized sentences, the gold depth/distance labels
// derived from them, and a reader/writer for the tab-separated corpus format.
//
// Corpus format (see docs/formats.md): one token per line with four
// tab-separated columns
//
//   index <TAB> form <TAB> head <TAB> relation
//
// where index is 1-based, head 0 denotes the root, and sentences are separated
// by blank lines. Lines starting with '#' are comments. Ten-column CoNLL-X /
// CoNLL-U lines are also accepted (columns 1, 2, 7 and 8 are used and
// multiword-token ranges such as "3-4" are skipped).

#ifndef CAUSALPROBE_PARSE_DATA_H_
#define CAUSALPROBE_PARSE_DATA_H_

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace causalprobe {

struct Sentence {
  std::string id;
  std::vector<std::string> tokens;

  // Throws InvalidTreeError if empty or a token contains whitespace.
  void validate() const;
  std::string text() const;  // tokens joined by single spaces
};

// Splits rendered text into tokens: whitespace separated, with trailing
// sentence punctuation (. , ? ! ; :) split off as its own token.
std::vector<std::string> tokenize(std::string_view text);

// Rooted dependency tree. Token indices are 0-based; the root token's head is
// kRoot, a sentinel that never names a token.
class ParseTree {
 public:
  static constexpr int kRoot = -1;

  ParseTree() = default;

  // Validates: non-empty, every head in range or kRoot, exactly one root,
  // no self-loops, no cycles. Throws InvalidTreeError naming the defect.
  static ParseTree from_heads(std::vector<int> heads);

  std::size_t size() const { return heads_.size(); }
  int head(std::size_t i) const { return heads_[i]; }
  const std::vector<int> &heads() const { return heads_; }
  std::size_t root() const { return root_; }
  std::vector<std::vector<std::size_t>> children() const;

  bool operator==(const ParseTree &other) const { return heads_ == other.heads_; }

 private:
  std::vector<int> heads_;
  std::size_t root_ = 0;
};

struct DepthVector {
  std::vector<int> depths;
  std::size_t size() const { return depths.size(); }
  int operator[](std::size_t i) const { return depths[i]; }
};

// Dense symmetric matrix of tree path lengths.
struct DistanceMatrix {
  std::size_t n = 0;
  std::vector<int> d;  // row-major n*n
  int operator()(std::size_t i, std::size_t j) const { return d[i * n + j]; }
};

DepthVector parse_depths(const ParseTree &tree);
DistanceMatrix parse_distances(const ParseTree &tree);

struct CorpusRecord {
  Sentence sentence;
  ParseTree tree;
  std::vector<std::string> relations;
  std::vector<bool> punctuation;
};

// True when the relation is "punct" or the form consists only of
// punctuation characters.
bool is_punctuation(std::string_view form, std::string_view relation);

// Reads records until end of stream. Sentence ids are "<source>:<ordinal>"
// with a 1-based ordinal. Throws CorpusError carrying the offending line.
std::vector<CorpusRecord> ingest_corpus(std::istream &in,
                                        const std::string &source = "corpus");
std::vector<CorpusRecord> ingest_corpus_file(const std::string &path);

void write_corpus(std::ostream &out, const std::vector<CorpusRecord> &records);

// Builds a record from tokens and heads, deriving punctuation flags.
CorpusRecord make_record(std::string id, std::vector<std::string> tokens,
                         std::vector<int> heads,
                         std::vector<std::string> relations = {});

}  // namespace causalprobe

#endif  // CAUSALPROBE_PARSE_DATA_H_
