#pragma once

#include <span>
#include <string>
#include <vector>

namespace nerforge {

// Token tagging schemes for encoding entity spans.
enum class TagScheme { BIO, BIOES };

struct Token {
  std::string surface;  // non-empty, no whitespace
  std::string tag;      // "O" or "<prefix>-<type>"
};

struct Sentence {
  std::vector<Token> tokens;
};

// Tokenized, tagged text in CoNLL form: the unit of training and evaluation.
// Immutable after construction and safe to share across threads.
struct Dataset {
  std::vector<Sentence> sentences;
  std::vector<std::string> tag_set;       // sorted, unique; always contains "O"
  std::vector<std::string> entity_types;  // sorted, unique suffixes of non-O tags
};

// Inclusive token-index span of one typed entity.
struct EntitySpan {
  int start = 0;
  int end = 0;
  std::string etype;

  bool operator==(const EntitySpan&) const = default;
  bool operator<(const EntitySpan& o) const {
    if (start != o.start) return start < o.start;
    if (end != o.end) return end < o.end;
    return etype < o.etype;
  }
};

// Splits a tag into prefix and type. "O" yields ('O', ""). Throws
// DataError for anything that is not "O" or "(B|I|E|S)-<type>".
std::pair<char, std::string> parse_tag(const std::string& tag);

// True iff the tag is grammatical in the scheme (per-token check only).
bool tag_in_scheme(const std::string& tag, TagScheme scheme);

// Computes the derived tag/type sets for a sentence list. The resulting
// tag_set always includes "O".
Dataset make_dataset(std::vector<Sentence> sentences);

// Parses a CoNLL-style file: one token per line, blank line between
// sentences, first column surface, last column tag, middle columns
// ignored. "-DOCSTART-" marker lines are skipped. Accepts \n and \r\n.
// Throws DataError on I/O failure, lines with fewer than two columns,
// tags outside the declared scheme, or a file with no sentences.
Dataset read_conll(const std::string& path, TagScheme scheme);

// Lenient reader for prediction inputs: lines may carry only a surface
// column; any tag column present is ignored (tags are set to "O").
Dataset read_conll_untagged(const std::string& path);

// True iff the sequence is well-formed in the scheme. BIO: I-X only
// after B-X or I-X of the same type. BIOES: I/E only inside an open
// B chunk of the same type, every B closed by E, S standalone.
bool validate_sequence(std::span<const std::string> tags, TagScheme scheme);

// Converts between schemes, preserving spans exactly. Identity when
// from == to. Throws DataError if the input is not valid in `from`.
std::vector<std::string> convert_scheme(std::span<const std::string> tags,
                                        TagScheme from, TagScheme to);

// conlleval-style repair for ill-formed BIO: I-X without a preceding
// B-X/I-X of the same type becomes B-X.
std::vector<std::string> repair_bio(std::span<const std::string> tags);

// Maximal contiguous chunks of a BIO sequence. Ill-formed input is
// repaired first, so this never fails on decoder output.
std::vector<EntitySpan> extract_spans(std::span<const std::string> tags);

// Rebuilds the BIO tag sequence encoding exactly these spans.
std::vector<std::string> spans_to_tags(std::span<const EntitySpan> spans, int length);

}  // namespace nerforge
