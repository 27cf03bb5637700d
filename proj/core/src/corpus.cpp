#include "nerforge/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "nerforge/errors.hpp"

namespace nerforge {

namespace {

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t") == std::string::npos;
}

std::vector<std::string> split_columns(const std::string& line) {
  std::vector<std::string> cols;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) cols.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return cols;
}

Dataset read_conll_impl(const std::string& path, const TagScheme* scheme) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open CoNLL file: " + path);

  std::vector<Sentence> sentences;
  Sentence current;
  std::string line;
  size_t line_no = 0;

  auto flush = [&] {
    if (!current.tokens.empty()) {
      sentences.push_back(std::move(current));
      current = Sentence{};
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) {
      flush();
      continue;
    }
    auto cols = split_columns(line);
    if (cols.front() == "-DOCSTART-") continue;
    std::string tag;
    if (scheme) {
      if (cols.size() < 2) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": expected at least 2 columns (surface ... tag)");
      }
      tag = cols.back();
      if (!tag_in_scheme(tag, *scheme)) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": tag '" + tag + "' does not match the declared scheme");
      }
    } else {
      tag = "O";  // untagged mode: predictions will overwrite
    }
    current.tokens.push_back(Token{cols.front(), std::move(tag)});
  }
  if (in.bad()) throw DataError("I/O error while reading " + path);
  flush();

  if (sentences.empty()) throw DataError("no sentences in " + path);
  return make_dataset(std::move(sentences));
}

}  // namespace

std::pair<char, std::string> parse_tag(const std::string& tag) {
  if (tag == "O") return {'O', ""};
  if (tag.size() >= 3 && tag[1] == '-' &&
      (tag[0] == 'B' || tag[0] == 'I' || tag[0] == 'E' || tag[0] == 'S')) {
    return {tag[0], tag.substr(2)};
  }
  throw DataError("malformed tag: '" + tag + "'");
}

bool tag_in_scheme(const std::string& tag, TagScheme scheme) {
  if (tag == "O") return true;
  if (tag.size() < 3 || tag[1] != '-') return false;
  char p = tag[0];
  if (scheme == TagScheme::BIO) return p == 'B' || p == 'I';
  return p == 'B' || p == 'I' || p == 'E' || p == 'S';
}

Dataset make_dataset(std::vector<Sentence> sentences) {
  Dataset ds;
  ds.sentences = std::move(sentences);
  std::set<std::string> tags{"O"};
  std::set<std::string> types;
  for (const auto& s : ds.sentences) {
    for (const auto& t : s.tokens) {
      tags.insert(t.tag);
      auto [p, ty] = parse_tag(t.tag);
      if (p != 'O') types.insert(ty);
    }
  }
  ds.tag_set.assign(tags.begin(), tags.end());
  ds.entity_types.assign(types.begin(), types.end());
  return ds;
}

Dataset read_conll(const std::string& path, TagScheme scheme) {
  return read_conll_impl(path, &scheme);
}

Dataset read_conll_untagged(const std::string& path) {
  return read_conll_impl(path, nullptr);
}

bool validate_sequence(std::span<const std::string> tags, TagScheme scheme) {
  if (scheme == TagScheme::BIO) {
    std::string open;  // type of the running chunk, or empty
    for (const auto& tag : tags) {
      if (!tag_in_scheme(tag, scheme)) return false;
      auto [p, ty] = parse_tag(tag);
      if (p == 'I' && open != ty) return false;
      open = (p == 'O') ? "" : ty;
    }
    return true;
  }
  // BIOES: B-X (I-X)* E-X, or S-X; chunks may not nest or dangle.
  std::string open;
  for (const auto& tag : tags) {
    if (!tag_in_scheme(tag, scheme)) return false;
    auto [p, ty] = parse_tag(tag);
    switch (p) {
      case 'O':
      case 'S':
        if (!open.empty()) return false;
        break;
      case 'B':
        if (!open.empty()) return false;
        open = ty;
        break;
      case 'I':
        if (open != ty) return false;
        break;
      case 'E':
        if (open != ty) return false;
        open.clear();
        break;
    }
  }
  return open.empty();
}

std::vector<std::string> repair_bio(std::span<const std::string> tags) {
  std::vector<std::string> out;
  out.reserve(tags.size());
  std::string prev_type;  // type continuing from the previous position
  for (const auto& tag : tags) {
    auto [p, ty] = parse_tag(tag);
    if (p == 'I' && prev_type != ty) {
      out.push_back("B-" + ty);
    } else {
      out.push_back(tag);
    }
    prev_type = (p == 'O') ? "" : ty;
  }
  return out;
}

std::vector<EntitySpan> extract_spans(std::span<const std::string> tags) {
  auto fixed = repair_bio(tags);
  std::vector<EntitySpan> spans;
  for (int i = 0; i < static_cast<int>(fixed.size()); ++i) {
    auto [p, ty] = parse_tag(fixed[i]);
    if (p != 'B') continue;
    int end = i;
    while (end + 1 < static_cast<int>(fixed.size()) && fixed[end + 1] == "I-" + ty) ++end;
    spans.push_back(EntitySpan{i, end, ty});
    i = end;
  }
  return spans;
}

std::vector<std::string> spans_to_tags(std::span<const EntitySpan> spans, int length) {
  std::vector<std::string> tags(static_cast<size_t>(length), "O");
  for (const auto& sp : spans) {
    if (sp.start < 0 || sp.end < sp.start || sp.end >= length) {
      throw DataError("span out of range");
    }
    tags[static_cast<size_t>(sp.start)] = "B-" + sp.etype;
    for (int i = sp.start + 1; i <= sp.end; ++i) tags[static_cast<size_t>(i)] = "I-" + sp.etype;
  }
  return tags;
}

std::vector<std::string> convert_scheme(std::span<const std::string> tags,
                                        TagScheme from, TagScheme to) {
  if (!validate_sequence(tags, from)) {
    std::ostringstream msg;
    msg << "sequence not valid in source scheme:";
    for (const auto& t : tags) msg << ' ' << t;
    throw DataError(msg.str());
  }
  if (from == to) return {tags.begin(), tags.end()};

  if (from == TagScheme::BIO) {
    // BIO -> BIOES: close every chunk explicitly, single tokens become S.
    auto spans = extract_spans(tags);
    std::vector<std::string> out(tags.size(), "O");
    for (const auto& sp : spans) {
      if (sp.start == sp.end) {
        out[static_cast<size_t>(sp.start)] = "S-" + sp.etype;
      } else {
        out[static_cast<size_t>(sp.start)] = "B-" + sp.etype;
        for (int i = sp.start + 1; i < sp.end; ++i) out[static_cast<size_t>(i)] = "I-" + sp.etype;
        out[static_cast<size_t>(sp.end)] = "E-" + sp.etype;
      }
    }
    return out;
  }

  // BIOES -> BIO
  std::vector<std::string> out;
  out.reserve(tags.size());
  for (const auto& tag : tags) {
    auto [p, ty] = parse_tag(tag);
    switch (p) {
      case 'O': out.emplace_back("O"); break;
      case 'B': out.push_back("B-" + ty); break;
      case 'S': out.push_back("B-" + ty); break;
      case 'I': out.push_back("I-" + ty); break;
      case 'E': out.push_back("I-" + ty); break;
    }
  }
  return out;
}

}  // namespace nerforge
