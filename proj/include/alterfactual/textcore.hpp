#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "alterfactual/errors.hpp"

namespace alterfactual {

// ---------------------------------------------------------------------------
// Tags and relations
// ---------------------------------------------------------------------------

enum class PosTag : std::uint8_t { Noun, Verb, Adj, Adv, Pron, Other };

inline std::string_view to_string(PosTag tag) {
  switch (tag) {
    case PosTag::Noun: return "NOUN";
    case PosTag::Verb: return "VERB";
    case PosTag::Adj: return "ADJ";
    case PosTag::Adv: return "ADV";
    case PosTag::Pron: return "PRON";
    case PosTag::Other: return "OTHER";
  }
  return "OTHER";
}

inline PosTag parse_pos_tag(std::string_view name) {
  if (name == "NOUN") return PosTag::Noun;
  if (name == "VERB") return PosTag::Verb;
  if (name == "ADJ") return PosTag::Adj;
  if (name == "ADV") return PosTag::Adv;
  if (name == "PRON") return PosTag::Pron;
  return PosTag::Other;
}

// How a replacement word relates to the word it replaces. Deletion is only
// produced by the input-reduction baseline.
enum class RelationKind : std::uint8_t { Antonym, DistinctFrom, HypernymHyponym, LLM, Lexicon, Deletion };

inline std::string_view to_string(RelationKind kind) {
  switch (kind) {
    case RelationKind::Antonym: return "Antonym";
    case RelationKind::DistinctFrom: return "DistinctFrom";
    case RelationKind::HypernymHyponym: return "HypernymHyponym";
    case RelationKind::LLM: return "LLM";
    case RelationKind::Lexicon: return "Lexicon";
    case RelationKind::Deletion: return "Deletion";
  }
  return "Lexicon";
}

inline RelationKind parse_relation_kind(std::string_view name) {
  if (name == "Antonym") return RelationKind::Antonym;
  if (name == "DistinctFrom") return RelationKind::DistinctFrom;
  if (name == "HypernymHyponym") return RelationKind::HypernymHyponym;
  if (name == "LLM") return RelationKind::LLM;
  if (name == "Lexicon") return RelationKind::Lexicon;
  if (name == "Deletion") return RelationKind::Deletion;
  throw ParseError("unknown relation kind: " + std::string(name));
}

struct OppositeRelation {
  RelationKind kind = RelationKind::Lexicon;
  double weight = 1.0;

  friend bool operator==(const OppositeRelation&, const OppositeRelation&) = default;
};

// ---------------------------------------------------------------------------
// String helpers
// ---------------------------------------------------------------------------

// ASCII lowercase; bytes >= 0x80 pass through untouched.
inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

inline bool iequals(std::string_view a, std::string_view b) { return lowercase(a) == lowercase(b); }

inline bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_ascii_space(s[b])) ++b;
  while (e > b && is_ascii_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string normalize_ws(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (is_ascii_space(c)) {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string field;
  while (in >> field) out.push_back(field);
  return out;
}

// ---------------------------------------------------------------------------
// Word lists
// ---------------------------------------------------------------------------

class StopwordList {
 public:
  StopwordList() = default;
  explicit StopwordList(std::unordered_set<std::string> words) : words_(std::move(words)) {}

  // One word per line; blank lines and '#' comments ignored.
  static StopwordList load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open stopword list: " + path);
    std::unordered_set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      auto w = trim(line);
      if (w.empty() || w.front() == '#') continue;
      words.insert(lowercase(w));
    }
    return StopwordList(std::move(words));
  }

  bool contains(std::string_view normalized) const { return words_.count(std::string(normalized)) > 0; }
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

class PosTagger {
 public:
  virtual ~PosTagger() = default;
  // Unknown words map to Other.
  virtual PosTag tag(std::string_view normalized) const = 0;
};

class LexiconPosTagger final : public PosTagger {
 public:
  LexiconPosTagger() = default;
  explicit LexiconPosTagger(std::unordered_map<std::string, PosTag> table) : table_(std::move(table)) {}

  // Two whitespace-separated columns: word, tag.
  static LexiconPosTagger load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open POS lexicon: " + path);
    std::unordered_map<std::string, PosTag> table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto fields = split_ws(line);
      if (fields.empty() || fields[0].front() == '#') continue;
      if (fields.size() != 2) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'word TAG'");
      }
      table.emplace(lowercase(fields[0]), parse_pos_tag(fields[1]));
    }
    return LexiconPosTagger(std::move(table));
  }

  PosTag tag(std::string_view normalized) const override {
    auto it = table_.find(lowercase(normalized));
    return it == table_.end() ? PosTag::Other : it->second;
  }

 private:
  std::unordered_map<std::string, PosTag> table_;
};

// Resources consulted when tokens are annotated. Both members may be null.
struct TextAnnotator {
  std::shared_ptr<const StopwordList> stopwords;
  std::shared_ptr<const PosTagger> tagger;

  bool is_stopword(std::string_view normalized) const { return stopwords && stopwords->contains(normalized); }
  PosTag tag(std::string_view normalized) const { return tagger ? tagger->tag(normalized) : PosTag::Other; }
};

// ---------------------------------------------------------------------------
// Document
// ---------------------------------------------------------------------------

struct Token {
  std::string surface;
  std::string normalized;
  bool is_stopword = false;
  PosTag pos = PosTag::Other;
  bool is_punct = false;
  // Byte span into Document::raw.
  std::size_t begin = 0;
  std::size_t end = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

struct SentenceBound {
  std::size_t first = 0;  // first token index
  std::size_t last = 0;   // one past the final token index

  friend bool operator==(const SentenceBound&, const SentenceBound&) = default;
};

struct Document {
  std::string raw;
  std::vector<Token> tokens;
  std::vector<SentenceBound> sentence_bounds;
  TextAnnotator annotator;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }

  std::vector<std::string> surfaces() const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.surface);
    return out;
  }

  // Annotator resources are not part of a document's value.
  friend bool operator==(const Document& a, const Document& b) {
    return a.raw == b.raw && a.tokens == b.tokens && a.sentence_bounds == b.sentence_bounds;
  }
};

namespace detail {

enum class CharClass { Space, Word, Joiner, Punct };

struct CodePoint {
  std::size_t length;
  CharClass cls;
};

inline CodePoint classify_at(std::string_view s, std::size_t i) {
  auto c = static_cast<unsigned char>(s[i]);
  if (c < 0x80) {
    if (is_ascii_space(static_cast<char>(c))) return {1, CharClass::Space};
    if (std::isalnum(c) || c == '_') return {1, CharClass::Word};
    if (c == '\'' || c == '-') return {1, CharClass::Joiner};
    return {1, CharClass::Punct};
  }
  std::size_t len = (c >= 0xF0) ? 4 : (c >= 0xE0) ? 3 : (c >= 0xC0) ? 2 : 1;
  len = std::min(len, s.size() - i);
  auto cp = s.substr(i, len);
  if (cp == "\xC2\xA0") return {len, CharClass::Space};
  if (cp == "\xE2\x80\x99") return {len, CharClass::Joiner};  // right single quote
  if (cp == "\xE2\x80\x98" || cp == "\xE2\x80\x9C" || cp == "\xE2\x80\x9D" || cp == "\xE2\x80\xA6" ||
      cp == "\xE2\x80\x93" || cp == "\xE2\x80\x94") {
    return {len, CharClass::Punct};
  }
  return {len, CharClass::Word};
}

inline bool is_terminal(std::string_view surface) { return surface == "." || surface == "!" || surface == "?"; }

inline std::vector<SentenceBound> split_sentences(const std::vector<Token>& tokens) {
  std::vector<SentenceBound> bounds;
  std::size_t start = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    bool terminal = is_terminal(tokens[i].surface);
    bool next_terminal = i + 1 < tokens.size() && is_terminal(tokens[i + 1].surface);
    if (terminal && !next_terminal) {
      bounds.push_back({start, i + 1});
      start = i + 1;
    }
  }
  if (start < tokens.size()) bounds.push_back({start, tokens.size()});
  return bounds;
}

}  // namespace detail

// Whitespace + punctuation split. Apostrophes and hyphens stay inside a word
// when both neighbours are word characters, so "isn't" is one token.
inline Document tokenize(std::string_view raw, const TextAnnotator& annotator = {}) {
  Document doc;
  doc.raw = std::string(raw);
  doc.annotator = annotator;
  const std::string_view s = doc.raw;

  auto push = [&](std::size_t b, std::size_t e, bool punct) {
    Token t;
    t.surface = std::string(s.substr(b, e - b));
    t.normalized = lowercase(t.surface);
    t.is_punct = punct;
    t.is_stopword = !punct && annotator.is_stopword(t.normalized);
    t.pos = punct ? PosTag::Other : annotator.tag(t.normalized);
    t.begin = b;
    t.end = e;
    doc.tokens.push_back(std::move(t));
  };

  std::size_t i = 0;
  while (i < s.size()) {
    auto cp = detail::classify_at(s, i);
    if (cp.cls == detail::CharClass::Space) {
      i += cp.length;
      continue;
    }
    if (cp.cls != detail::CharClass::Word) {
      push(i, i + cp.length, true);
      i += cp.length;
      continue;
    }
    std::size_t b = i;
    std::size_t e = i + cp.length;
    while (e < s.size()) {
      auto next = detail::classify_at(s, e);
      if (next.cls == detail::CharClass::Word) {
        e += next.length;
        continue;
      }
      if (next.cls == detail::CharClass::Joiner) {
        std::size_t after = e + next.length;
        if (after < s.size() && detail::classify_at(s, after).cls == detail::CharClass::Word) {
          e = after;
          continue;
        }
      }
      break;
    }
    push(b, e, false);
    i = e;
  }
  doc.sentence_bounds = detail::split_sentences(doc.tokens);
  return doc;
}

// Joins surfaces with single spaces, attaching closing punctuation to the
// left and opening brackets to the right. Output re-tokenizes to the input.
inline std::string detokenize(const std::vector<std::string>& surfaces) {
  static const std::unordered_set<std::string_view> no_space_before = {".", ",", "!", "?", ";", ":", ")", "]", "}", "%"};
  static const std::unordered_set<std::string_view> no_space_after = {"(", "[", "{"};
  std::string out;
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    if (i > 0 && !no_space_before.count(surfaces[i]) && !no_space_after.count(surfaces[i - 1])) out.push_back(' ');
    out += surfaces[i];
  }
  return out;
}

inline std::string detokenize(const std::vector<Token>& tokens) {
  std::vector<std::string> surfaces;
  surfaces.reserve(tokens.size());
  for (const auto& t : tokens) surfaces.push_back(t.surface);
  return detokenize(surfaces);
}

inline std::string sentence_text(const Document& doc, std::size_t sentence) {
  const auto& b = doc.sentence_bounds.at(sentence);
  std::vector<std::string> surfaces;
  for (std::size_t i = b.first; i < b.last; ++i) surfaces.push_back(doc.tokens[i].surface);
  return detokenize(surfaces);
}

// True when `text` tokenizes to exactly one non-punctuation token.
inline bool is_single_word(std::string_view text) {
  auto doc = tokenize(text);
  return doc.tokens.size() == 1 && !doc.tokens.front().is_punct;
}

// ---------------------------------------------------------------------------
// Substitution
// ---------------------------------------------------------------------------

struct Substitution {
  std::size_t position = 0;
  std::string original;
  std::string replacement;
  OppositeRelation relation;
  std::string provider;

  friend bool operator==(const Substitution&, const Substitution&) = default;
};

// Capitalizes the replacement's first letter when the original starts with
// an uppercase ASCII letter.
inline std::string inherit_casing(std::string_view original, std::string replacement) {
  if (!original.empty() && original.front() >= 'A' && original.front() <= 'Z' && !replacement.empty() &&
      replacement.front() >= 'a' && replacement.front() <= 'z') {
    replacement.front() = static_cast<char>(replacement.front() - 'a' + 'A');
  }
  return replacement;
}

inline Document apply_substitutions(const Document& doc, std::vector<Substitution> subs) {
  if (subs.empty()) return doc;
  std::sort(subs.begin(), subs.end(), [](const auto& a, const auto& b) { return a.position > b.position; });
  for (std::size_t i = 0; i < subs.size(); ++i) {
    const auto& sub = subs[i];
    if (sub.position >= doc.tokens.size()) {
      throw InvalidSubstitution("substitution position " + std::to_string(sub.position) + " out of range (" +
                                std::to_string(doc.tokens.size()) + " tokens)");
    }
    if (i > 0 && subs[i - 1].position == sub.position) {
      throw InvalidSubstitution("duplicate substitution position " + std::to_string(sub.position));
    }
    const auto& tok = doc.tokens[sub.position];
    if (tok.is_punct) throw InvalidSubstitution("cannot substitute punctuation at " + std::to_string(sub.position));
    if (!iequals(tok.surface, sub.original)) {
      throw InvalidSubstitution("token at " + std::to_string(sub.position) + " is '" + tok.surface + "', not '" +
                                sub.original + "'");
    }
    if (iequals(sub.original, sub.replacement)) {
      throw InvalidSubstitution("replacement equals original: " + sub.original);
    }
    if (!is_single_word(sub.replacement)) {
      throw InvalidSubstitution("replacement is not a single word: '" + sub.replacement + "'");
    }
  }
  std::string raw = doc.raw;
  for (const auto& sub : subs) {
    const auto& tok = doc.tokens[sub.position];
    raw.replace(tok.begin, tok.end - tok.begin, inherit_casing(tok.surface, sub.replacement));
  }
  auto out = tokenize(raw, doc.annotator);
  if (out.tokens.size() != doc.tokens.size()) {
    throw StructuralError("substitution changed the token count of '" + doc.raw + "'");
  }
  return out;
}

// Removes one token, keeping neighbouring tokens apart.
inline Document erase_token(const Document& doc, std::size_t position) {
  if (position >= doc.tokens.size()) throw InvalidSubstitution("erase position out of range");
  const auto& tok = doc.tokens[position];
  std::string left = doc.raw.substr(0, tok.begin);
  std::string right = doc.raw.substr(tok.end);
  bool left_ws = left.empty() || is_ascii_space(left.back());
  bool right_ws = right.empty() || is_ascii_space(right.front());
  if (left_ws) {
    std::size_t k = 0;
    while (k < right.size() && is_ascii_space(right[k])) ++k;
    right.erase(0, k);
  } else if (!right_ws) {
    left.push_back(' ');
  }
  auto out = tokenize(left + right, doc.annotator);
  if (out.tokens.size() + 1 != doc.tokens.size()) {
    throw StructuralError("deleting token " + std::to_string(position) + " of '" + doc.raw +
                          "' did not remove exactly one token");
  }
  return out;
}

inline bool pos_compatible(const Token& original, std::string_view replacement, const PosTagger& tagger) {
  PosTag a = tagger.tag(original.normalized);
  PosTag b = tagger.tag(lowercase(replacement));
  return a == b || a == PosTag::Other || b == PosTag::Other;
}

}  // namespace alterfactual
