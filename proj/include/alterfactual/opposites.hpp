#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "alterfactual/cache.hpp"
#include "alterfactual/errors.hpp"
#include "alterfactual/http.hpp"
#include "alterfactual/textcore.hpp"

namespace alterfactual {

// Normalizes a provider term ("ice_cream" -> "ice cream") and keeps it only
// if it is a single word different from the source.
inline std::optional<std::string> clean_candidate_word(std::string_view term, std::string_view source) {
  std::string word = trim(term);
  std::replace(word.begin(), word.end(), '_', ' ');
  if (word.empty() || !is_single_word(word) || iequals(word, source)) return std::nullopt;
  return word;
}

// Word-level opposite lookup (ConceptNet, lexicon file, ...).
class WordOppositeProvider {
 public:
  virtual ~WordOppositeProvider() = default;
  // Stable id; used as part of the cache key.
  virtual std::string id() const = 0;
  virtual std::vector<OppositeCandidate> lookup(std::string_view word) = 0;
};

// ---------------------------------------------------------------------------
// Lexicon
// ---------------------------------------------------------------------------

// Rows "word opposite1 opposite2 ...".
class OppositeLexicon {
 public:
  OppositeLexicon() = default;

  static OppositeLexicon load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open opposite lexicon: " + path);
    OppositeLexicon table;
    std::string line;
    while (std::getline(in, line)) {
      auto fields = split_ws(line);
      if (fields.size() < 2 || fields[0].front() == '#') continue;
      table.add(fields[0], std::vector<std::string>(fields.begin() + 1, fields.end()));
    }
    return table;
  }

  void add(const std::string& word, const std::vector<std::string>& opposites) {
    auto key = lowercase(word);
    if (!rows_.count(key)) order_.push_back(key);
    auto& row = rows_[key];
    for (const auto& o : opposites) {
      if (std::find(row.begin(), row.end(), o) == row.end()) row.push_back(o);
    }
  }

  const std::vector<std::string>* find(std::string_view word) const {
    auto it = rows_.find(lowercase(word));
    return it == rows_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return rows_.size(); }
  // Source words in file order.
  const std::vector<std::string>& words() const { return order_; }

 private:
  std::unordered_map<std::string, std::vector<std::string>> rows_;
  std::vector<std::string> order_;
};

inline std::vector<OppositeCandidate> lexicon_opposites(std::string_view word, const OppositeLexicon& table) {
  std::vector<OppositeCandidate> out;
  if (const auto* row = table.find(word)) {
    for (const auto& o : *row) {
      if (auto w = clean_candidate_word(o, word)) {
        out.push_back({*w, {RelationKind::Lexicon, 1.0}, lowercase(word)});
      }
    }
  }
  return out;
}

class LexiconOpposites final : public WordOppositeProvider {
 public:
  explicit LexiconOpposites(std::shared_ptr<const OppositeLexicon> table, std::string name = "lexicon")
      : table_(std::move(table)), name_(std::move(name)) {}

  std::string id() const override { return name_; }
  std::vector<OppositeCandidate> lookup(std::string_view word) override { return lexicon_opposites(word, *table_); }

 private:
  std::shared_ptr<const OppositeLexicon> table_;
  std::string name_;
};

// ---------------------------------------------------------------------------
// ConceptNet
// ---------------------------------------------------------------------------

struct ConceptNetOptions {
  std::string base_url = "https://api.conceptnet.io";
  double min_weight = 0.5;
  std::size_t page_size = 50;
  std::size_t category_members = 25;
  std::size_t max_categories = 3;
  http::RetryPolicy retry;
};

// Tiers are tried in order Antonym -> DistinctFrom -> sibling under an IsA
// category; the first tier with a candidate at or above the weight threshold
// wins. Within a tier: descending weight, then lexicographic word.
class ConceptNetOpposites final : public WordOppositeProvider {
 public:
  explicit ConceptNetOpposites(ConceptNetOptions options) : opt_(std::move(options)) {}

  std::string id() const override {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", opt_.min_weight);
    return "conceptnet@" + std::string(buf);
  }

  std::vector<OppositeCandidate> lookup(std::string_view word) override {
    const std::string term = node_term(word);
    if (term.empty()) return {};
    for (auto [rel, kind] : {std::pair{"Antonym", RelationKind::Antonym},
                             std::pair{"DistinctFrom", RelationKind::DistinctFrom}}) {
      std::vector<OppositeCandidate> tier;
      for (const auto& edge : query(term, rel, opt_.page_size)) {
        std::string other;
        if (edge.start == term) {
          other = edge.end;
        } else if (edge.end == term) {
          other = edge.start;
        } else {
          continue;
        }
        if (edge.weight >= opt_.min_weight) tier.push_back({other, {kind, edge.weight}, lowercase(word)});
      }
      auto ranked = rank(std::move(tier), word);
      if (!ranked.empty()) return ranked;
    }
    return hyponym_siblings(term, word);
  }

  struct Edge {
    std::string start;
    std::string end;
    double weight = 0.0;
  };

  // "/c/en/ice_cream/n" -> "ice_cream"; empty for non-English nodes.
  static std::string term_of(std::string_view id) {
    std::vector<std::string_view> parts;
    std::size_t b = 0;
    while (b <= id.size()) {
      auto e = id.find('/', b);
      if (e == std::string_view::npos) e = id.size();
      parts.push_back(id.substr(b, e - b));
      b = e + 1;
    }
    if (parts.size() < 4 || parts[1] != "c" || parts[2] != "en") return {};
    return std::string(parts[3]);
  }

  static std::vector<Edge> parse_edges(const nlohmann::json& body) {
    std::vector<Edge> edges;
    if (!body.contains("edges") || !body["edges"].is_array()) {
      throw OracleError("ConceptNet response lacks an edge list", true, "conceptnet");
    }
    for (const auto& e : body["edges"]) {
      try {
        Edge edge;
        edge.start = term_of(e.at("start").at("@id").get<std::string>());
        edge.end = term_of(e.at("end").at("@id").get<std::string>());
        edge.weight = e.value("weight", 0.0);
        if (!edge.start.empty() && !edge.end.empty()) edges.push_back(std::move(edge));
      } catch (const nlohmann::json::exception&) {
        continue;
      }
    }
    return edges;
  }

 private:
  static std::string node_term(std::string_view word) {
    std::string t = lowercase(trim(word));
    std::replace(t.begin(), t.end(), ' ', '_');
    return t;
  }

  std::vector<Edge> query(const std::string& term, const std::string& rel, std::size_t limit) {
    httplib::Params params{{"node", "/c/en/" + term}, {"rel", "/r/" + rel}, {"limit", std::to_string(limit)}};
    try {
      return http::with_retries(opt_.retry, [&] {
        return parse_edges(http::get_json_once(opt_.base_url, "/query", params, opt_.retry, "conceptnet"));
      });
    } catch (const OracleError& e) {
      throw ProviderUnavailable(std::string("ConceptNet unavailable: ") + e.what(), "conceptnet");
    }
  }

  std::vector<OppositeCandidate> hyponym_siblings(const std::string& term, std::string_view word) {
    std::vector<Edge> categories;
    for (auto& edge : query(term, "IsA", opt_.page_size)) {
      if (edge.start == term && edge.end != term && edge.weight >= opt_.min_weight) categories.push_back(edge);
    }
    std::stable_sort(categories.begin(), categories.end(), [](const Edge& a, const Edge& b) {
      return a.weight != b.weight ? a.weight > b.weight : a.end < b.end;
    });
    std::size_t tried = 0;
    std::set<std::string> seen;
    for (const auto& cat : categories) {
      if (!seen.insert(cat.end).second) continue;
      if (tried++ >= opt_.max_categories) break;
      std::vector<OppositeCandidate> members;
      for (const auto& edge : query(cat.end, "IsA", opt_.category_members)) {
        if (edge.end == cat.end && edge.start != term && edge.weight >= opt_.min_weight) {
          members.push_back({edge.start, {RelationKind::HypernymHyponym, edge.weight}, lowercase(word)});
        }
      }
      auto ranked = rank(std::move(members), word);
      if (!ranked.empty()) return ranked;
    }
    return {};
  }

  static std::vector<OppositeCandidate> rank(std::vector<OppositeCandidate> raw, std::string_view word) {
    std::vector<OppositeCandidate> cleaned;
    for (auto& c : raw) {
      if (auto w = clean_candidate_word(c.word, word)) {
        c.word = *w;
        cleaned.push_back(std::move(c));
      }
    }
    std::stable_sort(cleaned.begin(), cleaned.end(), [](const auto& a, const auto& b) {
      return a.relation.weight != b.relation.weight ? a.relation.weight > b.relation.weight : a.word < b.word;
    });
    std::vector<OppositeCandidate> out;
    std::set<std::string> seen;
    for (auto& c : cleaned) {
      if (seen.insert(lowercase(c.word)).second) out.push_back(std::move(c));
    }
    return out;
  }

  ConceptNetOptions opt_;
};

inline std::vector<OppositeCandidate> conceptnet_opposites(std::string_view word, ConceptNetOptions options) {
  return ConceptNetOpposites(std::move(options)).lookup(word);
}

// ---------------------------------------------------------------------------
// Cache decorator
// ---------------------------------------------------------------------------

class CachedOpposites final : public WordOppositeProvider {
 public:
  CachedOpposites(std::shared_ptr<WordOppositeProvider> inner, std::shared_ptr<CacheStore> store)
      : inner_(std::move(inner)), store_(std::move(store)) {}

  std::string id() const override { return inner_->id(); }

  std::vector<OppositeCandidate> lookup(std::string_view word) override {
    CacheKey key{inner_->id(), lowercase(trim(word))};
    if (auto hit = store_->get(key)) return hit->candidates;
    auto fresh = inner_->lookup(word);
    store_->put(CacheEntry{key, fresh, store_->now()});
    return fresh;
  }

 private:
  std::shared_ptr<WordOppositeProvider> inner_;
  std::shared_ptr<CacheStore> store_;
};

inline std::vector<OppositeCandidate> cached(WordOppositeProvider& provider, CacheStore& store,
                                             std::string_view word) {
  CacheKey key{provider.id(), lowercase(trim(word))};
  if (auto hit = store.get(key)) return hit->candidates;
  auto fresh = provider.lookup(word);
  store.put(CacheEntry{key, fresh, store.now()});
  return fresh;
}

// ---------------------------------------------------------------------------
// LLM
// ---------------------------------------------------------------------------

inline constexpr std::string_view kAntonymPrompt =
    "Job: output context-relevant antonyms for each word in a sentence. Output: JSON table with one row per word, "
    "each word is followed by ONE context-relevant antonym. Each antonym should be a single word. The original "
    "sentence should be grammatically correct when the antonym is swapped in. No titles, just \"Word:Antonym\". "
    "Words with no antonym should pair with '-'.";

inline constexpr std::string_view kJsonReminder = "Reply with the JSON table only.";

struct ChatMessage {
  std::string role;
  std::string content;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  // Returns the assistant message content of the first choice.
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

struct ChatClientOptions {
  std::string base_url = "https://api.openai.com";
  std::string model = "gpt-3.5-turbo";
  std::string api_key;
  http::RetryPolicy retry;
};

// POST {base}/v1/chat/completions
class ChatCompletionsClient final : public LlmClient {
 public:
  explicit ChatCompletionsClient(ChatClientOptions options) : opt_(std::move(options)) {}

  std::string complete(const std::vector<ChatMessage>& messages) override {
    nlohmann::json body = {{"model", opt_.model}, {"temperature", 0}, {"messages", nlohmann::json::array()}};
    for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    httplib::Headers headers;
    if (!opt_.api_key.empty()) headers.emplace("Authorization", "Bearer " + opt_.api_key);
    return http::with_retries(opt_.retry, [&] {
      auto res = http::post_json_once(opt_.base_url, "/v1/chat/completions", body, opt_.retry, "llm", headers);
      try {
        return res.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw OracleError(std::string("malformed chat completion: ") + e.what(), true, "llm");
      }
    });
  }

 private:
  ChatClientOptions opt_;
};

struct LlmRow {
  std::string word;
  std::string antonym;
};

struct LlmOpposites {
  std::map<std::size_t, OppositeCandidate> by_position;
  std::vector<LlmRow> rejected;  // hallucination guard hits
  bool incomplete = false;       // some words got no row at all
  std::size_t requests = 0;
};

namespace detail {

inline std::string strip_code_fence(std::string s) {
  s = trim(s);
  if (s.rfind("```", 0) == 0) {
    auto nl = s.find('\n');
    s = nl == std::string::npos ? std::string{} : s.substr(nl + 1);
    auto close = s.rfind("```");
    if (close != std::string::npos) s = s.substr(0, close);
  }
  return trim(s);
}

inline void collect_rows(const nlohmann::json& j, std::vector<LlmRow>& rows) {
  if (j.is_object()) {
    // {"Word": "w", "Antonym": "a"}
    auto find_key = [&](std::string_view name) -> const nlohmann::json* {
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (iequals(it.key(), name) && it.value().is_string()) return &it.value();
      }
      return nullptr;
    };
    if (j.size() == 2) {
      const auto* w = find_key("word");
      const auto* a = find_key("antonym");
      if (w && a) {
        rows.push_back({w->get<std::string>(), a->get<std::string>()});
        return;
      }
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.value().is_string()) {
        rows.push_back({it.key(), it.value().get<std::string>()});
      } else if (it.value().is_array() || it.value().is_object()) {
        collect_rows(it.value(), rows);
      }
    }
  } else if (j.is_array()) {
    for (const auto& item : j) {
      if (item.is_string()) {
        auto s = item.get<std::string>();
        auto colon = s.find(':');
        if (colon != std::string::npos) rows.push_back({trim(s.substr(0, colon)), trim(s.substr(colon + 1))});
      } else {
        collect_rows(item, rows);
      }
    }
  }
}

}  // namespace detail

// Parses the model's "Word:Antonym" JSON table. Throws ParseError when the
// content is not JSON.
inline std::vector<LlmRow> parse_antonym_table(const std::string& content) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::strip_code_fence(content));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("LLM reply is not JSON: ") + e.what());
  }
  if (!j.is_object() && !j.is_array()) throw ParseError("LLM reply is not a JSON table");
  std::vector<LlmRow> rows;
  detail::collect_rows(j, rows);
  return rows;
}

// One request per sentence, one reprompt when the reply is not JSON.
inline LlmOpposites llm_opposites(const Document& sentence, LlmClient& client) {
  LlmOpposites out;
  std::vector<ChatMessage> messages = {{"system", std::string(kAntonymPrompt)}, {"user", sentence.raw}};
  std::vector<LlmRow> rows;
  ++out.requests;
  try {
    rows = parse_antonym_table(client.complete(messages));
  } catch (const ParseError&) {
    messages.push_back({"user", std::string(kJsonReminder)});
    ++out.requests;
    rows = parse_antonym_table(client.complete(messages));
  }

  std::vector<bool> answered(sentence.tokens.size(), false);
  for (const auto& row : rows) {
    auto key = lowercase(trim(row.word));
    std::optional<std::size_t> pos;
    for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
      const auto& tok = sentence.tokens[i];
      if (!tok.is_punct && !answered[i] && tok.normalized == key) {
        pos = i;
        break;
      }
    }
    if (!pos) continue;
    answered[*pos] = true;
    auto antonym = trim(row.antonym);
    if (antonym == "-") continue;
    const auto& tok = sentence.tokens[*pos];
    if (antonym.empty() || iequals(antonym, "antonym") || iequals(antonym, tok.surface) || !is_single_word(antonym)) {
      out.rejected.push_back(row);
      continue;
    }
    out.by_position.emplace(*pos, OppositeCandidate{antonym, {RelationKind::LLM, 1.0}, tok.normalized});
  }
  for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
    if (!sentence.tokens[i].is_punct && !answered[i]) out.incomplete = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generator-facing sources
// ---------------------------------------------------------------------------

// Binds to one document and maps token positions to ordered candidates.
class OppositeSource {
 public:
  using Lookup = std::function<std::vector<OppositeCandidate>(std::size_t position)>;

  virtual ~OppositeSource() = default;
  virtual std::string id() const = 0;
  virtual Lookup bind(const Document& doc) = 0;
};

class WordSource final : public OppositeSource {
 public:
  explicit WordSource(std::shared_ptr<WordOppositeProvider> provider) : provider_(std::move(provider)) {}

  std::string id() const override { return provider_->id(); }

  Lookup bind(const Document& doc) override {
    std::vector<std::string> words;
    for (const auto& t : doc.tokens) words.push_back(t.normalized);
    return [provider = provider_, words = std::move(words)](std::size_t pos) {
      return provider->lookup(words.at(pos));
    };
  }

 private:
  std::shared_ptr<WordOppositeProvider> provider_;
};

class LlmSource final : public OppositeSource {
 public:
  explicit LlmSource(std::shared_ptr<LlmClient> client, std::string name = "llm")
      : client_(std::move(client)), name_(std::move(name)) {}

  std::string id() const override { return name_; }

  Lookup bind(const Document& doc) override {
    auto table = std::make_shared<LlmOpposites>(llm_opposites(doc, *client_));
    return [table](std::size_t pos) -> std::vector<OppositeCandidate> {
      auto it = table->by_position.find(pos);
      if (it == table->by_position.end()) return {};
      return {it->second};
    };
  }

 private:
  std::shared_ptr<LlmClient> client_;
  std::string name_;
};

}  // namespace alterfactual
