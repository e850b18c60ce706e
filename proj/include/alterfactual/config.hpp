#pragma once

#include <chrono>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>

#include "alterfactual/cache.hpp"
#include "alterfactual/errors.hpp"
#include "alterfactual/generator.hpp"
#include "alterfactual/http.hpp"
#include "alterfactual/opposites.hpp"
#include "alterfactual/oracles.hpp"
#include "alterfactual/textcore.hpp"

namespace alterfactual {

// Used when no stopwords.path / negation_lexicon.path is configured.
inline const std::unordered_set<std::string>& default_stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",       "about",   "above",  "after",   "again",    "against", "all",     "am",     "an",     "and",
      "any",     "are",     "as",     "at",      "be",       "because", "been",    "before", "being",  "below",
      "between", "both",    "but",    "by",      "can",      "could",   "did",     "do",     "does",   "doing",
      "down",    "during",  "each",   "few",     "for",      "from",    "further", "had",    "has",    "have",
      "having",  "he",      "her",    "here",    "hers",     "herself", "him",     "himself", "his",   "how",
      "i",       "if",      "in",     "into",    "is",       "it",      "its",     "itself", "just",   "me",
      "more",    "most",    "my",     "myself",  "no",       "nor",     "not",     "now",    "of",     "off",
      "on",      "once",    "only",   "or",      "other",    "our",     "ours",    "ourselves", "out", "over",
      "own",     "same",    "she",    "should",  "so",       "some",    "such",    "than",   "that",   "the",
      "their",   "theirs",  "them",   "themselves", "then",  "there",   "these",   "they",   "this",   "those",
      "through", "to",      "too",    "under",   "until",    "up",      "very",    "was",    "we",     "were",
      "what",    "when",    "where",  "which",   "while",    "who",     "whom",    "why",    "will",   "with",
      "would",   "you",     "your",   "yours",   "yourself", "yourselves", "'s",   "s",      "t",      "don't",
      "doesn't", "didn't",  "isn't",  "aren't",  "wasn't",   "weren't", "won't",   "can't",  "cannot", "never"};
  return words;
}

inline const std::unordered_set<std::string>& default_negations() {
  static const std::unordered_set<std::string> words = {
      "not",     "no",     "never",   "none",     "nothing",  "nobody",  "nowhere", "neither",  "nor",
      "cannot",  "without", "n't",    "don't",    "doesn't",  "didn't",  "isn't",   "aren't",   "wasn't",
      "weren't", "won't",  "wouldn't", "can't",   "couldn't", "shouldn't", "hasn't", "haven't", "hadn't"};
  return words;
}

// ---------------------------------------------------------------------------
// Flat key file
// ---------------------------------------------------------------------------

// Config keys (file lines are `key = value`, '#' starts a comment):
//   classifier.url        classifier endpoint (POST /classify)
//   classifier.model      local linear bag-of-words model (JSON) used when no url is set
//   embed.url             embedding endpoint (POST /embed)
//   vectors.path          word-vector file for the built-in similarity
//   llm.url, llm.model, llm.api_key
//   conceptnet.url        ConceptNet REST base
//   provider              conceptnet | llm | lexicon
//   lexicon.path          opposite lexicon for the lexicon provider
//   mode                  single | multi
//   delta, epsilon, m (integer or "unbounded"), omega_t
//   negation.n_t, negation.window
//   negation.url          remote negativity scorer (POST /negation)
//   negation_lexicon.path built-in negativity scorer word list
//   perplexity.url        remote perplexity scorer (POST /perplexity)
//   unigrams.path         unigram counts for the built-in perplexity
//   cache.path            opposite-lookup cache file
//   stopwords.path, pos_lexicon.path
//   batch_size            classifier batch size
//   retry.attempts, retry.timeout_ms
class ServiceConfig {
 public:
  using Values = std::map<std::string, std::string>;

  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "classifier.url", "classifier.model",     "embed.url",    "vectors.path",  "llm.url",
        "llm.model",      "llm.api_key",          "conceptnet.url", "provider",    "lexicon.path",
        "mode",           "delta",                "epsilon",      "m",             "omega_t",
        "negation.n_t",   "negation.window",      "negation.url", "negation_lexicon.path",
        "perplexity.url", "unigrams.path",        "cache.path",   "stopwords.path", "pos_lexicon.path",
        "batch_size",     "retry.attempts",       "retry.timeout_ms"};
    return keys;
  }

  static ServiceConfig defaults() {
    ServiceConfig c;
    c.values_ = {{"provider", "lexicon"},
                 {"mode", "multi"},
                 {"delta", "0.05"},
                 {"epsilon", "0.8"},
                 {"m", "unbounded"},
                 {"omega_t", "0.5"},
                 {"negation.n_t", "0.15"},
                 {"negation.window", "3"},
                 {"conceptnet.url", "https://api.conceptnet.io"},
                 {"llm.url", "https://api.openai.com"},
                 {"llm.model", "gpt-3.5-turbo"},
                 {"batch_size", "32"},
                 {"retry.attempts", "3"},
                 {"retry.timeout_ms", "30000"}};
    return c;
  }

  static Values parse(std::istream& in, const std::string& origin) {
    Values out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      auto t = trim(line);
      if (t.empty()) continue;
      auto eq = t.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      }
      out[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return out;
  }

  static Values load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse(in, path);
  }

  // defaults < file < flags
  static ServiceConfig resolve(const std::optional<std::string>& file, const Values& flags) {
    auto c = defaults();
    if (file) c.merge(load_file(*file));
    c.merge(flags);
    c.run_config();
    return c;
  }

  void merge(const Values& v) {
    for (const auto& [k, val] : v) {
      if (!known_keys().count(k)) throw ConfigError("unknown config key: " + k);
      values_[k] = val;
    }
  }

  void set(const std::string& key, std::string value) { merge({{key, std::move(value)}}); }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) return std::nullopt;
    return it->second;
  }

  const Values& values() const { return values_; }

  double real(const std::string& key) const {
    auto v = require(key);
    try {
      std::size_t used = 0;
      double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError(key + " must be a number, got '" + v + "'");
    }
  }

  std::size_t count(const std::string& key) const {
    auto v = require(key);
    try {
      std::size_t used = 0;
      long long n = std::stoll(v, &used);
      if (used != v.size() || n < 0) throw std::invalid_argument(v);
      return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
      throw ConfigError(key + " must be a non-negative integer, got '" + v + "'");
    }
  }

  std::string require(const std::string& key) const {
    auto v = get(key);
    if (!v) throw ConfigError("missing config key: " + key);
    return *v;
  }

  RunConfig run_config() const {
    RunConfig r;
    r.delta = real("delta");
    r.epsilon = real("epsilon");
    auto m = require("m");
    if (lowercase(m) == "unbounded") {
      r.max_words.reset();
    } else {
      r.max_words = count("m");
    }
    r.mode = parse_mode(require("mode"));
    r.omega_t = real("omega_t");
    r.negation.threshold = real("negation.n_t");
    r.negation.window = count("negation.window");
    r.provider = parse_provider(require("provider"));
    r.batch_size = count("batch_size");
    if (r.batch_size == 0) throw ConfigError("batch_size must be >= 1");
    r.validate();
    return r;
  }

  http::RetryPolicy retry() const {
    http::RetryPolicy p;
    p.attempts = static_cast<int>(count("retry.attempts"));
    if (p.attempts < 1) throw ConfigError("retry.attempts must be >= 1");
    p.timeout = std::chrono::milliseconds(count("retry.timeout_ms"));
    return p;
  }

 private:
  Values values_;
};

// ---------------------------------------------------------------------------
// Backends built from a config
// ---------------------------------------------------------------------------

// "http(s)://..." -> remote classifier; anything else is a local model file.
inline std::shared_ptr<ClassifierOracle> make_classifier(const std::string& spec, const http::RetryPolicy& retry) {
  if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) {
    return std::make_shared<HttpClassifier>(spec, retry);
  }
  return std::make_shared<LinearBowClassifier>(LinearBowClassifier::load(spec));
}

struct Engine {
  RunConfig run;
  TextAnnotator annotator;
  std::shared_ptr<ClassifierOracle> classifier;
  std::shared_ptr<SimilarityOracle> similarity;
  std::shared_ptr<NegativityOracle> negativity;
  std::shared_ptr<PerplexityOracle> perplexity;  // may be null
  std::shared_ptr<const PosTagger> tagger;
  std::shared_ptr<OppositeSource> opposites;
  std::shared_ptr<CacheStore> cache;

  Backends backends() const { return {*classifier, *similarity, *negativity, *tagger, *opposites}; }
  Document document(std::string_view text) const { return tokenize(text, annotator); }

  // With `for_search` false (bias probing supplies its own models and target
  // swaps) a missing classifier is left null and no opposite provider is built.
  static Engine build(const ServiceConfig& c, bool for_search = true) {
    Engine e;
    e.run = c.run_config();
    const auto retry = c.retry();

    auto stop = c.get("stopwords.path") ? StopwordList::load(*c.get("stopwords.path"))
                                         : StopwordList(default_stopwords());
    e.annotator.stopwords = std::make_shared<const StopwordList>(std::move(stop));
    if (auto p = c.get("pos_lexicon.path")) {
      e.tagger = std::make_shared<const LexiconPosTagger>(LexiconPosTagger::load(*p));
    } else {
      e.tagger = std::make_shared<const PermissiveTagger>();
    }
    e.annotator.tagger = e.tagger;

    if (auto url = c.get("classifier.url")) {
      e.classifier = std::make_shared<HttpClassifier>(*url, retry);
    } else if (auto model = c.get("classifier.model")) {
      e.classifier = make_classifier(*model, retry);
    } else if (for_search) {
      throw ConfigError("no classifier configured: set classifier.url or classifier.model");
    }

    if (auto url = c.get("embed.url")) {
      e.similarity = std::make_shared<HttpEmbeddingSimilarity>(*url, retry);
    } else if (auto path = c.get("vectors.path")) {
      e.similarity = std::make_shared<MeanVectorSimilarity>(std::make_shared<const WordVectors>(WordVectors::load(*path)));
    } else {
      throw ConfigError("no similarity backend configured: set embed.url or vectors.path");
    }

    if (auto url = c.get("negation.url")) {
      e.negativity = std::make_shared<HttpNegativity>(*url, retry);
    } else if (auto path = c.get("negation_lexicon.path")) {
      e.negativity = std::make_shared<LexiconNegativity>(LexiconNegativity::load(*path));
    } else {
      e.negativity = std::make_shared<LexiconNegativity>(default_negations());
    }

    if (auto url = c.get("perplexity.url")) {
      e.perplexity = std::make_shared<HttpPerplexity>(*url, retry);
    } else if (auto path = c.get("unigrams.path")) {
      e.perplexity = std::make_shared<UnigramPerplexity>(UnigramPerplexity::load(*path));
    }

    e.cache = std::make_shared<CacheStore>(c.get("cache.path").value_or(""));
    if (!for_search) return e;
    switch (e.run.provider) {
      case ProviderKind::Lexicon: {
        auto path = c.get("lexicon.path");
        if (!path) throw ConfigError("provider lexicon needs lexicon.path");
        auto table = std::make_shared<const OppositeLexicon>(OppositeLexicon::load(*path));
        e.opposites = std::make_shared<WordSource>(std::make_shared<LexiconOpposites>(table));
        break;
      }
      case ProviderKind::ConceptNet: {
        ConceptNetOptions opt;
        opt.base_url = c.require("conceptnet.url");
        opt.min_weight = e.run.omega_t;
        opt.retry = retry;
        auto inner = std::make_shared<ConceptNetOpposites>(opt);
        e.opposites = std::make_shared<WordSource>(std::make_shared<CachedOpposites>(inner, e.cache));
        break;
      }
      case ProviderKind::LLM: {
        ChatClientOptions opt;
        opt.base_url = c.require("llm.url");
        opt.model = c.require("llm.model");
        opt.api_key = c.get("llm.api_key").value_or("");
        opt.retry = retry;
        e.opposites = std::make_shared<LlmSource>(std::make_shared<ChatCompletionsClient>(opt));
        break;
      }
    }
    return e;
  }
};

}  // namespace alterfactual
