#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "alterfactual/errors.hpp"
#include "alterfactual/http.hpp"
#include "alterfactual/textcore.hpp"

namespace alterfactual {

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

struct Verdict {
  std::vector<double> probs;
  std::size_t predicted = 0;
  double confidence = 0.0;

  // Validates a probability row and derives the argmax (lowest index wins ties).
  static Verdict from_probs(std::vector<double> probs, const std::string& provenance = "classifier") {
    if (probs.empty()) throw ContractViolation("empty probability vector", provenance);
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw ContractViolation("probability out of range [0,1]: " + std::to_string(p), provenance);
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ContractViolation("probabilities sum to " + std::to_string(sum), provenance);
    }
    Verdict v;
    for (std::size_t i = 1; i < probs.size(); ++i) {
      if (probs[i] > probs[v.predicted]) v.predicted = i;
    }
    v.confidence = probs[v.predicted];
    v.probs = std::move(probs);
    return v;
  }

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

// Per-run accounting. Counters are atomic so concurrent batches can share one.
struct OracleStats {
  std::atomic<std::size_t> classifier_queries{0};
  std::atomic<std::int64_t> wall_time_ns{0};

  std::chrono::nanoseconds wall_time() const { return std::chrono::nanoseconds(wall_time_ns.load()); }
};

class ClassifierOracle {
 public:
  virtual ~ClassifierOracle() = default;
  // One Verdict per text, in order.
  virtual std::vector<Verdict> predict(std::span<const std::string> texts) = 0;
};

// Sends `texts` in batches of `batch_size` and charges every text to `stats`.
inline std::vector<Verdict> classify(std::span<const std::string> texts, ClassifierOracle& oracle,
                                     OracleStats& stats, std::size_t batch_size = 32) {
  if (batch_size == 0) batch_size = 1;
  std::vector<Verdict> out;
  out.reserve(texts.size());
  auto started = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < texts.size(); i += batch_size) {
    auto batch = texts.subspan(i, std::min(batch_size, texts.size() - i));
    stats.classifier_queries += batch.size();
    auto verdicts = oracle.predict(batch);
    if (verdicts.size() != batch.size()) {
      throw ContractViolation("classifier returned " + std::to_string(verdicts.size()) + " verdicts for " +
                              std::to_string(batch.size()) + " texts");
    }
    for (auto& v : verdicts) out.push_back(std::move(v));
  }
  stats.wall_time_ns += std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - started)
                            .count();
  return out;
}

inline Verdict classify_one(const std::string& text, ClassifierOracle& oracle, OracleStats& stats) {
  return classify(std::span<const std::string>(&text, 1), oracle, stats, 1).front();
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  double top = -std::numeric_limits<double>::infinity();
  for (double l : logits) top = std::max(top, l);
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    z += out[i];
  }
  for (auto& p : out) p /= z;
  return out;
}

// Bag-of-words linear model: logits = bias + sum of per-token weight rows.
// Deterministic and thread-safe; used as the offline reference classifier.
class LinearBowClassifier final : public ClassifierOracle {
 public:
  explicit LinearBowClassifier(std::size_t num_classes = 2) : bias_(num_classes, 0.0) {}

  // Binary shorthand: word weight w adds +w to class 1 and -w to class 0.
  static LinearBowClassifier binary(const std::unordered_map<std::string, double>& weights) {
    LinearBowClassifier model(2);
    for (const auto& [word, w] : weights) model.set_weights(word, {-w, w});
    return model;
  }

  // {"classes": n, "bias": [...], "weights": {"word": [...] | number}}
  static LinearBowClassifier from_json(const nlohmann::json& j) {
    std::size_t classes = j.value("classes", std::size_t{2});
    LinearBowClassifier model(classes);
    if (j.contains("bias")) model.bias_ = j.at("bias").get<std::vector<double>>();
    if (model.bias_.size() != classes) throw ConfigError("toy model bias length differs from class count");
    if (j.contains("weights")) {
      for (const auto& [word, row] : j.at("weights").items()) {
        if (row.is_number()) {
          if (classes != 2) throw ConfigError("scalar weights require a binary model");
          double w = row.get<double>();
          model.set_weights(word, {-w, w});
        } else {
          model.set_weights(word, row.get<std::vector<double>>());
        }
      }
    }
    return model;
  }

  static LinearBowClassifier load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open toy model: " + path);
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad toy model " + path + ": " + e.what());
    }
  }

  void set_weights(const std::string& word, std::vector<double> row) {
    if (row.size() != bias_.size()) throw ConfigError("weight row for '" + word + "' has wrong length");
    weights_[lowercase(word)] = std::move(row);
  }
  void set_bias(std::vector<double> bias) {
    if (bias.size() != bias_.size()) throw ConfigError("bias has wrong length");
    bias_ = std::move(bias);
  }
  std::size_t num_classes() const { return bias_.size(); }

  Verdict score(std::string_view text) const {
    std::vector<double> logits = bias_;
    for (const auto& tok : tokenize(text).tokens) {
      if (tok.is_punct) continue;
      auto it = weights_.find(tok.normalized);
      if (it == weights_.end()) continue;
      for (std::size_t c = 0; c < logits.size(); ++c) logits[c] += it->second[c];
    }
    return Verdict::from_probs(softmax(logits), "toy-linear");
  }

  std::vector<Verdict> predict(std::span<const std::string> texts) override {
    std::vector<Verdict> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(score(t));
    return out;
  }

 private:
  std::vector<double> bias_;
  std::unordered_map<std::string, std::vector<double>> weights_;
};

// POST {base}/classify {"texts": [...]} -> {"probs": [[...], ...]}
class HttpClassifier final : public ClassifierOracle {
 public:
  explicit HttpClassifier(std::string base_url, http::RetryPolicy policy = {})
      : base_url_(std::move(base_url)), policy_(policy) {}

  std::vector<Verdict> predict(std::span<const std::string> texts) override {
    nlohmann::json body = {{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
    return http::with_retries(policy_, [&] {
      auto res = http::post_json_once(base_url_, "/classify", body, policy_, "classifier");
      if (!res.is_object() || !res.contains("probs") || !res["probs"].is_array()) {
        throw OracleError("classifier response lacks a 'probs' array: " + res.dump(), true, "classifier");
      }
      const auto& rows = res["probs"];
      if (rows.size() != texts.size()) {
        throw OracleError("classifier returned " + std::to_string(rows.size()) + " rows for " +
                              std::to_string(texts.size()) + " texts",
                          true, "classifier");
      }
      std::vector<Verdict> out;
      out.reserve(rows.size());
      for (const auto& row : rows) {
        std::vector<double> probs;
        try {
          probs = row.get<std::vector<double>>();
        } catch (const nlohmann::json::exception&) {
          throw OracleError("non-numeric probability row: " + row.dump(), true, "classifier");
        }
        out.push_back(Verdict::from_probs(std::move(probs), "classifier"));
      }
      return out;
    });
  }

 private:
  std::string base_url_;
  http::RetryPolicy policy_;
};

// ---------------------------------------------------------------------------
// Similarity
// ---------------------------------------------------------------------------

class SimilarityOracle {
 public:
  virtual ~SimilarityOracle() = default;
  // Symmetric score in [-1, 1].
  virtual double similarity(std::string_view a, std::string_view b) = 0;
};

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw UndefinedSimilarity("vector dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw UndefinedSimilarity("cosine of a zero vector is undefined");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// Plain-text vector file: "word v1 v2 ...". A leading "count dim" header line
// (word2vec text format) is skipped.
class WordVectors {
 public:
  WordVectors() = default;

  static WordVectors load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open vector file: " + path);
    WordVectors wv;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      auto fields = split_ws(line);
      if (fields.empty()) continue;
      if (first && fields.size() == 2 && fields[0].find_first_not_of("0123456789") == std::string::npos) {
        first = false;
        continue;
      }
      first = false;
      std::vector<double> v;
      v.reserve(fields.size() - 1);
      try {
        for (std::size_t i = 1; i < fields.size(); ++i) v.push_back(std::stod(fields[i]));
      } catch (const std::exception&) {
        throw ConfigError("bad vector row for '" + fields[0] + "' in " + path);
      }
      wv.add(fields[0], std::move(v));
    }
    return wv;
  }

  void add(const std::string& word, std::vector<double> v) {
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_ || dim_ == 0) throw ConfigError("vector for '" + word + "' has dimension " +
                                                         std::to_string(v.size()) + ", expected " + std::to_string(dim_));
    auto key = lowercase(word);
    if (!index_.count(key)) {
      index_.emplace(key, words_.size());
      words_.push_back(key);
      vectors_.push_back(std::move(v));
    } else {
      vectors_[index_[key]] = std::move(v);
    }
  }

  const std::vector<double>* find(std::string_view word) const {
    auto it = index_.find(lowercase(word));
    return it == index_.end() ? nullptr : &vectors_[it->second];
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<double>& vector_at(std::size_t i) const { return vectors_.at(i); }

  // Mean over all tokens; out-of-vocabulary tokens count as zero vectors.
  std::vector<double> mean(std::string_view text) const {
    std::vector<double> acc(dim_, 0.0);
    auto doc = tokenize(text);
    for (const auto& tok : doc.tokens) {
      if (const auto* v = find(tok.normalized)) {
        for (std::size_t i = 0; i < dim_; ++i) acc[i] += (*v)[i];
      }
    }
    if (!doc.tokens.empty()) {
      for (auto& x : acc) x /= static_cast<double>(doc.tokens.size());
    }
    return acc;
  }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> words_;
  std::vector<std::vector<double>> vectors_;
};

class MeanVectorSimilarity final : public SimilarityOracle {
 public:
  explicit MeanVectorSimilarity(std::shared_ptr<const WordVectors> vectors) : vectors_(std::move(vectors)) {}

  double similarity(std::string_view a, std::string_view b) override {
    auto va = vectors_->mean(a);
    auto vb = vectors_->mean(b);
    try {
      return cosine(va, vb);
    } catch (const UndefinedSimilarity&) {
      throw UndefinedSimilarity("no in-vocabulary words in '" + std::string(a) + "' or '" + std::string(b) + "'");
    }
  }

 private:
  std::shared_ptr<const WordVectors> vectors_;
};

// POST {base}/embed {"texts": [a, b]} -> {"vectors": [[...], [...]]}
class HttpEmbeddingSimilarity final : public SimilarityOracle {
 public:
  explicit HttpEmbeddingSimilarity(std::string base_url, http::RetryPolicy policy = {})
      : base_url_(std::move(base_url)), policy_(policy) {}

  double similarity(std::string_view a, std::string_view b) override {
    nlohmann::json body = {{"texts", {std::string(a), std::string(b)}}};
    auto vectors = http::with_retries(policy_, [&] {
      auto res = http::post_json_once(base_url_, "/embed", body, policy_, "embedding");
      try {
        auto v = res.at("vectors").get<std::vector<std::vector<double>>>();
        if (v.size() != 2) {
          throw OracleError("embedding endpoint returned " + std::to_string(v.size()) + " vectors", true, "embedding");
        }
        return v;
      } catch (const nlohmann::json::exception& e) {
        throw OracleError(std::string("malformed embedding response: ") + e.what(), true, "embedding");
      }
    });
    return cosine(vectors[0], vectors[1]);
  }

 private:
  std::string base_url_;
  http::RetryPolicy policy_;
};

// ---------------------------------------------------------------------------
// Perplexity
// ---------------------------------------------------------------------------

class PerplexityOracle {
 public:
  virtual ~PerplexityOracle() = default;
  virtual double perplexity(std::string_view text) = 0;
};

// Add-one smoothed unigram model: p(w) = (count(w) + 1) / (N + V).
class UnigramPerplexity final : public PerplexityOracle {
 public:
  explicit UnigramPerplexity(std::unordered_map<std::string, double> counts) : counts_(std::move(counts)) {
    for (const auto& [w, c] : counts_) total_ += c;
  }

  // word<TAB>count per line.
  static UnigramPerplexity load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open unigram table: " + path);
    std::unordered_map<std::string, double> counts;
    std::string line;
    while (std::getline(in, line)) {
      auto fields = split_ws(line);
      if (fields.empty()) continue;
      if (fields.size() != 2) throw ConfigError("bad unigram row in " + path + ": " + line);
      counts[lowercase(fields[0])] += std::stod(fields[1]);
    }
    return UnigramPerplexity(std::move(counts));
  }

  double probability(std::string_view normalized) const {
    auto it = counts_.find(std::string(normalized));
    double c = it == counts_.end() ? 0.0 : it->second;
    return (c + 1.0) / (total_ + static_cast<double>(counts_.size()));
  }

  double perplexity(std::string_view text) override {
    double log_sum = 0.0;
    std::size_t n = 0;
    for (const auto& tok : tokenize(text).tokens) {
      if (tok.is_punct) continue;
      log_sum += std::log(probability(tok.normalized));
      ++n;
    }
    if (n == 0) throw std::domain_error("perplexity of a text without words");
    return std::exp(-log_sum / static_cast<double>(n));
  }

 private:
  std::unordered_map<std::string, double> counts_;
  double total_ = 0.0;
};

// POST {base}/perplexity {"texts": [t]} -> {"perplexities": [x]}
class HttpPerplexity final : public PerplexityOracle {
 public:
  explicit HttpPerplexity(std::string base_url, http::RetryPolicy policy = {})
      : base_url_(std::move(base_url)), policy_(policy) {}

  double perplexity(std::string_view text) override {
    if (tokenize(text).empty()) throw std::domain_error("perplexity of an empty text");
    nlohmann::json body = {{"texts", {std::string(text)}}};
    return http::with_retries(policy_, [&] {
      auto res = http::post_json_once(base_url_, "/perplexity", body, policy_, "perplexity");
      try {
        double v = res.at("perplexities").at(0).get<double>();
        if (!(v > 0.0)) throw ContractViolation("non-positive perplexity", "perplexity");
        return v;
      } catch (const nlohmann::json::exception& e) {
        throw OracleError(std::string("malformed perplexity response: ") + e.what(), true, "perplexity");
      }
    });
  }

 private:
  std::string base_url_;
  http::RetryPolicy policy_;
};

// ---------------------------------------------------------------------------
// Negativity
// ---------------------------------------------------------------------------

// A score <= the detection threshold marks `word` as a negation trigger.
struct NegativityHit {
  std::string word;
  std::size_t position = 0;
  double score = 1.0;

  friend bool operator==(const NegativityHit&, const NegativityHit&) = default;
};

class NegativityOracle {
 public:
  virtual ~NegativityOracle() = default;
  // Position is a token index into tokenize(sentence). nullopt: nothing found.
  virtual std::optional<NegativityHit> most_negative(std::string_view sentence) = 0;
};

class LexiconNegativity final : public NegativityOracle {
 public:
  explicit LexiconNegativity(std::unordered_set<std::string> words) : words_(std::move(words)) {}

  static LexiconNegativity load(const std::string& path) {
    return LexiconNegativity(read_words(path));
  }

  static std::unordered_set<std::string> read_words(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open negation lexicon: " + path);
    std::unordered_set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      auto w = trim(line);
      if (!w.empty() && w.front() != '#') words.insert(lowercase(w));
    }
    return words;
  }

  bool contains(std::string_view normalized) const { return words_.count(std::string(normalized)) > 0; }

  std::optional<NegativityHit> most_negative(std::string_view sentence) override {
    auto doc = tokenize(sentence);
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
      if (contains(doc.tokens[i].normalized)) return NegativityHit{doc.tokens[i].surface, i, 0.0};
    }
    return std::nullopt;
  }

 private:
  std::unordered_set<std::string> words_;
};

// POST {base}/negation {"text": s} -> {"word": w|null, "position": i, "score": p}
class HttpNegativity final : public NegativityOracle {
 public:
  explicit HttpNegativity(std::string base_url, http::RetryPolicy policy = {})
      : base_url_(std::move(base_url)), policy_(policy) {}

  std::optional<NegativityHit> most_negative(std::string_view sentence) override {
    nlohmann::json body = {{"text", std::string(sentence)}};
    return http::with_retries(policy_, [&]() -> std::optional<NegativityHit> {
      auto res = http::post_json_once(base_url_, "/negation", body, policy_, "negativity");
      try {
        if (!res.contains("word") || res["word"].is_null()) return std::nullopt;
        NegativityHit hit;
        hit.word = res.at("word").get<std::string>();
        hit.score = res.at("score").get<double>();
        if (res.contains("position")) {
          hit.position = res["position"].get<std::size_t>();
        } else {
          auto doc = tokenize(sentence);
          auto it = std::find_if(doc.tokens.begin(), doc.tokens.end(),
                                 [&](const Token& t) { return iequals(t.surface, hit.word); });
          if (it == doc.tokens.end()) return std::nullopt;
          hit.position = static_cast<std::size_t>(it - doc.tokens.begin());
        }
        return hit;
      } catch (const nlohmann::json::exception& e) {
        throw OracleError(std::string("malformed negativity response: ") + e.what(), true, "negativity");
      }
    });
  }

 private:
  std::string base_url_;
  http::RetryPolicy policy_;
};

}  // namespace alterfactual
