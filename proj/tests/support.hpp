#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "alterfactual.hpp"

namespace support {

namespace fs = std::filesystem;
using namespace alterfactual;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("alterfactual-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string path(const std::string& name) const { return (path_ / name).string(); }

  std::string write(const std::string& name, const std::string& content) const {
    auto p = path(name);
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
  }

 private:
  fs::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Scripted oracles
// ---------------------------------------------------------------------------

class ScriptedClassifier final : public ClassifierOracle {
 public:
  using Fn = std::function<std::vector<double>(const std::string&)>;
  explicit ScriptedClassifier(Fn fn) : fn_(std::move(fn)) {}

  std::vector<Verdict> predict(std::span<const std::string> texts) override {
    std::vector<Verdict> out;
    for (const auto& t : texts) {
      seen.push_back(t);
      out.push_back(Verdict::from_probs(fn_(t)));
    }
    return out;
  }

  std::vector<std::string> seen;

 private:
  Fn fn_;
};

// Delegates until `budget` texts have been sent, then fails every call.
class FailingClassifier final : public ClassifierOracle {
 public:
  FailingClassifier(ClassifierOracle& inner, std::size_t budget) : inner_(inner), budget_(budget) {}

  std::vector<Verdict> predict(std::span<const std::string> texts) override {
    if (sent_ + texts.size() > budget_) throw OracleError("classifier endpoint down", true, "classifier");
    sent_ += texts.size();
    return inner_.predict(texts);
  }

 private:
  ClassifierOracle& inner_;
  std::size_t budget_;
  std::size_t sent_ = 0;
};

class FixedSimilarity final : public SimilarityOracle {
 public:
  explicit FixedSimilarity(double v = 1.0) : v_(v) {}
  double similarity(std::string_view, std::string_view) override { return v_; }

 private:
  double v_;
};

class MapTagger final : public PosTagger {
 public:
  MapTagger(std::initializer_list<std::pair<const std::string, PosTag>> init) : table_(init) {}
  PosTag tag(std::string_view w) const override {
    auto it = table_.find(std::string(w));
    return it == table_.end() ? PosTag::Other : it->second;
  }

 private:
  std::map<std::string, PosTag> table_;
};

inline std::shared_ptr<WordSource> lexicon_source(std::initializer_list<std::pair<std::string, std::vector<std::string>>> rows,
                                                  const std::string& name = "lexicon") {
  auto table = std::make_shared<OppositeLexicon>();
  for (const auto& [w, opps] : rows) table->add(w, opps);
  return std::make_shared<WordSource>(std::make_shared<LexiconOpposites>(table, name));
}

// Passes lexicon rows through uncleaned so the generator's own guards
// (identity, single word) are exercised.
class RawLexiconSource final : public OppositeSource {
 public:
  explicit RawLexiconSource(std::shared_ptr<const OppositeLexicon> table) : table_(std::move(table)) {}
  std::string id() const override { return "raw-lexicon"; }
  Lookup bind(const Document& doc) override {
    return [table = table_, doc](std::size_t pos) {
      std::vector<OppositeCandidate> out;
      if (const auto* row = table->find(doc.tokens.at(pos).normalized)) {
        for (const auto& o : *row) {
          std::string w = o;
          std::replace(w.begin(), w.end(), '_', ' ');
          out.push_back({w, {RelationKind::Lexicon, 1.0}, doc.tokens[pos].normalized});
        }
      }
      return out;
    };
  }

 private:
  std::shared_ptr<const OppositeLexicon> table_;
};

inline LexiconNegativity standard_negations() {
  return LexiconNegativity({"nothing", "not", "isn't", "don't", "never", "no"});
}

// ---------------------------------------------------------------------------
// Mock HTTP server
// ---------------------------------------------------------------------------

struct RecordedRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> params;
  std::string body;
  std::map<std::string, std::string> headers;
};

class MockServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  MockServer() = default;
  ~MockServer() { stop(); }

  void post(const std::string& path, Handler h) {
    server_.Post(path, [this, h](const httplib::Request& req, httplib::Response& res) {
      record(req);
      h(req, res);
    });
  }
  void get(const std::string& path, Handler h) {
    server_.Get(path, [this, h](const httplib::Request& req, httplib::Response& res) {
      record(req);
      h(req, res);
    });
  }

  void start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::vector<RecordedRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

  std::size_t count(const std::string& path) const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& r : requests_) n += r.path == path;
    return n;
  }

 private:
  void record(const httplib::Request& req) {
    RecordedRequest r{req.method, req.path, {}, req.body, {}};
    for (const auto& [k, v] : req.params) r.params[k] = v;
    for (const auto& [k, v] : req.headers) r.headers[k] = v;
    std::lock_guard lock(mu_);
    requests_.push_back(std::move(r));
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  mutable std::mutex mu_;
  std::vector<RecordedRequest> requests_;
};

inline void reply_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

inline http::RetryPolicy fast_retry(int attempts = 3) {
  http::RetryPolicy p;
  p.attempts = attempts;
  p.base_delay = std::chrono::milliseconds(1);
  p.timeout = std::chrono::milliseconds(2000);
  return p;
}

// ---------------------------------------------------------------------------
// Random toy world
// ---------------------------------------------------------------------------

// A vocabulary with vectors, POS tags, classifier weights and an opposite
// lexicon whose candidates are drawn to exercise every rejection reason:
// identity, multi-word, POS mismatch, negation triggers, class flips,
// confidence drift and similarity loss.
struct ToyWorld {
  std::vector<std::string> content;   // eligible words
  std::vector<std::string> stop = {"the", "a", "is", "and", "of", "it", "was", "to", "very", "this"};
  std::vector<std::string> negators = {"not", "never", "no"};
  std::vector<std::string> punct = {".", ",", "!", "?"};

  std::shared_ptr<WordVectors> vectors = std::make_shared<WordVectors>();
  std::shared_ptr<OppositeLexicon> lexicon = std::make_shared<OppositeLexicon>();
  std::shared_ptr<LexiconPosTagger> tagger;
  std::shared_ptr<StopwordList> stopwords;
  std::unordered_map<std::string, double> weights;
  std::unordered_set<std::string> negation_words;
  std::unordered_map<std::string, PosTag> tags;

  explicit ToyWorld(std::uint64_t seed, std::size_t vocab = 60) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t dim = 6;
    std::vector<double> base(dim);
    for (auto& b : base) b = gauss(rng);
    auto vec_near = [&](double spread) {
      std::vector<double> v(dim);
      for (std::size_t i = 0; i < dim; ++i) v[i] = base[i] + spread * gauss(rng);
      return v;
    };
    const PosTag kinds[] = {PosTag::Noun, PosTag::Verb, PosTag::Adj, PosTag::Adv};
    for (std::size_t i = 0; i < vocab; ++i) {
      std::string w = "w" + std::to_string(i);
      content.push_back(w);
      tags[w] = kinds[i % 4];
      double spread = unit(rng) < 0.15 ? 2.5 : 0.4;
      vectors->add(w, vec_near(spread));
      weights[w] = unit(rng) < 0.2 ? 1.5 * gauss(rng) : 0.08 * gauss(rng);
    }
    for (const auto& s : stop) vectors->add(s, vec_near(0.3));
    for (const auto& n : negators) {
      vectors->add(n, vec_near(0.3));
      negation_words.insert(n);
      weights[n] = -0.3;
    }
    negation_words.insert("unw");  // prefix-negated candidates below
    for (std::size_t i = 0; i < vocab; ++i) {
      const auto& w = content[i];
      std::vector<std::string> opps;
      std::size_t n = 1 + static_cast<std::size_t>(unit(rng) * 3);
      for (std::size_t k = 0; k < n; ++k) {
        double r = unit(rng);
        if (r < 0.05) {
          opps.push_back(w);  // identity (dropped by candidate cleaning)
        } else if (r < 0.12) {
          opps.push_back("multi_word");
        } else if (r < 0.22) {
          opps.push_back("not");  // negation trigger
        } else {
          opps.push_back(content[static_cast<std::size_t>(unit(rng) * vocab) % vocab]);
        }
      }
      lexicon->add(w, opps);
    }
    tagger = std::make_shared<LexiconPosTagger>(std::unordered_map<std::string, PosTag>(tags.begin(), tags.end()));
    stopwords = std::make_shared<StopwordList>(std::unordered_set<std::string>(stop.begin(), stop.end()));
  }

  TextAnnotator annotator() const { return {stopwords, tagger}; }

  LinearBowClassifier classifier() const { return LinearBowClassifier::binary(weights); }

  std::string random_text(std::mt19937_64& rng, std::size_t min_tokens, std::size_t max_tokens) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::size_t n = min_tokens + static_cast<std::size_t>(unit(rng) * (max_tokens - min_tokens + 1));
    n = std::min(n, max_tokens);
    std::vector<std::string> words;
    for (std::size_t i = 0; i < n; ++i) {
      double r = unit(rng);
      if (i + 1 == n && r < 0.5) {
        words.push_back(punct[static_cast<std::size_t>(unit(rng) * punct.size()) % punct.size()]);
      } else if (r < 0.6) {
        words.push_back(content[static_cast<std::size_t>(unit(rng) * content.size()) % content.size()]);
      } else if (r < 0.85) {
        words.push_back(stop[static_cast<std::size_t>(unit(rng) * stop.size()) % stop.size()]);
      } else {
        words.push_back(negators[static_cast<std::size_t>(unit(rng) * negators.size()) % negators.size()]);
      }
    }
    if (!words.empty() && words.front().size() > 1 && unit(rng) < 0.3) words.front()[0] = 'W';
    return detokenize(words);
  }
};

}  // namespace support
