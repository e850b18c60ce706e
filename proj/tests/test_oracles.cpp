#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace alterfactual;
using support::MockServer;
using support::reply_json;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

TEST(Verdict, ArgmaxAndValidation) {
  auto v = Verdict::from_probs({0.3, 0.7});
  EXPECT_EQ(v.predicted, 1u);
  EXPECT_DOUBLE_EQ(v.confidence, 0.7);
  EXPECT_EQ(Verdict::from_probs({0.5, 0.5}).predicted, 0u);
  EXPECT_THROW(Verdict::from_probs({1.2, -0.2}), ContractViolation);
  EXPECT_THROW(Verdict::from_probs({0.5, 0.4}), ContractViolation);
  EXPECT_THROW(Verdict::from_probs({}), ContractViolation);
  EXPECT_THROW(Verdict::from_probs({std::nan(""), 1.0}), ContractViolation);
}

TEST(LinearBow, GoodMovieMatchesHandSoftmax) {
  auto model = LinearBowClassifier::binary({{"good", 2.0}, {"bad", -2.0}});
  auto v = model.score("good movie");
  // Logits (-2, 2): p1 = 1 / (1 + e^-4).
  const double oracle = 1.0 / (1.0 + std::exp(-4.0));
  EXPECT_NEAR(oracle, 0.9820137900379085, 1e-15);
  EXPECT_EQ(v.predicted, 1u);
  EXPECT_NEAR(v.confidence, 0.9820137900379085, 1e-12);
  EXPECT_NEAR(v.probs[0] + v.probs[1], 1.0, 1e-12);
}

TEST(LinearBow, ConstantModelTiesToClassZero) {
  LinearBowClassifier model(2);
  auto v = model.score("anything at all");
  EXPECT_EQ(v.probs, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(v.predicted, 0u);
}

TEST(LinearBow, DeterministicAcrossCalls) {
  support::ToyWorld world(3);
  auto model = world.classifier();
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    auto text = world.random_text(rng, 1, 12);
    EXPECT_EQ(model.score(text), model.score(text));
  }
}

TEST(LinearBow, LoadsJsonModel) {
  support::TempDir dir;
  auto path = dir.write("m.json", R"({"classes": 3, "bias": [0, 0, 1], "weights": {"Red": [3, 0, 0], "blue": [0, 3, 0]}})");
  auto model = LinearBowClassifier::load(path);
  EXPECT_EQ(model.num_classes(), 3u);
  EXPECT_EQ(model.score("red").predicted, 0u);
  EXPECT_EQ(model.score("blue").predicted, 1u);
  EXPECT_EQ(model.score("green").predicted, 2u);
  EXPECT_THROW(LinearBowClassifier::load(dir.write("bad.json", R"({"classes": 3, "weights": {"a": 1}})")),
               ConfigError);
}

TEST(Classify, ChargesEveryTextAndBatches) {
  std::size_t calls = 0;
  support::ScriptedClassifier inner([&](const std::string&) { return std::vector<double>{0.4, 0.6}; });
  struct Counting final : ClassifierOracle {
    ClassifierOracle& inner;
    std::size_t& calls;
    Counting(ClassifierOracle& i, std::size_t& c) : inner(i), calls(c) {}
    std::vector<Verdict> predict(std::span<const std::string> t) override {
      ++calls;
      return inner.predict(t);
    }
  } counting(inner, calls);
  OracleStats stats;
  std::vector<std::string> texts = {"a", "b", "c", "d", "e"};
  auto out = classify(texts, counting, stats, 2);
  EXPECT_EQ(out.size(), 5u);
  EXPECT_EQ(calls, 3u);
  EXPECT_EQ(stats.classifier_queries.load(), 5u);
  EXPECT_EQ(inner.seen, texts);
  classify_one("f", counting, stats);
  EXPECT_EQ(stats.classifier_queries.load(), 6u);
}

TEST(HttpClassifier, PassesProbabilitiesThrough) {
  MockServer server;
  server.post("/classify", [](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    json rows = json::array();
    for (std::size_t i = 0; i < body["texts"].size(); ++i) rows.push_back({0.3, 0.7});
    reply_json(res, {{"probs", rows}});
  });
  server.start();
  HttpClassifier cls(server.url(), support::fast_retry());
  std::vector<std::string> texts = {"good movie", "bad movie"};
  auto out = cls.predict(texts);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].probs, (std::vector<double>{0.3, 0.7}));
  EXPECT_EQ(out[0].predicted, 1u);
  auto sent = json::parse(server.requests().at(0).body);
  EXPECT_EQ(sent["texts"], json(texts));
}

TEST(HttpClassifier, RetriesServerErrors) {
  MockServer server;
  std::atomic<int> calls{0};
  server.post("/classify", [&](const httplib::Request&, httplib::Response& res) {
    if (++calls < 3) return reply_json(res, {{"error", "busy"}}, 503);
    reply_json(res, {{"probs", {{0.9, 0.1}}}});
  });
  server.start();
  HttpClassifier cls(server.url(), support::fast_retry(3));
  std::vector<std::string> texts = {"x"};
  EXPECT_EQ(cls.predict(texts)[0].predicted, 0u);
  EXPECT_EQ(server.count("/classify"), 3u);
}

TEST(HttpClassifier, ExhaustedRetriesCarryProvenance) {
  MockServer server;
  server.post("/classify", [](const httplib::Request&, httplib::Response& res) { reply_json(res, {}, 500); });
  server.start();
  HttpClassifier cls(server.url(), support::fast_retry(2));
  std::vector<std::string> texts = {"x"};
  try {
    cls.predict(texts);
    FAIL() << "expected OracleError";
  } catch (const OracleError& e) {
    EXPECT_TRUE(e.retryable());
    EXPECT_EQ(e.provenance(), "classifier");
  }
  EXPECT_EQ(server.count("/classify"), 2u);
}

TEST(HttpClassifier, ClientErrorsAreNotRetried) {
  MockServer server;
  server.post("/classify", [](const httplib::Request&, httplib::Response& res) { reply_json(res, {}, 400); });
  server.start();
  HttpClassifier cls(server.url(), support::fast_retry(3));
  std::vector<std::string> texts = {"x"};
  EXPECT_THROW(cls.predict(texts), OracleError);
  EXPECT_EQ(server.count("/classify"), 1u);
}

TEST(HttpClassifier, OutOfRangeProbabilitiesViolateContract) {
  MockServer server;
  server.post("/classify", [](const httplib::Request&, httplib::Response& res) {
    reply_json(res, {{"probs", {{1.2, -0.2}}}});
  });
  server.start();
  HttpClassifier cls(server.url(), support::fast_retry(3));
  std::vector<std::string> texts = {"x"};
  EXPECT_THROW(cls.predict(texts), ContractViolation);
  EXPECT_EQ(server.count("/classify"), 1u);
}

TEST(HttpClassifier, UnreachableEndpointIsRetryable) {
  HttpClassifier cls("http://127.0.0.1:1", support::fast_retry(2));
  std::vector<std::string> texts = {"x"};
  try {
    cls.predict(texts);
    FAIL();
  } catch (const OracleError& e) {
    EXPECT_TRUE(e.retryable());
  }
}

// ---------------------------------------------------------------------------
// Similarity
// ---------------------------------------------------------------------------

namespace {

std::shared_ptr<WordVectors> three_word_vectors() {
  support::TempDir dir;
  auto path = dir.write("vec.txt", "3 3\npretty 1 2 0\nugly 2 1 0\nday 0 1 3\n");
  return std::make_shared<WordVectors>(WordVectors::load(path));
}

}  // namespace

TEST(Similarity, IdentityIsOne) {
  MeanVectorSimilarity sim(three_word_vectors());
  EXPECT_NEAR(sim.similarity("pretty day", "pretty day"), 1.0, 1e-12);
}

TEST(Similarity, WordOrderDoesNotMatter) {
  MeanVectorSimilarity sim(three_word_vectors());
  EXPECT_NEAR(sim.similarity("pretty day", "day pretty"), 1.0, 1e-12);
}

TEST(Similarity, MatchesHandCosine) {
  auto vectors = three_word_vectors();
  EXPECT_EQ(vectors->size(), 3u);
  EXPECT_EQ(vectors->dim(), 3u);
  MeanVectorSimilarity sim(vectors);
  // means: (0.5, 1.5, 1.5) and (1, 1, 1.5)
  double dot = 0.5 * 1 + 1.5 * 1 + 1.5 * 1.5;
  double na = std::sqrt(0.25 + 2.25 + 2.25), nb = std::sqrt(1 + 1 + 2.25);
  EXPECT_NEAR(dot / (na * nb), 0.9459053029269171, 1e-15);
  EXPECT_NEAR(sim.similarity("pretty day", "ugly day"), 0.9459053029269171, 1e-12);
  EXPECT_DOUBLE_EQ(sim.similarity("pretty day", "ugly day"), sim.similarity("ugly day", "pretty day"));
}

TEST(Similarity, SymmetricOnRandomTexts) {
  support::ToyWorld world(9);
  MeanVectorSimilarity sim(world.vectors);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    auto a = world.random_text(rng, 2, 10), b = world.random_text(rng, 2, 10);
    double s = 0.0;
    try {
      s = sim.similarity(a, b);
    } catch (const UndefinedSimilarity&) {
      EXPECT_THROW(sim.similarity(b, a), UndefinedSimilarity);
      continue;
    }
    EXPECT_DOUBLE_EQ(s, sim.similarity(b, a));
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Similarity, ZeroVectorIsUndefined) {
  MeanVectorSimilarity sim(three_word_vectors());
  EXPECT_THROW(sim.similarity("unknown words", "pretty"), UndefinedSimilarity);
  EXPECT_THROW(sim.similarity("", ""), UndefinedSimilarity);
  EXPECT_THROW(cosine({1, 0}, {1, 0, 0}), UndefinedSimilarity);
}

TEST(Similarity, HttpEmbeddingUsesReturnedVectors) {
  MockServer server;
  server.post("/embed", [](const httplib::Request& req, httplib::Response& res) {
    auto texts = json::parse(req.body)["texts"];
    ASSERT_EQ(texts.size(), 2u);
    reply_json(res, {{"vectors", {{1.0, 0.0}, {1.0, 1.0}}}});
  });
  server.start();
  HttpEmbeddingSimilarity sim(server.url(), support::fast_retry());
  EXPECT_NEAR(sim.similarity("a", "b"), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(Similarity, HttpEmbeddingMalformedIsRetried) {
  MockServer server;
  server.post("/embed", [](const httplib::Request&, httplib::Response& res) {
    reply_json(res, {{"vectors", {{1.0}}}});
  });
  server.start();
  HttpEmbeddingSimilarity sim(server.url(), support::fast_retry(2));
  EXPECT_THROW(sim.similarity("a", "b"), OracleError);
  EXPECT_EQ(server.count("/embed"), 2u);
}

// ---------------------------------------------------------------------------
// Perplexity
// ---------------------------------------------------------------------------

TEST(Perplexity, UniformTableGivesVocabularySize) {
  std::unordered_map<std::string, double> counts;
  for (int i = 0; i < 7; ++i) counts["w" + std::to_string(i)] = 1;
  UnigramPerplexity ppl(counts);
  EXPECT_NEAR(ppl.perplexity("w0 w3 w6 w1"), 7.0, 1e-12);
}

TEST(Perplexity, SingleTokenIsInverseProbability) {
  UnigramPerplexity ppl({{"x", 1}, {"y", 1}, {"z", 1}, {"w", 1}});
  EXPECT_DOUBLE_EQ(ppl.probability("x"), 0.25);
  EXPECT_NEAR(ppl.perplexity("x"), 4.0, 1e-12);
}

TEST(Perplexity, MatchesBruteForceOnSmallTable) {
  UnigramPerplexity ppl({{"a", 3}, {"b", 1}, {"c", 0}, {"d", 5}, {"e", 1}});
  // N = 10, V = 5: p(a) = 4/15, p(oov) = 1/15, geometric mean inverse = 15/2.
  EXPECT_NEAR(ppl.perplexity("a zzz"), 7.5, 1e-12);
  EXPECT_NEAR(ppl.perplexity("zzz a"), 7.5, 1e-12);
  EXPECT_NEAR(ppl.perplexity("A zzz ."), 7.5, 1e-12);
}

TEST(Perplexity, TokenOrderInvariant) {
  support::ToyWorld world(2);
  std::unordered_map<std::string, double> counts;
  for (std::size_t i = 0; i < world.content.size(); ++i) counts[world.content[i]] = static_cast<double>(i % 7);
  UnigramPerplexity ppl(counts);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    auto words = tokenize(world.random_text(rng, 2, 9)).surfaces();
    std::erase_if(words, [&](const std::string& w) { return w.size() == 1 && std::ispunct(static_cast<unsigned char>(w[0])); });
    if (words.empty()) continue;
    auto shuffled = words;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_NEAR(ppl.perplexity(detokenize(words)), ppl.perplexity(detokenize(shuffled)), 1e-9);
  }
}

TEST(Perplexity, EmptyTextIsDomainError) {
  UnigramPerplexity ppl({{"a", 1}});
  EXPECT_THROW(ppl.perplexity(""), std::domain_error);
  EXPECT_THROW(ppl.perplexity(" . "), std::domain_error);
  HttpPerplexity remote("http://127.0.0.1:1", support::fast_retry(1));
  EXPECT_THROW(remote.perplexity(""), std::domain_error);
}

TEST(Perplexity, LoadsTable) {
  support::TempDir dir;
  auto ppl = UnigramPerplexity::load(dir.write("u.txt", "x\t1\ny\t1\nz 1\nW 1\n"));
  EXPECT_NEAR(ppl.perplexity("w"), 4.0, 1e-12);
  EXPECT_THROW(UnigramPerplexity::load(dir.write("bad.txt", "x 1 2\n")), ConfigError);
}

TEST(Perplexity, HttpPassthrough) {
  MockServer server;
  server.post("/perplexity", [](const httplib::Request& req, httplib::Response& res) {
    EXPECT_EQ(json::parse(req.body)["texts"], json({"good movie"}));
    reply_json(res, {{"perplexities", {42.5}}});
  });
  server.start();
  HttpPerplexity ppl(server.url(), support::fast_retry());
  EXPECT_DOUBLE_EQ(ppl.perplexity("good movie"), 42.5);
}

// ---------------------------------------------------------------------------
// Negativity
// ---------------------------------------------------------------------------

TEST(Negativity, NoTriggerInPlainSentence) {
  auto neg = support::standard_negations();
  EXPECT_FALSE(neg.most_negative("I like cats").has_value());
}

TEST(Negativity, FindsContraction) {
  auto neg = support::standard_negations();
  auto hit = neg.most_negative("I don't like it");
  ASSERT_TRUE(hit);
  EXPECT_EQ(*hit, (NegativityHit{"don't", 1, 0.0}));
}

TEST(Negativity, FindsSentenceInitialTrigger) {
  auto neg = support::standard_negations();
  auto hit = neg.most_negative("nothing is impossible");
  ASSERT_TRUE(hit);
  EXPECT_EQ(hit->word, "nothing");
  EXPECT_EQ(hit->position, 0u);
}

TEST(Negativity, LoadsLexicon) {
  support::TempDir dir;
  auto neg = LexiconNegativity::load(dir.write("neg.txt", "# triggers\nNot\nnever\n"));
  EXPECT_TRUE(neg.contains("not"));
  EXPECT_EQ(neg.most_negative("I will never go")->position, 2u);
}

TEST(Negativity, HttpPassthrough) {
  MockServer server;
  server.post("/negation", [](const httplib::Request& req, httplib::Response& res) {
    auto text = json::parse(req.body)["text"].get<std::string>();
    if (text == "I like cats") return reply_json(res, {{"word", nullptr}});
    if (text == "it is not bad") return reply_json(res, {{"word", "not"}, {"score", 0.02}});
    reply_json(res, {{"word", "don't"}, {"position", 1}, {"score", 0.01}});
  });
  server.start();
  HttpNegativity neg(server.url(), support::fast_retry());
  EXPECT_FALSE(neg.most_negative("I like cats"));
  EXPECT_EQ(*neg.most_negative("I don't like it"), (NegativityHit{"don't", 1, 0.01}));
  EXPECT_EQ(*neg.most_negative("it is not bad"), (NegativityHit{"not", 2, 0.02}));
}
