#include <gtest/gtest.h>

#include "support.hpp"

using namespace alterfactual;

namespace {

EvaluatedDocument record(std::size_t id, bool success, std::size_t words, std::size_t queries,
                         std::vector<double> before, std::vector<double> after, std::optional<double> sim,
                         std::optional<double> oppl, std::optional<double> appl, double runtime) {
  EvaluatedDocument d;
  d.id = id;
  d.result.original_verdict = Verdict::from_probs(std::move(before));
  d.result.final_verdict = Verdict::from_probs(std::move(after));
  d.result.success = success;
  for (std::size_t i = 0; i < words; ++i) d.result.accepted.push_back({i, "x", "y", {}, "lexicon"});
  d.result.queries = queries;
  d.result.similarity_final = sim;
  d.original_perplexity = oppl;
  d.altered_perplexity = appl;
  d.runtime_seconds = runtime;
  return d;
}

// Five traces; the last is a targeted run with no target word.
std::vector<EvaluatedDocument> fixture() {
  std::vector<EvaluatedDocument> docs;
  docs.push_back(record(0, true, 1, 5, {0.2, 0.8}, {0.25, 0.75}, 0.9, 10.0, 12.0, 1.0));
  docs.push_back(record(1, true, 3, 9, {0.9, 0.1}, {0.88, 0.12}, 0.85, 20.0, 18.0, 2.0));
  docs.push_back(record(2, false, 0, 4, {0.5, 0.5}, {0.5, 0.5}, 1.0, std::nullopt, std::nullopt, 0.5));
  docs.push_back(record(3, true, 2, 7, {0.4, 0.6}, {0.37, 0.63}, 0.95, std::nullopt, std::nullopt, 1.5));
  auto na = record(4, false, 0, 0, {0.5, 0.5}, {0.5, 0.5}, std::nullopt, std::nullopt, std::nullopt, 0.0);
  na.result.applicable = false;
  docs.push_back(na);
  return docs;
}

}  // namespace

TEST(Metrics, HandComputedFixture) {
  auto m = summarize(fixture());
  EXPECT_EQ(m.documents, 5u);
  EXPECT_EQ(m.attempted, 4u);
  EXPECT_EQ(m.successes, 3u);
  EXPECT_NEAR(m.fid, 75.0, 1e-9);                 // 3 / 4
  EXPECT_NEAR(m.avq, 6.25, 1e-9);                 // (5 + 9 + 4 + 7) / 4
  EXPECT_NEAR(m.runtime, 1.25, 1e-9);             // (1 + 2 + 0.5 + 1.5) / 4
  EXPECT_NEAR(*m.awp, 2.0, 1e-9);                 // (1 + 3 + 2) / 3
  EXPECT_NEAR(*m.con, 10.0 / 3.0, 1e-9);          // (5 + 2 + 3) / 3 points
  EXPECT_NEAR(*m.sim, 0.9, 1e-9);                 // (0.9 + 0.85 + 0.95) / 3
  EXPECT_NEAR(*m.oppl, 15.0, 1e-9);               // (10 + 20) / 2
  EXPECT_NEAR(*m.appl, 15.0, 1e-9);               // (12 + 18) / 2
}

TEST(Metrics, AllFailuresLeaveMeansUndefined) {
  std::vector<EvaluatedDocument> docs = {record(0, false, 0, 3, {0.5, 0.5}, {0.5, 0.5}, 1.0, {}, {}, 0.1),
                                         record(1, false, 0, 5, {0.5, 0.5}, {0.5, 0.5}, 1.0, {}, {}, 0.3)};
  auto m = summarize(docs);
  EXPECT_EQ(m.fid, 0.0);
  EXPECT_EQ(m.avq, 4.0);
  EXPECT_FALSE(m.awp);
  EXPECT_FALSE(m.sim);
  EXPECT_FALSE(m.con);
  EXPECT_FALSE(m.appl);
}

TEST(Metrics, EmptyOrInapplicableCorpus) {
  EXPECT_THROW(summarize({}), std::domain_error);
  auto docs = fixture();
  std::vector<EvaluatedDocument> only_na = {docs.back()};
  EXPECT_THROW(summarize(only_na), NotApplicable);
}

TEST(Metrics, SingleModeWordsPerSuccessIsOne) {
  support::ToyWorld world(31);
  LinearBowClassifier cls = world.classifier();
  MeanVectorSimilarity sim(world.vectors);
  LexiconNegativity neg(world.negation_words);
  support::RawLexiconSource source(world.lexicon);
  std::mt19937_64 rng(2);
  std::vector<Document> docs;
  for (int i = 0; i < 80; ++i) docs.push_back(tokenize(world.random_text(rng, 3, 15), world.annotator()));
  RunConfig cfg;
  cfg.mode = Mode::Single;
  auto ppl = UnigramPerplexity({{"w1", 3}, {"the", 10}});
  auto run = evaluate_corpus(docs, cfg, {cls, sim, neg, *world.tagger, source}, &ppl);
  ASSERT_GT(run.report.successes, 0u);
  EXPECT_DOUBLE_EQ(*run.report.awp, 1.0);
  EXPECT_TRUE(run.report.appl.has_value());
  EXPECT_EQ(run.records.size(), docs.size());
  // Report is a pure function of the stored traces.
  auto again = summarize(run.records);
  EXPECT_EQ(again.fid, run.report.fid);
  EXPECT_EQ(again.avq, run.report.avq);
  double mean_eligible = 0.0;
  for (const auto& r : run.records) mean_eligible += static_cast<double>(r.result.eligible);
  mean_eligible /= static_cast<double>(run.records.size());
  EXPECT_GE(run.report.avq, 1.0 + mean_eligible);
}

// ---------------------------------------------------------------------------
// Deletion baseline
// ---------------------------------------------------------------------------

TEST(Baseline, ConstantModelDeletesDownToOneWord) {
  LinearBowClassifier constant(2);
  support::FixedSimilarity sim(0.3);
  auto r = input_reduction_baseline(tokenize("alpha beta gamma delta"), {}, constant, sim);
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.accepted.size(), 3u);
  EXPECT_TRUE(r.rejected.empty());
  EXPECT_EQ(r.altered.tokens.size(), 1u);
  // Ties break towards the first position, so the last word survives.
  EXPECT_EQ(r.altered.surfaces(), std::vector<std::string>{"delta"});
  EXPECT_EQ(r.accepted[0].position, 0u);
  EXPECT_EQ(r.accepted[1].position, 1u);
  EXPECT_EQ(r.accepted[2].position, 2u);
  EXPECT_EQ(r.queries, 1u + 4 + 3 + 2);
  EXPECT_EQ(r.similarity_final, std::optional<double>(0.3));  // recorded, not enforced
}

TEST(Baseline, NeverDeletesTheDecisiveWord) {
  auto model = LinearBowClassifier::binary({{"good", 2.0}});
  support::FixedSimilarity sim;
  auto r = input_reduction_baseline(tokenize("a good movie"), {}, model, sim);
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.altered.surfaces(), std::vector<std::string>{"good"});
  for (const auto& s : r.accepted) EXPECT_NE(s.original, "good");
  auto mixed = LinearBowClassifier::binary({{"good", 2.0}, {"bad", -1.0}});
  auto two = input_reduction_baseline(tokenize("good bad"), {}, mixed, sim);
  EXPECT_FALSE(two.success);
  ASSERT_EQ(two.rejected.size(), 1u);
  EXPECT_EQ(two.rejected[0].reason, RejectReason::Confidence);
}

TEST(Baseline, NoEligibleTokens) {
  LinearBowClassifier constant(2);
  support::FixedSimilarity sim;
  auto r = input_reduction_baseline(tokenize(". !"), {}, constant, sim);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.queries, 1u);
}

TEST(Baseline, LessSimilarThanSubstitution) {
  support::ToyWorld world(44);
  LinearBowClassifier cls = world.classifier();
  MeanVectorSimilarity sim(world.vectors);
  LexiconNegativity neg(world.negation_words);
  support::RawLexiconSource source(world.lexicon);
  std::mt19937_64 rng(44);
  double base_sim = 0.0, sub_sim = 0.0;
  std::size_t base_n = 0, sub_n = 0;
  for (int i = 0; i < 150; ++i) {
    auto doc = tokenize(world.random_text(rng, 5, 16), world.annotator());
    auto b = input_reduction_baseline(doc, {}, cls, sim);
    auto s = generate(doc, {}, {cls, sim, neg, *world.tagger, source});
    if (b.success && b.similarity_final) {
      base_sim += *b.similarity_final;
      ++base_n;
    }
    if (s.success) {
      sub_sim += *s.similarity_final;
      ++sub_n;
    }
  }
  ASSERT_GT(base_n, 0u);
  ASSERT_GT(sub_n, 0u);
  EXPECT_LT(base_sim / static_cast<double>(base_n), sub_sim / static_cast<double>(sub_n));
}

// ---------------------------------------------------------------------------
// Noise trade-off
// ---------------------------------------------------------------------------

namespace {

std::shared_ptr<WordVectors> orthonormal(std::size_t n) {
  auto v = std::make_shared<WordVectors>();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> e(n, 0.0);
    e[i] = 1.0;
    v->add("u" + std::to_string(i), e);
  }
  return v;
}

}  // namespace

TEST(Noise, ZeroSigmaChangesNothing) {
  std::vector<double> grid = {0.0};
  auto rows = noise_tradeoff_experiment(orthonormal(3), grid, 200, 1);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].flip_rate, 0.0);
  EXPECT_DOUBLE_EQ(rows[0].mean_sim, 1.0);
  EXPECT_EQ(rows[0].mean_l2, 0.0);
}

TEST(Noise, LargeNoiseApproachesUniformSnapping) {
  std::vector<double> grid = {10.0};
  auto rows = noise_tradeoff_experiment(orthonormal(3), grid, 10000, 2024);
  EXPECT_NEAR(rows[0].flip_rate, 2.0 / 3.0, 0.05);
  // A flip between orthonormal words moves sqrt(2).
  EXPECT_NEAR(rows[0].mean_l2, rows[0].flip_rate * std::sqrt(2.0), 1e-9);
}

TEST(Noise, FlipRateGrowsWithSigma) {
  std::vector<double> grid = {0.0, 0.1, 0.3, 0.5, 0.8, 1.2, 2.0, 4.0};
  auto rows = noise_tradeoff_experiment(orthonormal(5), grid, 500, 7);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_GE(rows[i].flip_rate, rows[i - 1].flip_rate) << "sigma " << rows[i].sigma;
  }
  EXPECT_GT(rows.back().flip_rate, 0.5);
}

TEST(Noise, SentenceContextDampensSimilarityLoss) {
  support::ToyWorld world(8);
  std::vector<double> grid = {1.5};
  std::vector<std::string> sentences = {"w1 w2 w3 w4 w5 w6", "w7 the w8 w9 w10"};
  auto with = noise_tradeoff_experiment(world.vectors, grid, 300, 3, sentences);
  auto without = noise_tradeoff_experiment(world.vectors, grid, 300, 3);
  EXPECT_GT(with[0].mean_sim, without[0].mean_sim);
}

TEST(Noise, RejectsBadInput) {
  std::vector<double> grid = {0.5, 0.1};
  EXPECT_THROW(noise_tradeoff_experiment(orthonormal(3), grid, 10, 1), std::domain_error);
  std::vector<double> ok = {0.1};
  EXPECT_THROW(noise_tradeoff_experiment(orthonormal(1), ok, 10, 1), std::domain_error);
  EXPECT_THROW(noise_tradeoff_experiment(orthonormal(3), ok, 0, 1), std::domain_error);
}

// ---------------------------------------------------------------------------
// Bias probe
// ---------------------------------------------------------------------------

TEST(Pearson, MatchesOnePassOracle) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 3 + trial % 20;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = g(rng);
      y[i] = 0.5 * x[i] + g(rng);
    }
    long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sx += x[i];
      sy += y[i];
      sxx += static_cast<long double>(x[i]) * x[i];
      syy += static_cast<long double>(y[i]) * y[i];
      sxy += static_cast<long double>(x[i]) * y[i];
    }
    long double nn = static_cast<long double>(n);
    long double oracle = (nn * sxy - sx * sy) / std::sqrt((nn * sxx - sx * sx) * (nn * syy - sy * sy));
    EXPECT_NEAR(*pearson(x, y), static_cast<double>(oracle), 1e-12);
  }
  std::vector<double> flat = {1, 1, 1}, any = {1, 2, 3};
  EXPECT_FALSE(pearson(flat, any));
  std::vector<double> two = {1, 2};
  EXPECT_FALSE(pearson(two, any));
}

namespace {

// Sentences "she likes wK" / "he said wK" with neutral content weights in [-3, 3].
struct ProbeFixture {
  std::vector<Document> docs;
  std::unordered_map<std::string, double> content;
  std::shared_ptr<OppositeLexicon> targets = std::make_shared<OppositeLexicon>();
  support::FixedSimilarity sim{0.95};
  LexiconNegativity neg = support::standard_negations();
  PermissiveTagger tagger;

  ProbeFixture() {
    targets->add("she", {"he"});
    targets->add("he", {"she"});
    for (int k = 0; k < 40; ++k) {
      std::string w = "c" + std::to_string(k);
      content[w] = -3.0 + 6.0 * k / 39.0;
      docs.push_back(tokenize((k % 2 ? "she likes " : "he said ") + w));
    }
    docs.push_back(tokenize("nobody is here"));
  }

  LinearBowClassifier model(double gender) const {
    auto weights = content;
    weights["she"] = gender;
    weights["he"] = -gender;
    return LinearBowClassifier::binary(weights);
  }

  ProbeBackends backends() { return {sim, neg, tagger}; }
};

}  // namespace

TEST(BiasProbe, SymmetricModelKeepsEveryDecision) {
  ProbeFixture f;
  auto m = f.model(0.0);
  std::vector<ProbeModel> models = {{"sym", &m}};
  auto report = bias_probe(models, f.docs, f.targets, {}, f.backends());
  ASSERT_EQ(report.entries.size(), 1u);
  EXPECT_EQ(report.entries[0].applicable, 40u);
  EXPECT_EQ(report.entries[0].fidelity, 100.0);
  EXPECT_NE(report.entries[0].explanation.find("remained the same for 100.0% of the time"), std::string::npos);
  EXPECT_FALSE(report.correlation);
}

TEST(BiasProbe, DecisiveModelKeepsNone) {
  ProbeFixture f;
  auto m = f.model(5.0);
  std::vector<ProbeModel> models = {{"she-decisive", &m}};
  auto report = bias_probe(models, f.docs, f.targets, {}, f.backends());
  EXPECT_EQ(report.entries[0].fidelity, 0.0);
  EXPECT_EQ(report.entries[0].strict_successes, 0u);
}

TEST(BiasProbe, GradedModelsCorrelateNegatively) {
  ProbeFixture f;
  auto none = f.model(0.0), mid = f.model(0.6), high = f.model(2.0);
  std::vector<ProbeModel> models = {{"E", &none}, {"D", &mid}, {"A", &high}};
  std::map<std::string, double> scores = {{"A", 17.1}, {"D", 5.5}, {"E", 0.7}};
  auto report = bias_probe(models, f.docs, f.targets, {}, f.backends(), scores);
  ASSERT_EQ(report.entries.size(), 3u);
  EXPECT_GT(report.entries[0].fidelity, report.entries[1].fidelity);
  EXPECT_GT(report.entries[1].fidelity, report.entries[2].fidelity);
  ASSERT_TRUE(report.correlation);
  EXPECT_LE(*report.correlation, -0.7);
}

TEST(BiasProbe, Errors) {
  ProbeFixture f;
  auto m = f.model(0.0);
  std::vector<ProbeModel> models = {{"m", &m}};
  std::vector<Document> no_targets = {tokenize("nobody is here")};
  EXPECT_THROW(bias_probe(models, no_targets, f.targets, {}, f.backends()), NotApplicable);
  EXPECT_THROW(bias_probe({}, f.docs, f.targets, {}, f.backends()), ConfigError);
  EXPECT_THROW(bias_probe(models, f.docs, std::make_shared<OppositeLexicon>(), {}, f.backends()), ConfigError);
}

TEST(BiasScores, LoadTwoColumns) {
  support::TempDir dir;
  auto scores = load_bias_scores(dir.write("s.txt", "# model score\nA 17.1\nD 5.5\n\nE 0.7\n"));
  EXPECT_EQ(scores.size(), 3u);
  EXPECT_DOUBLE_EQ(scores["D"], 5.5);
  EXPECT_THROW(load_bias_scores(dir.write("bad.txt", "A\n")), ConfigError);
  EXPECT_THROW(load_bias_scores(dir.write("bad2.txt", "A x\n")), ConfigError);
}

TEST(Explanation, GenderTemplate) {
  ExplanationInput in{"genders", {{"male", "female"}, {"she", "he"}, {"woman", "man"}}, 1.8};
  EXPECT_EQ(render_explanation(in),
            "No matter what we changed the genders mentioned in the input texts (like male\xE2\x86\x92" "female, "
            "she\xE2\x86\x92" "he, woman\xE2\x86\x92" "man, etc.), the computer system's decisions remained the same "
            "for 1.8% of the time.");
}

TEST(Explanation, OneDecimalFormatting) {
  ExplanationInput in{"genders", {{"he", "she"}}, 100.0};
  EXPECT_NE(render_explanation(in).find("for 100.0% of the time."), std::string::npos);
  in.fidelity = 2.0 / 3.0 * 100.0;
  EXPECT_NE(render_explanation(in).find("for 66.7% of the time."), std::string::npos);
}

TEST(Explanation, DistinctTextsPerModel) {
  std::set<std::string> texts;
  for (double v : {17.1, 5.5, 0.7}) texts.insert(render_explanation({"genders", {{"he", "she"}}, v}));
  EXPECT_EQ(texts.size(), 3u);
}
