#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <memory>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "alterfactual/errors.hpp"
#include "alterfactual/generator.hpp"
#include "alterfactual/opposites.hpp"
#include "alterfactual/oracles.hpp"

namespace alterfactual {

// ---------------------------------------------------------------------------
// Corpus metrics
// ---------------------------------------------------------------------------

struct EvaluatedDocument {
  std::size_t id = 0;
  AlterfactualResult result;
  std::optional<double> original_perplexity;
  std::optional<double> altered_perplexity;
  double runtime_seconds = 0.0;
};

// FID/AVQ/runtime average over attempted documents; the rest over successes.
// Undefined means (no successes) are nullopt.
struct MetricsReport {
  std::size_t documents = 0;
  std::size_t attempted = 0;
  std::size_t successes = 0;
  double fid = 0.0;
  double avq = 0.0;
  double runtime = 0.0;
  std::optional<double> awp;
  std::optional<double> oppl;
  std::optional<double> appl;
  std::optional<double> sim;
  std::optional<double> con;
};

inline double confidence_shift_percent(const AlterfactualResult& r) {
  const auto p = r.original_verdict.predicted;
  return 100.0 * std::abs(r.final_verdict.probs.at(p) - r.original_verdict.probs.at(p));
}

// Pure arithmetic over stored traces.
inline MetricsReport summarize(std::span<const EvaluatedDocument> docs) {
  if (docs.empty()) throw std::domain_error("cannot summarize an empty corpus");
  MetricsReport m;
  m.documents = docs.size();
  double queries = 0.0, runtime = 0.0;
  double awp = 0.0, sim = 0.0, con = 0.0, oppl = 0.0, appl = 0.0;
  std::size_t sim_n = 0, ppl_n = 0;
  for (const auto& d : docs) {
    if (!d.result.applicable) continue;
    ++m.attempted;
    queries += static_cast<double>(d.result.queries);
    runtime += d.runtime_seconds;
    if (!d.result.success) continue;
    ++m.successes;
    awp += static_cast<double>(d.result.accepted.size());
    con += confidence_shift_percent(d.result);
    if (d.result.similarity_final) {
      sim += *d.result.similarity_final;
      ++sim_n;
    }
    if (d.original_perplexity && d.altered_perplexity) {
      oppl += *d.original_perplexity;
      appl += *d.altered_perplexity;
      ++ppl_n;
    }
  }
  if (m.attempted == 0) throw NotApplicable("no applicable documents in corpus");
  const double attempted = static_cast<double>(m.attempted);
  m.fid = 100.0 * static_cast<double>(m.successes) / attempted;
  m.avq = queries / attempted;
  m.runtime = runtime / attempted;
  if (m.successes > 0) {
    const double s = static_cast<double>(m.successes);
    m.awp = awp / s;
    m.con = con / s;
  }
  if (sim_n > 0) m.sim = sim / static_cast<double>(sim_n);
  if (ppl_n > 0) {
    m.oppl = oppl / static_cast<double>(ppl_n);
    m.appl = appl / static_cast<double>(ppl_n);
  }
  return m;
}

struct CorpusRun {
  std::vector<EvaluatedDocument> records;
  MetricsReport report;
};

// Runs `generate` (or `generate_targeted` when cfg has target words) on every
// document in order. `perplexity` may be null.
inline CorpusRun evaluate_corpus(std::span<const Document> docs, const RunConfig& cfg, const Backends& backends,
                                 PerplexityOracle* perplexity = nullptr) {
  if (docs.empty()) throw std::domain_error("evaluate_corpus needs at least one document");
  CorpusRun run;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    EvaluatedDocument rec;
    rec.id = i;
    auto started = std::chrono::steady_clock::now();
    rec.result = cfg.target_words ? generate_targeted(docs[i], cfg, backends) : generate(docs[i], cfg, backends);
    rec.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (perplexity && rec.result.success) {
      try {
        rec.original_perplexity = perplexity->perplexity(rec.result.original.raw);
        rec.altered_perplexity = perplexity->perplexity(rec.result.altered.raw);
      } catch (const std::exception&) {
        rec.original_perplexity.reset();
        rec.altered_perplexity.reset();
      }
    }
    run.records.push_back(std::move(rec));
  }
  run.report = summarize(run.records);
  return run;
}

// ---------------------------------------------------------------------------
// Input-reduction baseline
// ---------------------------------------------------------------------------

// Deletes the least important eligible word while the prediction keeps its
// class and stays within delta of the original confidence. Similarity is
// recorded, not enforced. The last eligible word is never deleted.
inline AlterfactualResult input_reduction_baseline(const Document& doc, const RunConfig& cfg,
                                                   ClassifierOracle& classifier, SimilarityOracle& similarity) {
  AlterfactualResult result;
  result.original = doc;
  result.altered = doc;
  OracleStats stats;
  try {
    auto eligible = eligible_positions(doc, std::nullopt);
    result.eligible = eligible.size();
    result.original_verdict = classify_one(doc.raw, classifier, stats);
    result.final_verdict = result.original_verdict;
    result.similarity_final = 1.0;
    const Verdict base = result.original_verdict;
    const auto p = base.predicted;

    Document current = doc;
    Verdict current_verdict = base;
    std::vector<std::size_t> origin(doc.tokens.size());
    for (std::size_t i = 0; i < origin.size(); ++i) origin[i] = i;

    while (true) {
      auto positions = eligible_positions(current, std::nullopt);
      if (positions.size() <= 1) break;
      std::vector<Document> erased;
      std::vector<std::string> texts;
      for (auto pos : positions) {
        erased.push_back(erase_token(current, pos));
        texts.push_back(erased.back().raw);
      }
      auto verdicts = classify(texts, classifier, stats, cfg.batch_size);
      std::size_t best = 0;
      for (std::size_t i = 1; i < verdicts.size(); ++i) {
        double drop_i = current_verdict.probs[p] - verdicts[i].probs[p];
        double drop_best = current_verdict.probs[p] - verdicts[best].probs[p];
        if (drop_i < drop_best) best = i;
      }
      const auto pos = positions[best];
      Substitution sub{origin[pos], current.tokens[pos].surface, "", {RelationKind::Deletion, 1.0}, "deletion"};
      if (!confidence_preserved(base, verdicts[best], cfg.delta)) {
        result.rejected.push_back({sub, RejectReason::Confidence});
        break;
      }
      result.accepted.push_back(sub);
      current = std::move(erased[best]);
      current_verdict = verdicts[best];
      origin.erase(origin.begin() + static_cast<std::ptrdiff_t>(pos));
    }
    result.altered = current;
    result.final_verdict = current_verdict;
    try {
      result.similarity_final = similarity.similarity(doc.raw, current.raw);
    } catch (const UndefinedSimilarity&) {
      result.similarity_final.reset();
    }
  } catch (const OracleError& e) {
    result.aborted = true;
    result.error = e.what();
    result.error_provenance = e.provenance();
  }
  result.queries = stats.classifier_queries.load();
  result.displacement = result.accepted.size();
  result.success = !result.aborted && !result.accepted.empty();
  return result;
}

// ---------------------------------------------------------------------------
// Embedding-noise trade-off
// ---------------------------------------------------------------------------

struct NoiseRow {
  double sigma = 0.0;
  double flip_rate = 0.0;  // fraction snapping to a different word
  double mean_sim = 0.0;   // sentence similarity after the snap
  double mean_l2 = 0.0;    // distance between original and snapped word vectors
};

inline std::size_t nearest_word(const WordVectors& vocab, const std::vector<double>& x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t w = 0; w < vocab.size(); ++w) {
    const auto& v = vocab.vector_at(w);
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) d += (x[i] - v[i]) * (x[i] - v[i]);
    if (d < best_d) {
      best_d = d;
      best = w;
    }
  }
  return best;
}

inline double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(d);
}

// For each sigma: add isotropic Gaussian noise to the vector of a sampled
// in-vocabulary word and snap it to the nearest vocabulary vector. Each sigma
// reuses the same seed so the grid shares its random draws. Without
// `sentences`, the sampled word is its own one-word sentence.
inline std::vector<NoiseRow> noise_tradeoff_experiment(std::shared_ptr<const WordVectors> vocab,
                                                       std::span<const double> sigma_grid, std::size_t trials,
                                                       std::uint64_t seed,
                                                       std::span<const std::string> sentences = {}) {
  if (vocab->size() < 2) throw std::domain_error("noise experiment needs at least two vocabulary words");
  if (trials == 0) throw std::domain_error("noise experiment needs at least one trial");
  for (std::size_t i = 1; i < sigma_grid.size(); ++i) {
    if (sigma_grid[i] < sigma_grid[i - 1]) throw std::domain_error("sigma grid must be ascending");
  }
  MeanVectorSimilarity sim(vocab);

  struct Slot {
    std::vector<std::string> tokens;
    std::size_t position;
    std::size_t word;
  };
  std::vector<Slot> slots;
  for (const auto& s : sentences) {
    auto doc = tokenize(s);
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
      const auto* v = vocab->find(doc.tokens[i].normalized);
      if (!v) continue;
      auto it = std::find(vocab->words().begin(), vocab->words().end(), doc.tokens[i].normalized);
      slots.push_back({doc.surfaces(), i, static_cast<std::size_t>(it - vocab->words().begin())});
    }
  }
  if (slots.empty()) {
    for (std::size_t w = 0; w < vocab->size(); ++w) slots.push_back({{vocab->words()[w]}, 0, w});
  }

  std::vector<NoiseRow> rows;
  for (double sigma : sigma_grid) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, slots.size() - 1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    NoiseRow row;
    row.sigma = sigma;
    std::size_t flips = 0;
    double sim_sum = 0.0, l2_sum = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      const auto& slot = slots[pick(rng)];
      const auto& original = vocab->vector_at(slot.word);
      std::vector<double> noisy(original.size());
      for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] = original[i] + sigma * gauss(rng);
      auto snapped = nearest_word(*vocab, noisy);
      if (snapped != slot.word) ++flips;
      l2_sum += l2_distance(original, vocab->vector_at(snapped));
      auto replaced = slot.tokens;
      replaced[slot.position] = vocab->words()[snapped];
      sim_sum += sim.similarity(detokenize(slot.tokens), detokenize(replaced));
    }
    row.flip_rate = static_cast<double>(flips) / static_cast<double>(trials);
    row.mean_sim = sim_sum / static_cast<double>(trials);
    row.mean_l2 = l2_sum / static_cast<double>(trials);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Bias probe
// ---------------------------------------------------------------------------

inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

struct ExplanationInput {
  std::string attribute = "genders";
  std::vector<std::pair<std::string, std::string>> examples;  // shown as a→b
  double fidelity = 0.0;                                      // percent
};

inline std::string format_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

inline std::string render_explanation(const ExplanationInput& in) {
  std::string swaps;
  for (const auto& [from, to] : in.examples) {
    if (!swaps.empty()) swaps += ", ";
    swaps += from + "\xE2\x86\x92" + to;
  }
  swaps += swaps.empty() ? "etc." : ", etc.";
  return "No matter what we changed the " + in.attribute + " mentioned in the input texts (like " + swaps +
         "), the computer system's decisions remained the same for " + format_percent(in.fidelity) + "% of the time.";
}

struct ProbeModel {
  std::string id;
  ClassifierOracle* classifier = nullptr;
};

struct BiasProbeEntry {
  std::string model;
  double fidelity = 0.0;  // strict targeted fidelity, percent
  std::size_t applicable = 0;
  std::size_t strict_successes = 0;
  std::size_t queries = 0;
  std::optional<double> bias_score;
  std::string explanation;
};

struct BiasProbeReport {
  std::string attribute;
  std::vector<BiasProbeEntry> entries;
  std::optional<double> correlation;  // needs >= 3 scored models
};

struct ProbeBackends {
  SimilarityOracle& similarity;
  NegativityOracle& negativity;
  const PosTagger& tagger;
};

// Swaps every target word (e.g. gendered terms) in each document for each
// model and reports the share of documents whose prediction survived all
// swaps. `targets` supplies the opposites.
inline BiasProbeReport bias_probe(std::span<const ProbeModel> models, std::span<const Document> docs,
                                  std::shared_ptr<const OppositeLexicon> targets, RunConfig cfg,
                                  const ProbeBackends& shared,
                                  const std::map<std::string, double>& external_scores = {},
                                  const std::string& attribute = "genders") {
  if (models.empty()) throw ConfigError("bias probe needs at least one model");
  if (!targets || targets->size() == 0) throw ConfigError("bias probe needs target words");
  std::set<std::string> words(targets->words().begin(), targets->words().end());
  cfg.target_words = words;

  std::vector<std::pair<std::string, std::string>> examples;
  for (const auto& w : targets->words()) {
    if (examples.size() == 3) break;
    if (const auto* row = targets->find(w); row && !row->empty()) examples.emplace_back(w, row->front());
  }

  WordSource source(std::make_shared<LexiconOpposites>(targets, "targets"));
  BiasProbeReport report;
  report.attribute = attribute;
  for (const auto& model : models) {
    Backends b{*model.classifier, shared.similarity, shared.negativity, shared.tagger, source};
    BiasProbeEntry e;
    e.model = model.id;
    for (const auto& doc : docs) {
      auto r = generate_targeted(doc, cfg, b);
      if (!r.applicable) continue;
      if (r.aborted) throw OracleError(model.id + ": " + r.error, false, r.error_provenance);
      ++e.applicable;
      e.queries += r.queries;
      if (r.strict_success.value_or(false)) ++e.strict_successes;
    }
    if (e.applicable == 0) throw NotApplicable("no document contains a target word");
    e.fidelity = 100.0 * static_cast<double>(e.strict_successes) / static_cast<double>(e.applicable);
    if (auto it = external_scores.find(model.id); it != external_scores.end()) e.bias_score = it->second;
    e.explanation = render_explanation({attribute, examples, e.fidelity});
    report.entries.push_back(std::move(e));
  }

  std::vector<double> fid, score;
  for (const auto& e : report.entries) {
    if (e.bias_score) {
      fid.push_back(e.fidelity);
      score.push_back(*e.bias_score);
    }
  }
  if (fid.size() >= 3) report.correlation = pearson(fid, score);
  return report;
}

// Two columns per line: model id, score.
inline std::map<std::string, double> load_bias_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open bias score file: " + path);
  std::map<std::string, double> out;
  std::string line;
  while (std::getline(in, line)) {
    auto f = split_ws(line);
    if (f.empty() || f[0].front() == '#') continue;
    if (f.size() != 2) throw ConfigError("bad bias score row: " + line);
    try {
      out[f[0]] = std::stod(f[1]);
    } catch (const std::exception&) {
      throw ConfigError("bad bias score row: " + line);
    }
  }
  return out;
}

}  // namespace alterfactual
