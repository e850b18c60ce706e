#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "alterfactual/errors.hpp"
#include "alterfactual/negation.hpp"
#include "alterfactual/opposites.hpp"
#include "alterfactual/oracles.hpp"
#include "alterfactual/textcore.hpp"

namespace alterfactual {

enum class Mode { Single, Multi };
enum class ProviderKind { ConceptNet, LLM, Lexicon };

inline std::string_view to_string(Mode m) { return m == Mode::Single ? "single" : "multi"; }

inline std::string_view to_string(ProviderKind p) {
  switch (p) {
    case ProviderKind::ConceptNet: return "conceptnet";
    case ProviderKind::LLM: return "llm";
    case ProviderKind::Lexicon: return "lexicon";
  }
  return "lexicon";
}

inline Mode parse_mode(std::string_view s) {
  auto l = lowercase(s);
  if (l == "single") return Mode::Single;
  if (l == "multi") return Mode::Multi;
  throw ConfigError("mode must be 'single' or 'multi', got '" + std::string(s) + "'");
}

inline ProviderKind parse_provider(std::string_view s) {
  auto l = lowercase(s);
  if (l == "conceptnet") return ProviderKind::ConceptNet;
  if (l == "llm") return ProviderKind::LLM;
  if (l == "lexicon") return ProviderKind::Lexicon;
  throw ConfigError("provider must be conceptnet, llm or lexicon, got '" + std::string(s) + "'");
}

struct RunConfig {
  double delta = 0.05;    // max confidence shift of the predicted class
  double epsilon = 0.8;   // min similarity to the original text
  std::optional<std::size_t> max_words;  // m; nullopt = every eligible word
  Mode mode = Mode::Multi;
  double omega_t = 0.5;   // ConceptNet relation weight threshold
  NegationConfig negation;
  ProviderKind provider = ProviderKind::Lexicon;
  std::optional<std::set<std::string>> target_words;
  std::size_t batch_size = 32;

  void validate() const {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in (0, 1]");
    if (max_words && *max_words == 0) throw ConfigError("m must be >= 1 when bounded");
    if (!(omega_t >= 0.0)) throw ConfigError("omega_t must be >= 0");
    if (!(negation.threshold > 0.0 && negation.threshold <= 1.0)) throw ConfigError("negation.n_t must lie in (0, 1]");
    if (negation.window < 1) throw ConfigError("negation.window must be >= 1");
    if (target_words && target_words->empty()) throw ConfigError("target word set is empty");
  }
};

// Accepts every tag pairing; used when no lexicon is configured.
class PermissiveTagger final : public PosTagger {
 public:
  PosTag tag(std::string_view) const override { return PosTag::Other; }
};

// Everything one search consults. The references must outlive the call.
struct Backends {
  ClassifierOracle& classifier;
  SimilarityOracle& similarity;
  NegativityOracle& negativity;
  const PosTagger& tagger;
  OppositeSource& opposites;
};

struct ImportanceRanking {
  Verdict base;
  std::vector<double> scores;       // per token; NaN when not eligible
  std::vector<std::size_t> order;   // eligible positions, ascending importance
};

enum class RejectReason { Identity, NotSingleWord, PosMismatch, DoubleNegative, Confidence, Similarity };

inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::Identity: return "identity";
    case RejectReason::NotSingleWord: return "not_single_word";
    case RejectReason::PosMismatch: return "pos_mismatch";
    case RejectReason::DoubleNegative: return "double_negative";
    case RejectReason::Confidence: return "confidence";
    case RejectReason::Similarity: return "similarity";
  }
  return "identity";
}

inline RejectReason parse_reject_reason(std::string_view s) {
  for (auto r : {RejectReason::Identity, RejectReason::NotSingleWord, RejectReason::PosMismatch,
                 RejectReason::DoubleNegative, RejectReason::Confidence, RejectReason::Similarity}) {
    if (to_string(r) == s) return r;
  }
  throw ParseError("unknown reject reason: " + std::string(s));
}

// Rejections with these reasons cost one classifier query each.
inline bool was_classified(RejectReason r) { return r == RejectReason::Confidence || r == RejectReason::Similarity; }

struct Rejection {
  Substitution substitution;
  RejectReason reason = RejectReason::Identity;

  friend bool operator==(const Rejection&, const Rejection&) = default;
};

struct AlterfactualResult {
  Document original;
  Document altered;
  Verdict original_verdict;
  Verdict final_verdict;
  std::vector<Substitution> accepted;
  std::vector<Rejection> rejected;
  std::vector<std::size_t> ranking;  // search order over eligible positions
  std::size_t eligible = 0;          // k
  std::size_t queries = 0;           // classifier texts sent
  bool success = false;
  std::optional<double> similarity_final;
  std::size_t displacement = 0;
  bool aborted = false;
  std::string error;
  std::string error_provenance;
  // Targeted runs only.
  bool applicable = true;
  std::optional<bool> strict_success;

  friend bool operator==(const AlterfactualResult&, const AlterfactualResult&) = default;
};

// Query count implied by a trace: the original text, k leave-one-out texts,
// and one text per candidate that reached the classifier.
inline std::size_t trace_query_count(const AlterfactualResult& r) {
  std::size_t n = r.applicable ? 1 + r.eligible + r.accepted.size() : 0;
  for (const auto& rej : r.rejected) n += was_classified(rej.reason) ? 1 : 0;
  return n;
}

inline bool is_eligible(const Token& tok, const std::optional<std::set<std::string>>& targets) {
  if (tok.is_punct) return false;
  if (targets) return targets->count(tok.normalized) > 0;
  return !tok.is_stopword;
}

inline std::vector<std::size_t> eligible_positions(const Document& doc,
                                                   const std::optional<std::set<std::string>>& targets) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    if (is_eligible(doc.tokens[i], targets)) out.push_back(i);
  }
  return out;
}

// Leave-one-out importance: probability drop of the predicted class when a
// token is deleted. Sends 1 + k texts.
inline ImportanceRanking importance_scores(const Document& doc, ClassifierOracle& classifier, OracleStats& stats,
                                           const std::optional<std::set<std::string>>& targets = std::nullopt,
                                           std::size_t batch_size = 32) {
  auto eligible = eligible_positions(doc, targets);
  if (eligible.empty()) throw EmptyRanking("document has no eligible tokens: '" + doc.raw + "'");
  std::vector<std::string> texts;
  texts.reserve(eligible.size() + 1);
  texts.push_back(doc.raw);
  for (auto pos : eligible) texts.push_back(erase_token(doc, pos).raw);
  auto verdicts = classify(texts, classifier, stats, batch_size);

  ImportanceRanking r;
  r.base = verdicts.front();
  r.scores.assign(doc.tokens.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < eligible.size(); ++i) {
    r.scores[eligible[i]] = r.base.confidence - verdicts[i + 1].probs.at(r.base.predicted);
  }
  r.order = eligible;
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return r.scores[a] < r.scores[b]; });
  return r;
}

inline bool confidence_preserved(const Verdict& original, const Verdict& candidate, double delta) {
  return candidate.predicted == original.predicted &&
         std::abs(candidate.probs.at(original.predicted) - original.confidence) <= delta;
}

namespace detail {

inline AlterfactualResult search(const Document& doc, const RunConfig& cfg, const Backends& b,
                                 const std::optional<std::set<std::string>>& targets, Mode mode) {
  AlterfactualResult result;
  result.original = doc;
  result.altered = doc;
  OracleStats stats;

  auto finish = [&]() -> AlterfactualResult& {
    result.queries = stats.classifier_queries.load();
    result.displacement = result.accepted.size();
    result.success = !result.aborted && !result.accepted.empty();
    return result;
  };

  try {
    auto eligible = eligible_positions(doc, targets);
    if (eligible.empty()) {
      result.original_verdict = classify_one(doc.raw, b.classifier, stats);
      result.final_verdict = result.original_verdict;
      result.similarity_final = 1.0;
      return finish();
    }
    auto ranking = importance_scores(doc, b.classifier, stats, targets, cfg.batch_size);
    result.original_verdict = ranking.base;
    result.final_verdict = ranking.base;
    result.similarity_final = 1.0;
    result.eligible = ranking.order.size();
    result.ranking = ranking.order;
    const Verdict& base = ranking.base;

    auto lookup = b.opposites.bind(doc);
    const std::string provider = b.opposites.id();
    const std::size_t budget = std::min(cfg.max_words.value_or(ranking.order.size()), ranking.order.size());
    Document working = doc;

    for (std::size_t rank = 0; rank < budget; ++rank) {
      const std::size_t pos = ranking.order[rank];
      const Token& tok = doc.tokens[pos];
      bool accepted = false;
      for (const auto& cand : lookup(pos)) {
        Substitution sub{pos, tok.surface, cand.word, cand.relation, provider};
        auto reject = [&](RejectReason why) { result.rejected.push_back({sub, why}); };
        if (iequals(cand.word, tok.surface)) {
          reject(RejectReason::Identity);
          continue;
        }
        if (!is_single_word(cand.word)) {
          reject(RejectReason::NotSingleWord);
          continue;
        }
        if (!pos_compatible(tok, cand.word, b.tagger)) {
          reject(RejectReason::PosMismatch);
          continue;
        }
        Document trial = apply_substitutions(working, {sub});
        if (introduces_double_negative(doc, trial, cfg.negation, b.negativity)) {
          reject(RejectReason::DoubleNegative);
          continue;
        }
        Verdict v = classify_one(trial.raw, b.classifier, stats);
        if (!confidence_preserved(base, v, cfg.delta)) {
          reject(RejectReason::Confidence);
          continue;
        }
        double sim = b.similarity.similarity(doc.raw, trial.raw);
        if (sim < cfg.epsilon) {
          reject(RejectReason::Similarity);
          continue;
        }
        working = std::move(trial);
        result.altered = working;
        result.final_verdict = std::move(v);
        result.similarity_final = sim;
        result.accepted.push_back(std::move(sub));
        accepted = true;
        break;
      }
      if (accepted && mode == Mode::Single) break;
    }
  } catch (const OracleError& e) {
    result.aborted = true;
    result.error = e.what();
    result.error_provenance = e.provenance();
  } catch (const UndefinedSimilarity& e) {
    result.aborted = true;
    result.error = e.what();
    result.error_provenance = "similarity";
  } catch (const ParseError& e) {
    result.aborted = true;
    result.error = e.what();
    result.error_provenance = "llm";
  }
  return finish();
}

}  // namespace detail

// Greedy alterfactual search: walk the eligible words from least to most
// important, try each word's opposites in provider order and keep the first
// one that passes every constraint. Single mode stops after one acceptance.
inline AlterfactualResult generate(const Document& doc, const RunConfig& cfg, const Backends& backends) {
  return detail::search(doc, cfg, backends, std::nullopt, cfg.mode);
}

// Restricts the search to target words (stopword filtering does not apply)
// and always runs in Multi mode. strict_success requires every target
// occurrence to be swapped.
inline AlterfactualResult generate_targeted(const Document& doc, const RunConfig& cfg, const Backends& backends) {
  if (!cfg.target_words || cfg.target_words->empty()) throw ConfigError("targeted generation needs target words");
  std::set<std::string> targets;
  for (const auto& w : *cfg.target_words) targets.insert(lowercase(w));
  auto occurrences = eligible_positions(doc, targets);
  if (occurrences.empty()) {
    AlterfactualResult r;
    r.original = doc;
    r.altered = doc;
    r.applicable = false;
    r.strict_success = false;
    return r;
  }
  auto r = detail::search(doc, cfg, backends, targets, Mode::Multi);
  r.strict_success = r.success && r.accepted.size() == occurrences.size();
  return r;
}

// Re-checks an emitted success against the oracles. Returns one message per
// violated constraint; empty means the trace is sound.
inline std::vector<std::string> replay_violations(const AlterfactualResult& r, const RunConfig& cfg,
                                                  ClassifierOracle& classifier, SimilarityOracle& similarity,
                                                  NegativityOracle& negativity, const PosTagger& tagger) {
  std::vector<std::string> v;
  if (!r.success) return v;
  std::set<std::size_t> positions;
  for (const auto& s : r.accepted) {
    if (!positions.insert(s.position).second) v.push_back("repeated position " + std::to_string(s.position));
    if (s.position >= r.original.tokens.size()) {
      v.push_back("position out of range");
      return v;
    }
    if (!pos_compatible(r.original.tokens[s.position], s.replacement, tagger)) {
      v.push_back("part of speech changed at " + std::to_string(s.position));
    }
  }
  Document rebuilt;
  try {
    rebuilt = apply_substitutions(r.original, r.accepted);
  } catch (const std::exception& e) {
    v.push_back(std::string("trace does not apply: ") + e.what());
    return v;
  }
  if (rebuilt.raw != r.altered.raw) v.push_back("altered text differs from replayed substitutions");
  if (introduces_double_negative(r.original, rebuilt, cfg.negation, negativity)) {
    v.push_back("introduces a double negative");
  }
  OracleStats stats;
  auto before = classify_one(r.original.raw, classifier, stats);
  auto after = classify_one(rebuilt.raw, classifier, stats);
  if (after.predicted != before.predicted) v.push_back("predicted class changed");
  if (std::abs(after.probs.at(before.predicted) - before.confidence) > cfg.delta) {
    v.push_back("confidence shift exceeds delta");
  }
  if (similarity.similarity(r.original.raw, rebuilt.raw) < cfg.epsilon) v.push_back("similarity below epsilon");
  return v;
}

}  // namespace alterfactual
