#pragma once

#include <cstddef>
#include <vector>

#include "alterfactual/errors.hpp"
#include "alterfactual/oracles.hpp"
#include "alterfactual/textcore.hpp"

namespace alterfactual {

struct NegationConfig {
  double threshold = 0.15;  // a hit counts when score <= threshold
  std::size_t window = 3;   // token distance

  friend bool operator==(const NegationConfig&, const NegationConfig&) = default;
};

struct NegationReport {
  std::vector<NegativityHit> negatives;  // positions refer to the original sentence
  bool is_double = false;
  std::size_t queries = 0;
};

inline bool any_within_window(const std::vector<NegativityHit>& hits, std::size_t window) {
  for (std::size_t i = 0; i < hits.size(); ++i) {
    for (std::size_t j = i + 1; j < hits.size(); ++j) {
      auto a = hits[i].position, b = hits[j].position;
      if ((a > b ? a - b : b - a) <= window) return true;
    }
  }
  return false;
}

// Repeatedly asks the oracle for the most negative word, strips each detected
// trigger from the working sentence and re-queries until nothing scores at or
// below the threshold. Two triggers within `window` tokens make a double
// negative.
inline NegationReport detect_double_negative(std::string_view sentence, const NegationConfig& cfg,
                                             NegativityOracle& oracle) {
  NegationReport report;
  auto doc = tokenize(sentence);
  if (doc.empty()) return report;

  std::vector<std::string> working;
  std::vector<std::size_t> original_index;
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    working.push_back(doc.tokens[i].surface);
    original_index.push_back(i);
  }

  while (!working.empty()) {
    ++report.queries;
    auto hit = oracle.most_negative(detokenize(working));
    if (!hit || hit->score > cfg.threshold) break;
    if (hit->position >= working.size()) {
      throw ContractViolation("negativity position " + std::to_string(hit->position) + " outside sentence",
                              "negativity");
    }
    hit->position = original_index[hit->position];
    auto at = static_cast<std::ptrdiff_t>(std::find(original_index.begin(), original_index.end(), hit->position) -
                                          original_index.begin());
    working.erase(working.begin() + at);
    original_index.erase(original_index.begin() + at);
    report.negatives.push_back(std::move(*hit));
  }
  report.is_double = any_within_window(report.negatives, cfg.window);
  return report;
}

// True when some sentence of `perturbed` is a double negative while the
// corresponding sentence of `original` is not.
inline bool introduces_double_negative(const Document& original, const Document& perturbed, const NegationConfig& cfg,
                                       NegativityOracle& oracle) {
  if (original.sentence_bounds.size() != perturbed.sentence_bounds.size()) {
    throw StructuralError("sentence count differs: " + std::to_string(original.sentence_bounds.size()) + " vs " +
                          std::to_string(perturbed.sentence_bounds.size()));
  }
  for (std::size_t s = 0; s < original.sentence_bounds.size(); ++s) {
    auto before = sentence_text(original, s);
    auto after = sentence_text(perturbed, s);
    if (before == after) continue;
    if (!detect_double_negative(after, cfg, oracle).is_double) continue;
    if (!detect_double_negative(before, cfg, oracle).is_double) return true;
  }
  return false;
}

}  // namespace alterfactual
