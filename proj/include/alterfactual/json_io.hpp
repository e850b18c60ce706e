#pragma once

#include <cstdio>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "alterfactual/evaluation.hpp"
#include "alterfactual/generator.hpp"

// JSON forms of the public types. Every to_json/from_json pair round-trips
// exactly: doubles are printed with enough digits to be read back bit-equal.
namespace alterfactual {

using nlohmann::json;

namespace detail {

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> opt_get(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace detail

inline void to_json(json& j, const Token& t) {
  j = json{{"surface", t.surface}, {"normalized", t.normalized}, {"stopword", t.is_stopword},
           {"pos", std::string(to_string(t.pos))}, {"punct", t.is_punct}, {"begin", t.begin}, {"end", t.end}};
}

inline void from_json(const json& j, Token& t) {
  j.at("surface").get_to(t.surface);
  j.at("normalized").get_to(t.normalized);
  j.at("stopword").get_to(t.is_stopword);
  t.pos = parse_pos_tag(j.at("pos").get<std::string>());
  j.at("punct").get_to(t.is_punct);
  j.at("begin").get_to(t.begin);
  j.at("end").get_to(t.end);
}

inline void to_json(json& j, const Document& d) {
  json bounds = json::array();
  for (const auto& b : d.sentence_bounds) bounds.push_back({b.first, b.last});
  j = json{{"raw", d.raw}, {"tokens", d.tokens}, {"sentences", bounds}};
}

inline void from_json(const json& j, Document& d) {
  j.at("raw").get_to(d.raw);
  j.at("tokens").get_to(d.tokens);
  d.sentence_bounds.clear();
  for (const auto& b : j.at("sentences")) d.sentence_bounds.push_back({b.at(0).get<std::size_t>(), b.at(1).get<std::size_t>()});
}

inline void to_json(json& j, const Verdict& v) {
  j = json{{"probs", v.probs}, {"predicted", v.predicted}, {"confidence", v.confidence}};
}

inline void from_json(const json& j, Verdict& v) {
  j.at("probs").get_to(v.probs);
  j.at("predicted").get_to(v.predicted);
  j.at("confidence").get_to(v.confidence);
}

inline void to_json(json& j, const Substitution& s) {
  j = json{{"position", s.position},
           {"original", s.original},
           {"replacement", s.replacement},
           {"relation", std::string(to_string(s.relation.kind))},
           {"weight", s.relation.weight},
           {"provider", s.provider}};
}

inline void from_json(const json& j, Substitution& s) {
  j.at("position").get_to(s.position);
  j.at("original").get_to(s.original);
  j.at("replacement").get_to(s.replacement);
  s.relation.kind = parse_relation_kind(j.at("relation").get<std::string>());
  j.at("weight").get_to(s.relation.weight);
  j.at("provider").get_to(s.provider);
}

inline void to_json(json& j, const Rejection& r) {
  j = json{{"substitution", r.substitution}, {"reason", std::string(to_string(r.reason))}};
}

inline void from_json(const json& j, Rejection& r) {
  j.at("substitution").get_to(r.substitution);
  r.reason = parse_reject_reason(j.at("reason").get<std::string>());
}

inline void to_json(json& j, const AlterfactualResult& r) {
  j = json{{"original", r.original},
           {"altered", r.altered},
           {"original_verdict", r.original_verdict},
           {"final_verdict", r.final_verdict},
           {"accepted", r.accepted},
           {"rejected", r.rejected},
           {"ranking", r.ranking},
           {"eligible", r.eligible},
           {"queries", r.queries},
           {"success", r.success},
           {"similarity_final", detail::opt(r.similarity_final)},
           {"displacement", r.displacement},
           {"aborted", r.aborted},
           {"error", r.error},
           {"error_provenance", r.error_provenance},
           {"applicable", r.applicable},
           {"strict_success", detail::opt(r.strict_success)}};
}

inline void from_json(const json& j, AlterfactualResult& r) {
  j.at("original").get_to(r.original);
  j.at("altered").get_to(r.altered);
  j.at("original_verdict").get_to(r.original_verdict);
  j.at("final_verdict").get_to(r.final_verdict);
  j.at("accepted").get_to(r.accepted);
  j.at("rejected").get_to(r.rejected);
  j.at("ranking").get_to(r.ranking);
  j.at("eligible").get_to(r.eligible);
  j.at("queries").get_to(r.queries);
  j.at("success").get_to(r.success);
  r.similarity_final = detail::opt_get<double>(j, "similarity_final");
  j.at("displacement").get_to(r.displacement);
  j.at("aborted").get_to(r.aborted);
  j.at("error").get_to(r.error);
  j.at("error_provenance").get_to(r.error_provenance);
  j.at("applicable").get_to(r.applicable);
  r.strict_success = detail::opt_get<bool>(j, "strict_success");
}

inline void to_json(json& j, const RunConfig& c) {
  json targets = nullptr;
  if (c.target_words) targets = json(std::vector<std::string>(c.target_words->begin(), c.target_words->end()));
  j = json{{"delta", c.delta},
           {"epsilon", c.epsilon},
           {"m", detail::opt(c.max_words)},
           {"mode", std::string(to_string(c.mode))},
           {"omega_t", c.omega_t},
           {"negation", {{"n_t", c.negation.threshold}, {"window", c.negation.window}}},
           {"provider", std::string(to_string(c.provider))},
           {"target_words", targets},
           {"batch_size", c.batch_size}};
}

inline void from_json(const json& j, RunConfig& c) {
  j.at("delta").get_to(c.delta);
  j.at("epsilon").get_to(c.epsilon);
  c.max_words = detail::opt_get<std::size_t>(j, "m");
  c.mode = parse_mode(j.at("mode").get<std::string>());
  j.at("omega_t").get_to(c.omega_t);
  j.at("negation").at("n_t").get_to(c.negation.threshold);
  j.at("negation").at("window").get_to(c.negation.window);
  c.provider = parse_provider(j.at("provider").get<std::string>());
  c.target_words.reset();
  if (j.contains("target_words") && !j.at("target_words").is_null()) {
    auto words = j.at("target_words").get<std::vector<std::string>>();
    c.target_words = std::set<std::string>(words.begin(), words.end());
  }
  j.at("batch_size").get_to(c.batch_size);
}

inline void to_json(json& j, const MetricsReport& m) {
  j = json{{"documents", m.documents}, {"attempted", m.attempted}, {"successes", m.successes},
           {"fid", m.fid},             {"avq", m.avq},             {"runtime", m.runtime},
           {"awp", detail::opt(m.awp)}, {"oppl", detail::opt(m.oppl)}, {"appl", detail::opt(m.appl)},
           {"sim", detail::opt(m.sim)}, {"con", detail::opt(m.con)}};
}

inline void from_json(const json& j, MetricsReport& m) {
  j.at("documents").get_to(m.documents);
  j.at("attempted").get_to(m.attempted);
  j.at("successes").get_to(m.successes);
  j.at("fid").get_to(m.fid);
  j.at("avq").get_to(m.avq);
  j.at("runtime").get_to(m.runtime);
  m.awp = detail::opt_get<double>(j, "awp");
  m.oppl = detail::opt_get<double>(j, "oppl");
  m.appl = detail::opt_get<double>(j, "appl");
  m.sim = detail::opt_get<double>(j, "sim");
  m.con = detail::opt_get<double>(j, "con");
}

inline void to_json(json& j, const NoiseRow& r) {
  j = json{{"sigma", r.sigma}, {"flip_rate", r.flip_rate}, {"mean_sim", r.mean_sim}, {"mean_l2", r.mean_l2}};
}

inline void to_json(json& j, const BiasProbeEntry& e) {
  j = json{{"model", e.model},
           {"fidelity", e.fidelity},
           {"applicable", e.applicable},
           {"strict_successes", e.strict_successes},
           {"queries", e.queries},
           {"bias_score", detail::opt(e.bias_score)},
           {"explanation", e.explanation}};
}

inline void from_json(const json& j, BiasProbeEntry& e) {
  j.at("model").get_to(e.model);
  j.at("fidelity").get_to(e.fidelity);
  j.at("applicable").get_to(e.applicable);
  j.at("strict_successes").get_to(e.strict_successes);
  j.at("queries").get_to(e.queries);
  e.bias_score = detail::opt_get<double>(j, "bias_score");
  j.at("explanation").get_to(e.explanation);
}

inline void to_json(json& j, const BiasProbeReport& r) {
  j = json{{"attribute", r.attribute}, {"entries", r.entries}, {"correlation", detail::opt(r.correlation)}};
}

inline void from_json(const json& j, BiasProbeReport& r) {
  j.at("attribute").get_to(r.attribute);
  j.at("entries").get_to(r.entries);
  r.correlation = detail::opt_get<double>(j, "correlation");
}

// ---------------------------------------------------------------------------
// JSONL traces
// ---------------------------------------------------------------------------

// One line per document:
//   id                  document index in the input
//   result              full AlterfactualResult (see to_json above)
//   perplexity          {"original": x|null, "altered": x|null}
//   timing              {"runtime_seconds": t}; the only volatile field
inline json trace_record(const EvaluatedDocument& d) {
  return json{{"id", d.id},
              {"result", d.result},
              {"perplexity", {{"original", detail::opt(d.original_perplexity)},
                              {"altered", detail::opt(d.altered_perplexity)}}},
              {"timing", {{"runtime_seconds", d.runtime_seconds}}}};
}

inline EvaluatedDocument parse_trace_record(const json& j) {
  EvaluatedDocument d;
  j.at("id").get_to(d.id);
  j.at("result").get_to(d.result);
  d.original_perplexity = detail::opt_get<double>(j.at("perplexity"), "original");
  d.altered_perplexity = detail::opt_get<double>(j.at("perplexity"), "altered");
  if (j.contains("timing")) j.at("timing").at("runtime_seconds").get_to(d.runtime_seconds);
  return d;
}

inline json strip_volatile(json record) {
  record.erase("timing");
  return record;
}

// Drops the timing block from every line of a JSONL document.
inline std::string strip_volatile_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out += strip_volatile(json::parse(line)).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<EvaluatedDocument> read_jsonl(std::istream& in) {
  std::vector<EvaluatedDocument> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse_trace_record(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError("trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plain-text tables
// ---------------------------------------------------------------------------

inline std::string format_metric(const std::optional<double>& v, const char* fmt = "%.2f") {
  if (!v) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, *v);
  return buf;
}

inline std::string format_report_table(const MetricsReport& m) {
  const std::vector<std::pair<std::string, std::string>> cols = {
      {"FID", format_metric(m.fid)},  {"AWP", format_metric(m.awp)},   {"AVQ", format_metric(m.avq)},
      {"OPPL", format_metric(m.oppl)}, {"APPL", format_metric(m.appl)}, {"SIM", format_metric(m.sim)},
      {"CON", format_metric(m.con)},  {"RUNTIME", format_metric(m.runtime, "%.4f")},
      {"DOCS", std::to_string(m.attempted)}};
  std::string head, row;
  for (const auto& [name, value] : cols) {
    std::size_t w = std::max(name.size(), value.size()) + 2;
    head += std::string(w - name.size(), ' ') + name;
    row += std::string(w - value.size(), ' ') + value;
  }
  return head + "\n" + row + "\n";
}

inline std::string format_probe_table(const BiasProbeReport& r) {
  std::size_t width = 5;
  for (const auto& e : r.entries) width = std::max(width, e.model.size());
  std::string out = "model" + std::string(width - 5, ' ') + "  fidelity  bias\n";
  for (const auto& e : r.entries) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%8.1f", e.fidelity);
    out += e.model + std::string(width - e.model.size(), ' ') + "  " + buf + "  " + format_metric(e.bias_score) + "\n";
  }
  if (r.correlation) out += "correlation " + format_metric(r.correlation, "%.4f") + "\n";
  return out;
}

}  // namespace alterfactual
