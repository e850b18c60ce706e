#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "alterfactual/config.hpp"
#include "alterfactual/evaluation.hpp"
#include "alterfactual/json_io.hpp"
#include "alterfactual/service.hpp"

namespace alterfactual::cli {

inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kBackendFailure = 3;

// One document per non-blank line.
inline std::vector<std::string> read_documents(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open input file: " + path);
  std::vector<std::string> docs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) docs.push_back(line);
  }
  return docs;
}

// Rows "word opposite [opposite...]".
inline std::shared_ptr<const OppositeLexicon> read_targets(const std::string& path) {
  auto table = std::make_shared<const OppositeLexicon>(OppositeLexicon::load(path));
  if (table->size() == 0) throw ConfigError("target word file is empty: " + path);
  return table;
}

struct CommonOptions {
  std::optional<std::string> config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;

  void attach(CLI::App& app) {
    app.add_option("--config", config_file, "Config file with `key = value` lines");
    app.add_option("--set", sets, "Override any config key (key=value), repeatable");
    const std::vector<std::pair<std::string, std::string>> named = {
        {"--classifier-url", "classifier.url"},   {"--classifier-model", "classifier.model"},
        {"--embed-url", "embed.url"},             {"--vectors", "vectors.path"},
        {"--provider", "provider"},               {"--lexicon", "lexicon.path"},
        {"--mode", "mode"},                       {"--delta", "delta"},
        {"--epsilon", "epsilon"},                 {"-m,--max-words", "m"},
        {"--omega-t", "omega_t"},                 {"--n-t", "negation.n_t"},
        {"--window", "negation.window"},          {"--negation-url", "negation.url"},
        {"--negation-lexicon", "negation_lexicon.path"}, {"--perplexity-url", "perplexity.url"},
        {"--unigrams", "unigrams.path"},          {"--cache", "cache.path"},
        {"--stopwords", "stopwords.path"},        {"--pos-lexicon", "pos_lexicon.path"},
        {"--conceptnet-url", "conceptnet.url"},   {"--llm-url", "llm.url"},
        {"--llm-model", "llm.model"},             {"--batch-size", "batch_size"},
        {"--retry-attempts", "retry.attempts"}};
    for (const auto& [flag, key] : named) {
      app.add_option_function<std::string>(
          flag, [this, key = key](const std::string& v) { flags[key] = v; }, "Sets " + key);
    }
  }

  ServiceConfig resolve() const {
    auto values = flags;
    for (const auto& s : sets) {
      auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      values[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
    }
    return ServiceConfig::resolve(config_file, values);
  }
};

inline void write_report(const MetricsReport& report, const std::string& path, std::ostream& out) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write report: " + path);
  f << nlohmann::json(report).dump(2) << "\n";
  out << format_report_table(report);
}

struct GenerateOptions {
  std::string in;
  std::string out;
  std::string report;
  std::string targets;
  std::string method = "substitution";
};

inline int run_generate(const CommonOptions& common, const GenerateOptions& opt, std::ostream& out,
                        std::ostream& err) {
  Engine engine;
  std::vector<std::string> texts;
  std::shared_ptr<OppositeSource> target_source;
  try {
    engine = Engine::build(common.resolve());
    texts = read_documents(opt.in);
    if (texts.empty()) throw ConfigError("input file has no documents: " + opt.in);
    if (opt.method != "substitution" && opt.method != "deletion") {
      throw ConfigError("--method must be substitution or deletion");
    }
    if (!opt.targets.empty()) {
      auto table = read_targets(opt.targets);
      engine.run.target_words = std::set<std::string>(table->words().begin(), table->words().end());
      target_source = std::make_shared<WordSource>(std::make_shared<LexiconOpposites>(table, "targets"));
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  std::ofstream trace(opt.out, std::ios::trunc);
  if (!trace) {
    err << "config error: cannot write output file: " << opt.out << "\n";
    return kConfigError;
  }

  Backends effective{*engine.classifier, *engine.similarity, *engine.negativity, *engine.tagger,
                     target_source ? *target_source : *engine.opposites};

  std::vector<EvaluatedDocument> records;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    EvaluatedDocument rec;
    rec.id = i;
    auto doc = engine.document(texts[i]);
    auto started = std::chrono::steady_clock::now();
    if (opt.method == "deletion") {
      rec.result = input_reduction_baseline(doc, engine.run, *engine.classifier, *engine.similarity);
    } else if (engine.run.target_words) {
      rec.result = generate_targeted(doc, engine.run, effective);
    } else {
      rec.result = generate(doc, engine.run, effective);
    }
    rec.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (engine.perplexity && rec.result.success) {
      try {
        rec.original_perplexity = engine.perplexity->perplexity(rec.result.original.raw);
        rec.altered_perplexity = engine.perplexity->perplexity(rec.result.altered.raw);
      } catch (const std::exception& e) {
        err << "warning: perplexity unavailable for document " << i << ": " << e.what() << "\n";
        rec.original_perplexity.reset();
        rec.altered_perplexity.reset();
      }
    }
    trace << trace_record(rec).dump() << "\n";
    trace.flush();
    if (rec.result.aborted) {
      err << "backend failure on document " << i << " (" << rec.result.error_provenance << "): " << rec.result.error
          << "\n";
      return kBackendFailure;
    }
    records.push_back(std::move(rec));
  }

  try {
    auto report = summarize(records);
    write_report(report, opt.report.empty() ? opt.out + ".report.json" : opt.report, out);
  } catch (const NotApplicable&) {
    err << "no document contains a target word; no report written\n";
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  return kOk;
}

struct ProbeOptions {
  std::vector<std::string> models;  // id=url-or-model-file
  std::string targets;
  std::string in;
  std::string bias_scores;
  std::string attribute = "genders";
  std::string out;
};

inline int run_bias_probe(const CommonOptions& common, const ProbeOptions& opt, std::ostream& out,
                          std::ostream& err) {
  try {
    auto engine = Engine::build(common.resolve(), false);
    if (opt.models.empty()) throw ConfigError("at least one --model id=endpoint is required");
    auto retry = common.resolve().retry();
    std::vector<std::pair<std::string, std::shared_ptr<ClassifierOracle>>> owned;
    for (const auto& m : opt.models) {
      auto eq = m.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == m.size()) {
        throw ConfigError("--model expects id=endpoint, got '" + m + "'");
      }
      owned.emplace_back(m.substr(0, eq), make_classifier(m.substr(eq + 1), retry));
    }
    auto targets = read_targets(opt.targets);
    auto texts = read_documents(opt.in);
    std::map<std::string, double> scores;
    if (!opt.bias_scores.empty()) scores = load_bias_scores(opt.bias_scores);

    std::vector<ProbeModel> models;
    for (auto& [id, c] : owned) models.push_back({id, c.get()});
    std::vector<Document> docs;
    for (const auto& t : texts) docs.push_back(engine.document(t));

    BiasProbeReport report;
    try {
      report = bias_probe(models, docs, targets, engine.run, {*engine.similarity, *engine.negativity, *engine.tagger},
                          scores, opt.attribute);
    } catch (const NotApplicable& e) {
      throw ConfigError(std::string(e.what()) + " (" + opt.in + ")");
    }
    auto j = nlohmann::json(report);
    if (!opt.out.empty()) {
      std::ofstream f(opt.out);
      if (!f) throw ConfigError("cannot write report: " + opt.out);
      f << j.dump(2) << "\n";
    } else {
      out << j.dump(2) << "\n";
    }
    out << format_probe_table(report);
    for (const auto& e : report.entries) out << e.model << ": " << e.explanation << "\n";
    return kOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const OracleError& e) {
    err << "backend failure (" << e.provenance() << "): " << e.what() << "\n";
    return kBackendFailure;
  }
}

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t jobs = 4;
};

inline int run_serve(const CommonOptions& common, const ServeOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    Service service(Engine::build(common.resolve()), opt.jobs);
    ServiceHost host(service);
    int port = host.start(opt.host, opt.port);
    out << "listening on http://" << opt.host << ":" << port << "\n" << std::flush;
    host.wait();
    return kOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  }
}

// args excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Audit text classifiers with meaning-flipping word swaps that leave the decision unchanged"};
  app.require_subcommand(1);

  CommonOptions common;
  GenerateOptions gen;
  ProbeOptions probe;
  ServeOptions serve;

  auto* g = app.add_subcommand("generate", "Run the search over a document file and write JSONL traces");
  common.attach(*g);
  g->add_option("--in", gen.in, "Input documents, one per line")->required();
  g->add_option("--out", gen.out, "Output JSONL trace file")->required();
  g->add_option("--report", gen.report, "Report JSON path (default: <out>.report.json)");
  g->add_option("--targets", gen.targets, "Target word file; restricts swaps to these words");
  g->add_option("--method", gen.method, "substitution (default) or deletion");

  auto* b = app.add_subcommand("bias-probe", "Compare models' fidelity under target-word swaps");
  common.attach(*b);
  b->add_option("--model", probe.models, "Model as id=url-or-model-file, repeatable")->required();
  b->add_option("--targets", probe.targets, "Target word file, rows 'word opposite'")->required();
  b->add_option("--in", probe.in, "Input documents, one per line")->required();
  b->add_option("--bias-scores", probe.bias_scores, "Two-column file: model id, bias score");
  b->add_option("--attribute", probe.attribute, "Attribute name used in the explanation text");
  b->add_option("--out", probe.out, "Report JSON path (default: stdout)");

  auto* s = app.add_subcommand("serve", "Start the HTTP API");
  common.attach(*s);
  s->add_option("--host", serve.host, "Bind address");
  s->add_option("--port", serve.port, "Port (0 picks a free one)");
  s->add_option("--jobs", serve.jobs, "Concurrent job limit");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kConfigError;
  }

  if (g->parsed()) return run_generate(common, gen, out, err);
  if (b->parsed()) return run_bias_probe(common, probe, out, err);
  return run_serve(common, serve, out, err);
}

}  // namespace alterfactual::cli
