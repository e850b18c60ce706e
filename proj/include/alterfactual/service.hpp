#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "alterfactual/config.hpp"
#include "alterfactual/evaluation.hpp"
#include "alterfactual/json_io.hpp"

namespace alterfactual {

enum class JobStatus { Queued, Running, Done, Failed };

inline std::string_view to_string(JobStatus s) {
  switch (s) {
    case JobStatus::Queued: return "queued";
    case JobStatus::Running: return "running";
    case JobStatus::Done: return "done";
    case JobStatus::Failed: return "failed";
  }
  return "queued";
}

struct JobRecord {
  std::string id;
  std::string kind;  // generate | targeted | probe
  RunConfig config;  // snapshot taken at submission
  std::vector<std::string> inputs;
  JobStatus status = JobStatus::Queued;
  std::string output_path;
  std::size_t queries = 0;
  std::string error;
};

inline void to_json(nlohmann::json& j, const JobRecord& r) {
  j = nlohmann::json{{"id", r.id},         {"kind", r.kind},         {"config", r.config},
                     {"inputs", r.inputs}, {"status", std::string(to_string(r.status))},
                     {"output_path", r.output_path}, {"queries", r.queries}, {"error", r.error}};
}

class JobRegistry {
 public:
  std::string submit(std::string kind, const RunConfig& cfg, std::vector<std::string> inputs) {
    std::lock_guard lock(mu_);
    char id[32];
    std::snprintf(id, sizeof id, "job-%06zu", ++counter_);
    JobRecord rec;
    rec.id = id;
    rec.kind = std::move(kind);
    rec.config = cfg;
    rec.inputs = std::move(inputs);
    jobs_[rec.id] = rec;
    return rec.id;
  }

  // Statuses only move forward: queued -> running -> done | failed.
  void advance(const std::string& id, JobStatus next, std::size_t queries = 0, std::string error = {}) {
    std::lock_guard lock(mu_);
    auto& rec = jobs_.at(id);
    bool ok = (rec.status == JobStatus::Queued && next == JobStatus::Running) ||
              (rec.status == JobStatus::Running && (next == JobStatus::Done || next == JobStatus::Failed));
    if (!ok) {
      throw std::logic_error("job " + id + ": illegal transition " + std::string(to_string(rec.status)) + " -> " +
                             std::string(to_string(next)));
    }
    rec.status = next;
    rec.queries = queries;
    rec.error = std::move(error);
  }

  std::optional<JobRecord> find(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, JobRecord> jobs_;
  std::size_t counter_ = 0;
};

// Field-level request error; becomes HTTP 400.
class BadRequest : public std::invalid_argument {
 public:
  BadRequest(std::string field, const std::string& what) : std::invalid_argument(what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct Reply {
  int status = 200;
  nlohmann::json body;
};

// HTTP API over one Engine. No authentication: a local audit tool.
//   POST /api/generate  {text, config?}            -> {job, queries, config, result}
//   POST /api/targeted  {text, targets, config?}   -> same; targets is a word list
//                                                    or a {word: opposite} map
//   GET  /api/config                               -> {queries: 0, config}
//   GET  /api/jobs/{id}                            -> {queries, job}
//   POST /api/probe     {texts, targets, models, bias_scores?, attribute?}
//                                                  -> {job, queries, report}
// Errors: 400 {error, field}; 502 {error, provenance, queries}.
class Service {
 public:
  static constexpr std::ptrdiff_t kMaxJobsCeiling = 64;

  Service(Engine engine, std::size_t max_jobs = 4)
      : engine_(std::move(engine)), slots_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(max_jobs, 1, kMaxJobsCeiling))) {}

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const Engine& engine() const { return engine_; }
  const JobRegistry& jobs() const { return jobs_; }

  Reply generate(const std::string& body) {
    return guarded([&] {
      auto req = parse_body(body);
      auto text = require_text(req);
      auto cfg = with_overrides(req);
      auto doc = engine_.document(text);
      return run_job("generate", cfg, {text}, [&] { return alterfactual::generate(doc, cfg, engine_.backends()); });
    });
  }

  Reply targeted(const std::string& body) {
    return guarded([&] {
      auto req = parse_body(body);
      auto text = require_text(req);
      auto cfg = with_overrides(req);
      if (!req.contains("targets")) throw BadRequest("targets", "targets is required");
      const auto& t = req.at("targets");
      std::shared_ptr<OppositeSource> source = engine_.opposites;
      std::set<std::string> words;
      if (t.is_array()) {
        for (const auto& w : t) {
          if (!w.is_string() || trim(w.get<std::string>()).empty()) throw BadRequest("targets", "targets must be non-empty strings");
          words.insert(lowercase(trim(w.get<std::string>())));
        }
      } else if (t.is_object()) {
        auto table = std::make_shared<OppositeLexicon>();
        for (const auto& [w, opp] : t.items()) {
          if (!opp.is_string()) throw BadRequest("targets", "opposite of '" + w + "' must be a string");
          table->add(lowercase(trim(w)), {opp.get<std::string>()});
          words.insert(lowercase(trim(w)));
        }
        source = std::make_shared<WordSource>(
            std::make_shared<LexiconOpposites>(std::shared_ptr<const OppositeLexicon>(table), "targets"));
      } else {
        throw BadRequest("targets", "targets must be a list of words or a {word: opposite} map");
      }
      if (words.empty()) throw BadRequest("targets", "targets is empty");
      cfg.target_words = words;
      auto doc = engine_.document(text);
      Backends b{*engine_.classifier, *engine_.similarity, *engine_.negativity, *engine_.tagger, *source};
      return run_job("targeted", cfg, {text}, [&] { return generate_targeted(doc, cfg, b); });
    });
  }

  Reply config() const { return {200, {{"queries", 0}, {"config", engine_.run}}}; }

  Reply job(const std::string& id) const {
    auto rec = jobs_.find(id);
    if (!rec) return {404, {{"error", "unknown job: " + id}, {"field", "id"}, {"queries", 0}}};
    return {200, {{"queries", rec->queries}, {"job", *rec}}};
  }

  Reply probe(const std::string& body) {
    return guarded([&] {
      auto req = parse_body(body);
      auto cfg = with_overrides(req);

      std::vector<std::string> texts;
      if (req.contains("texts")) {
        if (!req.at("texts").is_array()) throw BadRequest("texts", "texts must be a list of strings");
        for (const auto& t : req.at("texts")) {
          if (!t.is_string()) throw BadRequest("texts", "texts must be a list of strings");
          texts.push_back(t.get<std::string>());
        }
      } else if (req.contains("text")) {
        texts.push_back(require_text(req));
      }
      if (texts.empty()) throw BadRequest("texts", "at least one text is required");

      if (!req.contains("targets") || !req.at("targets").is_object() || req.at("targets").empty()) {
        throw BadRequest("targets", "targets must be a non-empty {word: opposite} map");
      }
      auto table = std::make_shared<OppositeLexicon>();
      for (const auto& [w, opp] : req.at("targets").items()) {
        if (!opp.is_string()) throw BadRequest("targets", "opposite of '" + w + "' must be a string");
        table->add(lowercase(trim(w)), {opp.get<std::string>()});
      }

      std::vector<std::pair<std::string, std::shared_ptr<ClassifierOracle>>> owned;
      if (!req.contains("models")) {
        owned.emplace_back("default", engine_.classifier);
      } else {
        const auto& models = req.at("models");
        if (!models.is_array() || models.empty() || models.size() > 2) {
          throw BadRequest("models", "models must list one or two {id, classifier} entries");
        }
        for (const auto& m : models) {
          if (!m.is_object() || !m.contains("id") || !m.contains("classifier") || !m.at("id").is_string() ||
              !m.at("classifier").is_string()) {
            throw BadRequest("models", "each model needs string fields id and classifier");
          }
          try {
            owned.emplace_back(m.at("id").get<std::string>(), make_classifier(m.at("classifier").get<std::string>(), {}));
          } catch (const ConfigError& e) {
            throw BadRequest("models", e.what());
          }
        }
      }
      std::map<std::string, double> scores;
      if (req.contains("bias_scores")) {
        if (!req.at("bias_scores").is_object()) throw BadRequest("bias_scores", "bias_scores must map model id to a number");
        for (const auto& [id, s] : req.at("bias_scores").items()) {
          if (!s.is_number()) throw BadRequest("bias_scores", "score for '" + id + "' must be a number");
          scores[id] = s.get<double>();
        }
      }
      std::string attribute = req.value("attribute", std::string("genders"));

      std::vector<ProbeModel> models;
      for (auto& [id, c] : owned) models.push_back({id, c.get()});
      std::vector<Document> docs;
      for (const auto& t : texts) docs.push_back(engine_.document(t));

      auto id = jobs_.submit("probe", cfg, texts);
      SlotGuard slot(slots_);
      jobs_.advance(id, JobStatus::Running);
      try {
        auto report = bias_probe(models, docs, table, cfg, {*engine_.similarity, *engine_.negativity, *engine_.tagger},
                                 scores, attribute);
        std::size_t queries = 0;
        for (const auto& e : report.entries) queries += e.queries;
        jobs_.advance(id, JobStatus::Done, queries);
        return Reply{200, {{"job", id}, {"queries", queries}, {"report", report}}};
      } catch (const NotApplicable& e) {
        jobs_.advance(id, JobStatus::Failed, 0, e.what());
        throw BadRequest("texts", e.what());
      } catch (const OracleError& e) {
        jobs_.advance(id, JobStatus::Failed, 0, e.what());
        return Reply{502, {{"job", id}, {"queries", 0}, {"error", e.what()}, {"provenance", e.provenance()}}};
      }
    });
  }

  void mount(httplib::Server& server) {
    auto send = [](httplib::Response& res, const Reply& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    server.Post("/api/generate", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, generate(req.body));
    });
    server.Post("/api/targeted", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, targeted(req.body));
    });
    server.Get("/api/config", [this, send](const httplib::Request&, httplib::Response& res) { send(res, config()); });
    server.Get(R"(/api/jobs/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, job(req.matches[1]));
    });
    server.Post("/api/probe", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, probe(req.body));
    });
  }

 private:
  using Semaphore = std::counting_semaphore<kMaxJobsCeiling>;

  struct SlotGuard {
    explicit SlotGuard(Semaphore& s) : sem(s) { sem.acquire(); }
    ~SlotGuard() { sem.release(); }
    Semaphore& sem;
  };

  template <class F>
  Reply guarded(F&& f) {
    try {
      return f();
    } catch (const BadRequest& e) {
      return {400, {{"error", e.what()}, {"field", e.field()}, {"queries", 0}}};
    } catch (const OracleError& e) {
      return {502, {{"error", e.what()}, {"provenance", e.provenance()}, {"queries", 0}}};
    } catch (const std::exception& e) {
      return {500, {{"error", e.what()}, {"queries", 0}}};
    }
  }

  static nlohmann::json parse_body(const std::string& body) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw BadRequest("body", std::string("body is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw BadRequest("body", "body must be a JSON object");
    return j;
  }

  static std::string require_text(const nlohmann::json& req) {
    if (!req.contains("text") || !req.at("text").is_string()) throw BadRequest("text", "text must be a string");
    auto text = req.at("text").get<std::string>();
    if (trim(text).empty()) throw BadRequest("text", "text is empty");
    return text;
  }

  // Per-request overrides of the search knobs. Provider settings are fixed
  // when the service starts.
  RunConfig with_overrides(const nlohmann::json& req) const {
    RunConfig cfg = engine_.run;
    if (!req.contains("config")) return cfg;
    const auto& o = req.at("config");
    if (!o.is_object()) throw BadRequest("config", "config must be an object");
    for (const auto& [key, v] : o.items()) {
      auto number = [&, key = key, v = v]() {
        if (!v.is_number()) throw BadRequest("config." + key, key + " must be a number");
        return v.get<double>();
      };
      if (key == "delta") {
        cfg.delta = number();
      } else if (key == "epsilon") {
        cfg.epsilon = number();
      } else if (key == "m") {
        if (v.is_null() || (v.is_string() && v.get<std::string>() == "unbounded")) {
          cfg.max_words.reset();
        } else if (v.is_number_unsigned()) {
          cfg.max_words = v.get<std::size_t>();
        } else {
          throw BadRequest("config.m", "m must be a non-negative integer or \"unbounded\"");
        }
      } else if (key == "mode") {
        try {
          cfg.mode = parse_mode(v.is_string() ? v.get<std::string>() : v.dump());
        } catch (const ConfigError& e) {
          throw BadRequest("config.mode", e.what());
        }
      } else if (key == "n_t" || key == "negation.n_t") {
        cfg.negation.threshold = number();
      } else if (key == "window" || key == "negation.window") {
        if (!v.is_number_unsigned()) throw BadRequest("config." + key, "window must be a positive integer");
        cfg.negation.window = v.get<std::size_t>();
      } else {
        throw BadRequest("config." + key, "config key '" + key + "' cannot be overridden per request");
      }
    }
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      throw BadRequest("config", e.what());
    }
    return cfg;
  }

  template <class Run>
  Reply run_job(const std::string& kind, const RunConfig& cfg, std::vector<std::string> inputs, Run&& run) {
    auto id = jobs_.submit(kind, cfg, std::move(inputs));
    SlotGuard slot(slots_);
    jobs_.advance(id, JobStatus::Running);
    AlterfactualResult result;
    try {
      result = run();
    } catch (const std::exception& e) {
      jobs_.advance(id, JobStatus::Failed, 0, e.what());
      throw;
    }
    if (result.aborted) {
      jobs_.advance(id, JobStatus::Failed, result.queries, result.error);
      return {502,
              {{"job", id},
               {"queries", result.queries},
               {"error", result.error},
               {"provenance", result.error_provenance},
               {"result", result}}};
    }
    jobs_.advance(id, JobStatus::Done, result.queries);
    return {200, {{"job", id}, {"queries", result.queries}, {"config", cfg}, {"result", result}}};
  }

  Engine engine_;
  JobRegistry jobs_;
  Semaphore slots_;
};

// Runs a Service on a background thread; used by `serve` and by tests.
class ServiceHost {
 public:
  explicit ServiceHost(Service& service) { service.mount(server_); }

  ~ServiceHost() { stop(); }

  // Binds and starts serving; port 0 picks a free port. Returns the port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  void wait() {
    if (thread_.joinable()) thread_.join();
  }

  void stop() {
    server_.stop();
    wait();
  }

 private:
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace alterfactual
