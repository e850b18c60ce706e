#pragma once

#include <chrono>
#include <string>
#include <thread>
#include <utility>

#include <nlohmann/json.hpp>

#include "httplib.h"

#include "alterfactual/errors.hpp"

namespace alterfactual::http {

using json = nlohmann::json;

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds base_delay{200};
  std::chrono::milliseconds timeout{30000};
};

// Splits "https://host:port/prefix" into the client origin and a path prefix.
struct Endpoint {
  std::string origin;
  std::string prefix;

  static Endpoint parse(const std::string& url) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos) throw ConfigError("URL without scheme: " + url);
    auto slash = url.find('/', scheme + 3);
    Endpoint e;
    e.origin = url.substr(0, slash);
    if (slash != std::string::npos) e.prefix = url.substr(slash);
    while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
    return e;
  }
};

// Runs `call` up to policy.attempts times with exponential backoff. Only
// retryable OracleErrors are retried.
template <typename Call>
auto with_retries(const RetryPolicy& policy, Call&& call) -> decltype(call()) {
  auto delay = policy.base_delay;
  for (int attempt = 1;; ++attempt) {
    try {
      return call();
    } catch (const OracleError& e) {
      if (!e.retryable() || attempt >= policy.attempts) throw;
    }
    std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

namespace detail {

inline httplib::Client make_client(const Endpoint& ep, const RetryPolicy& policy) {
  httplib::Client cli(ep.origin);
  cli.set_connection_timeout(policy.timeout);
  cli.set_read_timeout(policy.timeout);
  cli.set_write_timeout(policy.timeout);
  return cli;
}

inline json parse_response(const httplib::Result& res, const std::string& what, const std::string& provenance) {
  if (!res) {
    throw OracleError(what + ": transport failure (" + httplib::to_string(res.error()) + ")", true, provenance);
  }
  if (res->status >= 500 || res->status == 429) {
    throw OracleError(what + ": HTTP " + std::to_string(res->status) + ": " + res->body, true, provenance);
  }
  if (res->status >= 400) {
    throw OracleError(what + ": HTTP " + std::to_string(res->status) + ": " + res->body, false, provenance);
  }
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw OracleError(what + ": malformed JSON response: " + e.what(), true, provenance);
  }
}

}  // namespace detail

// One attempt; callers wrap it in with_retries together with their own
// response validation so malformed payloads are retried too.
inline json post_json_once(const std::string& base_url, const std::string& path, const json& body,
                           const RetryPolicy& policy, const std::string& provenance,
                           const httplib::Headers& headers = {}) {
  auto ep = Endpoint::parse(base_url);
  auto cli = detail::make_client(ep, policy);
  auto res = cli.Post(ep.prefix + path, headers, body.dump(), "application/json");
  return detail::parse_response(res, "POST " + base_url + path, provenance);
}

inline json get_json_once(const std::string& base_url, const std::string& path, const httplib::Params& params,
                          const RetryPolicy& policy, const std::string& provenance) {
  auto ep = Endpoint::parse(base_url);
  auto cli = detail::make_client(ep, policy);
  auto res = cli.Get(ep.prefix + path, params, httplib::Headers{});
  return detail::parse_response(res, "GET " + base_url + path, provenance);
}

}  // namespace alterfactual::http
