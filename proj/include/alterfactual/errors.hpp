#pragma once

#include <stdexcept>
#include <string>

namespace alterfactual {

// Failure of an external model or service. Retryable failures are transport
// errors and malformed payloads; the caller may try again.
class OracleError : public std::runtime_error {
 public:
  OracleError(const std::string& what, bool retryable = true, std::string provenance = {})
      : std::runtime_error(what), retryable_(retryable), provenance_(std::move(provenance)) {}

  bool retryable() const noexcept { return retryable_; }
  const std::string& provenance() const noexcept { return provenance_; }

 private:
  bool retryable_;
  std::string provenance_;
};

// A backend answered, but the answer breaks the oracle contract
// (probabilities outside [0,1], rows that do not sum to one, ...).
class ContractViolation : public OracleError {
 public:
  explicit ContractViolation(const std::string& what, std::string provenance = {})
      : OracleError(what, false, std::move(provenance)) {}
};

class UndefinedSimilarity : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ProviderUnavailable : public OracleError {
 public:
  explicit ProviderUnavailable(const std::string& what, std::string provenance = {})
      : OracleError(what, false, std::move(provenance)) {}
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidSubstitution : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class EmptyRanking : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// The input holds nothing the operation can act on (e.g. no target word).
class NotApplicable : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace alterfactual
