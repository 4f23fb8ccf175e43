#pragma once

#include <stdexcept>
#include <string>

namespace heomcal {

// Base of every failure raised by the library. `module()` names the
// subsystem so the CLI can emit a structured error record.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(what), module_(std::move(module)) {}
  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("platform-config", what) {}
};

class IntegrationError : public Error {
 public:
  explicit IntegrationError(const std::string& what) : Error("dynamics-backends", what) {}
};

class FitError : public Error {
 public:
  explicit FitError(const std::string& what) : Error("fits", what) {}
};

class StatsError : public Error {
 public:
  explicit StatsError(const std::string& what) : Error("statistics", what) {}
};

class DagError : public Error {
 public:
  explicit DagError(const std::string& what) : Error("dag-executor", what) {}
};

class VerdictError : public Error {
 public:
  explicit VerdictError(const std::string& what) : Error("compare-verdicts", what) {}
};

class AuditError : public Error {
 public:
  explicit AuditError(const std::string& what) : Error("audits", what) {}
};

}  // namespace heomcal
