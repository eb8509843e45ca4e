#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace censavg {

// Error taxonomy shared by the whole pipeline. `kind` drives the CLI exit
// code; `module_name`/`operation` make every surfaced error traceable.
enum class ErrorKind {
    invalid_argument,      // caller violated a precondition
    ingestion,             // malformed input data (CSV, config values)
    config,                // unknown key, unusable configuration
    weight_undefined,      // IPCW weight has zero denominator
    degenerate_slicing,    // no usable slice boundary survives merging
    singular_design,       // candidate design matrix numerically singular
    leverage_one,          // an observation fully determines its own fit
    convergence_failure,   // weight solver hit its iteration cap
    infinite_fit,          // zero residual sum of squares in an IC weight
    undefined_metric,      // metric has an empty support (e.g. no events)
    unsupported_operation, // operation invoked outside its valid context
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, std::string module_name, std::string operation,
          const std::string& message)
        : std::runtime_error("censavg." + module_name + "." + operation + ": " + message),
          kind_(kind),
          module_(std::move(module_name)),
          operation_(std::move(operation)) {}

    ErrorKind kind() const { return kind_; }
    const std::string& module_name() const { return module_; }
    const std::string& operation() const { return operation_; }

  private:
    ErrorKind kind_;
    std::string module_;
    std::string operation_;
};

// Carries the last iterate so callers can inspect how far the solver got.
class ConvergenceError : public Error {
  public:
    ConvergenceError(std::string module_name, std::string operation,
                     const std::string& message, std::vector<double> last_iterate)
        : Error(ErrorKind::convergence_failure, std::move(module_name),
                std::move(operation), message),
          last_iterate_(std::move(last_iterate)) {}

    const std::vector<double>& last_iterate() const { return last_iterate_; }

  private:
    std::vector<double> last_iterate_;
};

}  // namespace censavg
