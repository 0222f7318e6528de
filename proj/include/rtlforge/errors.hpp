#pragma once

#include <stdexcept>
#include <string>

namespace rtlforge {

// Root of every error the library throws. Each module adds a thin subclass so
// callers can route on type without parsing messages.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A documented precondition of an operation did not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// --- llm-gateway ---------------------------------------------------------

// Transient transport failure that survived every retry.
class TransportError : public Error {
 public:
  using Error::Error;
};

// 4xx-class refusal; never retried.
class BackendRefused : public Error {
 public:
  using Error::Error;
};

class ScriptExhausted : public Error {
 public:
  using Error::Error;
};

// --- verilog-harness -----------------------------------------------------

class ToolMissing : public Error {
 public:
  using Error::Error;
};

class ToolTimeout : public Error {
 public:
  using Error::Error;
};

class NoModuleFound : public Error {
 public:
  using Error::Error;
};

// --- agents --------------------------------------------------------------

class NoCodeBlock : public Error {
 public:
  using Error::Error;
};

class ParseFailure : public Error {
 public:
  using Error::Error;
};

class InterfaceMismatch : public Error {
 public:
  using Error::Error;
};

class SelfContainedDUT : public Error {
 public:
  using Error::Error;
};

class UnparsableVerdict : public Error {
 public:
  using Error::Error;
};

// --- evaluator -----------------------------------------------------------

class MissingSamples : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class DegenerateCentroid : public Error {
 public:
  using Error::Error;
};

}  // namespace rtlforge
