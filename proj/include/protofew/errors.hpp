#pragma once

#include <stdexcept>
#include <string>

namespace protofew {

/// A caller broke an operation's precondition (shape, range, arity).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A NaN/Inf appeared where only finite values are allowed.
class NumericDomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing directories, unreadable or undecodable files.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structurally valid input whose content breaks a rule (e.g. split overlap).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An episodic protocol that the dataset cannot satisfy.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace protofew
