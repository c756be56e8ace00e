#pragma once

#include <stdexcept>
#include <string>

namespace gridloc {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Backend rejected the configured credentials; aborts the backend's lane.
class AuthError : public Error {
 public:
  explicit AuthError(const std::string& what) : Error(what) {}
};

/// A run was interrupted before all tasks completed (e.g. operator abort).
/// Completed work is already persisted in the cache journal.
class RunInterrupted : public Error {
 public:
  explicit RunInterrupted(const std::string& what) : Error(what) {}
};

}  // namespace gridloc
