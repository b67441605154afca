#pragma once

#include <stdexcept>
#include <string>

namespace vrer {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension or shape mismatch between connected objects.
class StructuralError : public Error {
 public:
  using Error::Error;
};

class InvalidTapeError : public Error {
 public:
  using Error::Error;
};

class NonFiniteGradientError : public Error {
 public:
  using Error::Error;
};

class PolicyDegenerateError : public Error {
 public:
  using Error::Error;
};

class EpisodeFinishedError : public Error {
 public:
  using Error::Error;
};

class BatchIntegrityError : public Error {
 public:
  using Error::Error;
};

class CacheIncompleteError : public Error {
 public:
  using Error::Error;
};

class EmptyReuseError : public Error {
 public:
  using Error::Error;
};

class InsufficientSamplesError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace vrer
