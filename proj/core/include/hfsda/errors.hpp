#pragma once

#include <stdexcept>
#include <string>

namespace hfsda {

// Base of every error raised by the library. Each subclass maps to one
// failure category so callers (the CLI in particular) can translate them
// into stable exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CorpusError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class EncoderUnavailable : public Error {
 public:
  using Error::Error;
};

class IncompatibleCheckpoint : public Error {
 public:
  using Error::Error;
};

class CorruptCheckpoint : public Error {
 public:
  using Error::Error;
};

class TrainingAborted : public Error {
 public:
  using Error::Error;
};

}  // namespace hfsda
