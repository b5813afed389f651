#pragma once

#include <stdexcept>
#include <string>

namespace gconv {

// Base class for every error this library raises on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/layer shapes do not line up.
struct DimensionError : Error {
  using Error::Error;
};

// A model or layer configuration violates an invariant (group divisibility,
// unknown preset, bad config file key, ...).
struct ConfigError : Error {
  using Error::Error;
};

// An integer id (token, position, segment, class) is out of range.
struct IndexError : Error {
  using Error::Error;
};

// An input value fails a semantic precondition (e.g. a target that is not a
// probability distribution).
struct ValidationError : Error {
  using Error::Error;
};

// A computation produced or encountered a non-finite value.
struct NumericError : Error {
  using Error::Error;
};

// A checkpoint stream does not look like a checkpoint (magic, version,
// implausible declared lengths).
struct FormatError : Error {
  using Error::Error;
};

// A checkpoint stream is recognizable but ends early or is damaged.
struct CorruptionError : Error {
  using Error::Error;
};

// A checkpoint's tensors disagree with the config stored next to them.
struct ConsistencyError : Error {
  using Error::Error;
};

// Filesystem-level failure, message carries the path.
struct StorageError : Error {
  using Error::Error;
};

}  // namespace gconv
