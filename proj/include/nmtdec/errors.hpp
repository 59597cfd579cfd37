#pragma once

#include <stdexcept>
#include <string>

namespace nmtdec {

// Mismatched tensor dimensions passed to a kernel.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or truncated model/lexicon file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Structurally valid file whose contents are inconsistent (bad shapes, bad spec).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: token ids out of range, empty sentences, unparsable lines.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace nmtdec
