#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace plopt {

using ClassId = std::int64_t;
using ImageId = std::int64_t;

// Sentinel class id for explicit background records. Real category ids in
// COCO-style files are non-negative.
inline constexpr ClassId kBackgroundClassId = -1;

// Input file could not be read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input file was readable but structurally invalid.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violated a documented value constraint (out-of-range score,
// dangling image reference, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke an API precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Severity { kWarning, kError };

struct Finding {
  Severity severity = Severity::kWarning;
  std::string message;
};

inline bool has_error(const std::vector<Finding>& findings) {
  for (const auto& f : findings) {
    if (f.severity == Severity::kError) return true;
  }
  return false;
}

}  // namespace plopt
