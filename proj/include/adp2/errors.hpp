#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace adp2 {

// Config validation failure carrying every problem found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> issues)
      : std::runtime_error(join(issues)), issues_(std::move(issues)) {}
  explicit ConfigError(const std::string& issue)
      : ConfigError(std::vector<std::string>{issue}) {}

  const std::vector<std::string>& issues() const { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& issues) {
    std::string out = "invalid config:";
    for (const auto& s : issues) out += "\n  - " + s;
    return out;
  }
  std::vector<std::string> issues_;
};

// A privacy bound was queried outside its validity regime. The message names
// the failed inequality with both sides; callers must not swallow this.
class RegimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The (eps, delta, mu) budget cannot be met; message names the violated
// feasibility constraint and both sides.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bounded-staleness guard tripped during a run.
class StalenessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace adp2
