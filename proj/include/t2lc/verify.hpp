#pragma once

// Property suites run by `t2lc verify`: operator identities, gradient checks
// and serial/distributed equivalence, each reported as metric vs threshold.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace t2lc::verify {

enum class Suite { algebra, gradients, distributed, all };

std::string_view suite_name(Suite s);
/// Throws ConfigError for unknown names.
Suite parse_suite(std::string_view name);

struct Check {
  std::string name;
  double metric = 0.0;
  double threshold = 0.0;  // passes when metric <= threshold
  bool passed = false;
  std::string detail;
};

struct Report {
  std::vector<Check> checks;

  bool passed() const;
  /// Null when every check passed.
  const Check* first_failure() const;
};

Report run(Suite suite, std::uint64_t seed);

std::vector<Check> algebra_checks(std::uint64_t seed);
std::vector<Check> gradient_checks(std::uint64_t seed);
std::vector<Check> distributed_checks(std::uint64_t seed);

}  // namespace t2lc::verify
