#pragma once

// Two-level parameter files: `<prefix>.manifest` (text) plus `<prefix>.bin`
// (concatenated tensor records, see serialize.hpp).
//
// Manifest layout:
//   t2lc-params 1
//   spec <n> <m> <groups> <d> <d0>
//   <role> <group> <dim0> <dim1> ...        one line per record, in file order
//
// Roles are `local`, `coarse_restrict` and `coarse_mix`.

#include <filesystem>
#include <string>
#include <vector>

#include "t2lc/conv_ops.hpp"

namespace t2lc {

struct ManifestEntry {
  std::string role;
  std::size_t group = 0;
  std::vector<std::uint32_t> dims;

  bool operator==(const ManifestEntry&) const = default;
};

void save_params(const std::filesystem::path& prefix, const GroupSpec& spec,
                 const TwoLevelParams& params);

struct LoadedParams {
  GroupSpec spec;
  TwoLevelParams params;
  std::vector<ManifestEntry> manifest;
};

LoadedParams load_params(const std::filesystem::path& prefix);

}  // namespace t2lc
