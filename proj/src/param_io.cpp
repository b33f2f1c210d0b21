#include "t2lc/param_io.hpp"

#include <fstream>
#include <sstream>

#include "t2lc/errors.hpp"
#include "t2lc/serialize.hpp"

namespace t2lc {
namespace {

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
  return std::filesystem::path(prefix.string() + suffix);
}

void write_entry(std::ostream& manifest, std::ostream& bin, const char* role, std::size_t group,
                 const Record& record) {
  manifest << role << ' ' << group;
  for (auto d : record.dims) manifest << ' ' << d;
  manifest << '\n';
  write_record(bin, record);
}

}  // namespace

void save_params(const std::filesystem::path& prefix, const GroupSpec& spec,
                 const TwoLevelParams& params) {
  params.validate(spec);
  std::ofstream manifest(with_suffix(prefix, ".manifest"));
  std::ofstream bin(with_suffix(prefix, ".bin"), std::ios::binary);
  if (!manifest || !bin) throw IngestError("cannot open parameter files at " + prefix.string());
  manifest << "t2lc-params 1\n";
  manifest << "spec " << spec.n << ' ' << spec.m << ' ' << spec.groups << ' ' << spec.d << ' '
           << spec.d0 << '\n';
  for (std::size_t k = 0; k < spec.groups; ++k)
    write_entry(manifest, bin, "local", k, to_record(params.local[k]));
  for (std::size_t k = 0; k < spec.groups; ++k)
    write_entry(manifest, bin, "coarse_restrict", k, to_record(params.coarse_restrict[k]));
  for (std::size_t k = 0; k < spec.groups; ++k)
    write_entry(manifest, bin, "coarse_mix", k, to_record(params.coarse_mix[k]));
}

LoadedParams load_params(const std::filesystem::path& prefix) {
  const auto manifest_path = with_suffix(prefix, ".manifest");
  std::ifstream manifest(manifest_path);
  std::ifstream bin(with_suffix(prefix, ".bin"), std::ios::binary);
  if (!manifest || !bin) throw IngestError("cannot open parameter files at " + prefix.string());

  std::string line;
  if (!std::getline(manifest, line) || line != "t2lc-params 1") {
    throw IngestError(manifest_path.string() + ": missing 't2lc-params 1' header");
  }
  LoadedParams out;
  {
    std::getline(manifest, line);
    std::istringstream ss(line);
    std::string tag;
    ss >> tag >> out.spec.n >> out.spec.m >> out.spec.groups >> out.spec.d >> out.spec.d0;
    if (tag != "spec" || !ss) throw IngestError(manifest_path.string() + ": bad spec line");
  }
  out.spec.validate();
  out.params.local.resize(out.spec.groups);
  out.params.coarse_restrict.resize(out.spec.groups);
  out.params.coarse_mix.resize(out.spec.groups);

  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestEntry entry;
    ss >> entry.role >> entry.group;
    std::uint32_t d = 0;
    while (ss >> d) entry.dims.push_back(d);
    if (entry.group >= out.spec.groups) {
      throw IngestError(manifest_path.string() + ": group index out of range in '" + line + "'");
    }
    const Record record = read_record(bin);
    if (record.dims != entry.dims) {
      throw IngestError(manifest_path.string() + ": record shape disagrees with manifest for '" +
                        line + "'");
    }
    if (entry.role == "local") {
      out.params.local[entry.group] = kernel_from_record(record);
    } else if (entry.role == "coarse_restrict") {
      out.params.coarse_restrict[entry.group] = kernel_from_record(record);
    } else if (entry.role == "coarse_mix") {
      out.params.coarse_mix[entry.group] = matrix_from_record(record);
    } else {
      throw IngestError(manifest_path.string() + ": unknown role '" + entry.role + "'");
    }
    out.manifest.push_back(std::move(entry));
  }
  try {
    out.params.validate(out.spec);
  } catch (const ConfigError& e) {
    throw IngestError(manifest_path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace t2lc
