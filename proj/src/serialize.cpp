#include "t2lc/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "t2lc/errors.hpp"

namespace t2lc {
namespace {

constexpr std::array<char, 4> kMagic{'T', '2', 'L', 'C'};

void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b.data(), b.size());
}

void put_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  os.write(b.data(), b.size());
}

void read_exact(std::istream& is, char* dst, std::size_t n, const char* what) {
  const auto offset = static_cast<long long>(is.tellg());
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw IngestError(std::string("truncated tensor record while reading ") + what +
                      " at offset " + std::to_string(offset));
  }
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  std::array<unsigned char, 4> b{};
  read_exact(is, reinterpret_cast<char*>(b.data()), b.size(), what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::vector<std::uint32_t> dims_of(std::initializer_list<std::size_t> dims) {
  std::vector<std::uint32_t> out;
  for (std::size_t d : dims) out.push_back(static_cast<std::uint32_t>(d));
  return out;
}

}  // namespace

void write_record(std::ostream& os, const Record& record) {
  std::size_t count = 1;
  for (auto d : record.dims) count *= d;
  if (count != record.values.size()) throw ConfigError("record dims do not match value count");
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, kRecordVersion);
  put_u32(os, static_cast<std::uint32_t>(record.dims.size()));
  for (auto d : record.dims) put_u32(os, d);
  for (double v : record.values) put_f64(os, v);
  if (!os) throw IngestError("failed writing tensor record");
}

Record read_record(std::istream& is) {
  std::array<char, 4> magic{};
  read_exact(is, magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw IngestError("bad magic in tensor record");
  const std::uint32_t version = get_u32(is, "version");
  if (version != kRecordVersion) {
    throw IngestError("unsupported tensor record version " + std::to_string(version));
  }
  const std::uint32_t ndim = get_u32(is, "ndim");
  if (ndim > 8) throw IngestError("implausible ndim " + std::to_string(ndim));
  Record r;
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    r.dims.push_back(get_u32(is, "dims"));
    count *= r.dims.back();
  }
  std::vector<unsigned char> raw(count * 8);
  read_exact(is, reinterpret_cast<char*>(raw.data()), raw.size(), "values");
  r.values.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(raw[k * 8 + i]) << (8 * i);
    r.values[k] = std::bit_cast<double>(bits);
  }
  return r;
}

Record to_record(const Tensor& t) {
  Record r;
  if (t.is_batched()) {
    r.dims = dims_of({t.batch(), t.channels(), t.height(), t.width()});
  } else {
    r.dims = dims_of({t.channels(), t.height(), t.width()});
  }
  r.values.assign(t.values().begin(), t.values().end());
  return r;
}

Record to_record(const ConvKernel& k) {
  Record r;
  r.dims = dims_of({k.out_channels(), k.in_channels(), k.size(), k.size()});
  r.values.assign(k.weights().begin(), k.weights().end());
  return r;
}

Record to_record(const Matrix& m) {
  Record r;
  r.dims = dims_of({m.rows(), m.cols()});
  r.values.assign(m.entries().begin(), m.entries().end());
  return r;
}

Tensor tensor_from_record(const Record& r) {
  if (r.dims.size() == 3) {
    return Tensor(Shape{1, r.dims[0], r.dims[1], r.dims[2]}, false, r.values);
  }
  if (r.dims.size() == 4) {
    return Tensor(Shape{r.dims[0], r.dims[1], r.dims[2], r.dims[3]}, true, r.values);
  }
  throw IngestError("tensor record must have 3 or 4 dims, got " + std::to_string(r.dims.size()));
}

ConvKernel kernel_from_record(const Record& r) {
  if (r.dims.size() != 4 || r.dims[2] != r.dims[3]) {
    throw IngestError("kernel record must have dims (out, in, d, d)");
  }
  return ConvKernel(r.dims[0], r.dims[1], r.dims[2], r.values);
}

Matrix matrix_from_record(const Record& r) {
  if (r.dims.size() != 2) throw IngestError("matrix record must have 2 dims");
  return Matrix(r.dims[0], r.dims[1], r.values);
}

void save_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IngestError("cannot open " + path.string() + " for writing");
  write_record(os, to_record(tensor));
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestError("cannot open " + path.string());
  return tensor_from_record(read_record(is));
}

}  // namespace t2lc
