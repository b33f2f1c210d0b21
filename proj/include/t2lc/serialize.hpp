#pragma once

// Binary tensor records.
//
//   offset  size      field
//   0       4         magic "T2LC"
//   4       4         version (u32, currently 1)
//   8       4         ndim (u32)
//   12      4*ndim    dims (u32 each, outermost first)
//   ...     8*prod    IEEE-754 binary64 values in row-major order
//
// All integers and doubles are little-endian regardless of host order.
// Unbatched tensors are stored with ndim 3 (C, H, W), batched ones with
// ndim 4 (B, C, H, W), kernels with ndim 4 (out, in, d, d) and matrices
// with ndim 2.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "t2lc/tensor.hpp"

namespace t2lc {

inline constexpr std::uint32_t kRecordVersion = 1;

struct Record {
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  bool operator==(const Record&) const = default;
};

void write_record(std::ostream& os, const Record& record);
Record read_record(std::istream& is);

Record to_record(const Tensor& tensor);
Record to_record(const ConvKernel& kernel);
Record to_record(const Matrix& matrix);
Tensor tensor_from_record(const Record& record);
ConvKernel kernel_from_record(const Record& record);
Matrix matrix_from_record(const Record& record);

void save_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace t2lc
