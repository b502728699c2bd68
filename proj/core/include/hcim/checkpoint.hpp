#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "hcim/tensor.hpp"

namespace hcim {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Named-tensor container, version 1. All integers little-endian.
///
///   magic    "HCNT"                 4 bytes
///   version  u32 = 1
///   tag      u32 length + UTF-8 bytes
///   count    u32
///   count x { name: u32 length + bytes; ndim: u32; dims: ndim x u64;
///             data: numel x IEEE-754 binary64 }
///
/// Tensors are written in name order, so equal sets give equal bytes.
inline constexpr std::uint32_t kContainerVersion = 1;

void write_container(std::ostream& out, const ParameterSet& set);
ParameterSet read_container(std::istream& in);

void save_container(const std::filesystem::path& path, const ParameterSet& set);
ParameterSet load_container(const std::filesystem::path& path);

/// Byte size write_container would produce.
std::size_t container_size(const ParameterSet& set);

}  // namespace hcim
