#include "hcim/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace hcim {

namespace {

constexpr std::array<char, 4> kMagic = {'H', 'C', 'N', 'T'};

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::uint64_t bits;
  if constexpr (sizeof(T) == 8) {
    bits = std::bit_cast<std::uint64_t>(value);
  } else {
    bits = static_cast<std::uint64_t>(std::bit_cast<std::uint32_t>(value));
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void read_bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != n) {
      throw FormatError("container truncated reading " + std::string(what) + " at offset " +
                        std::to_string(offset_) + ": expected " + std::to_string(n) +
                        " bytes, got " + std::to_string(got));
    }
    offset_ += n;
  }

  template <typename T>
  T get_le(const char* what) {
    std::array<unsigned char, sizeof(T)> bytes;
    read_bytes(reinterpret_cast<char*>(bytes.data()), bytes.size(), what);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    if constexpr (sizeof(T) == 8) {
      return std::bit_cast<T>(bits);
    } else {
      return std::bit_cast<T>(static_cast<std::uint32_t>(bits));
    }
  }

  std::string get_string(const char* what) {
    const auto n = get_le<std::uint32_t>(what);
    std::string s(n, '\0');
    read_bytes(s.data(), n, what);
    return s;
  }

  std::size_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

}  // namespace

void write_container(std::ostream& out, const ParameterSet& set) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kContainerVersion);
  put_string(out, set.tag);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.tensors.size()));
  for (const auto& [name, t] : set.tensors) {
    put_string(out, name);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (double v : t.data) put_le<double>(out, v);
  }
}

ParameterSet read_container(std::istream& in) {
  Reader r(in);
  std::array<char, 4> magic{};
  r.read_bytes(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw FormatError("bad container magic at offset 0");
  const auto version = r.get_le<std::uint32_t>("version");
  if (version != kContainerVersion)
    throw FormatError("unsupported container version " + std::to_string(version));
  ParameterSet set;
  set.tag = r.get_string("tag");
  const auto count = r.get_le<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string("tensor name");
    const auto ndim = r.get_le<std::uint32_t>("ndim");
    if (ndim > 8) throw FormatError("tensor '" + name + "' has implausible ndim at offset " +
                                    std::to_string(r.offset()));
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get_le<std::uint64_t>("dims"));
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = r.get_le<double>("tensor data");
    if (!set.tensors.emplace(name, Tensor(std::move(shape), std::move(data))).second)
      throw FormatError("duplicate tensor name '" + name + "'");
  }
  return set;
}

void save_container(const std::filesystem::path& path, const ParameterSet& set) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  write_container(out, set);
}

ParameterSet load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  return read_container(in);
}

std::size_t container_size(const ParameterSet& set) {
  std::size_t n = 4 + 4 + 4 + set.tag.size() + 4;
  for (const auto& [name, t] : set.tensors) n += 4 + name.size() + 4 + 8 * t.shape.size() + 8 * t.numel();
  return n;
}

}  // namespace hcim
