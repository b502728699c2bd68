#include "hcim/faces.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

namespace hcim {

namespace {

constexpr std::array<char, 5> kMagic{'O', 'L', 'I', 'V', '1'};
constexpr std::size_t kHeaderBytes = 5 + 3 * 4;

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

}  // namespace

std::size_t FacesDataset::identity_count() const {
  return std::set<int>(identities.begin(), identities.end()).size();
}

std::uint64_t FacesDataset::checksum() const { return hcim::checksum(pixels); }

FacesDataset read_faces(std::istream& in) {
  std::array<unsigned char, kHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), kHeaderBytes);
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got < kHeaderBytes)
    throw FormatError("faces: truncated header at offset " + std::to_string(got) + ": expected " +
                      std::to_string(kHeaderBytes) + " bytes, got " + std::to_string(got));
  if (std::memcmp(header.data(), kMagic.data(), kMagic.size()) != 0)
    throw FormatError("faces: bad magic at offset 0 (expected OLIV1)");
  const std::uint32_t count = le32(header.data() + 5);
  const std::uint32_t h = le32(header.data() + 9);
  const std::uint32_t w = le32(header.data() + 13);
  if (h == 0 || w == 0) throw FormatError("faces: zero image dimension at offset 9");
  const std::uint64_t per_image = static_cast<std::uint64_t>(h) * w;
  const std::uint64_t body = per_image * count;
  if (body > (std::uint64_t{1} << 34)) throw FormatError("faces: implausible size in header at offset 5");

  std::vector<unsigned char> bytes(body);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(body));
  const auto read = static_cast<std::uint64_t>(in.gcount());
  if (read != body)
    throw FormatError("faces: truncated pixel data at offset " + std::to_string(kHeaderBytes + read) +
                      ": expected " + std::to_string(kHeaderBytes + body) + " bytes, got " +
                      std::to_string(kHeaderBytes + read));

  FacesDataset f;
  f.height = h;
  f.width = w;
  f.pixels.resize(static_cast<Eigen::Index>(per_image), count);
  for (std::uint32_t i = 0; i < count; ++i)
    for (std::uint64_t p = 0; p < per_image; ++p)
      f.pixels(static_cast<Eigen::Index>(p), i) = bytes[i * per_image + p] / 255.0;
  // Olivetti order: identity-major, 10 images each; other counts label by 10s too.
  f.identities.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) f.identities[i] = static_cast<int>(i / 10);
  return f;
}

void write_faces(std::ostream& out, const FacesDataset& faces) {
  out.write(kMagic.data(), kMagic.size());
  put32(out, static_cast<std::uint32_t>(faces.size()));
  put32(out, faces.height);
  put32(out, faces.width);
  std::vector<char> bytes(static_cast<std::size_t>(faces.pixels.size()));
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < faces.pixels.cols(); ++i)
    for (Eigen::Index p = 0; p < faces.pixels.rows(); ++p)
      bytes[k++] = static_cast<char>(static_cast<unsigned char>(
          std::lround(std::clamp(faces.pixels(p, i), 0.0, 1.0) * 255.0)));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

FacesDataset load_faces(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open faces file " + path.string());
  return read_faces(in);
}

void save_faces(const std::filesystem::path& path, const FacesDataset& faces) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write faces file " + path.string());
  write_faces(out, faces);
}

namespace {

struct Blob {
  double x, y, sx, sy, amp;
};

struct Identity {
  double face_w, face_h, tone, hair;
  std::vector<Blob> features;
};

Identity make_identity(Rng& rng) {
  Identity id;
  id.face_w = rng.uniform(0.30, 0.40);
  id.face_h = rng.uniform(0.38, 0.46);
  id.tone = rng.uniform(0.45, 0.75);
  id.hair = rng.uniform(0.05, 0.35);
  const double eye_y = rng.uniform(0.38, 0.48);
  const double eye_dx = rng.uniform(0.10, 0.17);
  const double eye_s = rng.uniform(0.025, 0.045);
  const double brow = rng.uniform(-0.3, 0.1);
  id.features.push_back({0.5 - eye_dx, eye_y, eye_s, eye_s * 0.7, -0.45});
  id.features.push_back({0.5 + eye_dx, eye_y, eye_s, eye_s * 0.7, -0.45});
  id.features.push_back({0.5 - eye_dx, eye_y - 0.07, eye_s * 1.6, 0.015, brow});
  id.features.push_back({0.5 + eye_dx, eye_y - 0.07, eye_s * 1.6, 0.015, brow});
  id.features.push_back({0.5, rng.uniform(0.55, 0.62), 0.03, rng.uniform(0.04, 0.08), rng.uniform(0.05, 0.2)});
  id.features.push_back({0.5, rng.uniform(0.70, 0.78), rng.uniform(0.06, 0.11), 0.02, -0.35});
  for (int k = 0; k < 6; ++k)
    id.features.push_back({rng.uniform(0.25, 0.75), rng.uniform(0.2, 0.85), rng.uniform(0.04, 0.12),
                           rng.uniform(0.04, 0.12), rng.uniform(-0.15, 0.15)});
  return id;
}

}  // namespace

FacesDataset synthesize_faces(const SyntheticFaceConfig& cfg, std::uint64_t seed) {
  FacesDataset f;
  f.height = f.width = cfg.size;
  const auto n = static_cast<Eigen::Index>(cfg.identities) * cfg.images_per_identity;
  const auto s = static_cast<Eigen::Index>(cfg.size);
  f.pixels.resize(s * s, n);
  f.identities.resize(static_cast<std::size_t>(n));
  Rng root(seed);
  Eigen::Index col = 0;
  for (std::uint32_t i = 0; i < cfg.identities; ++i) {
    Rng id_rng = root.split(std::uint64_t{i});
    const Identity id = make_identity(id_rng);
    for (std::uint32_t k = 0; k < cfg.images_per_identity; ++k, ++col) {
      Rng img = id_rng.split(std::uint64_t{k} + 1000);
      const double dx = img.uniform(-cfg.max_shift, cfg.max_shift) / cfg.size;
      const double dy = img.uniform(-cfg.max_shift, cfg.max_shift) / cfg.size;
      const double gain = img.uniform(0.85, 1.15);
      const double light = img.uniform(-0.15, 0.15);  // left/right illumination
      const double expr = img.uniform(-0.3, 0.3);     // mouth/eye intensity
      for (Eigen::Index r = 0; r < s; ++r) {
        for (Eigen::Index c = 0; c < s; ++c) {
          const double y = (static_cast<double>(r) + 0.5) / s - dy;
          const double x = (static_cast<double>(c) + 0.5) / s - dx;
          const double ex = (x - 0.5) / id.face_w, ey = (y - 0.52) / id.face_h;
          const double inside = 1.0 / (1.0 + std::exp((ex * ex + ey * ey - 1.0) * 12.0));
          double v = 0.12 + inside * id.tone;
          if (y < 0.52 - id.face_h * 0.75) v += id.hair * inside;
          for (std::size_t b = 0; b < id.features.size(); ++b) {
            const Blob& bl = id.features[b];
            const double amp = b < 2 || b == 5 ? bl.amp * (1.0 + expr) : bl.amp;
            const double u = (x - bl.x) / bl.sx, w = (y - bl.y) / bl.sy;
            v += amp * std::exp(-0.5 * (u * u + w * w)) * inside;
          }
          v = v * gain + light * (x - 0.5) + img.normal(0.0, cfg.pixel_noise);
          f.pixels(r * s + c, col) = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
        }
      }
      f.identities[static_cast<std::size_t>(col)] = static_cast<int>(i);
    }
  }
  return f;
}

FaceSplit split_faces(const FacesDataset& faces, const std::vector<int>& ids,
                      std::size_t train_per_id, Rng& rng) {
  std::vector<std::size_t> train_idx, test_idx;
  std::vector<int> train_y, test_y;
  for (std::size_t label = 0; label < ids.size(); ++label) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < faces.size(); ++i)
      if (faces.identities[i] == ids[label]) idx.push_back(i);
    if (idx.empty()) throw std::invalid_argument("split_faces: identity " + std::to_string(ids[label]) + " not present");
    if (train_per_id >= idx.size())
      throw std::invalid_argument("split_faces: train_per_id leaves no test images for identity " +
                                  std::to_string(ids[label]));
    Rng stream = rng.split(static_cast<std::uint64_t>(ids[label]));
    stream.shuffle(std::span(idx));
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train_per_id));
    std::sort(idx.begin() + static_cast<std::ptrdiff_t>(train_per_id), idx.end());
    for (std::size_t j = 0; j < idx.size(); ++j) {
      (j < train_per_id ? train_idx : test_idx).push_back(idx[j]);
      (j < train_per_id ? train_y : test_y).push_back(static_cast<int>(label));
    }
  }
  auto build = [&](const std::vector<std::size_t>& idx, const std::vector<int>& y) {
    Dataset d;
    d.x.resize(faces.pixels.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j)
      d.x.col(static_cast<Eigen::Index>(j)) = faces.pixels.col(static_cast<Eigen::Index>(idx[j]));
    d.y = y;
    d.ids = idx;
    return d;
  };
  return {build(train_idx, train_y), build(test_idx, test_y)};
}

}  // namespace hcim
