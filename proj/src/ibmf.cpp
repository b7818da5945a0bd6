#include "ibmrec/ibmf.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace ibmrec::ibmf {

namespace {

constexpr std::array<char, 4> kMagic = {'I', 'B', 'M', 'F'};

template <typename T>
void put_le(std::vector<char>& out, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.insert(out.end(), bytes.begin(), bytes.end());
}

template <typename T>
T get_le(const char* src) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), src, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

Header parse_header(const std::vector<char>& bytes, const std::filesystem::path& path) {
  if (bytes.size() < kHeaderBytes) {
    throw LengthError(path.string() + ": file shorter than the IBMF header");
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError(path.string() + ": bad magic, not an IBMF file");
  }
  Header h;
  h.version = get_le<std::uint32_t>(bytes.data() + 4);
  h.rows = get_le<std::uint64_t>(bytes.data() + 8);
  h.cols = get_le<std::uint64_t>(bytes.data() + 16);
  return h;
}

void put_header(std::vector<char>& out, std::uint32_t version, std::uint64_t rows, std::uint64_t cols) {
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_le(out, version);
  put_le(out, rows);
  put_le(out, cols);
}

}  // namespace

Header read_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<char> bytes(kHeaderBytes);
  in.read(bytes.data(), kHeaderBytes);
  bytes.resize(static_cast<std::size_t>(in.gcount()));
  return parse_header(bytes, path);
}

Matrix read_matrix(const std::filesystem::path& path) {
  const std::vector<char> bytes = slurp(path);
  const Header h = parse_header(bytes, path);
  std::size_t width = 0;
  if (h.version == kFloat32Version) {
    width = 4;
  } else if (h.version == kFloat64Version) {
    width = 8;
  } else {
    throw FormatError(path.string() + ": unsupported dense IBMF version " + std::to_string(h.version));
  }
  const std::uint64_t count = h.rows * h.cols;
  if (h.cols != 0 && count / h.cols != h.rows) throw FormatError(path.string() + ": shape overflow");
  const std::uint64_t expected = kHeaderBytes + count * width;
  if (bytes.size() != expected) {
    throw LengthError(path.string() + ": payload is " + std::to_string(bytes.size() - kHeaderBytes) +
                      " bytes, header promises " + std::to_string(count * width));
  }
  Matrix m(static_cast<Index>(h.rows), static_cast<Index>(h.cols));
  const char* src = bytes.data() + kHeaderBytes;
  double* dst = m.data();  // row-major storage matches the payload order
  for (std::uint64_t i = 0; i < count; ++i) {
    const double v = width == 4 ? static_cast<double>(get_le<float>(src + i * 4)) : get_le<double>(src + i * 8);
    if (!std::isfinite(v)) {
      throw DataError(path.string() + ": non-finite entry at row " + std::to_string(i / h.cols) +
                      ", col " + std::to_string(i % h.cols));
    }
    dst[i] = v;
  }
  return m;
}

void write_matrix(const std::filesystem::path& path, const Matrix& m, std::uint32_t version) {
  if (version != kFloat32Version && version != kFloat64Version) {
    throw ContractError("write_matrix: unsupported version " + std::to_string(version));
  }
  std::vector<char> out;
  const std::size_t width = version == kFloat32Version ? 4 : 8;
  out.reserve(kHeaderBytes + static_cast<std::size_t>(m.size()) * width);
  put_header(out, version, static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols()));
  for (Index i = 0; i < m.size(); ++i) {
    if (version == kFloat32Version) {
      put_le(out, static_cast<float>(m.data()[i]));
    } else {
      put_le(out, m.data()[i]);
    }
  }
  spill(path, out);
}

SparseMatrix read_sparse(const std::filesystem::path& path) {
  const std::vector<char> bytes = slurp(path);
  const Header h = parse_header(bytes, path);
  if (h.version != kSparseVersion) {
    throw FormatError(path.string() + ": expected sparse IBMF version 3, found " + std::to_string(h.version));
  }
  constexpr std::size_t kTriplet = 8 + 8 + 4;
  const std::size_t payload = bytes.size() - kHeaderBytes;
  if (payload % kTriplet != 0) throw LengthError(path.string() + ": truncated triplet payload");
  std::vector<Triplet> triplets;
  triplets.reserve(payload / kTriplet);
  for (std::size_t off = kHeaderBytes; off < bytes.size(); off += kTriplet) {
    const auto r = get_le<std::uint64_t>(bytes.data() + off);
    const auto c = get_le<std::uint64_t>(bytes.data() + off + 8);
    const double v = get_le<float>(bytes.data() + off + 16);
    if (r >= h.rows || c >= h.cols) throw DataError(path.string() + ": triplet index out of range");
    if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite triplet value");
    triplets.emplace_back(static_cast<Index>(r), static_cast<Index>(c), v);
  }
  SparseMatrix s(static_cast<Index>(h.rows), static_cast<Index>(h.cols));
  s.setFromTriplets(triplets.begin(), triplets.end(), [&](double, double) -> double {
    throw DataError(path.string() + ": duplicate triplet");
  });
  s.makeCompressed();
  return s;
}

void write_sparse(const std::filesystem::path& path, const SparseMatrix& s) {
  std::vector<char> out;
  put_header(out, kSparseVersion, static_cast<std::uint64_t>(s.rows()), static_cast<std::uint64_t>(s.cols()));
  for (Index r = 0; r < s.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(s, r); it; ++it) {
      put_le(out, static_cast<std::uint64_t>(it.row()));
      put_le(out, static_cast<std::uint64_t>(it.col()));
      put_le(out, static_cast<float>(it.value()));
    }
  }
  spill(path, out);
}

}  // namespace ibmrec::ibmf
