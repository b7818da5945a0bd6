#pragma once

// IBMF binary matrices.
//
//   bytes 0-3    magic "IBMF"
//   bytes 4-7    version, u32 LE
//   bytes 8-15   rows, u64 LE
//   bytes 16-23  cols, u64 LE
//   payload
//
// Version 1 is the feature interchange format: rows*cols float32 LE, row-major.
// Version 2 carries float64 LE and is used for checkpoints so that saved
// parameters reload bit-exactly. Version 3 is the sparse graph cache: a run of
// (row u64, col u64, value f32) triplets until end of file.

#include <cstdint>
#include <filesystem>

#include "ibmrec/matrix.hpp"

namespace ibmrec::ibmf {

inline constexpr std::uint32_t kFloat32Version = 1;
inline constexpr std::uint32_t kFloat64Version = 2;
inline constexpr std::uint32_t kSparseVersion = 3;
inline constexpr std::size_t kHeaderBytes = 24;

struct Header {
  std::uint32_t version = 0;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
};

Header read_header(const std::filesystem::path& path);

// Reads a dense matrix (version 1 or 2), widening to 64-bit.
Matrix read_matrix(const std::filesystem::path& path);

void write_matrix(const std::filesystem::path& path, const Matrix& m,
                  std::uint32_t version = kFloat32Version);

SparseMatrix read_sparse(const std::filesystem::path& path);
void write_sparse(const std::filesystem::path& path, const SparseMatrix& s);

}  // namespace ibmrec::ibmf
