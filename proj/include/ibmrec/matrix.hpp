#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace ibmrec {

using Index = Eigen::Index;

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using CsrMatrix = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

// Training precision is 64-bit throughout.
using Matrix = DenseMatrix<double>;
using Vector = DenseVector<double>;
using SparseMatrix = CsrMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Error taxonomy. The CLI maps ConfigError -> 2, DataError -> 3, NumericalError -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct IndexError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};
struct StructureError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct ParseError : DataError {
  using DataError::DataError;
};
struct FormatError : DataError {
  using DataError::DataError;
};
struct LengthError : DataError {
  using DataError::DataError;
};
struct NumericalError : Error {
  using Error::Error;
};

inline std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
  return shape_string(m.rows(), m.cols());
}

}  // namespace ibmrec
