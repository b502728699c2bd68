#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hcim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense row-major tensor. Used for containers and checkpoints; the layers
/// compute on Eigen matrices and convert at the boundary.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor from_matrix(const Matrix& m);
  static Tensor from_vector(const Vector& v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  /// 2-D tensors map to rows x cols; 1-D tensors map to a column.
  Matrix to_matrix() const;
  Vector to_vector() const;

  std::size_t numel() const { return data.size(); }
  bool operator==(const Tensor& other) const = default;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

/// Named tensors with a checkpoint tag. std::map keeps names unique and the
/// iteration order stable.
struct ParameterSet {
  std::string tag;
  std::map<std::string, Tensor> tensors;

  std::size_t scalar_count() const;
  bool operator==(const ParameterSet& other) const = default;
};

}  // namespace hcim
