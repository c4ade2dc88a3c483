#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpcert/common.hpp"

namespace gpcert {

// Column-per-point storage of (x_j, u_j, z_j) triples with optional string
// tags (episode / cluster provenance).  State dimension n and control
// dimension m are fixed at construction.
class Dataset {
 public:
  Dataset(int state_dim, int control_dim);

  int state_dim() const { return n_; }
  int control_dim() const { return m_; }
  int size() const { return static_cast<int>(outputs_.size()); }

  void append(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& u,
              double z, const std::string& tag = "");
  void append(const Dataset& other);

  VectorXd state(int j) const { return states_.col(j); }
  VectorXd control(int j) const { return controls_.col(j); }
  double output(int j) const { return outputs_[j]; }
  const std::string& tag(int j) const { return tags_[j]; }

  // Views of the first size() columns; the backing buffers grow geometrically.
  Eigen::Ref<const MatrixXd> states() const { return states_.leftCols(size()); }
  Eigen::Ref<const MatrixXd> controls() const { return controls_.leftCols(size()); }
  VectorXd outputs() const;

  Dataset subset(const std::vector<int>& indices) const;

  // FNV-1a over dims, raw value bits and tags; keys the correlation cache.
  std::uint64_t content_hash() const;

  // Plain-text round trip: header "n m", then one point per row with 17
  // significant digits, optional trailing tag token.
  void save(const std::string& path) const;
  static Dataset load(const std::string& path);

 private:
  void reserve(int capacity);

  int n_ = 0;
  int m_ = 0;
  MatrixXd states_;
  MatrixXd controls_;
  std::vector<double> outputs_;
  std::vector<std::string> tags_;
};

}  // namespace gpcert
