#pragma once

// Shared fixtures for the unit suites: deterministic random draws, small
// datasets, and scratch-file paths.

#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "gpcert/dataset.hpp"
#include "gpcert/kernels.hpp"

namespace testing {

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, int n, double lo = -1.0,
                                     double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

// SE hyperparameters with per-dimension lengthscales bounded away from zero.
inline gpcert::SeKernelParams random_se_params(std::mt19937_64& rng, int dim) {
  std::uniform_real_distribution<double> var(0.3, 2.0);
  std::uniform_real_distribution<double> len(0.5, 1.8);
  gpcert::SeKernelParams p;
  p.signal_variance = var(rng);
  p.lengthscales = Eigen::VectorXd(dim);
  for (int i = 0; i < dim; ++i) p.lengthscales[i] = len(rng);
  return p;
}

inline gpcert::AdpKernel random_adp_kernel(std::mt19937_64& rng, int state_dim,
                                           int control_dim) {
  std::vector<gpcert::SeKernelParams> gs;
  for (int c = 0; c < control_dim; ++c) gs.push_back(random_se_params(rng, state_dim));
  return gpcert::AdpKernel::squared_exponential(random_se_params(rng, state_dim),
                                                std::move(gs));
}

inline gpcert::Dataset random_dataset(std::mt19937_64& rng, int n, int m, int count,
                                      double spread = 1.5) {
  gpcert::Dataset data(n, m);
  std::normal_distribution<double> out(0.0, 1.0);
  for (int j = 0; j < count; ++j) {
    data.append(random_vector(rng, n, -spread, spread),
                random_vector(rng, m, -spread, spread), out(rng));
  }
  return data;
}

// Unique scratch path under the system temp dir; removed by the caller when
// cleanliness matters, otherwise left for the OS.
inline std::string scratch_path(const std::string& stem) {
  static std::mt19937_64 rng(std::random_device{}());
  auto dir = std::filesystem::temp_directory_path() / "gpcert_tests";
  std::filesystem::create_directories(dir);
  return (dir / (stem + "-" + std::to_string(rng()))).string();
}

}  // namespace testing
