#pragma once

#include <cstdint>
#include <vector>

#include "gpcert/dataset.hpp"
#include "gpcert/gp.hpp"
#include "gpcert/selection.hpp"

namespace gpcert::bench {

struct NoiseSweepConfig {
  std::vector<double> noise_scales;
  std::vector<double> eps_grid;
  int M = 40;
  int state_samples = 32;
  VectorXd sample_lo = (VectorXd(2) << -1.0, 0.0).finished();
  VectorXd sample_hi = (VectorXd(2) << 0.0, 1.0).finished();
  std::uint64_t seed = 0;
  SeKernelParams f_params;
  std::vector<SeKernelParams> g_params;
};

struct NoiseSweepRow {
  double noise_scale = 0.0;
  double epsilon = 0.0;
  double zeta = 0.0;
  int skipped = 0;
};

// For each noise scale: corrupt the outputs with uniform noise of that
// amplitude, refit with matching noise stddev, and trace the mean selection
// quality over random query states per epsilon.
std::vector<NoiseSweepRow> noise_sweep(const Dataset& base, const NoiseSweepConfig& cfg,
                                       const DirectionFn& direction = {});

// argmax-epsilon per noise scale, the quantity whose trend the sweep studies.
std::vector<std::pair<double, double>> best_epsilon_per_scale(
    const std::vector<NoiseSweepRow>& rows);

}  // namespace gpcert::bench
