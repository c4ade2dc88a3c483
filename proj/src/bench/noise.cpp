#include "gpcert/bench/noise.hpp"

#include <random>

namespace gpcert::bench {

std::vector<NoiseSweepRow> noise_sweep(const Dataset& base, const NoiseSweepConfig& cfg,
                                       const DirectionFn& direction) {
  if (cfg.noise_scales.empty() || cfg.eps_grid.empty()) {
    throw UsageError("noise_sweep: empty scale or epsilon grid");
  }
  for (double s : cfg.noise_scales) {
    if (!(s > 0.0)) {
      throw UsageError("noise_sweep: noise scales must be positive");
    }
  }
  if (cfg.state_samples < 1) {
    throw UsageError("noise_sweep: need at least one state sample");
  }

  std::vector<NoiseSweepRow> rows;
  rows.reserve(cfg.noise_scales.size() * cfg.eps_grid.size());

  for (double scale : cfg.noise_scales) {
    // Fresh generators per scale keep each row independent of grid order.
    std::mt19937_64 rng(cfg.seed ^ std::hash<double>{}(scale));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    Dataset noisy(base.state_dim(), base.control_dim());
    for (int j = 0; j < base.size(); ++j) {
      noisy.append(base.state(j), base.control(j), base.output(j) + scale * unit(rng),
                   base.tag(j));
    }
    const GpModel model =
        GpModel::fit(AdpKernel::squared_exponential(cfg.f_params, cfg.g_params),
                     std::move(noisy), scale * scale);

    std::vector<VectorXd> states;
    states.reserve(cfg.state_samples);
    for (int k = 0; k < cfg.state_samples; ++k) {
      VectorXd x(cfg.sample_lo.size());
      for (Eigen::Index d = 0; d < x.size(); ++d) {
        x[d] = cfg.sample_lo[d] +
               0.5 * (unit(rng) + 1.0) * (cfg.sample_hi[d] - cfg.sample_lo[d]);
      }
      states.push_back(std::move(x));
    }

    const auto curve = selection_quality_curve(model, states, cfg.eps_grid, cfg.M,
                                               direction);
    for (const auto& point : curve) {
      NoiseSweepRow row;
      row.noise_scale = scale;
      row.epsilon = point.epsilon;
      row.zeta = point.zeta;
      row.skipped = point.skipped;
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<std::pair<double, double>> best_epsilon_per_scale(
    const std::vector<NoiseSweepRow>& rows) {
  std::vector<std::pair<double, double>> best;
  double best_zeta = 0.0;
  for (const auto& row : rows) {
    if (best.empty() || best.back().first != row.noise_scale) {
      best.emplace_back(row.noise_scale, row.epsilon);
      best_zeta = row.zeta;
    } else if (row.zeta > best_zeta) {
      best.back().second = row.epsilon;
      best_zeta = row.zeta;
    }
  }
  return best;
}

}  // namespace gpcert::bench
