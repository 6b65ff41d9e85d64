#pragma once

#include "cif/types.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <variant>
#include <vector>

namespace cif {

struct ExactPhase {};

struct GibbsPhase {
  int steps = 1;
  int chains = 100;
};

using NegativePhase = std::variant<ExactPhase, GibbsPhase>;

// Which weights fire under CD-CIF.
enum class CifRule {
  Threshold,        // keep U_ij iff F(U_ij) > r * T_FI
  CumulativeShare,  // keep the highest-F weights until they carry r * T_FI
};

struct CifAuto {
  Scalar alpha = 35;
};

struct CifConfig {
  std::variant<Scalar, CifAuto> r = CifAuto{};
  CifRule rule = CifRule::Threshold;

  // r = max(0, 1 - alpha / N) under the automatic rule.
  Scalar resolve(Index sample_count) const {
    if (const auto* fixed = std::get_if<Scalar>(&r)) return *fixed;
    const Scalar alpha = std::get<CifAuto>(r).alpha;
    return std::max<Scalar>(0, 1 - alpha / static_cast<Scalar>(sample_count));
  }
};

enum class RateUnit {
  Mean,       // applied to sample-averaged statistics (one update per epoch)
  PerSample,  // applied to each presentation; the epoch update sums N of them
};

enum class GammaHMode { Exact, Sampled };
enum class GammaBMode { Exact, Cd };
enum class GammaBSolver { Gradient, Newton };

struct TrainConfig {
  Scalar learning_rate = 0.1;
  RateUnit rate_unit = RateUnit::Mean;
  bool half_over_n_rate = false;  // per-sample 0.5 / N
  int max_epochs = 1000;
  std::uint64_t seed = 0;
  NegativePhase negative_phase = ExactPhase{};
  std::optional<CifConfig> cd_cif;
  Scalar tolerance = 0;  // stop once the gradient max-norm falls below this; 0 runs every epoch
  int divergence_patience = 50;
  int trace_every = 1;

  // RBM
  int n_h = 5;
  Scalar init_scale = 0.01;
  int ip_iterations = 40;
  int ip_sub_epochs = 200;
  GammaHMode gamma_h = GammaHMode::Exact;
  GammaBMode gamma_b = GammaBMode::Exact;
  GammaBSolver gamma_b_solver = GammaBSolver::Gradient;
  Scalar gamma_b_tolerance = 1e-5;  // gradient max-norm that counts as converged

  // Sampling from a trained model when exact enumeration is unavailable.
  int generate_burn_in = 200;

  // Step applied to averaged statistics for a data set of `sample_count` rows.
  Scalar effective_rate(Index sample_count) const {
    if (half_over_n_rate) return 0.5;
    if (rate_unit == RateUnit::PerSample) return learning_rate * static_cast<Scalar>(sample_count);
    return learning_rate;
  }
};

struct TraceRow {
  int epoch = 0;
  Scalar kl_to_empirical = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar kl_to_target = std::numeric_limits<Scalar>::quiet_NaN();
};

template <typename Params>
struct TrainResult {
  Params params;
  std::vector<TraceRow> trace;
  int epochs_run = 0;
  bool diverged = false;
  Scalar resolved_r = std::numeric_limits<Scalar>::quiet_NaN();
};

}  // namespace cif
