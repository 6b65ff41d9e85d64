#pragma once

// Boltzmann machine without hidden units: exact stationary distribution,
// sequential Gibbs dynamics and the ML / CD-1 / CD-CIF trainers.

#include "cif/random.hpp"
#include "cif/sample_set.hpp"
#include "cif/simplex.hpp"
#include "cif/train_config.hpp"

namespace cif {

struct SbmParams {
  int n = 0;
  Matrix U;  // symmetric, zero diagonal
  Vector b;

  static SbmParams zeros(int n);
  void validate() const;
};

// -1/2 x'Ux - b'x
Scalar sbm_energy(const SbmParams& p, const ConstVecRef& x);
Scalar sbm_energy(const SbmParams& p, Mask state);

// Exact Boltzmann distribution by enumeration (n <= 20).
Distribution sbm_stationary(const SbmParams& p);

// theta^{i} = b_i, theta^{ij} = U_ij, higher orders zero.
Vector sbm_theta_embedding(const SbmParams& p);

// One sequential sweep over units 1..n, each conditioned on the current values of the others.
Vector sbm_gibbs_step(const SbmParams& p, Vector x, Rng& rng);

// U = 0, b = logit of the smoothed empirical marginals clipped to +-4.
SbmParams sbm_initial_params(const SampleSet& data);

struct CifMask {
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> keep;  // symmetric, false on the diagonal
  Matrix fisher;  // F(U_ij) = E[x_i x_j] - E[x_i x_j]^2 under the smoothed sample
  Scalar total = 0;  // T_FI = sum_{i<j} F(U_ij)
  Scalar tau = 0;
  Scalar r = 0;
  int kept = 0;
};

CifMask cd_cif_mask(const SampleSet& data, Scalar r, CifRule rule = CifRule::Threshold);

using SbmResult = TrainResult<SbmParams>;

// `target`, when given, adds KL(target || model) to the trace. `init` replaces sbm_initial_params.
SbmResult sbm_train_ml(const SampleSet& data, const TrainConfig& cfg, const Distribution* target = nullptr,
                       const SbmParams* init = nullptr);
SbmResult sbm_train_cd1(const SampleSet& data, const TrainConfig& cfg, const Distribution* target = nullptr,
                        const SbmParams* init = nullptr);
// Requires cfg.cd_cif; without it behaves as CD-1. Masked weights of `init` are zeroed.
SbmResult sbm_train_cd_cif(const SampleSet& data, const TrainConfig& cfg, const Distribution* target = nullptr,
                           const SbmParams* init = nullptr);

// Draws `count` states with independent chains of `burn_in` sweeps from uniform starts.
SampleSet sbm_generate(const SbmParams& p, Index count, int burn_in, Rng& rng);

}  // namespace cif
