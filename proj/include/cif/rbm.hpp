#pragma once

// Restricted Boltzmann machine at desk scale: exact joint and marginal
// tables, conditionals, the two projections used by iterative projection,
// and the ML / CD-1 / IP trainers.
//
// Joint states pack x into the low n_x bits and h into the next n_h bits.

#include "cif/random.hpp"
#include "cif/sample_set.hpp"
#include "cif/simplex.hpp"
#include "cif/train_config.hpp"

#include <optional>
#include <vector>

namespace cif {

struct RbmParams {
  int n_x = 0;
  int n_h = 0;
  Matrix W;  // n_x x n_h
  Vector b;  // visible biases
  Vector d;  // hidden biases

  static RbmParams zeros(int n_x, int n_h);
  void validate() const;
};

struct JointDistribution {
  int n_x = 0;
  int n_h = 0;
  Distribution p;

  Distribution marginal_x() const;
  Distribution marginal_h() const;
};

// Sufficient statistics of the RBM family: E[x_i], E[h_j], E[x_i h_j].
struct RbmMoments {
  Vector x;
  Vector h;
  Matrix xh;

  Scalar max_abs_diff(const RbmMoments& o) const;
};

JointDistribution rbm_joint(const RbmParams& p);
// Visible marginal by summing out h analytically (n_x <= 20).
Distribution rbm_marginal(const RbmParams& p);
// log Z of the joint model.
Scalar rbm_log_partition(const RbmParams& p);
// theta-coordinates of the joint implied by (W, b, d); every other coordinate is zero.
Vector rbm_theta_embedding(const RbmParams& p);

Vector rbm_cond_h_given_x(const RbmParams& p, const ConstVecRef& x);
Vector rbm_cond_x_given_h(const RbmParams& p, const ConstVecRef& h);

RbmMoments rbm_model_moments(const RbmParams& p);
RbmMoments joint_moments(const JointDistribution& q);

// q(x, h) = q_x(x) * prod_j f(h_j | x) under p.
JointDistribution gamma_h(const RbmParams& p, const Distribution& q_x);

struct GammaBReport {
  int epochs = 0;
  Scalar gradient_max = 0;
  bool converged = false;
};

// Projection of q onto the RBM family; starts from `start` (warm start) or zeros.
RbmParams gamma_b(const JointDistribution& q, const TrainConfig& cfg, const RbmParams* start = nullptr,
                  GammaBReport* report = nullptr, Rng* rng = nullptr);
// Same projection when only the target moments are known.
RbmParams gamma_b_moments(const RbmMoments& target, const RbmParams& start, const TrainConfig& cfg,
                          GammaBReport* report = nullptr);

// Order-1 eta, within-group order-2 theta, cross order-2 eta, higher-order theta.
struct FractionalMixed {
  int n_x = 0;
  int n_h = 0;
  std::vector<Mask> eta_labels;    // order-1 labels then cross (x_i, h_j) labels
  Vector eta;
  std::vector<Mask> theta_labels;  // within-x pairs, within-h pairs, orders > 2
  Vector theta;
};

FractionalMixed fractional_mixed_from_joint(const JointDistribution& q);
JointDistribution joint_from_fractional_mixed(const FractionalMixed& m, const MixedSolveOptions& opts = {});

// W uniform in [-init_scale, init_scale], b = clipped empirical logits, d = 0.
RbmParams rbm_initial_params(const SampleSet& data, int n_h, Scalar init_scale, Rng& rng);

struct IpTraceRow {
  int iteration = 0;
  Scalar d_q_to_prev_p = 0;
  Scalar d_q_to_new_p = 0;
  Scalar kl_marginal_to_empirical = 0;
  Scalar kl_to_target = std::numeric_limits<Scalar>::quiet_NaN();
};

struct IpResult {
  RbmParams params;
  std::vector<IpTraceRow> trace;
  std::vector<RbmParams> history;  // params after each iteration
  int iterations_run = 0;
};

// Iterative projection against a fixed visible distribution q_x.
IpResult rbm_train_ip(const Distribution& q_x, const RbmParams& p0, int iterations, const TrainConfig& cfg,
                      const Distribution* target = nullptr);
// From samples: q_x is the smoothed empirical distribution, or the sampled pairs in sampled-Gamma_H mode.
IpResult rbm_train_ip(const SampleSet& data, const RbmParams& p0, int iterations, const TrainConfig& cfg,
                      const Distribution* target = nullptr);

struct BestIp {
  int iteration = 0;
  RbmParams params;
  Scalar kl_marginal_to_empirical = 0;
};

// Iteration with the lowest KL(empirical || model marginal).
BestIp best_ip_select(const IpResult& run);

using RbmResult = TrainResult<RbmParams>;

RbmResult rbm_train_ml(const SampleSet& data, const TrainConfig& cfg, const Distribution* target = nullptr);
RbmResult rbm_train_cd1(const SampleSet& data, const TrainConfig& cfg, const Distribution* target = nullptr);

// Exact log-likelihood gradient of the data under p, used by tests and the ML trainer.
RbmMoments rbm_likelihood_gradient(const RbmParams& p, const Distribution& q_x);

// `count` visible states from independent blocked-Gibbs chains after `burn_in` steps.
SampleSet rbm_generate(const RbmParams& p, Index count, int burn_in, Rng& rng);

}  // namespace cif
