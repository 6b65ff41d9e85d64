#pragma once

// Exact binary multivariate distributions on the open simplex and the
// conversions among p-, eta-, theta- and l-mixed coordinates.
//
// Layout: every coordinate vector has length 2^n and is indexed by subset mask
// (bit i-1 <=> x_i). Entry 0 is the null set: p(0...0) for tables, 1 for eta,
// 0 for theta. Mixed coordinates store their blocks ordered by (cardinality, mask).

#include "cif/types.hpp"

#include <vector>

namespace cif {

class Distribution {
 public:
  // Validates positivity and power-of-two length, then normalizes.
  static Distribution from_p(const ConstVecRef& table);

  int n() const { return n_; }
  Index size() const { return p_.size(); }
  const Vector& p() const { return p_; }
  Scalar operator[](Mask state) const { return p_(state); }

 private:
  Distribution(int n, Vector p) : n_(n), p_(std::move(p)) {}
  int n_ = 0;
  Vector p_;
};

struct EtaCoords {
  int n = 0;
  Vector eta;  // eta(I) = E[X_I]; eta(0) = 1

  Scalar operator()(Mask subset) const { return eta(subset); }
};

struct ThetaCoords {
  int n = 0;
  Vector theta;  // theta(0) = 0
  Scalar psi = 0;

  Scalar operator()(Mask subset) const { return theta(subset); }
};

// All nonempty subsets of {1..n}, ordered by (cardinality, mask).
std::vector<Mask> subsets_by_order(int n);
// Nonempty subsets with cardinality in [lo, hi], ordered by (cardinality, mask).
std::vector<Mask> subsets_with_order(int n, int lo, int hi);

struct MixedCoords {
  int n = 0;
  int l = 0;
  std::vector<Mask> low_labels;   // |I| <= l
  std::vector<Mask> high_labels;  // |I| > l
  Vector eta_low;
  Vector theta_high;
};

Distribution distribution_from_p(const ConstVecRef& table);

EtaCoords eta_from_p(const Distribution& d);
Distribution p_from_eta(const EtaCoords& e);

ThetaCoords theta_from_p(const Distribution& d);
// The psi carried by `t` is ignored; the normalizer is recomputed.
Distribution p_from_theta(const ThetaCoords& t);
// Convenience: theta vector of length 2^n (entry 0 ignored).
Distribution p_from_theta(int n, const ConstVecRef& theta);

Scalar psi_of(const ThetaCoords& t);
Scalar phi_of(const Distribution& d);

MixedCoords mixed_from_distribution(const Distribution& d, int l);

struct MixedSolveOptions {
  Scalar tolerance = 1e-8;  // required max |eta - target|
  int max_iterations = 500;
};

Distribution distribution_from_mixed(const MixedCoords& m, const MixedSolveOptions& opts = {});

Scalar kl_divergence(const Distribution& q, const Distribution& p);

// Generic max-entropy style solve used by the mixed and fractional-mixed
// reconstructions: free theta coordinates `free_labels` are solved so that
// eta over the same labels hits `targets`; every other theta is held at `theta_fixed`.
Distribution solve_eta_targets(int n, const std::vector<Mask>& free_labels, const ConstVecRef& targets,
                               const ConstVecRef& theta_fixed, const MixedSolveOptions& opts = {});

}  // namespace cif
