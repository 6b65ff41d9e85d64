#pragma once

// Closed-form Fisher information in theta, eta and l-mixed coordinates,
// CIF tailoring, and a brute-force score-covariance oracle.

#include "cif/random.hpp"
#include "cif/simplex.hpp"

#include <string>
#include <vector>

namespace cif {

enum class CoordSystem { Theta, Eta, Mixed };

std::string to_string(CoordSystem s);
CoordSystem coord_system_from_string(const std::string& s);

struct FisherMatrix {
  CoordSystem system = CoordSystem::Theta;
  int order = 0;              // l for the mixed system, 0 otherwise
  std::vector<Mask> labels;   // row/column subset for each coordinate
  Matrix m;

  std::string system_name() const;
};

// g_IJ = eta_{I u J} - eta_I eta_J; labels in increasing mask order.
FisherMatrix fisher_theta(const Distribution& d);

// g^IJ = sum_{K subset of I n J} (-1)^{|I-K| + |J-K|} / p_K, the null set included.
FisherMatrix fisher_eta(const Distribution& d);

// Block-diagonal G_zeta: A = ((G_eta^-1)_{low})^-1, B = ((G_theta^-1)_{high})^-1.
// Labels ordered by (cardinality, mask), so the A block comes first.
FisherMatrix fisher_mixed(const Distribution& d, int l);

FisherMatrix fisher(const Distribution& d, CoordSystem system, int l);

// Zeros the theta block above order l and reconstructs.
Distribution cif_tailor(const Distribution& d, int l);

struct InformationRatios {
  Scalar loss_ratio = 0;         // tailored diagonal mass / total diagonal mass
  Scalar tail_to_min_kept = 0;   // max tailored diagonal / min kept diagonal
};

InformationRatios information_ratios(const Distribution& d, CoordSystem system, int l);

struct OracleOptions {
  Scalar step = 1e-5;
  int max_variables = 8;
};

// Score covariance E[s_I s_J] with scores from central differences of the
// reconstructed likelihood, one coordinate perturbed at a time.
FisherMatrix fisher_score_oracle(const Distribution& d, CoordSystem system, int l = 0,
                                 const OracleOptions& opts = {});

// True iff the CIF-kept block of G_zeta has trace >= every sampled subset of
// the same size (and the tailored block <= every sampled complement).
bool max_trace_check(const Distribution& d, int l, int trials, Rng& rng);

// Inverse of a symmetric positive-definite matrix; throws SingularSubblock when
// the condition number exceeds `max_condition`.
Matrix invert_spd(const ConstMatRef& a, Scalar max_condition = 1e12);

}  // namespace cif
