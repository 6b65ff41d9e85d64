#pragma once

#include "cif/random.hpp"
#include "cif/simplex.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cif {

struct SampleMeta {
  std::uint64_t seed = 0;
  std::string source;  // "synthetic:<target_id>" or "file:<path>"
};

struct SampleSet {
  int n = 0;
  BinaryMatrix rows;  // N x n
  SampleMeta meta;

  Index size() const { return rows.rows(); }
  Matrix as_real() const { return rows.cast<Scalar>(); }
  // Row as a state mask (n <= 32).
  Mask state(Index row) const;
};

SampleSet make_sample_set(int n, std::vector<Mask> states, SampleMeta meta = {});

// Additive smoothing delta = 1/(N 2^n) per cell before normalization.
Scalar smoothing_delta(Index sample_count, int n);

// Histogram over the 2^n states (n <= 20).
Vector state_counts(const SampleSet& s);

// Counts + smoothing, renormalized. Every cell stays positive.
Distribution empirical_distribution(const SampleSet& s);

struct Moments {
  Vector first;   // <x_i>
  Matrix second;  // <x_i x_j>, diagonal equal to first
};

Moments raw_moments(const SampleSet& s);

// Moments of the smoothed empirical distribution in closed form, valid for any n:
// eta_I = (raw_I + 2^{-|I|} / N) / (1 + 1 / N).
Moments smoothed_moments(const SampleSet& s);

}  // namespace cif
