#pragma once

// Zeta and Moebius transforms over the Boolean lattice of bitmasks. All run in
// O(n 2^n) in place on a vector of length 2^n indexed by mask.

#include "cif/types.hpp"

namespace cif::lattice {

// f(S) <- sum_{T subset of S} f(T)
template <typename Derived>
void subset_zeta_inplace(Eigen::MatrixBase<Derived>& f) {
  const Index size = f.size();
  for (Index bit = 1; bit < size; bit <<= 1)
    for (Index s = 0; s < size; ++s)
      if (s & bit) f(s) += f(s ^ bit);
}

// Inverse of subset_zeta: f(S) <- sum_{T subset of S} (-1)^{|S-T|} f(T)
template <typename Derived>
void subset_mobius_inplace(Eigen::MatrixBase<Derived>& f) {
  const Index size = f.size();
  for (Index bit = 1; bit < size; bit <<= 1)
    for (Index s = 0; s < size; ++s)
      if (s & bit) f(s) -= f(s ^ bit);
}

// f(S) <- sum_{T superset of S} f(T)
template <typename Derived>
void superset_zeta_inplace(Eigen::MatrixBase<Derived>& f) {
  const Index size = f.size();
  for (Index bit = 1; bit < size; bit <<= 1)
    for (Index s = 0; s < size; ++s)
      if (!(s & bit)) f(s) += f(s | bit);
}

// Inverse of superset_zeta: f(S) <- sum_{T superset of S} (-1)^{|T-S|} f(T)
template <typename Derived>
void superset_mobius_inplace(Eigen::MatrixBase<Derived>& f) {
  const Index size = f.size();
  for (Index bit = 1; bit < size; bit <<= 1)
    for (Index s = 0; s < size; ++s)
      if (!(s & bit)) f(s) -= f(s | bit);
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> subset_zeta(Eigen::Matrix<Scalar, Eigen::Dynamic, 1> f) {
  subset_zeta_inplace(f);
  return f;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> subset_mobius(Eigen::Matrix<Scalar, Eigen::Dynamic, 1> f) {
  subset_mobius_inplace(f);
  return f;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> superset_zeta(Eigen::Matrix<Scalar, Eigen::Dynamic, 1> f) {
  superset_zeta_inplace(f);
  return f;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> superset_mobius(Eigen::Matrix<Scalar, Eigen::Dynamic, 1> f) {
  superset_mobius_inplace(f);
  return f;
}

// Visits every submask of `m`, including 0 and `m` itself.
template <typename F>
void for_each_submask(Mask m, F&& visit) {
  Mask s = m;
  while (true) {
    visit(s);
    if (s == 0) break;
    s = (s - 1) & m;
  }
}

}  // namespace cif::lattice
