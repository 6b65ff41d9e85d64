#pragma once

// Direct, unoptimized reference computations used to check the library.
// Everything here loops over states and subsets literally.

#include "cif/types.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace oracle {

using cif::Index;
using cif::Mask;
using cif::Matrix;
using cif::Scalar;
using cif::Vector;

inline bool subset_of(Mask a, Mask b) { return (a & b) == a; }
inline int popcount(Mask m) { return __builtin_popcount(m); }

// Reference table on three variables, by mask (x1 is bit 0):
// p000=.05 p001=.15 p010=.1 p011=.05 p100=.2 p101=.1 p110=.05 p111=.3 with strings read x1x2x3.
inline Vector reference_table() {
  Vector p(8);
  p << 0.05, 0.2, 0.1, 0.05, 0.15, 0.1, 0.05, 0.3;
  return p;
}

inline Vector random_table(int n, std::mt19937_64& rng, Scalar lo = 0.05) {
  std::uniform_real_distribution<Scalar> u(lo, 1.0);
  Vector p(Mask{1} << n);
  for (auto& v : p) v = u(rng);
  return p / p.sum();
}

inline Vector eta(const Vector& p) {
  Vector e = Vector::Zero(p.size());
  for (Mask i = 0; i < Mask(p.size()); ++i)
    for (Mask s = 0; s < Mask(p.size()); ++s)
      if (subset_of(i, s)) e(i) += p(s);
  return e;
}

inline Vector p_from_eta(const Vector& e) {
  Vector p = Vector::Zero(e.size());
  for (Mask k = 0; k < Mask(e.size()); ++k)
    for (Mask j = 0; j < Mask(e.size()); ++j)
      if (subset_of(k, j)) p(k) += ((popcount(j) - popcount(k)) % 2 ? -1.0 : 1.0) * e(j);
  return p;
}

inline Vector theta(const Vector& p) {
  Vector t = Vector::Zero(p.size());
  for (Mask i = 1; i < Mask(p.size()); ++i)
    for (Mask k = 0; k < Mask(p.size()); ++k)
      if (subset_of(k, i)) t(i) += ((popcount(i) - popcount(k)) % 2 ? -1.0 : 1.0) * std::log(p(k));
  return t;
}

// Covariance of the indicator statistics X_I(x) = prod_{i in I} x_i, I nonempty, increasing masks.
inline Matrix fisher_theta(const Vector& p) {
  const Index dim = p.size() - 1;
  const Vector e = eta(p);
  Matrix g = Matrix::Zero(dim, dim);
  for (Mask s = 0; s < Mask(p.size()); ++s)
    for (Mask i = 1; i < Mask(p.size()); ++i)
      for (Mask j = 1; j < Mask(p.size()); ++j)
        g(i - 1, j - 1) += p(s) * ((subset_of(i, s) ? 1.0 : 0.0) - e(i)) * ((subset_of(j, s) ? 1.0 : 0.0) - e(j));
  return g;
}

// Sum over K subset of (I n J), sign (-1)^{|I-K| + |J-K|}, of 1 / p_K.
inline Matrix fisher_eta(const Vector& p) {
  const Index dim = p.size() - 1;
  Matrix g = Matrix::Zero(dim, dim);
  for (Mask i = 1; i < Mask(p.size()); ++i)
    for (Mask j = 1; j < Mask(p.size()); ++j)
      for (Mask k = 0; k < Mask(p.size()); ++k)
        if (subset_of(k, i & j)) {
          const int parity = popcount(i) - popcount(k) + popcount(j) - popcount(k);
          g(i - 1, j - 1) += (parity % 2 ? -1.0 : 1.0) / p(k);
        }
  return g;
}

inline Scalar kl(const Vector& q, const Vector& p) {
  Scalar s = 0;
  for (Index i = 0; i < q.size(); ++i) s += q(i) * std::log(q(i) / p(i));
  return s;
}

inline Scalar sigmoid(Scalar a) { return 1.0 / (1.0 + std::exp(-a)); }

// exp(1/2 x'Ux + b'x) / Z by enumeration.
inline Vector sbm_distribution(const Matrix& u, const Vector& b) {
  const int n = int(b.size());
  Vector p(Mask{1} << n);
  for (Mask s = 0; s < Mask(p.size()); ++s) {
    Scalar e = 0;
    for (int i = 0; i < n; ++i) {
      if (!(s >> i & 1u)) continue;
      e += b(i);
      for (int j = 0; j < n; ++j)
        if (j != i && (s >> j & 1u)) e += 0.5 * u(i, j);
    }
    p(s) = std::exp(e);
  }
  return p / p.sum();
}

// exp(x'Wh + b'x + d'h) / Z over packed (x | h << n_x) states.
inline Vector rbm_joint(const Matrix& w, const Vector& b, const Vector& d) {
  const int nx = int(b.size()), nh = int(d.size());
  Vector p(Mask{1} << (nx + nh));
  for (Mask s = 0; s < Mask(p.size()); ++s) {
    Scalar e = 0;
    for (int i = 0; i < nx; ++i)
      if (s >> i & 1u) e += b(i);
    for (int j = 0; j < nh; ++j)
      if (s >> (nx + j) & 1u) e += d(j);
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < nh; ++j)
        if ((s >> i & 1u) && (s >> (nx + j) & 1u)) e += w(i, j);
    p(s) = std::exp(e);
  }
  return p / p.sum();
}

}  // namespace oracle
