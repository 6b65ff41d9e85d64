#include "cif/fisher.hpp"

#include "cif/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace cif {

std::string to_string(CoordSystem s) {
  switch (s) {
    case CoordSystem::Theta: return "theta";
    case CoordSystem::Eta: return "eta";
    case CoordSystem::Mixed: return "mixed";
  }
  return "?";
}

CoordSystem coord_system_from_string(const std::string& s) {
  if (s == "theta") return CoordSystem::Theta;
  if (s == "eta") return CoordSystem::Eta;
  if (s == "mixed") return CoordSystem::Mixed;
  throw Error(ErrorCode::Parse, "unknown coordinate system '" + s + "'");
}

std::string FisherMatrix::system_name() const {
  if (system == CoordSystem::Mixed) return "mixed(" + std::to_string(order) + ")";
  return to_string(system);
}

namespace {

std::vector<Mask> increasing_masks(int n) {
  std::vector<Mask> out(std::size_t(full_mask(n)));
  std::iota(out.begin(), out.end(), Mask{1});
  return out;
}

void check_order(int n, int l) {
  if (l < 1 || l > n) throw Error(ErrorCode::BadOrder, "order outside 1..n");
}

Matrix theta_block(const Vector& eta, const std::vector<Mask>& rows, const std::vector<Mask>& cols) {
  Matrix g(Index(rows.size()), Index(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      g(Index(i), Index(j)) = eta(rows[i] | cols[j]) - eta(rows[i]) * eta(cols[j]);
  return g;
}

// (-1)^{|I-K|+|J-K|} = (-1)^{|I|+|J|} for every K, so the sum reduces to a
// subset-zeta transform of 1/p evaluated at I n J.
Matrix eta_block(const Vector& inv_p_zeta, const std::vector<Mask>& rows, const std::vector<Mask>& cols) {
  Matrix g(Index(rows.size()), Index(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const Scalar sign = ((cardinality(rows[i]) + cardinality(cols[j])) & 1) ? -1.0 : 1.0;
      g(Index(i), Index(j)) = sign * inv_p_zeta(rows[i] & cols[j]);
    }
  return g;
}

Vector inverse_p_zeta(const Distribution& d) { return lattice::subset_zeta(Vector(d.p().cwiseInverse())); }

Vector diagonal_of(const Distribution& d, CoordSystem system, int l, std::vector<Mask>& labels) {
  const FisherMatrix f = fisher(d, system, l);
  labels = f.labels;
  return f.m.diagonal();
}

}  // namespace

Matrix invert_spd(const ConstMatRef& a, Scalar max_condition) {
  if (a.rows() == 0) return Matrix(0, 0);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::SingularSubblock, "eigendecomposition failed");
  const Scalar lo = eig.eigenvalues().minCoeff();
  const Scalar hi = eig.eigenvalues().maxCoeff();
  const Scalar cond = lo > 0 ? hi / lo : std::numeric_limits<Scalar>::infinity();
  if (!(cond <= max_condition)) {
    std::ostringstream os;
    os << "condition estimate " << cond;
    throw Error(ErrorCode::SingularSubblock, os.str());
  }
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) return llt.solve(Matrix::Identity(a.rows(), a.cols()));
  return eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

FisherMatrix fisher_theta(const Distribution& d) {
  FisherMatrix f;
  f.system = CoordSystem::Theta;
  f.labels = increasing_masks(d.n());
  f.m = theta_block(eta_from_p(d).eta, f.labels, f.labels);
  return f;
}

FisherMatrix fisher_eta(const Distribution& d) {
  FisherMatrix f;
  f.system = CoordSystem::Eta;
  f.labels = increasing_masks(d.n());
  f.m = eta_block(inverse_p_zeta(d), f.labels, f.labels);
  return f;
}

FisherMatrix fisher_mixed(const Distribution& d, int l) {
  check_order(d.n(), l);
  const std::vector<Mask> low = subsets_with_order(d.n(), 1, l);
  const std::vector<Mask> high = subsets_with_order(d.n(), l + 1, d.n());

  // (G_eta^-1)_{low} is the low block of G_theta; (G_theta^-1)_{high} is the high block of G_eta.
  const Matrix a = invert_spd(theta_block(eta_from_p(d).eta, low, low));
  const Matrix b = invert_spd(eta_block(inverse_p_zeta(d), high, high));

  FisherMatrix f;
  f.system = CoordSystem::Mixed;
  f.order = l;
  f.labels = low;
  f.labels.insert(f.labels.end(), high.begin(), high.end());
  const Index k = a.rows();
  f.m = Matrix::Zero(k + b.rows(), k + b.rows());
  f.m.topLeftCorner(k, k) = a;
  f.m.bottomRightCorner(b.rows(), b.rows()) = b;
  return f;
}

FisherMatrix fisher(const Distribution& d, CoordSystem system, int l) {
  switch (system) {
    case CoordSystem::Theta: return fisher_theta(d);
    case CoordSystem::Eta: return fisher_eta(d);
    case CoordSystem::Mixed: return fisher_mixed(d, l);
  }
  throw Error(ErrorCode::Parse, "unknown coordinate system");
}

Distribution cif_tailor(const Distribution& d, int l) {
  check_order(d.n(), l);
  if (l == d.n()) return d;
  MixedCoords m = mixed_from_distribution(d, l);
  m.theta_high.setZero();
  return distribution_from_mixed(m);
}

InformationRatios information_ratios(const Distribution& d, CoordSystem system, int l) {
  check_order(d.n(), l);
  std::vector<Mask> labels;
  const Vector diag = diagonal_of(d, system, l, labels);
  Scalar total = 0, tailored = 0, max_tailored = 0;
  Scalar min_kept = std::numeric_limits<Scalar>::infinity();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Scalar g = diag(Index(i));
    total += g;
    if (cardinality(labels[i]) > l) {
      tailored += g;
      max_tailored = std::max(max_tailored, g);
    } else {
      min_kept = std::min(min_kept, g);
    }
  }
  return {tailored / total, max_tailored / min_kept};
}

FisherMatrix fisher_score_oracle(const Distribution& d, CoordSystem system, int l, const OracleOptions& opts) {
  if (d.n() > opts.max_variables) throw Error(ErrorCode::CapExceeded, "oracle limited to small n");
  const int n = d.n();

  FisherMatrix f;
  f.system = system;
  Vector coords;
  std::function<Distribution(const Vector&)> rebuild;

  if (system == CoordSystem::Theta) {
    f.labels = increasing_masks(n);
    const Vector theta = theta_from_p(d).theta;
    coords.resize(Index(f.labels.size()));
    for (std::size_t i = 0; i < f.labels.size(); ++i) coords(Index(i)) = theta(f.labels[i]);
    rebuild = [&](const Vector& c) {
      Vector t = Vector::Zero(state_count(n));
      for (std::size_t i = 0; i < f.labels.size(); ++i) t(f.labels[i]) = c(Index(i));
      return p_from_theta(n, t);
    };
  } else if (system == CoordSystem::Eta) {
    f.labels = increasing_masks(n);
    const Vector eta = eta_from_p(d).eta;
    coords.resize(Index(f.labels.size()));
    for (std::size_t i = 0; i < f.labels.size(); ++i) coords(Index(i)) = eta(f.labels[i]);
    rebuild = [&](const Vector& c) {
      EtaCoords e{n, Vector::Ones(state_count(n))};
      for (std::size_t i = 0; i < f.labels.size(); ++i) e.eta(f.labels[i]) = c(Index(i));
      return p_from_eta(e);
    };
  } else {
    check_order(n, l);
    f.order = l;
    const MixedCoords base = mixed_from_distribution(d, l);
    f.labels = base.low_labels;
    f.labels.insert(f.labels.end(), base.high_labels.begin(), base.high_labels.end());
    coords.resize(Index(f.labels.size()));
    coords << base.eta_low, base.theta_high;
    rebuild = [&, base](const Vector& c) {
      MixedCoords m = base;
      m.eta_low = c.head(m.eta_low.size());
      m.theta_high = c.tail(m.theta_high.size());
      return distribution_from_mixed(m);
    };
  }

  // d log p / d xi = (d p / d xi) / p; differencing p keeps the linear eta map exact.
  const Index dim = coords.size();
  Matrix scores(d.size(), dim);
  for (Index k = 0; k < dim; ++k) {
    Vector up = coords, down = coords;
    up(k) += opts.step;
    down(k) -= opts.step;
    const Vector dp = rebuild(up).p() - rebuild(down).p();
    scores.col(k) = dp.cwiseQuotient(d.p()) / (2 * opts.step);
  }
  f.m = scores.transpose() * d.p().asDiagonal() * scores;
  return f;
}

bool max_trace_check(const Distribution& d, int l, int trials, Rng& rng) {
  const FisherMatrix g = fisher_mixed(d, l);
  const Vector diag = g.m.diagonal();
  const Index dim = diag.size();
  Index kept_count = 0;
  for (Mask m : g.labels)
    if (cardinality(m) <= l) ++kept_count;
  const Scalar kept = diag.head(kept_count).sum();
  const Scalar tailored = diag.sum() - kept;
  const Scalar slack = 1e-12 * diag.cwiseAbs().sum();

  std::vector<Index> perm(static_cast<std::size_t>(dim));
  for (int t = 0; t < trials; ++t) {
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index i = 0; i < kept_count; ++i) {
      const Index j = i + Index(uniform_index(rng, std::uint64_t(dim - i)));
      std::swap(perm[std::size_t(i)], perm[std::size_t(j)]);
    }
    Scalar subset = 0;
    for (Index i = 0; i < kept_count; ++i) subset += diag(perm[std::size_t(i)]);
    const Scalar complement = diag.sum() - subset;
    if (subset > kept + slack || complement < tailored - slack) return false;
  }
  return true;
}

}  // namespace cif
