#include "cif/simplex.hpp"

#include "cif/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cif {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveEntry: return "NonPositiveEntry";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::NonPositiveReconstruction: return "NonPositiveReconstruction";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::BadOrder: return "BadOrder";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NonRealizable: return "NonRealizable";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingularSubblock: return "SingularSubblock";
    case ErrorCode::CapExceeded: return "CapExceeded";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

namespace {

int log2_exact(Index size) {
  if (size < 2 || (size & (size - 1)) != 0) return -1;
  int n = 0;
  while ((Index{1} << n) < size) ++n;
  return n;
}

void check_order(int n, int l) {
  if (l < 1 || l > n) {
    std::ostringstream os;
    os << "order " << l << " outside 1.." << n;
    throw Error(ErrorCode::BadOrder, os.str());
  }
}

// log p(x) up to the normalizer, then normalized with log-sum-exp.
Vector softmax_of_energies(Vector s) {
  const Scalar top = s.maxCoeff();
  if (!std::isfinite(top)) throw Error(ErrorCode::Overflow, "non-finite theta sum");
  s = (s.array() - top).exp();
  const Scalar z = s.sum();
  if (!std::isfinite(z) || z <= 0) throw Error(ErrorCode::Overflow, "normalizer out of range");
  return s / z;
}

}  // namespace

Distribution Distribution::from_p(const ConstVecRef& table) {
  const int n = log2_exact(table.size());
  if (n < 1) throw Error(ErrorCode::BadLength, "table length must be a power of two >= 2");
  if (n > kMaxVariables) throw Error(ErrorCode::CapExceeded, "more than 20 variables");
  for (Index s = 0; s < table.size(); ++s) {
    if (!(table(s) > 0) || !std::isfinite(table(s))) {
      std::ostringstream os;
      os << "entry " << s << " = " << table(s) << " is not strictly positive";
      throw Error(ErrorCode::NonPositiveEntry, os.str());
    }
  }
  Vector p = table / table.sum();
  return Distribution(n, std::move(p));
}

Distribution distribution_from_p(const ConstVecRef& table) { return Distribution::from_p(table); }

std::vector<Mask> subsets_with_order(int n, int lo, int hi) {
  std::vector<Mask> out;
  for (int k = std::max(lo, 1); k <= std::min(hi, n); ++k)
    for (Mask m = 1; m <= full_mask(n); ++m)
      if (cardinality(m) == k) out.push_back(m);
  return out;
}

std::vector<Mask> subsets_by_order(int n) { return subsets_with_order(n, 1, n); }

EtaCoords eta_from_p(const Distribution& d) {
  return EtaCoords{d.n(), lattice::superset_zeta(Vector(d.p()))};
}

Distribution p_from_eta(const EtaCoords& e) {
  Vector eta = e.eta;
  eta(0) = 1;
  Vector p = lattice::superset_mobius(std::move(eta));
  for (Index s = 0; s < p.size(); ++s) {
    if (!(p(s) > 0)) {
      std::ostringstream os;
      os << "eta implies p[" << s << "] = " << p(s);
      throw Error(ErrorCode::NonPositiveReconstruction, os.str());
    }
  }
  return Distribution::from_p(p);
}

ThetaCoords theta_from_p(const Distribution& d) {
  Vector theta = lattice::subset_mobius(Vector(d.p().array().log()));
  ThetaCoords t;
  t.n = d.n();
  t.psi = -std::log(d[0]);
  theta(0) = 0;
  t.theta = std::move(theta);
  return t;
}

Distribution p_from_theta(int n, const ConstVecRef& theta) {
  if (theta.size() != state_count(n)) throw Error(ErrorCode::BadLength, "theta length must be 2^n");
  Vector s = theta;
  s(0) = 0;
  lattice::subset_zeta_inplace(s);
  return Distribution::from_p(softmax_of_energies(std::move(s)));
}

Distribution p_from_theta(const ThetaCoords& t) { return p_from_theta(t.n, t.theta); }

Scalar psi_of(const ThetaCoords& t) {
  Vector s = t.theta;
  s(0) = 0;
  lattice::subset_zeta_inplace(s);
  const Scalar top = s.maxCoeff();
  return top + std::log((s.array() - top).exp().sum());
}

Scalar phi_of(const Distribution& d) { return (d.p().array() * d.p().array().log()).sum(); }

MixedCoords mixed_from_distribution(const Distribution& d, int l) {
  check_order(d.n(), l);
  const EtaCoords e = eta_from_p(d);
  const ThetaCoords t = theta_from_p(d);
  MixedCoords m;
  m.n = d.n();
  m.l = l;
  m.low_labels = subsets_with_order(d.n(), 1, l);
  m.high_labels = subsets_with_order(d.n(), l + 1, d.n());
  m.eta_low.resize(static_cast<Index>(m.low_labels.size()));
  m.theta_high.resize(static_cast<Index>(m.high_labels.size()));
  for (std::size_t k = 0; k < m.low_labels.size(); ++k) m.eta_low(Index(k)) = e(m.low_labels[k]);
  for (std::size_t k = 0; k < m.high_labels.size(); ++k) m.theta_high(Index(k)) = t(m.high_labels[k]);
  return m;
}

namespace {

struct NewtonRun {
  Vector theta;
  Vector p;
  Scalar residual = std::numeric_limits<Scalar>::infinity();
  bool diverged = false;
  int iterations = 0;
};

// Damped Newton on the free entries of theta, starting from `theta`.
NewtonRun newton_eta(const std::vector<Mask>& free_labels, const ConstVecRef& targets, Vector theta,
                     int max_iterations, Scalar stop_at) {
  const Index k = static_cast<Index>(free_labels.size());

  // Convex merit: psi(theta) - <theta_free, targets>; its gradient is the eta residual.
  auto evaluate = [&](const Vector& th, Vector& p, Scalar& merit) {
    Vector s = th;
    lattice::subset_zeta_inplace(s);
    const Scalar top = s.maxCoeff();
    if (!std::isfinite(top)) return false;
    p = (s.array() - top).exp();
    const Scalar z = p.sum();
    p /= z;
    merit = top + std::log(z);
    for (Index i = 0; i < k; ++i) merit -= th(free_labels[std::size_t(i)]) * targets(i);
    return std::isfinite(merit);
  };

  NewtonRun run;
  Vector p;
  Scalar merit = 0;
  if (!evaluate(theta, p, merit)) {
    run.diverged = true;
    return run;
  }
  Vector residual(k);
  Matrix jac(k, k);

  for (int iter = 0; iter <= max_iterations; ++iter) {
    const Vector eta = lattice::superset_zeta(Vector(p));
    for (Index i = 0; i < k; ++i) residual(i) = eta(free_labels[std::size_t(i)]) - targets(i);
    run.residual = residual.cwiseAbs().maxCoeff();
    run.iterations = iter;
    if (run.residual < stop_at || iter == max_iterations) break;

    for (Index i = 0; i < k; ++i) {
      const Mask a = free_labels[std::size_t(i)];
      for (Index j = i; j < k; ++j) {
        const Mask b = free_labels[std::size_t(j)];
        jac(i, j) = jac(j, i) = eta(a | b) - eta(a) * eta(b);
      }
    }
    // Newton direction first; on failure fall back to increasingly regularized (J + mu I) steps,
    // which stay descent directions for the convex merit when J is nearly singular.
    const Scalar scale = std::max<Scalar>(jac.diagonal().maxCoeff(), 1e-300);
    bool accepted = false;
    Vector trial_theta(theta.size()), trial_p;
    Scalar trial_merit = 0;
    for (Scalar mu : {0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2}) {
      Matrix reg = jac;
      reg.diagonal().array() += mu * scale;
      Eigen::LDLT<Matrix> ldlt(reg);
      const Vector step = ldlt.solve(residual);
      if (ldlt.info() != Eigen::Success || !step.allFinite()) continue;
      const Scalar decrease = residual.dot(step);
      if (!(decrease > 0)) continue;
      Scalar t = 1;
      for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
        trial_theta = theta;
        for (Index i = 0; i < k; ++i) trial_theta(free_labels[std::size_t(i)]) -= t * step(i);
        if (evaluate(trial_theta, trial_p, trial_merit) && trial_merit < merit &&
            trial_merit <= merit - 1e-4 * t * decrease) {
          accepted = true;
          break;
        }
      }
      if (accepted) break;
      if (mu == 0.0) {
        // Merit is flat at working precision near the solution; take the full step if it shrinks the residual.
        trial_theta = theta;
        for (Index i = 0; i < k; ++i) trial_theta(free_labels[std::size_t(i)]) -= step(i);
        if (evaluate(trial_theta, trial_p, trial_merit)) {
          const Vector trial_eta = lattice::superset_zeta(Vector(trial_p));
          Scalar trial_res = 0;
          for (Index i = 0; i < k; ++i)
            trial_res = std::max(trial_res, std::abs(trial_eta(free_labels[std::size_t(i)]) - targets(i)));
          if (trial_res < run.residual) {
            accepted = true;
            break;
          }
        }
      }
    }
    if (!accepted) break;
    theta = trial_theta;
    p = trial_p;
    merit = trial_merit;
    if (theta.cwiseAbs().maxCoeff() > 1e4) {
      run.diverged = true;
      break;
    }
  }
  run.theta = std::move(theta);
  run.p = std::move(p);
  return run;
}

}  // namespace

Distribution solve_eta_targets(int n, const std::vector<Mask>& free_labels, const ConstVecRef& targets,
                               const ConstVecRef& theta_fixed, const MixedSolveOptions& opts) {
  const Index k = static_cast<Index>(free_labels.size());
  if (theta_fixed.size() != state_count(n)) throw Error(ErrorCode::BadLength, "theta length must be 2^n");
  if (targets.size() != k) throw Error(ErrorCode::DimensionMismatch, "one target per free label");
  for (Index i = 0; i < k; ++i)
    if (!(targets(i) > 0 && targets(i) < 1))
      throw Error(ErrorCode::NonRealizable, "eta target outside (0,1)");

  Vector fixed = theta_fixed;
  fixed(0) = 0;
  for (Mask m : free_labels) fixed(m) = 0;

  // Polish well past the acceptance tolerance; finite-difference callers need it.
  const Scalar polish = 1e-14;
  NewtonRun run = newton_eta(free_labels, targets, fixed, opts.max_iterations, polish);
  bool diverged = run.diverged;
  if (!(run.residual < opts.tolerance) && fixed.any()) {
    // A large fixed block makes the zero start nearly degenerate. Scale the block up from zero in
    // stages; each stage starts from a secant extrapolation of the previous two solutions.
    Vector free_now = Vector::Zero(k), free_before = Vector::Zero(k);
    Scalar done = 0, before = 0, step = 0.05;
    for (int attempt = 0; attempt < 400 && done < 1 && step > 1e-6; ++attempt) {
      const Scalar next = std::min<Scalar>(1, done + step);
      Vector guess = free_now;
      if (done > 0) guess += (next - done) / (done - before) * (free_now - free_before);
      Vector start = next * fixed;
      for (Index i = 0; i < k; ++i) start(free_labels[std::size_t(i)]) = guess(i);
      const bool last = next == 1;
      NewtonRun stage = newton_eta(free_labels, targets, std::move(start), last ? opts.max_iterations : 30,
                                   last ? polish : 1e-10);
      if (!stage.diverged && stage.residual < opts.tolerance) {
        before = done;
        done = next;
        free_before = free_now;
        for (Index i = 0; i < k; ++i) free_now(i) = stage.theta(free_labels[std::size_t(i)]);
        if (stage.iterations <= 5) step *= 2;
        if (last) run = std::move(stage);
      } else {
        diverged = diverged || stage.diverged;
        step *= 0.5;
      }
    }
  }

  if (!(run.residual < opts.tolerance)) {
    if (diverged) throw Error(ErrorCode::NonRealizable, "theta diverges; eta targets lie outside the open simplex");
    std::ostringstream os;
    os << "final max eta residual " << run.residual;
    throw Error(ErrorCode::NoConvergence, os.str());
  }
  return Distribution::from_p(run.p);
}

Distribution distribution_from_mixed(const MixedCoords& m, const MixedSolveOptions& opts) {
  check_order(m.n, m.l);
  if (m.eta_low.size() != Index(m.low_labels.size()) || m.theta_high.size() != Index(m.high_labels.size()))
    throw Error(ErrorCode::DimensionMismatch, "mixed block sizes do not match labels");
  if (m.l == m.n) {
    EtaCoords e{m.n, Vector::Zero(state_count(m.n))};
    e.eta(0) = 1;
    for (std::size_t k = 0; k < m.low_labels.size(); ++k) e.eta(m.low_labels[k]) = m.eta_low(Index(k));
    try {
      return p_from_eta(e);
    } catch (const Error& err) {
      throw Error(ErrorCode::NonRealizable, err.what());
    }
  }
  Vector theta_fixed = Vector::Zero(state_count(m.n));
  for (std::size_t k = 0; k < m.high_labels.size(); ++k) theta_fixed(m.high_labels[k]) = m.theta_high(Index(k));
  return solve_eta_targets(m.n, m.low_labels, m.eta_low, theta_fixed, opts);
}

Scalar kl_divergence(const Distribution& q, const Distribution& p) {
  if (q.n() != p.n()) throw Error(ErrorCode::DimensionMismatch, "distributions over different variable counts");
  return (q.p().array() * (q.p().array() / p.p().array()).log()).sum();
}

}  // namespace cif
