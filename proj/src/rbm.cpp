#include "cif/rbm.hpp"

#include "cif/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace cif {

namespace {

inline Scalar sigmoid(Scalar a) { return 1.0 / (1.0 + std::exp(-a)); }
inline Scalar softplus(Scalar a) { return a > 0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a)); }

constexpr int kTraceMaxVisible = 16;
// Largest joint size handled with dense count tables.
constexpr int kGroupedMaxJoint = 16;
// Largest joint size for the Newton projection (dense sufficient-statistic table).
constexpr int kNewtonMaxJoint = 14;

void check_joint_size(const RbmParams& p) {
  if (p.n_x + p.n_h > kMaxVariables) throw Error(ErrorCode::CapExceeded, "joint table needs n_x + n_h <= 20");
}

// Visits every visible state in Gray-code order with the hidden pre-activations d + W'x and b'x.
template <typename F>
void for_each_visible(const RbmParams& p, F&& visit) {
  if (p.n_x > kMaxVariables) throw Error(ErrorCode::CapExceeded, "visible enumeration needs n_x <= 20");
  Vector act = p.d;
  Scalar bx = 0;
  Mask x = 0;
  visit(x, act, bx);
  for (Index g = 1; g < state_count(p.n_x); ++g) {
    const int k = __builtin_ctzll(static_cast<unsigned long long>(g));
    const Mask bit = Mask{1} << k;
    if (x & bit) {
      x &= ~bit;
      act -= p.W.row(k).transpose();
      bx -= p.b(k);
    } else {
      x |= bit;
      act += p.W.row(k).transpose();
      bx += p.b(k);
    }
    visit(x, act, bx);
  }
}

Vector log_unnormalized_marginal(const RbmParams& p) {
  Vector out(state_count(p.n_x));
  for_each_visible(p, [&](Mask x, const Vector& act, Scalar bx) {
    Scalar s = bx;
    for (Index j = 0; j < act.size(); ++j) s += softplus(act(j));
    out(x) = s;
  });
  return out;
}

Scalar log_sum_exp(const Vector& v) {
  const Scalar top = v.maxCoeff();
  return top + std::log((v.array() - top).exp().sum());
}

// Factorized h-distribution for pre-activations `act`, indexed by h mask.
Vector hidden_table(const Vector& act) {
  Vector t(state_count(int(act.size())));
  t(0) = 1;
  Index len = 1;
  for (Index j = 0; j < act.size(); ++j) {
    const Scalar on = sigmoid(act(j)), off = sigmoid(-act(j));
    for (Index s = 0; s < len; ++s) {
      t(s + len) = t(s) * on;
      t(s) *= off;
    }
    len *= 2;
  }
  return t;
}

// Moments sum_x w(x) [x, f(x), x f(x)'] with f the hidden firing probabilities.
RbmMoments visible_weighted_moments(const RbmParams& p, const Vector& w) {
  RbmMoments m{Vector::Zero(p.n_x), Vector::Zero(p.n_h), Matrix::Zero(p.n_x, p.n_h)};
  Vector f(p.n_h);
  for_each_visible(p, [&](Mask x, const Vector& act, Scalar) {
    const Scalar wx = w(x);
    if (wx == 0) return;
    for (int j = 0; j < p.n_h; ++j) f(j) = sigmoid(act(j));
    m.h += wx * f;
    for (int i = 0; i < p.n_x; ++i)
      if (x >> i & 1u) {
        m.x(i) += wx;
        m.xh.row(i) += wx * f.transpose();
      }
  });
  return m;
}

RbmMoments moments_from_eta(const Vector& eta, int n_x, int n_h) {
  RbmMoments m{Vector(n_x), Vector(n_h), Matrix(n_x, n_h)};
  for (int i = 0; i < n_x; ++i) m.x(i) = eta(Mask{1} << i);
  for (int j = 0; j < n_h; ++j) m.h(j) = eta(Mask{1} << (n_x + j));
  for (int i = 0; i < n_x; ++i)
    for (int j = 0; j < n_h; ++j) m.xh(i, j) = eta((Mask{1} << i) | (Mask{1} << (n_x + j)));
  return m;
}

RbmMoments moments_from_counts(const Vector& counts, int n_x, int n_h) {
  Vector eta = lattice::superset_zeta(Vector(counts / counts.sum()));
  return moments_from_eta(eta, n_x, n_h);
}

RbmMoments difference(const RbmMoments& a, const RbmMoments& b) { return {a.x - b.x, a.h - b.h, a.xh - b.xh}; }

Scalar max_abs(const RbmMoments& m) {
  Scalar v = 0;
  if (m.x.size()) v = std::max(v, m.x.cwiseAbs().maxCoeff());
  if (m.h.size()) v = std::max(v, m.h.cwiseAbs().maxCoeff());
  if (m.xh.size()) v = std::max(v, m.xh.cwiseAbs().maxCoeff());
  return v;
}

void apply(RbmParams& p, const RbmMoments& g, Scalar step) {
  p.b += step * g.x;
  p.d += step * g.h;
  p.W += step * g.xh;
}

bool finite_params(const RbmParams& p) { return p.W.allFinite() && p.b.allFinite() && p.d.allFinite(); }

// log Z(xi) - <xi, eta_q>: D[q || p(xi)] up to the entropy of q.
Scalar projection_objective(const RbmParams& p, const RbmMoments& target) {
  return rbm_log_partition(p) - p.b.dot(target.x) - p.d.dot(target.h) - (p.W.cwiseProduct(target.xh)).sum();
}

// Splits `count` draws of independent Bernoulli(probs) units into per-state counts.
template <typename Emit>
void split_counts(long long count, const Vector& probs, int unit, Mask prefix, Rng& rng, Emit& emit) {
  if (count == 0) return;
  if (unit == probs.size()) {
    emit(prefix, count);
    return;
  }
  std::binomial_distribution<long long> draw(count, std::clamp(probs(unit), 0.0, 1.0));
  const long long on = draw(rng);
  split_counts(on, probs, unit + 1, prefix | (Mask{1} << unit), rng, emit);
  split_counts(count - on, probs, unit + 1, prefix, rng, emit);
}

using Counts = std::vector<long long>;

// Joint counts after drawing h | x for every visible count.
Counts sample_h_given_x_counts(const RbmParams& p, const Counts& x_counts, Rng& rng) {
  Counts joint(std::size_t(state_count(p.n_x + p.n_h)), 0);
  Vector x(p.n_x);
  for (Mask s = 0; s < Mask(x_counts.size()); ++s) {
    if (!x_counts[s]) continue;
    for (int i = 0; i < p.n_x; ++i) x(i) = s >> i & 1u;
    const Vector f = rbm_cond_h_given_x(p, x);
    auto emit = [&](Mask h, long long c) { joint[s | (h << p.n_x)] += c; };
    split_counts(x_counts[s], f, 0, 0, rng, emit);
  }
  return joint;
}

Counts sample_x_given_h_counts(const RbmParams& p, const Counts& h_counts, Rng& rng) {
  Counts joint(std::size_t(state_count(p.n_x + p.n_h)), 0);
  Vector h(p.n_h);
  for (Mask s = 0; s < Mask(h_counts.size()); ++s) {
    if (!h_counts[s]) continue;
    for (int j = 0; j < p.n_h; ++j) h(j) = s >> j & 1u;
    const Vector f = rbm_cond_x_given_h(p, h);
    auto emit = [&](Mask x, long long c) { joint[x | (s << p.n_x)] += c; };
    split_counts(h_counts[s], f, 0, 0, rng, emit);
  }
  return joint;
}

Counts marginal_counts(const Counts& joint, int n_x, int n_h, bool visible) {
  Counts out(std::size_t(state_count(visible ? n_x : n_h)), 0);
  const Mask xmask = full_mask(n_x);
  for (Mask s = 0; s < Mask(joint.size()); ++s)
    if (joint[s]) out[visible ? (s & xmask) : (s >> n_x)] += joint[s];
  return out;
}

RbmMoments moments_from_counts(const Counts& joint, int n_x, int n_h) {
  Vector v(Index(joint.size()));
  for (std::size_t s = 0; s < joint.size(); ++s) v(Index(s)) = Scalar(joint[s]);
  return moments_from_counts(v, n_x, n_h);
}

// Rows as reals; x block first, then h block.
struct PairRows {
  Matrix x;
  Matrix h;
};

RbmMoments moments_of_rows(const Matrix& x, const Matrix& h) {
  const Scalar inv = 1.0 / Scalar(x.rows());
  return {x.colwise().sum().transpose() * inv, h.colwise().sum().transpose() * inv, x.transpose() * h * inv};
}

Matrix sample_bernoulli_rows(const Matrix& probs, Rng& rng) {
  Matrix out(probs.rows(), probs.cols());
  for (Index r = 0; r < probs.rows(); ++r)
    for (Index c = 0; c < probs.cols(); ++c) out(r, c) = uniform01(rng) < probs(r, c) ? 1.0 : 0.0;
  return out;
}

Matrix hidden_probs(const RbmParams& p, const Matrix& x) {
  Matrix a = x * p.W;
  a.rowwise() += p.d.transpose();
  return a.unaryExpr([](Scalar v) { return sigmoid(v); });
}

Matrix visible_probs(const RbmParams& p, const Matrix& h) {
  Matrix a = h * p.W.transpose();
  a.rowwise() += p.b.transpose();
  return a.unaryExpr([](Scalar v) { return sigmoid(v); });
}

// CD-1 statistics (x0,h0) - (x1,h1) for the visible rows `x0`.
RbmMoments cd1_gradient_rows(const RbmParams& p, const Matrix& x0, Rng& rng) {
  const Matrix h0 = sample_bernoulli_rows(hidden_probs(p, x0), rng);
  const Matrix x1 = sample_bernoulli_rows(visible_probs(p, h0), rng);
  const Matrix h1 = sample_bernoulli_rows(hidden_probs(p, x1), rng);
  return difference(moments_of_rows(x0, h0), moments_of_rows(x1, h1));
}

// Same statistics drawn in aggregate over repeated visible states.
RbmMoments cd1_gradient_counts(const RbmParams& p, const Counts& x0, Rng& rng) {
  const Counts j0 = sample_h_given_x_counts(p, x0, rng);
  const Counts j1x = sample_x_given_h_counts(p, marginal_counts(j0, p.n_x, p.n_h, false), rng);
  const Counts j1 = sample_h_given_x_counts(p, marginal_counts(j1x, p.n_x, p.n_h, true), rng);
  return difference(moments_from_counts(j0, p.n_x, p.n_h), moments_from_counts(j1, p.n_x, p.n_h));
}

// CD-1 starting from joint pairs (x0, h0): x1 ~ p(x|h0), h1 ~ p(h|x1).
RbmMoments cd_from_pairs_counts(const RbmParams& p, const Counts& pairs, const RbmMoments& positive, Rng& rng) {
  const Counts j1x = sample_x_given_h_counts(p, marginal_counts(pairs, p.n_x, p.n_h, false), rng);
  const Counts j1 = sample_h_given_x_counts(p, marginal_counts(j1x, p.n_x, p.n_h, true), rng);
  return difference(positive, moments_from_counts(j1, p.n_x, p.n_h));
}

RbmMoments cd_from_pairs_rows(const RbmParams& p, const PairRows& pairs, const RbmMoments& positive, Rng& rng) {
  const Matrix x1 = sample_bernoulli_rows(visible_probs(p, pairs.h), rng);
  const Matrix h1 = sample_bernoulli_rows(hidden_probs(p, x1), rng);
  return difference(positive, moments_of_rows(x1, h1));
}

Counts visible_counts(const SampleSet& data) {
  Counts c(std::size_t(state_count(data.n)), 0);
  for (Index r = 0; r < data.size(); ++r) ++c[data.state(r)];
  return c;
}

Matrix sufficient_statistics(int n_x, int n_h) {
  const Index states = state_count(n_x + n_h);
  const Index dim = n_x + n_h + Index(n_x) * n_h;
  Matrix t = Matrix::Zero(states, dim);
  for (Mask s = 0; s < Mask(states); ++s) {
    for (int i = 0; i < n_x; ++i) t(s, i) = s >> i & 1u;
    for (int j = 0; j < n_h; ++j) t(s, n_x + j) = s >> (n_x + j) & 1u;
    for (int i = 0; i < n_x; ++i)
      for (int j = 0; j < n_h; ++j) t(s, n_x + n_h + Index(j) * n_x + i) = t(s, i) * t(s, n_x + j);
  }
  return t;
}

Vector flatten(const RbmMoments& m) {
  Vector v(m.x.size() + m.h.size() + m.xh.size());
  v << m.x, m.h, Eigen::Map<const Vector>(m.xh.data(), m.xh.size());
  return v;
}

RbmMoments unflatten(const Vector& v, int n_x, int n_h) {
  RbmMoments m;
  m.x = v.head(n_x);
  m.h = v.segment(n_x, n_h);
  m.xh = Eigen::Map<const Matrix>(v.data() + n_x + n_h, n_x, n_h);
  return m;
}

RbmParams project_b(const RbmMoments& target, const RbmParams& start, const TrainConfig& cfg, Scalar rate,
                    GammaBReport& report) {
  RbmParams p = start;
  const int budget = std::max(0, cfg.ip_sub_epochs);
  report = {};
  Scalar f = projection_objective(p, target);

  if (cfg.gamma_b_solver == GammaBSolver::Newton && p.n_x + p.n_h <= kNewtonMaxJoint) {
    const Matrix t = sufficient_statistics(p.n_x, p.n_h);
    for (int it = 0; it < budget; ++it) {
      const Vector q = rbm_joint(p).p.p();
      const Vector mean = t.transpose() * q;
      const Vector g = mean - flatten(target);
      report.gradient_max = g.cwiseAbs().maxCoeff();
      if (report.gradient_max < cfg.gamma_b_tolerance) {
        report.converged = true;
        return p;
      }
      Matrix h = t.transpose() * q.asDiagonal() * t - mean * mean.transpose();
      h.diagonal().array() += 1e-12;
      const Vector step = h.ldlt().solve(g);
      Scalar s = 1;
      bool moved = false;
      for (int halving = 0; halving < 40; ++halving, s *= 0.5) {
        RbmParams trial = p;
        apply(trial, unflatten(step, p.n_x, p.n_h), -s);
        const Scalar ft = projection_objective(trial, target);
        if (std::isfinite(ft) && ft <= f) {
          p = trial;
          f = ft;
          moved = true;
          break;
        }
      }
      report.epochs = it + 1;
      if (!moved) break;
    }
  } else {
    for (int it = 0; it < budget; ++it) {
      const RbmMoments g = difference(rbm_model_moments(p), target);
      report.gradient_max = max_abs(g);
      if (report.gradient_max < cfg.gamma_b_tolerance) {
        report.converged = true;
        return p;
      }
      // Halve the rate until the divergence does not increase; the reduced rate is kept.
      for (int halving = 0; halving < 40; ++halving, rate *= 0.5) {
        RbmParams trial = p;
        apply(trial, g, -rate);
        const Scalar ft = projection_objective(trial, target);
        if (std::isfinite(ft) && ft <= f) {
          p = trial;
          f = ft;
          break;
        }
      }
      report.epochs = it + 1;
    }
  }
  report.gradient_max = max_abs(difference(rbm_model_moments(p), target));
  report.converged = report.gradient_max < cfg.gamma_b_tolerance;
  return p;
}

Scalar gamma_b_rate(const TrainConfig& cfg, Index sample_count) { return cfg.effective_rate(std::max<Index>(1, sample_count)); }

// Empirical joint of sampled (x, h) pairs with the same additive smoothing as visible data.
Distribution smoothed_joint(const Counts& pairs, Index total) {
  Vector v(Index(pairs.size()));
  const Scalar delta = 1.0 / (Scalar(total) * Scalar(pairs.size()));
  for (std::size_t s = 0; s < pairs.size(); ++s) v(Index(s)) = Scalar(pairs[s]) / Scalar(total) + delta;
  return Distribution::from_p(v);
}

struct Tracker {
  std::optional<Distribution> empirical;
  const Distribution* target = nullptr;
  int patience = 50;
  Scalar last = std::numeric_limits<Scalar>::quiet_NaN();
  int rises = 0;

  bool active() const { return empirical.has_value(); }

  TraceRow row(int epoch, const RbmParams& p) const {
    const Distribution model = rbm_marginal(p);
    TraceRow r;
    r.epoch = epoch;
    r.kl_to_empirical = kl_divergence(*empirical, model);
    if (target) r.kl_to_target = kl_divergence(*target, model);
    return r;
  }

  bool rising(Scalar kl) {
    if (!std::isnan(last) && kl > last) ++rises;
    else rises = 0;
    last = kl;
    return patience > 0 && rises >= patience;
  }
};

Tracker make_tracker(const SampleSet& data, const Distribution* target, const TrainConfig& cfg) {
  Tracker t;
  if (data.n <= kTraceMaxVisible) t.empirical = empirical_distribution(data);
  if (target && target->n() != data.n) throw Error(ErrorCode::DimensionMismatch, "target and data differ in n");
  t.target = target;
  t.patience = cfg.divergence_patience;
  return t;
}

void check_data(const SampleSet& data) {
  if (data.size() < 1) throw Error(ErrorCode::BadLength, "empty sample set");
}

}  // namespace

RbmParams RbmParams::zeros(int n_x, int n_h) {
  RbmParams p;
  p.n_x = n_x;
  p.n_h = n_h;
  p.W = Matrix::Zero(n_x, n_h);
  p.b = Vector::Zero(n_x);
  p.d = Vector::Zero(n_h);
  return p;
}

void RbmParams::validate() const {
  if (n_x < 1 || n_h < 1) throw Error(ErrorCode::Parse, "RBM needs at least one visible and one hidden unit");
  if (W.rows() != n_x || W.cols() != n_h || b.size() != n_x || d.size() != n_h)
    throw Error(ErrorCode::DimensionMismatch, "RBM parameter shapes");
  if (!finite_params(*this)) throw Error(ErrorCode::Parse, "non-finite RBM parameter");
}

Scalar RbmMoments::max_abs_diff(const RbmMoments& o) const { return max_abs(difference(*this, o)); }

Distribution JointDistribution::marginal_x() const {
  Vector m = Vector::Zero(state_count(n_x));
  const Mask xmask = full_mask(n_x);
  for (Index s = 0; s < p.size(); ++s) m(Mask(s) & xmask) += p.p()(s);
  return Distribution::from_p(m);
}

Distribution JointDistribution::marginal_h() const {
  Vector m = Vector::Zero(state_count(n_h));
  for (Index s = 0; s < p.size(); ++s) m(Mask(s) >> n_x) += p.p()(s);
  return Distribution::from_p(m);
}

JointDistribution rbm_joint(const RbmParams& p) {
  check_joint_size(p);
  const Index hs = state_count(p.n_h);
  Vector logw(state_count(p.n_x + p.n_h));
  Vector hsum(hs);
  for_each_visible(p, [&](Mask x, const Vector& act, Scalar bx) {
    hsum(0) = 0;
    for (Index h = 1; h < hs; ++h) {
      const int k = __builtin_ctzll(static_cast<unsigned long long>(h));
      hsum(h) = hsum(h & (h - 1)) + act(k);
    }
    for (Index h = 0; h < hs; ++h) logw(Index(x) | (h << p.n_x)) = bx + hsum(h);
  });
  const Scalar top = logw.maxCoeff();
  Vector w = (logw.array() - top).exp();
  return {p.n_x, p.n_h, Distribution::from_p(w / w.sum())};
}

Distribution rbm_marginal(const RbmParams& p) {
  const Vector logw = log_unnormalized_marginal(p);
  const Scalar top = logw.maxCoeff();
  Vector w = (logw.array() - top).exp();
  return Distribution::from_p(w / w.sum());
}

Scalar rbm_log_partition(const RbmParams& p) { return log_sum_exp(log_unnormalized_marginal(p)); }

Vector rbm_theta_embedding(const RbmParams& p) {
  Vector theta = Vector::Zero(state_count(p.n_x + p.n_h));
  for (int i = 0; i < p.n_x; ++i) theta(Mask{1} << i) = p.b(i);
  for (int j = 0; j < p.n_h; ++j) theta(Mask{1} << (p.n_x + j)) = p.d(j);
  for (int i = 0; i < p.n_x; ++i)
    for (int j = 0; j < p.n_h; ++j) theta((Mask{1} << i) | (Mask{1} << (p.n_x + j))) = p.W(i, j);
  return theta;
}

Vector rbm_cond_h_given_x(const RbmParams& p, const ConstVecRef& x) {
  if (x.size() != p.n_x) throw Error(ErrorCode::DimensionMismatch, "visible state length");
  return (p.W.transpose() * x + p.d).unaryExpr([](Scalar v) { return sigmoid(v); });
}

Vector rbm_cond_x_given_h(const RbmParams& p, const ConstVecRef& h) {
  if (h.size() != p.n_h) throw Error(ErrorCode::DimensionMismatch, "hidden state length");
  return (p.W * h + p.b).unaryExpr([](Scalar v) { return sigmoid(v); });
}

RbmMoments rbm_model_moments(const RbmParams& p) { return visible_weighted_moments(p, rbm_marginal(p).p()); }

RbmMoments joint_moments(const JointDistribution& q) {
  return moments_from_eta(lattice::superset_zeta(Vector(q.p.p())), q.n_x, q.n_h);
}

RbmMoments rbm_likelihood_gradient(const RbmParams& p, const Distribution& q_x) {
  if (q_x.n() != p.n_x) throw Error(ErrorCode::DimensionMismatch, "q_x and RBM differ in n_x");
  return difference(visible_weighted_moments(p, q_x.p()), rbm_model_moments(p));
}

JointDistribution gamma_h(const RbmParams& p, const Distribution& q_x) {
  if (q_x.n() != p.n_x) throw Error(ErrorCode::DimensionMismatch, "q_x and RBM differ in n_x");
  check_joint_size(p);
  Vector joint(state_count(p.n_x + p.n_h));
  const Index hs = state_count(p.n_h);
  for_each_visible(p, [&](Mask x, const Vector& act, Scalar) {
    const Vector t = hidden_table(act);
    for (Index h = 0; h < hs; ++h) joint(Index(x) | (h << p.n_x)) = q_x[x] * t(h);
  });
  return {p.n_x, p.n_h, Distribution::from_p(joint)};
}

RbmParams gamma_b_moments(const RbmMoments& target, const RbmParams& start, const TrainConfig& cfg,
                          GammaBReport* report) {
  GammaBReport local;
  RbmParams out = project_b(target, start, cfg, gamma_b_rate(cfg, 1), local);
  if (report) *report = local;
  return out;
}

RbmParams gamma_b(const JointDistribution& q, const TrainConfig& cfg, const RbmParams* start, GammaBReport* report,
                  Rng* rng) {
  const RbmParams init = start ? *start : RbmParams::zeros(q.n_x, q.n_h);
  if (init.n_x != q.n_x || init.n_h != q.n_h) throw Error(ErrorCode::DimensionMismatch, "start params shape");
  GammaBReport local;
  RbmParams out;
  if (cfg.gamma_b == GammaBMode::Cd) {
    Rng fallback(cfg.seed);
    Rng& r = rng ? *rng : fallback;
    // Sub-learning on a sample of pairs drawn from q.
    const Index count = 10000;
    Counts pairs(std::size_t(q.p.size()), 0);
    std::discrete_distribution<Index> pick(q.p.p().data(), q.p.p().data() + q.p.size());
    for (Index k = 0; k < count; ++k) ++pairs[std::size_t(pick(r))];
    const RbmMoments positive = joint_moments(q);
    out = init;
    const Scalar rate = gamma_b_rate(cfg, count);
    for (int e = 0; e < cfg.ip_sub_epochs; ++e) apply(out, cd_from_pairs_counts(out, pairs, positive, r), rate);
    local.epochs = cfg.ip_sub_epochs;
    local.gradient_max = max_abs(difference(rbm_model_moments(out), positive));
    local.converged = local.gradient_max < cfg.gamma_b_tolerance;
    if (report) *report = local;
    return out;
  }
  out = project_b(joint_moments(q), init, cfg, gamma_b_rate(cfg, 1), local);
  if (report) *report = local;
  if (!local.converged) {
    throw Error(ErrorCode::NoConvergence,
                "gamma_b gradient max-norm " + std::to_string(local.gradient_max) + " after " +
                    std::to_string(local.epochs) + " epochs");
  }
  return out;
}

FractionalMixed fractional_mixed_from_joint(const JointDistribution& q) {
  const int n = q.n_x + q.n_h;
  const Mask xmask = full_mask(q.n_x);
  const Vector eta = eta_from_p(q.p).eta;
  const Vector theta = theta_from_p(q.p).theta;
  FractionalMixed m;
  m.n_x = q.n_x;
  m.n_h = q.n_h;
  for (Mask s : subsets_by_order(n)) {
    const int k = cardinality(s);
    const bool cross = k == 2 && (s & xmask) && (s & ~xmask);
    if (k == 1 || cross) m.eta_labels.push_back(s);
    else m.theta_labels.push_back(s);
  }
  m.eta.resize(Index(m.eta_labels.size()));
  m.theta.resize(Index(m.theta_labels.size()));
  for (std::size_t i = 0; i < m.eta_labels.size(); ++i) m.eta(Index(i)) = eta(m.eta_labels[i]);
  for (std::size_t i = 0; i < m.theta_labels.size(); ++i) m.theta(Index(i)) = theta(m.theta_labels[i]);
  return m;
}

JointDistribution joint_from_fractional_mixed(const FractionalMixed& m, const MixedSolveOptions& opts) {
  const int n = m.n_x + m.n_h;
  if (n > kMaxVariables) throw Error(ErrorCode::CapExceeded, "joint table needs n_x + n_h <= 20");
  Vector theta_fixed = Vector::Zero(state_count(n));
  for (std::size_t i = 0; i < m.theta_labels.size(); ++i) theta_fixed(m.theta_labels[i]) = m.theta(Index(i));
  return {m.n_x, m.n_h, solve_eta_targets(n, m.eta_labels, m.eta, theta_fixed, opts)};
}

RbmParams rbm_initial_params(const SampleSet& data, int n_h, Scalar init_scale, Rng& rng) {
  check_data(data);
  const Moments m = smoothed_moments(data);
  RbmParams p = RbmParams::zeros(data.n, n_h);
  for (int i = 0; i < data.n; ++i) p.b(i) = std::clamp(std::log(m.first(i) / (1 - m.first(i))), -4.0, 4.0);
  for (int i = 0; i < data.n; ++i)
    for (int j = 0; j < n_h; ++j) p.W(i, j) = init_scale * (2 * uniform01(rng) - 1);
  return p;
}

IpResult rbm_train_ip(const Distribution& q_x, const RbmParams& p0, int iterations, const TrainConfig& cfg,
                      const Distribution* target) {
  if (q_x.n() != p0.n_x) throw Error(ErrorCode::DimensionMismatch, "q_x and RBM differ in n_x");
  check_joint_size(p0);
  IpResult out;
  out.params = p0;
  Rng rng(cfg.seed);
  const Scalar rate = gamma_b_rate(cfg, 1);
  for (int it = 0; it < iterations; ++it) {
    const JointDistribution q = gamma_h(out.params, q_x);
    IpTraceRow row;
    row.iteration = it + 1;
    row.d_q_to_prev_p = kl_divergence(q.p, rbm_joint(out.params).p);
    GammaBReport report;
    if (cfg.gamma_b == GammaBMode::Cd) {
      out.params = gamma_b(q, cfg, &out.params, &report, &rng);
    } else {
      out.params = project_b(joint_moments(q), out.params, cfg, rate, report);
    }
    row.d_q_to_new_p = kl_divergence(q.p, rbm_joint(out.params).p);
    const Distribution model = rbm_marginal(out.params);
    row.kl_marginal_to_empirical = kl_divergence(q_x, model);
    if (target) row.kl_to_target = kl_divergence(*target, model);
    out.trace.push_back(row);
    out.history.push_back(out.params);
    out.iterations_run = it + 1;
  }
  return out;
}

IpResult rbm_train_ip(const SampleSet& data, const RbmParams& p0, int iterations, const TrainConfig& cfg,
                      const Distribution* target) {
  check_data(data);
  if (data.n != p0.n_x) throw Error(ErrorCode::DimensionMismatch, "data and RBM differ in n_x");
  if (cfg.gamma_h == GammaHMode::Exact) {
    if (data.n > kMaxVariables) throw Error(ErrorCode::CapExceeded, "exact gamma_h needs n_x <= 20");
    return rbm_train_ip(empirical_distribution(data), p0, iterations, cfg, target);
  }

  // Sampled gamma_h: one hidden draw per data row from the current model.
  const int n_x = p0.n_x, n_h = p0.n_h;
  const bool dense = n_x + n_h <= kGroupedMaxJoint;
  const Index total = data.size();
  std::optional<Distribution> empirical;
  if (n_x <= kTraceMaxVisible) empirical = empirical_distribution(data);
  IpResult out;
  out.params = p0;
  Rng rng(cfg.seed);
  const Scalar rate = gamma_b_rate(cfg, total);
  const Matrix x_rows = data.as_real();
  const Counts x_counts = dense ? visible_counts(data) : Counts{};
  const Scalar nan = std::numeric_limits<Scalar>::quiet_NaN();

  for (int it = 0; it < iterations; ++it) {
    IpTraceRow row;
    row.iteration = it + 1;
    RbmMoments positive;
    Counts pairs;
    PairRows rows;
    if (dense) {
      pairs = sample_h_given_x_counts(out.params, x_counts, rng);
      positive = moments_from_counts(pairs, n_x, n_h);
    } else {
      rows.x = x_rows;
      rows.h = sample_bernoulli_rows(hidden_probs(out.params, x_rows), rng);
      positive = moments_of_rows(rows.x, rows.h);
    }
    std::optional<Distribution> q;
    if (dense) q = smoothed_joint(pairs, total);
    row.d_q_to_prev_p = q ? kl_divergence(*q, rbm_joint(out.params).p) : nan;

    if (cfg.gamma_b == GammaBMode::Exact && n_x <= kMaxVariables) {
      GammaBReport report;
      out.params = project_b(positive, out.params, cfg, rate, report);
    } else {
      for (int e = 0; e < cfg.ip_sub_epochs; ++e) {
        const RbmMoments g = dense ? cd_from_pairs_counts(out.params, pairs, positive, rng)
                                   : cd_from_pairs_rows(out.params, rows, positive, rng);
        apply(out.params, g, rate);
      }
    }
    row.d_q_to_new_p = q ? kl_divergence(*q, rbm_joint(out.params).p) : nan;
    if (empirical) {
      const Distribution model = rbm_marginal(out.params);
      row.kl_marginal_to_empirical = kl_divergence(*empirical, model);
      if (target) row.kl_to_target = kl_divergence(*target, model);
    } else {
      row.kl_marginal_to_empirical = nan;
    }
    out.trace.push_back(row);
    out.history.push_back(out.params);
    out.iterations_run = it + 1;
  }
  return out;
}

BestIp best_ip_select(const IpResult& run) {
  if (run.trace.empty() || run.history.size() != run.trace.size())
    throw Error(ErrorCode::BadLength, "best-IP selection needs a trace with per-iteration parameters");
  std::size_t best = run.trace.size() - 1;
  for (std::size_t i = 0; i < run.trace.size(); ++i)
    if (run.trace[i].kl_marginal_to_empirical < run.trace[best].kl_marginal_to_empirical) best = i;
  return {run.trace[best].iteration, run.history[best], run.trace[best].kl_marginal_to_empirical};
}

RbmResult rbm_train_ml(const SampleSet& data, const TrainConfig& cfg, const Distribution* target) {
  check_data(data);
  Rng rng(cfg.seed);
  RbmResult out;
  out.params = rbm_initial_params(data, cfg.n_h, cfg.init_scale, rng);
  const int n_x = data.n, n_h = cfg.n_h;
  const Scalar rate = cfg.effective_rate(data.size());
  const bool exact = std::holds_alternative<ExactPhase>(cfg.negative_phase) && n_x + n_h <= 14;
  Tracker tracker = make_tracker(data, target, cfg);
  const std::optional<Distribution> q_x =
      n_x <= kTraceMaxVisible ? std::optional<Distribution>(empirical_distribution(data)) : std::nullopt;
  const Matrix x_rows = q_x ? Matrix() : data.as_real();
  const GibbsPhase gibbs =
      std::holds_alternative<GibbsPhase>(cfg.negative_phase) ? std::get<GibbsPhase>(cfg.negative_phase) : GibbsPhase{};

  for (int epoch = 0; epoch <= cfg.max_epochs; ++epoch) {
    if (tracker.active() && (epoch % std::max(1, cfg.trace_every) == 0 || epoch == cfg.max_epochs)) {
      const TraceRow row = tracker.row(epoch, out.params);
      out.trace.push_back(row);
      if (tracker.rising(row.kl_to_empirical)) {
        out.diverged = true;
        return out;
      }
    }
    if (epoch == cfg.max_epochs) break;

    RbmMoments positive;
    if (q_x) positive = visible_weighted_moments(out.params, q_x->p());
    else {
      const Matrix f = hidden_probs(out.params, x_rows);
      positive = moments_of_rows(x_rows, f);
    }
    RbmMoments negative;
    if (exact) {
      negative = rbm_model_moments(out.params);
    } else {
      const int chains = std::max(1, gibbs.chains);
      Matrix x(chains, n_x);
      for (int c = 0; c < chains; ++c) x.row(c) = data.rows.row(Index(uniform_index(rng, std::uint64_t(data.size())))).cast<Scalar>();
      for (int s = 0; s < gibbs.steps; ++s) {
        const Matrix h = sample_bernoulli_rows(hidden_probs(out.params, x), rng);
        x = sample_bernoulli_rows(visible_probs(out.params, h), rng);
      }
      negative = moments_of_rows(x, hidden_probs(out.params, x));
    }
    const RbmMoments g = difference(positive, negative);
    apply(out.params, g, rate);
    out.epochs_run = epoch + 1;
    if (!finite_params(out.params)) {
      out.diverged = true;
      return out;
    }
    if (cfg.tolerance > 0 && max_abs(g) < cfg.tolerance) {
      if (tracker.active()) out.trace.push_back(tracker.row(out.epochs_run, out.params));
      break;
    }
  }
  return out;
}

RbmResult rbm_train_cd1(const SampleSet& data, const TrainConfig& cfg, const Distribution* target) {
  check_data(data);
  Rng rng(cfg.seed);
  RbmResult out;
  out.params = rbm_initial_params(data, cfg.n_h, cfg.init_scale, rng);
  const Scalar rate = cfg.effective_rate(data.size());
  Tracker tracker = make_tracker(data, target, cfg);
  const bool grouped = data.n + cfg.n_h <= kGroupedMaxJoint;
  const Counts x0 = grouped ? visible_counts(data) : Counts{};
  const Matrix x_rows = grouped ? Matrix() : data.as_real();

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    if (tracker.active() && epoch % std::max(1, cfg.trace_every) == 0) out.trace.push_back(tracker.row(epoch, out.params));
    const RbmMoments g = grouped ? cd1_gradient_counts(out.params, x0, rng) : cd1_gradient_rows(out.params, x_rows, rng);
    apply(out.params, g, rate);
    out.epochs_run = epoch + 1;
    if (!finite_params(out.params)) {
      out.diverged = true;
      return out;
    }
    if (cfg.tolerance > 0 && max_abs(g) < cfg.tolerance) break;
  }
  if (tracker.active()) out.trace.push_back(tracker.row(out.epochs_run, out.params));
  return out;
}

SampleSet rbm_generate(const RbmParams& p, Index count, int burn_in, Rng& rng) {
  Matrix x(count, p.n_x);
  for (Index r = 0; r < count; ++r)
    for (int i = 0; i < p.n_x; ++i) x(r, i) = uniform01(rng) < 0.5 ? 1.0 : 0.0;
  for (int t = 0; t < burn_in; ++t) {
    const Matrix h = sample_bernoulli_rows(hidden_probs(p, x), rng);
    x = sample_bernoulli_rows(visible_probs(p, h), rng);
  }
  SampleSet s;
  s.n = p.n_x;
  s.rows = x.cast<std::uint8_t>();
  return s;
}

}  // namespace cif
