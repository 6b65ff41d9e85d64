#include "cif/sbm.hpp"

#include "cif/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cif {

namespace {

inline Scalar sigmoid(Scalar a) { return 1.0 / (1.0 + std::exp(-a)); }

void check_data(const SampleSet& data) {
  if (data.size() < 1) throw Error(ErrorCode::BadLength, "empty sample set");
  if (data.n < 1) throw Error(ErrorCode::BadLength, "no variables");
}

// Only below this size is KL tracked every epoch.
constexpr int kTraceMaxVariables = 16;

struct Tracker {
  const Distribution* target = nullptr;
  std::optional<Distribution> empirical;
  int every = 1;
  int patience = 50;
  Scalar last = std::numeric_limits<Scalar>::quiet_NaN();
  int rises = 0;

  Tracker(const SampleSet& data, const Distribution* t, const TrainConfig& cfg)
      : target(t), every(std::max(1, cfg.trace_every)), patience(cfg.divergence_patience) {
    if (data.n <= kTraceMaxVariables) empirical = empirical_distribution(data);
    if (target && target->n() != data.n) throw Error(ErrorCode::DimensionMismatch, "target and data differ in n");
  }

  bool active() const { return empirical.has_value(); }

  TraceRow row(int epoch, const Distribution& model) const {
    TraceRow r;
    r.epoch = epoch;
    r.kl_to_empirical = kl_divergence(*empirical, model);
    if (target) r.kl_to_target = kl_divergence(*target, model);
    return r;
  }

  // True once KL to the empirical distribution has risen `patience` times in a row.
  bool rising(Scalar kl) {
    if (!std::isnan(last) && kl > last) ++rises;
    else rises = 0;
    last = kl;
    return patience > 0 && rises >= patience;
  }
};

bool finite_params(const SbmParams& p) { return p.U.allFinite() && p.b.allFinite(); }

// One sequential sweep using `u` (already masked) for the activations.
void sweep(const Matrix& u, const Vector& b, Scalar* x, int n, Rng& rng) {
  for (int i = 0; i < n; ++i) {
    Scalar a = b(i);
    for (int j = 0; j < n; ++j) a += u(i, j) * x[j];
    x[i] = uniform01(rng) < sigmoid(a) ? 1.0 : 0.0;
  }
}

void model_moments(const Distribution& d, Vector& first, Matrix& second) {
  const int n = d.n();
  const Vector eta = lattice::superset_zeta(Vector(d.p()));
  first.resize(n);
  second.resize(n, n);
  for (int i = 0; i < n; ++i) {
    first(i) = eta(Mask{1} << i);
    second(i, i) = first(i);
    for (int j = i + 1; j < n; ++j) second(i, j) = second(j, i) = eta((Mask{1} << i) | (Mask{1} << j));
  }
}

SbmParams starting_point(const SampleSet& data, const SbmParams* init) {
  if (!init) return sbm_initial_params(data);
  init->validate();
  if (init->n != data.n) throw Error(ErrorCode::DimensionMismatch, "initial parameters do not match the data");
  return *init;
}

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

SbmResult train_contrastive(const SampleSet& data, const TrainConfig& cfg, const Distribution* target,
                            const SbmParams* init, const BoolMatrix& keep, Scalar resolved_r) {
  check_data(data);
  const int n = data.n;
  const Index count = data.size();
  const Scalar rate = cfg.effective_rate(count);
  Tracker tracker(data, target, cfg);

  SbmResult out;
  out.params = starting_point(data, init);
  out.resolved_r = resolved_r;
  const Matrix keep_real = keep.cast<Scalar>();
  out.params.U = out.params.U.cwiseProduct(keep_real);

  const Moments pos = raw_moments(data);
  Matrix x0 = data.as_real();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x1(count, n);
  Rng rng(cfg.seed);
  Vector a(n);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    if (tracker.active() && epoch % tracker.every == 0) out.trace.push_back(tracker.row(epoch, sbm_stationary(out.params)));

    const Matrix& u = out.params.U;  // masked entries are held at zero
    // Activations of every data row at once; a sweep then only touches them when a unit flips.
    Matrix act = x0 * u;
    act.rowwise() += out.params.b.transpose();
    for (Index r = 0; r < count; ++r) {
      for (int i = 0; i < n; ++i) {
        x1(r, i) = x0(r, i);
        a(i) = act(r, i);
      }
      for (int i = 0; i < n; ++i) {
        const Scalar next = uniform01(rng) < sigmoid(a(i)) ? 1.0 : 0.0;
        const Scalar delta = next - x1(r, i);
        x1(r, i) = next;
        const Scalar* col = u.col(i).data();
        for (int j = 0; j < n; ++j) a(j) += col[j] * delta;
      }
    }
    const Scalar inv = 1.0 / static_cast<Scalar>(count);
    const Vector neg1 = x1.colwise().sum().transpose() * inv;
    const Matrix neg2 = x1.transpose() * x1 * inv;

    Matrix gu = (pos.second - neg2).cwiseProduct(keep_real);
    gu.diagonal().setZero();
    const Vector gb = pos.first - neg1;
    out.params.U += rate * gu;
    out.params.b += rate * gb;
    out.epochs_run = epoch + 1;

    if (!finite_params(out.params)) {
      out.diverged = true;
      return out;
    }
    if (cfg.tolerance > 0 && std::max(gu.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff()) < cfg.tolerance) break;
  }
  if (tracker.active()) out.trace.push_back(tracker.row(out.epochs_run, sbm_stationary(out.params)));
  return out;
}

}  // namespace

SbmParams SbmParams::zeros(int n) {
  SbmParams p;
  p.n = n;
  p.U = Matrix::Zero(n, n);
  p.b = Vector::Zero(n);
  return p;
}

void SbmParams::validate() const {
  if (U.rows() != n || U.cols() != n || b.size() != n) throw Error(ErrorCode::DimensionMismatch, "SBM parameter shapes");
  for (int i = 0; i < n; ++i) {
    if (U(i, i) != 0) throw Error(ErrorCode::Parse, "SBM weights must have a zero diagonal");
    for (int j = i + 1; j < n; ++j)
      if (U(i, j) != U(j, i)) throw Error(ErrorCode::Parse, "SBM weights must be symmetric");
  }
  if (!U.allFinite() || !b.allFinite()) throw Error(ErrorCode::Parse, "non-finite SBM parameter");
}

Scalar sbm_energy(const SbmParams& p, const ConstVecRef& x) {
  if (x.size() != p.n) throw Error(ErrorCode::DimensionMismatch, "state length differs from n");
  return -0.5 * x.dot(p.U * x) - p.b.dot(x);
}

Scalar sbm_energy(const SbmParams& p, Mask state) {
  Vector x(p.n);
  for (int i = 0; i < p.n; ++i) x(i) = (state >> i) & 1u;
  return sbm_energy(p, x);
}

Distribution sbm_stationary(const SbmParams& p) {
  if (p.n > kMaxVariables) throw Error(ErrorCode::CapExceeded, "SBM stationary needs n <= 20");
  const Index size = state_count(p.n);
  Vector neg_energy(size);
  // Gray-code walk: flipping bit k changes -E by +-(b_k + sum_j U_kj x_j).
  Vector field = p.b;
  Scalar value = 0;
  Mask state = 0;
  neg_energy(0) = 0;
  for (Index g = 1; g < size; ++g) {
    const int k = __builtin_ctzll(static_cast<unsigned long long>(g));
    const Mask bit = Mask{1} << k;
    if (state & bit) {
      state &= ~bit;
      value -= field(k);
      field -= p.U.col(k);
    } else {
      value += field(k);
      field += p.U.col(k);
      state |= bit;
    }
    neg_energy(state) = value;
  }
  const Scalar top = neg_energy.maxCoeff();
  Vector w = (neg_energy.array() - top).exp();
  return Distribution::from_p(w / w.sum());
}

Vector sbm_theta_embedding(const SbmParams& p) {
  Vector theta = Vector::Zero(state_count(p.n));
  for (int i = 0; i < p.n; ++i) {
    theta(Mask{1} << i) = p.b(i);
    for (int j = i + 1; j < p.n; ++j) theta((Mask{1} << i) | (Mask{1} << j)) = p.U(i, j);
  }
  return theta;
}

Vector sbm_gibbs_step(const SbmParams& p, Vector x, Rng& rng) {
  if (x.size() != p.n) throw Error(ErrorCode::DimensionMismatch, "state length differs from n");
  sweep(p.U, p.b, x.data(), p.n, rng);
  return x;
}

SbmParams sbm_initial_params(const SampleSet& data) {
  check_data(data);
  const Moments m = smoothed_moments(data);
  SbmParams p = SbmParams::zeros(data.n);
  for (int i = 0; i < data.n; ++i) p.b(i) = std::clamp(std::log(m.first(i) / (1 - m.first(i))), -4.0, 4.0);
  return p;
}

CifMask cd_cif_mask(const SampleSet& data, Scalar r, CifRule rule) {
  check_data(data);
  const int n = data.n;
  const Moments m = smoothed_moments(data);
  CifMask out;
  out.r = r;
  out.fisher = Matrix::Zero(n, n);
  out.keep = BoolMatrix::Constant(n, n, false);
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const Scalar e = m.second(i, j);
      out.fisher(i, j) = out.fisher(j, i) = e - e * e;
      out.total += e - e * e;
      pairs.emplace_back(i, j);
    }
  out.tau = r * out.total;

  if (rule == CifRule::Threshold) {
    for (auto [i, j] : pairs)
      if (out.fisher(i, j) > out.tau) out.keep(i, j) = out.keep(j, i) = true;
  } else {
    // Highest-F weights first until the kept share reaches tau.
    std::stable_sort(pairs.begin(), pairs.end(),
                     [&](auto a, auto b) { return out.fisher(a.first, a.second) > out.fisher(b.first, b.second); });
    Scalar carried = 0;
    for (auto [i, j] : pairs) {
      if (carried >= out.tau) break;
      carried += out.fisher(i, j);
      out.keep(i, j) = out.keep(j, i) = true;
    }
  }
  out.kept = int(out.keep.count() / 2);
  return out;
}

SbmResult sbm_train_ml(const SampleSet& data, const TrainConfig& cfg, const Distribution* target,
                       const SbmParams* init) {
  check_data(data);
  const int n = data.n;
  const Scalar rate = cfg.effective_rate(data.size());
  const bool exact = std::holds_alternative<ExactPhase>(cfg.negative_phase);
  if (exact && n > kMaxVariables) throw Error(ErrorCode::CapExceeded, "exact negative phase needs n <= 20");
  Tracker tracker(data, target, cfg);

  // Positive statistics are the moments of the smoothed empirical distribution.
  const Moments pos = smoothed_moments(data);
  SbmResult out;
  out.params = starting_point(data, init);
  Rng rng(cfg.seed);
  const Matrix x_data = data.as_real();

  Vector neg1;
  Matrix neg2;
  for (int epoch = 0; epoch <= cfg.max_epochs; ++epoch) {
    std::optional<Distribution> model;
    if (exact || (tracker.active() && epoch % tracker.every == 0)) model = sbm_stationary(out.params);
    if (tracker.active() && (epoch % tracker.every == 0 || epoch == cfg.max_epochs)) {
      const TraceRow row = tracker.row(epoch, *model);
      out.trace.push_back(row);
      if (tracker.rising(row.kl_to_empirical)) {
        out.diverged = true;
        return out;
      }
    }
    if (epoch == cfg.max_epochs) break;

    if (exact) {
      model_moments(*model, neg1, neg2);
    } else {
      const auto& g = std::get<GibbsPhase>(cfg.negative_phase);
      const int chains = std::max(1, g.chains);
      Matrix states(chains, n);
      Vector x(n);
      for (int c = 0; c < chains; ++c) {
        x = x_data.row(Index(uniform_index(rng, std::uint64_t(data.size())))).transpose();
        for (int s = 0; s < g.steps; ++s) sweep(out.params.U, out.params.b, x.data(), n, rng);
        states.row(c) = x.transpose();
      }
      neg1 = states.colwise().mean().transpose();
      neg2 = states.transpose() * states / Scalar(chains);
    }

    Matrix gu = pos.second - neg2;
    gu.diagonal().setZero();
    const Vector gb = pos.first - neg1;
    out.params.U += rate * gu;
    out.params.b += rate * gb;
    out.epochs_run = epoch + 1;
    if (!finite_params(out.params)) {
      out.diverged = true;
      return out;
    }
    if (cfg.tolerance > 0 && std::max(gu.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff()) < cfg.tolerance) {
      if (tracker.active()) {
        const TraceRow row = tracker.row(out.epochs_run, sbm_stationary(out.params));
        out.trace.push_back(row);
      }
      break;
    }
  }
  return out;
}

SbmResult sbm_train_cd1(const SampleSet& data, const TrainConfig& cfg, const Distribution* target,
                        const SbmParams* init) {
  check_data(data);
  BoolMatrix keep = BoolMatrix::Constant(data.n, data.n, true);
  keep.diagonal().setConstant(false);
  return train_contrastive(data, cfg, target, init, keep, std::numeric_limits<Scalar>::quiet_NaN());
}

SbmResult sbm_train_cd_cif(const SampleSet& data, const TrainConfig& cfg, const Distribution* target,
                           const SbmParams* init) {
  if (!cfg.cd_cif) return sbm_train_cd1(data, cfg, target, init);
  check_data(data);
  const Scalar r = cfg.cd_cif->resolve(data.size());
  if (!(r >= 0 && r < 1)) throw Error(ErrorCode::Parse, "CD-CIF r must lie in [0, 1)");
  const CifMask mask = cd_cif_mask(data, r, cfg.cd_cif->rule);
  return train_contrastive(data, cfg, target, init, mask.keep, r);
}

SampleSet sbm_generate(const SbmParams& p, Index count, int burn_in, Rng& rng) {
  SampleSet s;
  s.n = p.n;
  s.rows.resize(count, p.n);
  Vector x(p.n);
  for (Index r = 0; r < count; ++r) {
    for (int i = 0; i < p.n; ++i) x(i) = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    for (int t = 0; t < burn_in; ++t) sweep(p.U, p.b, x.data(), p.n, rng);
    for (int i = 0; i < p.n; ++i) s.rows(r, i) = std::uint8_t(x(i));
  }
  return s;
}

}  // namespace cif
