#include "oracles.hpp"

#include "cif/eval.hpp"
#include "cif/rbm.hpp"

#include <doctest.h>

#include <random>

using namespace cif;

namespace {

RbmParams random_params(int n_x, int n_h, std::mt19937_64& rng, Scalar scale = 1.0) {
  std::normal_distribution<Scalar> g(0, scale);
  RbmParams p = RbmParams::zeros(n_x, n_h);
  for (Index k = 0; k < p.W.size(); ++k) p.W.data()[k] = g(rng);
  for (Index k = 0; k < p.b.size(); ++k) p.b(k) = g(rng);
  for (Index k = 0; k < p.d.size(); ++k) p.d(k) = g(rng);
  return p;
}

Vector bits(int n, Mask s) {
  Vector x(n);
  for (int i = 0; i < n; ++i) x(i) = (s >> i) & 1u;
  return x;
}

// Marginal over x of an oracle joint table.
Vector visible_marginal(const Vector& joint, int n_x) {
  Vector m = Vector::Zero(state_count(n_x));
  for (Mask s = 0; s < Mask(joint.size()); ++s) m(s & full_mask(n_x)) += joint(s);
  return m;
}

Scalar log_likelihood(const RbmParams& p, const Distribution& q) {
  const Vector m = rbm_marginal(p).p();
  return (q.p().array() * m.array().log()).sum();
}

TrainConfig projection_config() {
  TrainConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.ip_sub_epochs = 20000;
  cfg.gamma_b_tolerance = 1e-7;
  return cfg;
}

}  // namespace

TEST_CASE("joint and marginal tables") {
  std::mt19937_64 rng(3);
  for (auto [nx, nh] : {std::pair{1, 1}, {2, 3}, {3, 2}, {4, 4}}) {
    const RbmParams p = random_params(nx, nh, rng);
    const Vector ref = oracle::rbm_joint(p.W, p.b, p.d);
    const JointDistribution j = rbm_joint(p);
    CHECK((j.p.p() - ref).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((rbm_marginal(p).p() - visible_marginal(ref, nx)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((j.marginal_x().p() - visible_marginal(ref, nx)).cwiseAbs().maxCoeff() < 1e-12);

    Scalar z = 0;
    for (Mask s = 0; s < Mask(ref.size()); ++s) {
      const Vector x = bits(nx, s & full_mask(nx)), h = bits(nh, s >> nx);
      const Scalar e = x.dot(p.W * h) + p.b.dot(x) + p.d.dot(h);
      z += std::exp(e);
    }
    CHECK(rbm_log_partition(p) == doctest::Approx(std::log(z)).epsilon(1e-12));

    // Only order-1 terms and visible-hidden pairs survive in theta.
    const Vector theta = theta_from_p(j.p).theta;
    const Vector embedded = rbm_theta_embedding(p);
    const Mask xmask = full_mask(nx);
    for (Mask m = 1; m < Mask(theta.size()); ++m) {
      CHECK(std::abs(theta(m) - embedded(m)) < 1e-8);
      const bool cross = cardinality(m) == 2 && (m & xmask) && (m & ~xmask);
      if (cardinality(m) > 1 && !cross) CHECK(std::abs(theta(m)) < 1e-8);
    }
  }

  SUBCASE("independent units without weights") {
    RbmParams p = RbmParams::zeros(2, 2);
    p.b << 0.3, -1.0;
    p.d << 2.0, 0.1;
    const JointDistribution j = rbm_joint(p);
    for (Mask s = 0; s < 16; ++s) {
      Scalar prod = 1;
      const Vector a = (Vector(4) << p.b, p.d).finished();
      for (int i = 0; i < 4; ++i) prod *= (s >> i & 1u) ? oracle::sigmoid(a(i)) : 1 - oracle::sigmoid(a(i));
      CHECK(j.p[s] == doctest::Approx(prod).epsilon(1e-12));
    }
  }
  SUBCASE("single interaction") {
    RbmParams p = RbmParams::zeros(1, 1);
    p.W(0, 0) = std::log(2.0);
    const JointDistribution j = rbm_joint(p);
    CHECK(j.p[3] / j.p[0] == doctest::Approx(2.0).epsilon(1e-14));
  }
}

TEST_CASE("conditionals") {
  std::mt19937_64 rng(5);
  const RbmParams p = random_params(3, 2, rng);
  const Vector joint = oracle::rbm_joint(p.W, p.b, p.d);
  for (Mask xs = 0; xs < 8; ++xs) {
    const Vector f = rbm_cond_h_given_x(p, bits(3, xs));
    Scalar px = 0;
    for (Mask hs = 0; hs < 4; ++hs) px += joint(xs | hs << 3);
    for (Mask hs = 0; hs < 4; ++hs) {
      Scalar prod = 1;
      for (int j = 0; j < 2; ++j) prod *= (hs >> j & 1u) ? f(j) : 1 - f(j);
      CHECK(std::abs(prod - joint(xs | hs << 3) / px) < 1e-12);
    }
  }
  for (Mask hs = 0; hs < 4; ++hs) {
    const Vector g = rbm_cond_x_given_h(p, bits(2, hs));
    Scalar ph = 0, p1 = 0;
    for (Mask xs = 0; xs < 8; ++xs) {
      ph += joint(xs | hs << 3);
      if (xs & 1u) p1 += joint(xs | hs << 3);
    }
    CHECK(std::abs(g(0) - p1 / ph) < 1e-12);
  }
  RbmParams zero = RbmParams::zeros(3, 2);
  zero.d << 0.4, -2;
  CHECK(rbm_cond_h_given_x(zero, bits(3, 5))(1) == doctest::Approx(oracle::sigmoid(-2)));
  RbmParams sat = RbmParams::zeros(1, 1);
  sat.d(0) = 30;
  CHECK(rbm_cond_h_given_x(sat, bits(1, 0))(0) >= 1 - 1e-12);
}

TEST_CASE("gamma_h projection") {
  std::mt19937_64 prng(7);
  Rng rng(7);
  const RbmParams p = random_params(3, 2, prng);
  const Distribution q_x = sample_target(3, rng);
  const JointDistribution q = gamma_h(p, q_x);
  CHECK((q.marginal_x().p() - q_x.p()).cwiseAbs().maxCoeff() < 1e-14);
  const JointDistribution model = rbm_joint(p);
  CHECK(std::abs(kl_divergence(q.p, model.p) - kl_divergence(q_x, rbm_marginal(p))) < 1e-10);
  const JointDistribution fixed = gamma_h(p, rbm_marginal(p));
  CHECK((fixed.p.p() - model.p.p()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THROWS_AS(gamma_h(p, sample_target(4, rng)), Error);
}

TEST_CASE("gamma_b projection") {
  std::mt19937_64 prng(9);
  Rng rng(9);
  SUBCASE("moment preservation on random joints") {
    for (int t = 0; t < 5; ++t) {
      const Distribution table = sample_target(4, rng);
      const JointDistribution q{2, 2, table};
      for (GammaBSolver solver : {GammaBSolver::Gradient, GammaBSolver::Newton}) {
        TrainConfig cfg = projection_config();
        cfg.gamma_b_solver = solver;
        GammaBReport report;
        const RbmParams fit = gamma_b(q, cfg, nullptr, &report);
        CHECK(report.converged);
        CHECK(rbm_model_moments(fit).max_abs_diff(joint_moments(q)) < 1e-5);
        // First-order condition over the free statistics.
        const JointDistribution learned = rbm_joint(fit);
        CHECK(joint_moments(learned).max_abs_diff(joint_moments(q)) < 1e-5);
      }
    }
  }
  SUBCASE("an RBM joint projects onto itself") {
    const RbmParams p = random_params(2, 2, prng, 0.7);
    const JointDistribution q = rbm_joint(p);
    const RbmParams fit = gamma_b(q, projection_config());
    CHECK((rbm_joint(fit).p.p() - q.p.p()).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("budget exhaustion is reported") {
    TrainConfig cfg;
    cfg.ip_sub_epochs = 1;
    const JointDistribution q{2, 2, sample_target(4, rng)};
    CHECK_THROWS_AS(gamma_b(q, cfg), Error);
  }
  SUBCASE("projection minimizes the divergence over the family") {
    const JointDistribution q{2, 2, sample_target(4, rng)};
    const RbmParams fit = gamma_b(q, projection_config());
    const Scalar best = kl_divergence(q.p, rbm_joint(fit).p);
    std::normal_distribution<Scalar> g(0, 0.05);
    for (int t = 0; t < 50; ++t) {
      RbmParams near = fit;
      for (Index k = 0; k < near.W.size(); ++k) near.W.data()[k] += g(prng);
      for (Index k = 0; k < near.b.size(); ++k) near.b(k) += g(prng);
      CHECK(kl_divergence(q.p, rbm_joint(near).p) >= best - 1e-12);
    }
  }
}

TEST_CASE("fractional mixed coordinates") {
  Rng rng(11);
  for (int t = 0; t < 10; ++t) {
    const JointDistribution q{2, 2, sample_target(4, rng)};
    const FractionalMixed m = fractional_mixed_from_joint(q);
    CHECK(m.eta_labels.size() == 8);    // 4 singletons and 4 cross pairs
    CHECK(m.theta_labels.size() == 7);  // 2 within-group pairs and 5 higher orders
    const JointDistribution back = joint_from_fractional_mixed(m);
    CHECK((back.p.p() - q.p.p()).cwiseAbs().maxCoeff() < 1e-6);
  }
  // An RBM joint has zero within-group and higher-order theta.
  std::mt19937_64 prng(11);
  const FractionalMixed m = fractional_mixed_from_joint(rbm_joint(random_params(2, 2, prng)));
  CHECK(m.theta.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("iterative projection") {
  Rng rng(13);
  SUBCASE("divergence chain never rises") {
    for (int t = 0; t < 3; ++t) {
      const Distribution target = sample_target(4, rng);
      const SampleSet data = draw_samples(target, 500, rng);
      TrainConfig cfg;
      cfg.half_over_n_rate = true;
      Rng init_rng(t);
      const RbmParams p0 = rbm_initial_params(data, 3, 0.01, init_rng);
      const IpResult r = rbm_train_ip(data, p0, 30, cfg, &target);
      REQUIRE(r.trace.size() == 30);
      for (std::size_t i = 0; i < r.trace.size(); ++i) {
        CHECK(r.trace[i].d_q_to_prev_p >= r.trace[i].d_q_to_new_p - 1e-6);
        if (i + 1 < r.trace.size()) CHECK(r.trace[i].d_q_to_new_p >= r.trace[i + 1].d_q_to_prev_p - 1e-6);
        // The joint divergence after gamma_h equals the marginal one.
        if (i > 0) CHECK(std::abs(r.trace[i].d_q_to_prev_p - r.trace[i - 1].kl_marginal_to_empirical) < 1e-10);
      }
    }
  }
  SUBCASE("a model that already fits stays put") {
    std::mt19937_64 prng(13);
    const RbmParams p = random_params(3, 2, prng, 0.5);
    TrainConfig cfg = projection_config();
    const IpResult r = rbm_train_ip(rbm_marginal(p), p, 5, cfg);
    for (const IpTraceRow& row : r.trace) {
      CHECK(row.d_q_to_prev_p < 1e-12);
      CHECK(row.d_q_to_new_p < 1e-12);
    }
  }
  SUBCASE("best iteration") {
    IpResult run;
    for (int i = 0; i < 4; ++i) {
      IpTraceRow row;
      row.iteration = i + 1;
      row.kl_marginal_to_empirical = std::vector<Scalar>{0.5, 0.4, 0.3, 0.2}[std::size_t(i)];
      run.trace.push_back(row);
      run.history.push_back(RbmParams::zeros(1, 1));
    }
    CHECK(best_ip_select(run).iteration == 4);
    run.trace[1].kl_marginal_to_empirical = 0.1;
    CHECK(best_ip_select(run).iteration == 2);
    CHECK_THROWS_AS(best_ip_select(IpResult{}), Error);
  }
  SUBCASE("sampled gamma_h runs and stays finite") {
    const Distribution target = sample_target(4, rng);
    const SampleSet data = draw_samples(target, 300, rng);
    TrainConfig cfg;
    cfg.half_over_n_rate = true;
    cfg.gamma_h = GammaHMode::Sampled;
    cfg.gamma_b = GammaBMode::Cd;
    cfg.ip_sub_epochs = 50;
    Rng init_rng(1);
    const IpResult r = rbm_train_ip(data, rbm_initial_params(data, 3, 0.01, init_rng), 5, cfg, &target);
    CHECK(r.iterations_run == 5);
    CHECK(std::isfinite(r.trace.back().kl_to_target));
  }
}

TEST_CASE("likelihood gradient") {
  std::mt19937_64 prng(17);
  Rng rng(17);
  for (int t = 0; t < 3; ++t) {
    const RbmParams p = t == 0 ? RbmParams::zeros(2, 2) : random_params(2, 2, prng, 0.5);
    const Distribution q = sample_target(2, rng);
    const RbmMoments g = rbm_likelihood_gradient(p, q);
    const Scalar h = 1e-6;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        RbmParams up = p, down = p;
        up.W(i, j) += h;
        down.W(i, j) -= h;
        CHECK(g.xh(i, j) == doctest::Approx((log_likelihood(up, q) - log_likelihood(down, q)) / (2 * h)).epsilon(1e-6));
      }
    for (int i = 0; i < 2; ++i) {
      RbmParams up = p, down = p;
      up.b(i) += h;
      down.b(i) -= h;
      CHECK(g.x(i) == doctest::Approx((log_likelihood(up, q) - log_likelihood(down, q)) / (2 * h)).epsilon(1e-6));
      up = p;
      down = p;
      up.d(i) += h;
      down.d(i) -= h;
      CHECK(g.h(i) == doctest::Approx((log_likelihood(up, q) - log_likelihood(down, q)) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_CASE("ML and CD-1 trainers") {
  Rng rng(19);
  const Distribution target = sample_target(3, rng);
  const SampleSet data = draw_samples(target, 2000, rng);

  SUBCASE("zero rate leaves the initialization") {
    TrainConfig cfg;
    cfg.learning_rate = 0;
    cfg.max_epochs = 10;
    cfg.n_h = 2;
    cfg.seed = 4;
    Rng init_rng(4);
    const RbmParams init = rbm_initial_params(data, 2, cfg.init_scale, init_rng);
    for (const RbmResult& r : {rbm_train_ml(data, cfg), rbm_train_cd1(data, cfg)}) {
      CHECK(r.params.W == init.W);
      CHECK(r.params.b == init.b);
      CHECK(r.params.d == init.d);
    }
  }
  SUBCASE("first CD-1 step points along the likelihood gradient") {
    for (int t = 0; t < 5; ++t) {
      const SampleSet d = draw_samples(sample_target(3, rng), 10000, rng);
      TrainConfig cfg;
      cfg.learning_rate = 0.1;
      cfg.max_epochs = 1;
      cfg.n_h = 3;
      cfg.init_scale = 0.5;
      cfg.seed = 30 + t;
      Rng init_rng(cfg.seed);
      const RbmParams init = rbm_initial_params(d, 3, cfg.init_scale, init_rng);
      const RbmParams after = rbm_train_cd1(d, cfg).params;
      const RbmMoments g = rbm_likelihood_gradient(init, empirical_distribution(d));
      const Scalar dot = ((after.W - init.W).array() * g.xh.array()).sum() + (after.b - init.b).dot(g.x) +
                         (after.d - init.d).dot(g.h);
      CHECK(dot > 0);
    }
  }
  SUBCASE("ML climbs the likelihood") {
    TrainConfig cfg;
    cfg.learning_rate = 0.2;
    cfg.max_epochs = 300;
    cfg.n_h = 2;
    const RbmResult r = rbm_train_ml(data, cfg, &target);
    REQUIRE(r.trace.size() >= 2);
    CHECK(r.trace.back().kl_to_empirical < r.trace.front().kl_to_empirical);
    CHECK_FALSE(r.diverged);
  }
  SUBCASE("trainers are deterministic per seed") {
    TrainConfig cfg;
    cfg.max_epochs = 50;
    cfg.n_h = 2;
    cfg.seed = 77;
    CHECK(rbm_train_cd1(data, cfg).params.W == rbm_train_cd1(data, cfg).params.W);
  }
}

TEST_CASE("generation") {
  std::mt19937_64 prng(23);
  Rng rng(23);
  const RbmParams p = random_params(3, 2, prng, 0.8);
  const SampleSet s = rbm_generate(p, 20000, 100, rng);
  const Distribution emp = empirical_distribution(s);
  CHECK(0.5 * (emp.p() - rbm_marginal(p).p()).cwiseAbs().sum() < 0.02);
}
