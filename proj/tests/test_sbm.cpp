#include "oracles.hpp"

#include "cif/eval.hpp"
#include "cif/fisher.hpp"
#include "cif/sbm.hpp"

#include <doctest.h>

#include <random>

using namespace cif;

namespace {

SbmParams random_params(int n, std::mt19937_64& rng, Scalar scale = 1.0) {
  std::normal_distribution<Scalar> g(0, scale);
  SbmParams p = SbmParams::zeros(n);
  for (int i = 0; i < n; ++i) {
    p.b(i) = g(rng);
    for (int j = i + 1; j < n; ++j) p.U(i, j) = p.U(j, i) = g(rng);
  }
  return p;
}

Vector state_vector(int n, Mask s) {
  Vector x(n);
  for (int i = 0; i < n; ++i) x(i) = (s >> i) & 1u;
  return x;
}

// Transition matrix of one sequential sweep, built from the single-site kernels.
Matrix sweep_kernel(const SbmParams& p) {
  const Index size = state_count(p.n);
  Matrix k = Matrix::Identity(size, size);
  for (int i = 0; i < p.n; ++i) {
    Matrix site = Matrix::Zero(size, size);
    for (Mask s = 0; s < Mask(size); ++s) {
      Scalar a = p.b(i);
      for (int j = 0; j < p.n; ++j)
        if (j != i && (s >> j & 1u)) a += p.U(i, j);
      const Scalar on = oracle::sigmoid(a);
      site(s, s | (Mask{1} << i)) += on;
      site(s, s & ~(Mask{1} << i)) += 1 - on;
    }
    k = k * site;
  }
  return k;
}

Scalar max_moment_gap(const Distribution& model, const Distribution& data) {
  const Vector a = eta_from_p(model).eta, b = eta_from_p(data).eta;
  Scalar gap = 0;
  for (Mask m = 1; m < Mask(a.size()); ++m)
    if (cardinality(m) <= 2) gap = std::max(gap, std::abs(a(m) - b(m)));
  return gap;
}

}  // namespace

TEST_CASE("energy") {
  SbmParams p = SbmParams::zeros(3);
  for (Mask s = 0; s < 8; ++s) CHECK(sbm_energy(p, s) == 0.0);
  SbmParams q = SbmParams::zeros(2);
  q.U(0, 1) = q.U(1, 0) = 1;
  CHECK(sbm_energy(q, Mask{3}) == doctest::Approx(-1.0));
  Vector x(2);
  x << 1, 1;
  CHECK(sbm_energy(q, x) == doctest::Approx(-1.0));
}

TEST_CASE("stationary distribution") {
  std::mt19937_64 rng(11);
  for (int n : {1, 3, 6}) {
    const SbmParams p = random_params(n, rng);
    const Distribution d = sbm_stationary(p);
    CHECK((d.p() - oracle::sbm_distribution(p.U, p.b)).cwiseAbs().maxCoeff() < 1e-12);

    Vector boltzmann(d.size());
    for (Mask s = 0; s < Mask(d.size()); ++s) boltzmann(s) = std::exp(-sbm_energy(p, s));
    boltzmann /= boltzmann.sum();
    CHECK((d.p() - boltzmann).cwiseAbs().maxCoeff() < 1e-12);

    const Vector theta = theta_from_p(d).theta;
    const Vector embedded = sbm_theta_embedding(p);
    for (Mask m = 1; m < Mask(d.size()); ++m) {
      CHECK(std::abs(theta(m) - embedded(m)) < 1e-8);
      if (cardinality(m) > 2) CHECK(std::abs(theta(m)) < 1e-8);
    }
  }
  CHECK((sbm_stationary(SbmParams::zeros(4)).p().array() - 1.0 / 16).abs().maxCoeff() < 1e-15);
  SbmParams one = SbmParams::zeros(1);
  one.b(0) = std::log(3.0);
  CHECK(sbm_stationary(one)[1] == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("parameter validation") {
  SbmParams p = SbmParams::zeros(3);
  p.U(0, 1) = 1;
  CHECK_THROWS_AS(p.validate(), Error);
  p.U(1, 0) = 1;
  CHECK_NOTHROW(p.validate());
  p.U(2, 2) = 0.5;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("Gibbs sweep") {
  Rng rng(5);
  SUBCASE("fair coins when parameters vanish") {
    const SbmParams p = SbmParams::zeros(3);
    Vector x = Vector::Zero(3);
    Vector ones = Vector::Zero(3);
    const int sweeps = 100000;
    for (int t = 0; t < sweeps; ++t) {
      x = sbm_gibbs_step(p, x, rng);
      ones += x;
    }
    CHECK((ones / sweeps).cwiseAbs().maxCoeff() < 0.5 + 4 * 0.5 / std::sqrt(Scalar(sweeps)));
    CHECK((ones / sweeps).minCoeff() > 0.5 - 4 * 0.5 / std::sqrt(Scalar(sweeps)));
  }
  SUBCASE("saturation") {
    SbmParams p = SbmParams::zeros(2);
    p.b(0) = 30;
    int fired = 0;
    Vector x = Vector::Zero(2);
    for (int t = 0; t < 10000; ++t) fired += int(sbm_gibbs_step(p, x, rng)(0));
    CHECK(fired == 10000);
  }
  SUBCASE("long-run frequencies match the stationary table") {
    std::mt19937_64 prng(3);
    const SbmParams p = random_params(4, prng);
    const Distribution d = sbm_stationary(p);
    Vector freq = Vector::Zero(16);
    Vector x = Vector::Zero(4);
    const int sweeps = 1000000;
    for (int t = 0; t < sweeps; ++t) {
      x = sbm_gibbs_step(p, x, rng);
      Mask s = 0;
      for (int i = 0; i < 4; ++i)
        if (x(i) > 0.5) s |= Mask{1} << i;
      freq(s) += 1;
    }
    freq /= sweeps;
    CHECK(0.5 * (freq - d.p()).cwiseAbs().sum() < 0.01);
  }
}

TEST_CASE("sweep kernel leaves the stationary table invariant") {
  std::mt19937_64 rng(19);
  for (int n = 1; n <= 6; ++n) {
    const SbmParams p = random_params(n, rng);
    const Vector pi = sbm_stationary(p).p();
    const Matrix k = sweep_kernel(p);
    CHECK((k.rowwise().sum().array() - 1).abs().maxCoeff() < 1e-12);
    CHECK((k.transpose() * pi - pi).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("ML with exact negative phase") {
  std::mt19937_64 prng(23);
  Rng rng(23);
  const Distribution target = sample_target(6, rng);
  const SampleSet data = draw_samples(target, 500, rng);
  const Distribution emp = empirical_distribution(data);

  SUBCASE("zero rate leaves the initialization") {
    TrainConfig cfg;
    cfg.learning_rate = 0;
    cfg.max_epochs = 20;
    const SbmResult r = sbm_train_ml(data, cfg);
    const SbmParams init = sbm_initial_params(data);
    CHECK(r.params.U == init.U);
    CHECK(r.params.b == init.b);
    CHECK_FALSE(r.diverged);
  }
  SUBCASE("KL to the empirical table never rises at a small rate") {
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.max_epochs = 300;
    const SbmResult r = sbm_train_ml(data, cfg);
    REQUIRE(r.trace.size() == 301);
    for (std::size_t e = 1; e < r.trace.size(); ++e)
      CHECK(r.trace[e].kl_to_empirical <= r.trace[e - 1].kl_to_empirical + 1e-12);
  }
  SUBCASE("fixed point keeps first and second order moments") {
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.max_epochs = 5000;
    const SbmResult r = sbm_train_ml(data, cfg);
    CHECK(max_moment_gap(sbm_stationary(r.params), emp) < 1e-4);
    // The projection onto second-order models is the tailored empirical table.
    CHECK((sbm_stationary(r.params).p() - cif_tailor(emp, 2).p()).cwiseAbs().maxCoeff() < 1e-4);
  }
  SUBCASE("product data gives vanishing couplings") {
    Vector marg(4);
    marg << 0.2, 0.7, 0.5, 0.35;
    Vector table(16);
    for (Mask s = 0; s < 16; ++s) {
      table(s) = 1;
      for (int i = 0; i < 4; ++i) table(s) *= (s >> i & 1u) ? marg(i) : 1 - marg(i);
    }
    TrainConfig cfg;
    cfg.learning_rate = 1.0;
    cfg.max_epochs = 2000;

    // Counts proportional to the product table, up to rounding.
    std::vector<Mask> states;
    for (Mask s = 0; s < 16; ++s)
      for (long c = std::lround(table(s) * 100000); c > 0; --c) states.push_back(s);
    const SbmResult exact = sbm_train_ml(make_sample_set(4, states), cfg);
    CHECK(exact.params.U.cwiseAbs().maxCoeff() < 1e-2);

    // I.i.d. draws: each coupling estimate carries sampling noise of roughly 1/sqrt(N v_i v_j).
    const Index big = 100000;
    const SbmResult drawn = sbm_train_ml(draw_samples(distribution_from_p(table), big, rng), cfg);
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) {
        const Scalar v = marg(i) * (1 - marg(i)) * marg(j) * (1 - marg(j));
        CHECK(std::abs(drawn.params.U(i, j)) < 4 / std::sqrt(Scalar(big) * v));
      }
  }
}

TEST_CASE("Gibbs negative phase approaches the exact one") {
  Rng rng(29);
  const Distribution target = sample_target(4, rng);
  const SampleSet data = draw_samples(target, 2000, rng);
  TrainConfig exact;
  exact.learning_rate = 0.1;
  exact.max_epochs = 400;
  TrainConfig gibbs = exact;
  gibbs.negative_phase = GibbsPhase{1, 2000};
  const Scalar kl_exact = kl_divergence(target, sbm_stationary(sbm_train_ml(data, exact).params));
  const Scalar kl_gibbs = kl_divergence(target, sbm_stationary(sbm_train_ml(data, gibbs).params));
  CHECK(kl_gibbs < kl_exact * 1.5 + 0.01);
}

TEST_CASE("CD-1") {
  Rng rng(31);
  SUBCASE("all-ones data pushes every bias up") {
    const SampleSet data = make_sample_set(4, std::vector<Mask>(50, Mask{15}));
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.max_epochs = 1;
    const SbmParams zero = SbmParams::zeros(4);
    Vector previous = zero.b;
    for (int epochs = 1; epochs <= 5; ++epochs) {
      cfg.max_epochs = epochs;
      const Vector b = sbm_train_cd1(data, cfg, nullptr, &zero).params.b;
      CHECK((b - previous).minCoeff() > 0);
      previous = b;
    }
  }
  SUBCASE("first update points along the likelihood gradient") {
    for (int trial = 0; trial < 5; ++trial) {
      const Distribution target = sample_target(5, rng);
      const SampleSet data = draw_samples(target, 10000, rng);
      TrainConfig cfg;
      cfg.learning_rate = 0.1;
      cfg.max_epochs = 1;
      cfg.seed = 100 + trial;
      const SbmParams init = sbm_initial_params(data);
      const SbmParams after = sbm_train_cd1(data, cfg).params;

      const Moments pos = smoothed_moments(data);
      const Distribution model = sbm_stationary(init);
      Scalar dot = 0;
      for (int i = 0; i < 5; ++i) {
        Scalar model_i = 0;
        for (Mask s = 0; s < 32; ++s)
          if (s >> i & 1u) model_i += model[s];
        dot += (after.b(i) - init.b(i)) * (pos.first(i) - model_i);
        for (int j = i + 1; j < 5; ++j) {
          Scalar model_ij = 0;
          for (Mask s = 0; s < 32; ++s)
            if ((s >> i & 1u) && (s >> j & 1u)) model_ij += model[s];
          dot += (after.U(i, j) - init.U(i, j)) * (pos.second(i, j) - model_ij);
        }
      }
      CHECK(dot > 0);
    }
  }
}

TEST_CASE("CD-CIF mask") {
  Rng rng(37);
  const Distribution target = sample_target(10, rng);
  const SampleSet data = draw_samples(target, 100, rng);

  const CifMask a = cd_cif_mask(data, 0.65);
  const CifMask b = cd_cif_mask(data, 0.65);
  CHECK(a.keep == b.keep);
  CHECK(a.tau == doctest::Approx(0.65 * a.total));
  for (int i = 0; i < 10; ++i) {
    CHECK_FALSE(a.keep(i, i));
    for (int j = 0; j < 10; ++j) CHECK(a.keep(i, j) == a.keep(j, i));
  }
  const CifMask all = cd_cif_mask(data, 0.0);
  CHECK(all.kept == 45);
  CHECK(cd_cif_mask(data, 0.0, CifRule::CumulativeShare).kept == 0);
  const CifMask cumulative = cd_cif_mask(data, 0.65, CifRule::CumulativeShare);
  CHECK(cumulative.kept >= a.kept);

  const Moments m = smoothed_moments(data);
  Scalar total = 0;
  for (int i = 0; i < 10; ++i)
    for (int j = i + 1; j < 10; ++j) {
      CHECK(a.fisher(i, j) == doctest::Approx(m.second(i, j) - m.second(i, j) * m.second(i, j)));
      total += a.fisher(i, j);
    }
  CHECK(a.total == doctest::Approx(total));

  CHECK(CifConfig{}.resolve(100) == doctest::Approx(0.65));
  CHECK(CifConfig{}.resolve(20) == 0.0);
}

TEST_CASE("CD-CIF training") {
  Rng rng(41);
  const Distribution target = sample_target(6, rng);
  const SampleSet data = draw_samples(target, 100, rng);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.max_epochs = 100;
  cfg.seed = 9;

  SUBCASE("r = 0 follows CD-1 exactly") {
    TrainConfig cif = cfg;
    cif.cd_cif = CifConfig{Scalar{0}, CifRule::Threshold};
    const SbmResult x = sbm_train_cd1(data, cfg);
    const SbmResult y = sbm_train_cd_cif(data, cif);
    CHECK(x.params.U == y.params.U);
    CHECK(x.params.b == y.params.b);
    REQUIRE(x.trace.size() == y.trace.size());
    for (std::size_t e = 0; e < x.trace.size(); ++e) CHECK(x.trace[e].kl_to_empirical == y.trace[e].kl_to_empirical);
  }
  SUBCASE("automatic r and frozen weights") {
    TrainConfig cif = cfg;
    cif.cd_cif = CifConfig{};
    const SbmResult r = sbm_train_cd_cif(data, cif);
    CHECK(r.resolved_r == doctest::Approx(0.65));
    const CifMask mask = cd_cif_mask(data, 0.65);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        if (!mask.keep(i, j)) CHECK(r.params.U(i, j) == 0.0);
  }
}

TEST_CASE("CD-1 and ML agree at larger sample sizes") {
  Rng rng(43);
  Scalar ml = 0, cd = 0;
  for (int t = 0; t < 3; ++t) {
    const Distribution target = sample_target(10, rng);
    const SampleSet data = draw_samples(target, 1200, rng);
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.max_epochs = 1000;
    cfg.seed = 7 + t;
    ml += kl_divergence(target, sbm_stationary(sbm_train_ml(data, cfg).params));
    cd += kl_divergence(target, sbm_stationary(sbm_train_cd1(data, cfg).params));
  }
  CHECK(std::abs(cd - ml) <= 0.15 * ml);
}

TEST_CASE("generation") {
  std::mt19937_64 prng(47);
  Rng rng(47);
  const SbmParams p = random_params(3, prng);
  const SampleSet s = sbm_generate(p, 20000, 50, rng);
  CHECK(s.size() == 20000);
  const Distribution emp = empirical_distribution(s);
  CHECK(0.5 * (emp.p() - sbm_stationary(p).p()).cwiseAbs().sum() < 0.02);
}
