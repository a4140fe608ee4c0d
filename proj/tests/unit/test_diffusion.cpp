#include <doctest.h>

#include <cmath>

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "pvd/diffusion.hpp"
#include "pvd/errors.hpp"

using namespace pvd;
using pvd::testing::random_cloud;

TEST_SUITE("diffusion") {
  TEST_CASE("q_sample closed form") {
    const auto s = NoiseSchedule::linear(3, 0.1, 0.3);
    PointCloud x0(1, 3), eps(1, 3);
    x0 << 1, 0, 0;
    eps << 0, 1, 0;
    const PointCloud x = q_sample(x0, 2, eps, s);
    CHECK(x(0, 0) == doctest::Approx(std::sqrt(0.72)).epsilon(1e-14));
    CHECK(x(0, 1) == doctest::Approx(std::sqrt(0.28)).epsilon(1e-14));
    CHECK(x(0, 2) == 0.0);

    Rng rng(1);
    const PointCloud a = random_cloud(5, rng);
    const PointCloud zero = PointCloud::Zero(5, 3);
    CHECK((q_sample(a, 3, zero, s) - std::sqrt(s.alpha_bar(3)) * a).norm() < 1e-15);
    CHECK((q_sample(zero, 3, a, s) - std::sqrt(1 - s.alpha_bar(3)) * a).norm() < 1e-15);
    CHECK_THROWS_AS(q_sample(a, 1, PointCloud::Zero(4, 3), s), ShapeError);
    CHECK_THROWS(q_sample(a, 0, zero, s));
    CHECK_THROWS(q_sample(a, 4, zero, s));
  }

  TEST_CASE("q_step") {
    const auto s = NoiseSchedule::linear(10, 0.01, 0.2);
    Rng rng(2);
    const PointCloud x = random_cloud(4, rng), n = random_cloud(4, rng);
    const PointCloud zero = PointCloud::Zero(4, 3);
    CHECK((q_step(x, 5, zero, s) - std::sqrt(1 - s.beta(5)) * x).norm() <= 1e-14 * x.norm());
    CHECK((q_step(zero, 5, n, s) - std::sqrt(s.beta(5)) * n).norm() <= 1e-14 * n.norm());
  }

  TEST_CASE("posterior at t=1 and coefficient sum") {
    const auto s = NoiseSchedule::linear(10, 0.05, 0.2);
    Rng rng(3);
    const PointCloud x0 = random_cloud(6, rng), xt = random_cloud(6, rng);
    const Posterior p1 = posterior_params(x0, xt, 1, s);
    CHECK((p1.mean - x0).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(p1.variance == 0.0);
    CHECK_THROWS(posterior_params(x0, xt, 0, s));
    for (int t = 2; t <= 10; ++t) {
      const double ab = s.alpha_bar(t), abp = s.alpha_bar(t - 1);
      const double c = (std::sqrt(abp) * s.beta(t) + std::sqrt(s.alpha(t)) * (1 - abp)) / (1 - ab);
      const Posterior p = posterior_params(x0, x0, t, s);
      CHECK((p.mean - c * x0).norm() <= 1e-12 * x0.norm());
      CHECK(p.variance == doctest::Approx((1 - abp) / (1 - ab) * s.beta(t)).epsilon(1e-14));
    }
  }

  TEST_CASE("posterior density equals Bayes quotient") {
    const auto r = testing::posterior_bayes_check(10, 0.05, 0.3);
    CHECK(r.evaluations == 9 * 21 * 21 * 21);
    CHECK(r.max_rel <= 1e-9);
  }

  TEST_CASE("mean from true eps is the posterior mean") {
    const auto s = NoiseSchedule::linear(50, 1e-4, 0.05);
    Rng rng(4);
    for (int t : {1, 2, 25, 50}) {
      const PointCloud x0 = random_cloud(8, rng), eps = random_cloud(8, rng);
      const PointCloud xt = q_sample(x0, t, eps, s);
      const PointCloud mu = predict_mu_from_eps(xt, t, eps, s);
      CHECK((mu - posterior_params(x0, xt, t, s).mean).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((predict_mu_from_eps(xt, t, PointCloud::Zero(8, 3), s) - xt / std::sqrt(s.alpha(t))).norm() < 1e-14);
    }
    const auto tiny = NoiseSchedule::linear(2, 1e-12, 1e-12);
    const PointCloud x = random_cloud(3, rng);
    CHECK((predict_mu_from_eps(x, 2, random_cloud(3, rng), tiny) - x).cwiseAbs().maxCoeff() < 1e-5);
  }

  TEST_CASE("eps loss") {
    Rng rng(5);
    const PointCloud e = random_cloud(7, rng);
    CHECK(eps_loss(e, e) == 0.0);
    CHECK(eps_loss(PointCloud::Zero(2, 3), PointCloud::Ones(2, 3)) == 1.0);
    CHECK_THROWS_AS(eps_loss(e, PointCloud::Zero(6, 3)), ShapeError);
  }

  TEST_CASE("loss ratio identity") {
    const auto s = NoiseSchedule::linear(100, 1e-4, 0.02);
    Rng rng(6);
    for (int i = 0; i < 100; ++i) {
      const int t = 1 + static_cast<int>(rng() % 100);
      const PointCloud x0 = random_cloud(16, rng), eps = random_cloud(16, rng), eh = random_cloud(16, rng);
      const PointCloud xt = q_sample(x0, t, eps, s);
      const double lhs = (posterior_params(x0, xt, t, s).mean - predict_mu_from_eps(xt, t, eh, s)).squaredNorm();
      const double k = s.beta(t) * s.beta(t) / (s.alpha(t) * (1 - s.alpha_bar(t)));
      const double rhs = k * (eps - eh).squaredNorm();
      CHECK(std::abs(lhs - rhs) <= 1e-10 * rhs);
    }
  }

  TEST_CASE("p_sample_step") {
    const auto s = NoiseSchedule::linear(20, 1e-3, 0.1);
    Rng rng(7);
    const PointCloud x0 = random_cloud(10, rng), eps = random_cloud(10, rng), z = random_cloud(10, rng);
    const PointCloud zero = PointCloud::Zero(10, 3);
    for (int t : {2, 10, 20}) {
      const PointCloud xt = q_sample(x0, t, eps, s);
      CHECK((p_sample_step(xt, t, eps, zero, s) - predict_mu_from_eps(xt, t, eps, s)).norm() < 1e-13);
      const PointCloud noisy = p_sample_step(xt, t, eps, z, s);
      CHECK((noisy - predict_mu_from_eps(xt, t, eps, s) - std::sqrt(s.beta(t)) * z).norm() < 1e-13);
    }
    const PointCloud x1 = q_sample(x0, 1, eps, s);
    CHECK((p_sample_step(x1, 1, eps, zero, s) - x0).cwiseAbs().maxCoeff() <= 1e-10);
    // z is ignored at t = 1 unless asked for
    CHECK((p_sample_step(x1, 1, eps, z, s) - x0).cwiseAbs().maxCoeff() <= 1e-10);
    SamplerOptions lit;
    lit.final_noise = true;
    CHECK((p_sample_step(x1, 1, eps, z, s, lit) - x0 - std::sqrt(s.beta(1)) * z).cwiseAbs().maxCoeff() <= 1e-10);
  }

  TEST_CASE("oracle reverse loop walks back along the forward trajectory") {
    const auto s = NoiseSchedule::linear(30, 1e-3, 0.05);
    Rng rng(8);
    const PointCloud x0 = random_cloud(5, rng), eps = random_cloud(5, rng);
    PointCloud x = q_sample(x0, 30, eps, s);
    const PointCloud zero = PointCloud::Zero(5, 3);
    for (int t = 30; t >= 1; --t) {
      // the noise consistent with x_t under the fixed x0
      const PointCloud e = (x - std::sqrt(s.alpha_bar(t)) * x0) / std::sqrt(1 - s.alpha_bar(t));
      x = p_sample_step(x, t, e, zero, s);
    }
    CHECK((x - x0).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("generate is deterministic and matches the zero-model closed form") {
    const auto s = NoiseSchedule::linear(15, 1e-3, 0.2);
    const EpsPredictor zero = [](const PointCloud& x, int) { return PointCloud::Zero(x.rows(), 3).eval(); };
    const PointCloud a = generate(zero, 9, s, 42);
    const PointCloud b = generate(zero, 9, s, 42);
    CHECK((a.array() == b.array()).all());
    CHECK((a - generate(zero, 9, s, 43)).norm() > 0.0);

    Rng rng(42);
    PointCloud x = standard_normal(9, rng);
    for (int t = 15; t >= 1; --t) {
      const PointCloud z = standard_normal(9, rng);
      x = x / std::sqrt(s.alpha(t));
      if (t > 1) x += std::sqrt(s.beta(t)) * z;
    }
    CHECK((x - a).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("observer sees every step and non-finite output is rejected") {
    const auto s = NoiseSchedule::linear(6, 1e-3, 0.2);
    const EpsPredictor zero = [](const PointCloud& x, int) { return PointCloud::Zero(x.rows(), 3).eval(); };
    std::vector<int> seen;
    generate(zero, 3, s, 1, {}, [&](int t, const PointCloud&) { seen.push_back(t); });
    CHECK(seen == std::vector<int>{6, 5, 4, 3, 2, 1, 0});
    const EpsPredictor bad = [](const PointCloud& x, int) {
      PointCloud e = PointCloud::Zero(x.rows(), 3);
      e(0, 0) = std::nan("");
      return e;
    };
    CHECK_THROWS_AS(generate(bad, 3, s, 1), NumericalError);
  }
}

TEST_SUITE("diffusion.stats") {
  TEST_CASE("composed forward steps reproduce the marginal") {
    const auto s = NoiseSchedule::linear(100, 1e-4, 0.02);
    PointCloud x0(1, 3);
    x0 << 0.8, -0.4, 1.5;
    for (const auto& r : testing::marginal_moments(s, x0, 10000, {1, 50, 100}, 11)) {
      INFO("t=" << r.t);
      CHECK(r.max_mean_se <= 4.0);
      CHECK(r.max_var_rel <= 0.05);
    }
  }
}
