#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "pvd/errors.hpp"
#include "pvd/geometry.hpp"

using namespace pvd;
using namespace pvd::testing;

TEST_SUITE("geometry") {
  TEST_CASE("single point occupies one voxel") {
    PointCloud p(1, 3);
    p << 0.3, -2.0, 5.0;
    Matrix<double> f(1, 2);
    f << 1.5, -4.0;
    for (int D : {1, 3, 8}) {
      const VoxelGrid g = voxelize(p, f, D);
      int occupied = 0;
      for (Eigen::Index v = 0; v < g.features.rows(); ++v) {
        if (g.features.row(v).cwiseAbs().sum() == 0.0) continue;
        ++occupied;
        CHECK((g.features.row(v) - f.row(0)).norm() == 0.0);
      }
      CHECK(occupied == 1);
    }
  }

  TEST_CASE("averaging, boundary and permutation invariance") {
    PointCloud p(3, 3);
    p << 0, 0, 0, 0.01, 0.0, 0.0, 1, 1, 1;
    Matrix<double> f(3, 1);
    f << 2, 4, 100;
    const VoxelGrid g = voxelize(p, f, 2);
    const auto idx = voxel_indices(p, 2, g.norm);
    CHECK(idx[0] == idx[1]);
    CHECK(g.features(idx[0], 0) == 3.0);
    // farthest point from the centroid sits at u = 1 and lands in the last voxel
    PointCloud q(2, 3);
    q << -1, -1, -1, 1, 1, 1;
    CHECK(voxel_indices(q, 4, fit_normalization(q))[1] < 64);

    Rng rng(1);
    const PointCloud pc = random_cloud(200, rng);
    const Matrix<double> feat = random_matrix(200, 5, rng);
    std::vector<int> perm(200);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    PointCloud pp(200, 3);
    Matrix<double> fp(200, 5);
    for (int i = 0; i < 200; ++i) {
      pp.row(i) = pc.row(perm[i]);
      fp.row(i) = feat.row(perm[i]);
    }
    const auto a = voxelize(pc, feat, 8).features;
    const auto b = voxelize(pp, fp, 8).features;
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, a.cwiseAbs().maxCoeff()));
  }

  TEST_CASE("degenerate cloud uses unit scale") {
    PointCloud p = PointCloud::Constant(5, 3, 2.0);
    CHECK(fit_normalization(p).scale == 1.0);
    CHECK_NOTHROW(voxelize(p, Matrix<double>::Ones(5, 1), 4));
  }

  TEST_CASE("devoxelize: centers, constants, midpoints") {
    const int D = 4;
    PointCloud box(2, 3);
    box << -1, -1, -1, 1, 1, 1;  // centroid 0, scale sqrt(3)
    VoxelGrid g;
    g.resolution = D;
    g.norm = fit_normalization(box);
    Rng rng(2);
    g.features = random_matrix(D * D * D, 2, rng);
    auto center = [&](int i, int j, int k) {
      Eigen::RowVector3d u((i + 0.5) / D, (j + 0.5) / D, (k + 0.5) / D);
      return ((u - Eigen::RowVector3d::Constant(0.5)) * 2.0 * g.norm.scale + g.norm.centroid).eval();
    };
    PointCloud pts(3, 3);
    pts.row(0) = center(1, 2, 3);
    pts.row(1) = 0.5 * (center(1, 2, 3) + center(2, 2, 3));
    pts.row(2) = center(0, 0, 0);
    const Matrix<double> out = devoxelize(g, pts);
    auto row = [&](int i, int j, int k) { return g.features.row((i * D + j) * D + k); };
    CHECK((out.row(0) - row(1, 2, 3)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((out.row(1) - 0.5 * (row(1, 2, 3) + row(2, 2, 3))).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((out.row(2) - row(0, 0, 0)).cwiseAbs().maxCoeff() < 1e-12);

    g.features.setConstant(3.25);
    const Matrix<double> c = devoxelize(g, random_cloud(50, rng, 0.5));
    CHECK((c.array() - 3.25).abs().maxCoeff() < 1e-12);
  }

  TEST_CASE("farthest point sampling") {
    Rng rng(3);
    const PointCloud pc = random_cloud(40, rng);
    CHECK(farthest_point_sample(pc, 1) == std::vector<int>{0});
    auto all = farthest_point_sample(pc, 40);
    std::sort(all.begin(), all.end());
    std::vector<int> expect(40);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);
    CHECK_THROWS_AS(farthest_point_sample(pc, 41), DomainError);
    CHECK_THROWS_AS(farthest_point_sample(pc, 0), DomainError);

    std::uniform_int_distribution<int> coord(-20, 20);
    for (int trial = 0; trial < 30; ++trial) {
      const int n = 2 + trial * 2;
      PointCloud q(n, 3);
      for (Eigen::Index k = 0; k < q.size(); ++k) q.data()[k] = coord(rng);
      const int k = 1 + trial % n;
      CHECK(farthest_point_sample(q, k) == brute_force_fps(q, k));
    }
    // duplicates never produce repeated picks
    PointCloud dup = PointCloud::Zero(5, 3);
    auto d = farthest_point_sample(dup, 5);
    CHECK(std::set<int>(d.begin(), d.end()).size() == 5);
  }

  TEST_CASE("ball query") {
    Rng rng(4);
    const PointCloud pc = random_cloud(30, rng);
    const auto wide = ball_query(pc, pc.topRows(3), 100.0, 30);
    for (const auto& l : wide) {
      std::vector<int> expect(30);
      std::iota(expect.begin(), expect.end(), 0);
      CHECK(l == expect);
    }
    double min_d = 1e9;
    for (int i = 0; i < 30; ++i)
      for (int j = i + 1; j < 30; ++j) min_d = std::min(min_d, (pc.row(i) - pc.row(j)).norm());
    const auto narrow = ball_query(pc, pc, 0.5 * min_d, 4);
    for (int i = 0; i < 30; ++i) CHECK(narrow[i] == std::vector<int>(4, i));

    const PointCloud centers = random_cloud(5, rng);
    const auto lists = ball_query(pc, centers, 0.9, 8);
    for (int c = 0; c < 5; ++c) {
      std::vector<int> within;
      for (int i = 0; i < 30; ++i)
        if ((pc.row(i) - centers.row(c)).squaredNorm() <= 0.81 && within.size() < 8) within.push_back(i);
      if (within.empty()) {
        int best = 0;
        for (int i = 1; i < 30; ++i)
          if ((pc.row(i) - centers.row(c)).squaredNorm() < (pc.row(best) - centers.row(c)).squaredNorm()) best = i;
        within.push_back(best);
      }
      while (within.size() < 8) within.push_back(within.front());
      CHECK(lists[c] == within);
    }
  }

  TEST_CASE("three-nn interpolation") {
    Rng rng(5);
    const PointCloud coarse = random_cloud(10, rng), fine = random_cloud(25, rng);
    const auto op = three_nn_operator<double>(coarse, fine);
    const Eigen::VectorXd sums = op * Eigen::VectorXd::Ones(10);
    CHECK((sums.array() - 1.0).abs().maxCoeff() < 1e-12);
    const Matrix<double> coinc = three_nn_operator<double>(coarse, coarse.topRows(2)) * Matrix<double>(coarse);
    CHECK((coinc - Matrix<double>(coarse.topRows(2))).cwiseAbs().maxCoeff() < 1e-6);
    const auto small = three_nn_operator<double>(coarse.topRows(2), fine);
    CHECK(small.nonZeros() == 50);
  }
}
