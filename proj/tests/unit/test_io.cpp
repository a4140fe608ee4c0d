#include <doctest.h>

#include <fstream>

#include "../support/gradcheck.hpp"
#include "pvd/errors.hpp"
#include "pvd/io.hpp"
#include "tmpdir.hpp"

using namespace pvd;
using namespace pvd::testing;

namespace {

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("xyz parsing") {
    TempDir d;
    write(d / "a.xyz", "0 0 0\n1 0 0");
    const PointCloud a = load_xyz(d / "a.xyz");
    CHECK(a.rows() == 2);
    CHECK(a(1, 0) == 1.0);

    write(d / "c.xyz", "# header\n\n  1.5\t-2 3e-1  \n# trailing\n+4 5 6\n");
    const PointCloud c = load_xyz(d / "c.xyz");
    CHECK(c.rows() == 2);
    CHECK(c(0, 2) == 0.3);
    CHECK(c(1, 0) == 4.0);

    write(d / "bad.xyz", "0 0 0\n1 2\n");
    try {
      load_xyz(d / "bad.xyz");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
    write(d / "word.xyz", "# c\n0 0 0\n0 x 0\n");
    try {
      load_xyz(d / "word.xyz");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
    write(d / "extra.xyz", "1 2 3 4\n");
    CHECK_THROWS_AS(load_xyz(d / "extra.xyz"), ParseError);
    write(d / "nan.xyz", "0 0 0\nnan 0 0\n");
    CHECK_THROWS_AS(load_xyz(d / "nan.xyz"), DataError);
    write(d / "inf.xyz", "inf 0 0\n");
    CHECK_THROWS_AS(load_xyz(d / "inf.xyz"), DataError);
    write(d / "empty.xyz", "# nothing\n\n");
    CHECK_THROWS_AS(load_xyz(d / "empty.xyz"), DataError);
    CHECK_THROWS_AS(load_xyz(d / "missing.xyz"), DataError);
  }

  TEST_CASE("round trips") {
    TempDir d;
    Rng rng(1);
    const PointCloud pc = random_cloud(50, rng, 1e3);
    save_xyz(pc, d / "r.xyz");
    CHECK((load_xyz(d / "r.xyz").array() == pc.array()).all());
    save_cloud(pc, d / "r.pvpc");
    const PointCloud b = load_cloud(d / "r.pvpc");
    CHECK((b.array() == pc.cast<float>().cast<double>().array()).all());

    write(d / "short.pvpc", "PVPC\x05");
    CHECK_THROWS_AS(load_pvpc(d / "short.pvpc"), CorruptFileError);
    write(d / "magic.pvpc", "XXXX");
    CHECK_THROWS_AS(load_pvpc(d / "magic.pvpc"), CorruptFileError);
  }

  TEST_CASE("normalization") {
    Rng rng(2);
    const PointCloud sphere = synth_primitive(Primitive::Sphere, 300, 3);
    const auto n = normalize(sphere);
    double max_r = 0;
    for (Eigen::Index i = 0; i < 300; ++i) max_r = std::max(max_r, n.cloud.row(i).norm());
    CHECK(max_r == doctest::Approx(1.0).epsilon(1e-12));

    PointCloud centered = random_cloud(40, rng);
    centered.rowwise() -= centered.colwise().mean();
    CHECK(normalize(centered).record.centroid.norm() < 1e-15);

    const PointCloud x = (random_cloud(64, rng, 7.0).array() + 3.0).matrix();
    const auto r = normalize(x);
    CHECK((denormalize(r.cloud, r.record) - x).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, x.cwiseAbs().maxCoeff()));
  }

  TEST_CASE("primitives") {
    const PointCloud s = synth_primitive(Primitive::Sphere, 500, 1);
    for (Eigen::Index i = 0; i < 500; ++i) CHECK(std::abs(s.row(i).norm() - 1.0) <= 1e-12);
    const PointCloud c = synth_primitive(Primitive::Cube, 500, 1);
    for (Eigen::Index i = 0; i < 500; ++i) {
      CHECK(c.row(i).cwiseAbs().maxCoeff() == 1.0);
    }
    const PointCloud cyl = synth_primitive(Primitive::Cylinder, 500, 1);
    for (Eigen::Index i = 0; i < 500; ++i) {
      const double r = std::hypot(cyl(i, 0), cyl(i, 1));
      CHECK((std::abs(r - 1.0) < 1e-12 || std::abs(std::abs(cyl(i, 2)) - 1.0) < 1e-15));
    }
    const PointCloud tor = synth_primitive(Primitive::Torus, 500, 1);
    for (Eigen::Index i = 0; i < 500; ++i) {
      const double rho = std::hypot(tor(i, 0), tor(i, 1));
      CHECK(std::hypot(rho - 1.0, tor(i, 2)) == doctest::Approx(0.35).epsilon(1e-12));
    }
    CHECK((synth_primitive(Primitive::Torus, 64, 9).array() == synth_primitive(Primitive::Torus, 64, 9).array()).all());
    CHECK((synth_primitive(Primitive::Torus, 64, 9) - synth_primitive(Primitive::Torus, 64, 10)).norm() > 0);
    CHECK_THROWS_AS(primitive_from_string("cone"), DomainError);
    CHECK_THROWS_AS(synth_primitive(Primitive::Cube, 0, 1), DomainError);
  }

  TEST_CASE("half-space partials") {
    const PointCloud pc = synth_primitive(Primitive::Sphere, 128, 4);
    const Eigen::RowVector3d n(0.3, -1.0, 0.5);
    for (double f : {0.1, 0.5, 0.77}) {
      const auto split = make_partial(pc, n, f);
      CHECK(split.task.fixed_count() == std::llround(f * 128));
      CHECK(split.task.n_free == 128 - split.task.fixed_count());
      CHECK(split.missing.rows() == split.task.n_free);
      const Eigen::VectorXd pk = split.task.z0 * n.transpose();
      const Eigen::VectorXd pd = split.missing * n.transpose();
      CHECK(pk.minCoeff() >= pd.maxCoeff());
    }
    CHECK(make_partial(pc, n, 0.999).task.fixed_count() == 127);
    CHECK_THROWS_AS(make_partial(pc, n, 1.0), DomainError);
    CHECK_THROWS_AS(make_partial(pc, n, 0.0), DomainError);
    CHECK_THROWS_AS(make_partial(pc, Eigen::RowVector3d::Zero(), 0.5), DomainError);
  }

  TEST_CASE("datasets") {
    TempDir d;
    save_xyz(synth_primitive(Primitive::Cube, 40, 1), d / "b.xyz");
    save_xyz(synth_primitive(Primitive::Sphere, 50, 1), d / "a.xyz");
    save_cloud(synth_primitive(Primitive::Torus, 45, 1), d / "c.pvpc");
    write(d / "notes.txt", "ignored");
    CHECK_THROWS_AS(load_dataset(d.path), DataError);
    const Dataset ds = load_dataset(d.path, 32, 7, true);
    CHECK(ds.names == std::vector<std::string>{"a.xyz", "b.xyz", "c.pvpc"});
    for (const auto& s : ds.shapes) CHECK(s.rows() == 32);
    const Dataset again = load_dataset(d.path, 32, 7, true);
    for (std::size_t i = 0; i < 3; ++i) CHECK((again.shapes[i].array() == ds.shapes[i].array()).all());
    CHECK_THROWS_AS(load_dataset(d.path, 64), DataError);
    CHECK_THROWS_AS(load_dataset(d / "nope"), DataError);
  }
}
