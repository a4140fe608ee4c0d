#include "pvd/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "pvd/errors.hpp"

namespace pvd {

namespace fs = std::filesystem;
using Eigen::Index;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

void check_finite(const PointCloud& pc, const std::string& path) {
  for (Index i = 0; i < pc.rows(); ++i) {
    if (!pc.row(i).allFinite()) {
      throw DataError(path + ": non-finite coordinate at point " + std::to_string(i));
    }
  }
}

}  // namespace

PointCloud load_xyz(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<double> vals;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::istringstream ss(t);
    std::string tok;
    int fields = 0;
    double xyz[3];
    while (ss >> tok) {
      if (fields == 3) throw ParseError(path.string(), lineno, "expected 3 fields, got more");
      if (!parse_double(tok, xyz[fields])) throw ParseError(path.string(), lineno, "not a number: '" + tok + "'");
      if (!std::isfinite(xyz[fields])) throw ParseError(path.string(), lineno, "non-finite coordinate");
      ++fields;
    }
    if (fields != 3) {
      throw ParseError(path.string(), lineno, "expected 3 fields, got " + std::to_string(fields));
    }
    vals.insert(vals.end(), xyz, xyz + 3);
  }
  if (vals.empty()) throw DataError(path.string() + ": no points");
  PointCloud pc(static_cast<Index>(vals.size() / 3), 3);
  std::copy(vals.begin(), vals.end(), pc.data());
  return pc;
}

void save_xyz(const PointCloud& pc, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  char buf[128];
  for (Index i = 0; i < pc.rows(); ++i) {
    const int len = std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", pc(i, 0), pc(i, 1), pc(i, 2));
    out.write(buf, len);
  }
  if (!out) throw DataError("write failed: " + path.string());
}

PointCloud load_pvpc(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  std::uint8_t nbuf[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "PVPC", 4) != 0) {
    throw CorruptFileError(path.string() + ": bad PVPC magic");
  }
  if (!in.read(reinterpret_cast<char*>(nbuf), 4)) throw CorruptFileError(path.string() + ": truncated header");
  const std::uint32_t n = nbuf[0] | (nbuf[1] << 8) | (nbuf[2] << 16) | (std::uint32_t(nbuf[3]) << 24);
  if (n == 0) throw DataError(path.string() + ": no points");
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(n) * 12);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw CorruptFileError(path.string() + ": truncated point data");
  }
  PointCloud pc(n, 3);
  for (std::size_t k = 0; k < static_cast<std::size_t>(n) * 3; ++k) {
    const std::uint8_t* b = raw.data() + 4 * k;
    const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
    float f;
    std::memcpy(&f, &bits, 4);
    pc.data()[k] = f;
  }
  check_finite(pc, path.string());
  return pc;
}

void save_pvpc(const PointCloud& pc, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  auto put32 = [&](std::uint32_t v) {
    const char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
    out.write(b, 4);
  };
  out.write("PVPC", 4);
  put32(static_cast<std::uint32_t>(pc.rows()));
  for (Index k = 0; k < pc.size(); ++k) {
    const float f = static_cast<float>(pc.data()[k]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put32(bits);
  }
  if (!out) throw DataError("write failed: " + path.string());
}

PointCloud load_cloud(const fs::path& path) {
  return path.extension() == ".pvpc" ? load_pvpc(path) : load_xyz(path);
}

void save_cloud(const PointCloud& pc, const fs::path& path) {
  if (path.extension() == ".pvpc") {
    save_pvpc(pc, path);
  } else {
    save_xyz(pc, path);
  }
}

Normalized normalize(const PointCloud& pc) {
  validate(pc, "normalize");
  Normalized out;
  out.record = fit_normalization(pc);
  out.cloud = (pc.rowwise() - out.record.centroid) / out.record.scale;
  return out;
}

PointCloud denormalize(const PointCloud& pc, const NormalizationRecord& record) {
  return (pc * record.scale).rowwise() + record.centroid;
}

std::string to_string(Primitive p) {
  switch (p) {
    case Primitive::Sphere: return "sphere";
    case Primitive::Cube: return "cube";
    case Primitive::Cylinder: return "cylinder";
    case Primitive::Torus: return "torus";
  }
  return "?";
}

Primitive primitive_from_string(const std::string& s) {
  if (s == "sphere") return Primitive::Sphere;
  if (s == "cube") return Primitive::Cube;
  if (s == "cylinder") return Primitive::Cylinder;
  if (s == "torus") return Primitive::Torus;
  throw DomainError("unknown primitive '" + s + "' (sphere, cube, cylinder, torus)");
}

PointCloud synth_primitive(Primitive kind, int n, std::uint64_t seed) {
  if (n < 1) throw DomainError("synth_primitive: need at least one point");
  Rng rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> G(0.0, 1.0);
  constexpr double pi = std::numbers::pi;
  PointCloud pc(n, 3);
  for (int i = 0; i < n; ++i) {
    Eigen::RowVector3d p;
    switch (kind) {
      case Primitive::Sphere: {
        do {
          p = Eigen::RowVector3d(G(rng), G(rng), G(rng));
        } while (p.squaredNorm() < 1e-20);
        p /= p.norm();
        break;
      }
      case Primitive::Cube: {
        const int face = std::min(static_cast<int>(U(rng) * 6.0), 5);
        const double a = 2.0 * U(rng) - 1.0;
        const double b = 2.0 * U(rng) - 1.0;
        const int axis = face / 2;
        const double side = face % 2 ? 1.0 : -1.0;
        p(axis) = side;
        p((axis + 1) % 3) = a;
        p((axis + 2) % 3) = b;
        break;
      }
      case Primitive::Cylinder: {
        // Side area 4 pi, caps 2 pi in total.
        const double pick = U(rng) * 6.0;
        if (pick < 4.0) {
          const double th = 2.0 * pi * U(rng);
          p = Eigen::RowVector3d(std::cos(th), std::sin(th), 2.0 * U(rng) - 1.0);
        } else {
          const double r = std::sqrt(U(rng));
          const double th = 2.0 * pi * U(rng);
          p = Eigen::RowVector3d(r * std::cos(th), r * std::sin(th), pick < 5.0 ? -1.0 : 1.0);
        }
        break;
      }
      case Primitive::Torus: {
        constexpr double R = 1.0, r = 0.35;
        double phi;
        do {
          phi = 2.0 * pi * U(rng);
        } while (U(rng) * (R + r) > R + r * std::cos(phi));
        const double th = 2.0 * pi * U(rng);
        const double rho = R + r * std::cos(phi);
        p = Eigen::RowVector3d(rho * std::cos(th), rho * std::sin(th), r * std::sin(phi));
        break;
      }
    }
    pc.row(i) = p;
  }
  return pc;
}

PartialSplit make_partial(const PointCloud& pc, const Eigen::RowVector3d& normal, double keep_fraction) {
  validate(pc, "make_partial");
  if (!(keep_fraction > 0.0 && keep_fraction < 1.0)) throw DomainError("make_partial: keep_fraction must be in (0, 1)");
  const double len = normal.norm();
  if (!(len > 0.0) || !std::isfinite(len)) throw DomainError("make_partial: plane normal must be nonzero");
  const Index n = pc.rows();
  if (n < 2) throw DomainError("make_partial: need at least two points");
  const Index m = std::clamp<Index>(std::llround(keep_fraction * static_cast<double>(n)), 1, n - 1);
  const Eigen::VectorXd proj = pc * (normal / len).transpose();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return proj(a) > proj(b); });
  std::vector<Index> kept(order.begin(), order.begin() + m);
  std::vector<Index> dropped(order.begin() + m, order.end());
  std::sort(kept.begin(), kept.end());
  std::sort(dropped.begin(), dropped.end());
  PartialSplit out;
  out.task.z0.resize(m, 3);
  out.missing.resize(n - m, 3);
  for (Index i = 0; i < m; ++i) out.task.z0.row(i) = pc.row(kept[i]);
  for (Index i = 0; i < n - m; ++i) out.missing.row(i) = pc.row(dropped[i]);
  out.task.n_free = static_cast<int>(n - m);
  return out;
}

PointCloud resample(const PointCloud& pc, int n, Rng& rng) {
  if (n < 1 || n > pc.rows()) {
    throw DataError("resample: cannot draw " + std::to_string(n) + " of " + std::to_string(pc.rows()) + " points");
  }
  std::vector<Index> idx(static_cast<std::size_t>(pc.rows()));
  std::iota(idx.begin(), idx.end(), Index{0});
  // Partial Fisher-Yates; std::shuffle's draw pattern is implementation-defined.
  PointCloud out(n, 3);
  for (int i = 0; i < n; ++i) {
    std::uniform_int_distribution<Index> pick(i, pc.rows() - 1);
    std::swap(idx[i], idx[pick(rng)]);
    out.row(i) = pc.row(idx[i]);
  }
  return out;
}

std::vector<fs::path> list_clouds(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension();
    if (ext == ".xyz" || ext == ".pvpc") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

Dataset load_dataset(const fs::path& dir, int points, std::uint64_t seed, bool normalize_shapes) {
  const auto files = list_clouds(dir);
  if (files.empty()) throw DataError("no .xyz or .pvpc files in " + dir.string());
  Dataset ds;
  Rng rng(seed);
  for (const auto& f : files) {
    PointCloud pc = load_cloud(f);
    if (points > 0 && pc.rows() != points) pc = resample(pc, points, rng);
    NormalizationRecord rec;
    if (normalize_shapes) {
      auto nrm = normalize(pc);
      pc = std::move(nrm.cloud);
      rec = nrm.record;
    }
    ds.names.push_back(f.filename().string());
    ds.shapes.push_back(std::move(pc));
    ds.records.push_back(rec);
  }
  const Index n0 = ds.shapes.front().rows();
  for (std::size_t i = 1; i < ds.shapes.size(); ++i) {
    if (ds.shapes[i].rows() != n0) {
      throw DataError("dataset shapes differ in point count (" + ds.names[0] + ": " + std::to_string(n0) + ", " +
                      ds.names[i] + ": " + std::to_string(ds.shapes[i].rows()) + "); pass a point count");
    }
  }
  return ds;
}

}  // namespace pvd
