#include "pvd/checkpoint.hpp"

#include <unistd.h>
#include <zlib.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "pvd/config.hpp"
#include "pvd/errors.hpp"

namespace pvd {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'P', 'V', 'D', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void u8(std::uint8_t v) { buf.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) {
    std::uint32_t b;
    std::memcpy(&b, &f, 4);
    u32(b);
  }
  void f64(double d) {
    std::uint64_t b;
    std::memcpy(&b, &d, 8);
    u64(b);
  }
  void bytes(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf.insert(buf.end(), s.begin(), s.end());
  }
  std::string buf;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size, std::string path) : p_(data), end_(data + size), path_(std::move(path)) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(*p_++);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(u8()) << (8 * i);
    return v;
  }
  float f32() {
    const std::uint32_t b = u32();
    float f;
    std::memcpy(&f, &b, 4);
    return f;
  }
  double f64() {
    const std::uint64_t b = u64();
    double d;
    std::memcpy(&d, &b, 8);
    return d;
  }
  std::string bytes() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(p_, n);
    p_ += n;
    return s;
  }
  bool done() const { return p_ == end_; }

 private:
  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end_ - p_) < n) throw CorruptFileError(path_ + ": payload ends early");
  }
  const char* p_;
  const char* end_;
  std::string path_;
};

std::uint32_t checksum(const std::string& s) {
  return static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size())));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  check_parameters(ckpt.arch, ckpt.params);
  Writer payload;
  payload.bytes(arch_to_json(ckpt.arch).dump());
  payload.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const auto& m = ckpt.params[i];
    payload.bytes(ckpt.params.names()[i]);
    payload.u32(static_cast<std::uint32_t>(m.rows()));
    payload.u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index k = 0; k < m.size(); ++k) payload.f32(m.data()[k]);
  }
  const NoiseSchedule& s = ckpt.schedule;
  payload.u8(s.kind() == ScheduleKind::Warmup ? 1 : 0);
  payload.f64(s.beta_start());
  payload.f64(s.beta_end());
  payload.f64(s.warmup_frac());
  payload.u32(static_cast<std::uint32_t>(s.steps()));
  for (double b : s.betas()) payload.f64(b);
  payload.u64(ckpt.step);

  Writer file;
  file.buf.assign(kMagic, kMagic + 8);
  file.u32(kCheckpointVersion);
  file.u64(payload.buf.size());
  file.buf += payload.buf;
  file.u32(checksum(payload.buf));

  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(file.buf.data(), static_cast<std::streamsize>(file.buf.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw DataError("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw DataError("cannot move checkpoint into place at " + path.string());
  }
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string();
  if (raw.size() < 20 || std::memcmp(raw.data(), kMagic, 8) != 0) throw CorruptFileError(where + ": not a checkpoint");
  Reader head(raw.data() + 8, 12, where);
  const std::uint32_t version = head.u32();
  const std::uint64_t length = head.u64();
  if (version > kCheckpointVersion || version == 0) {
    throw VersionError(where + ": format version " + std::to_string(version) + " not supported (max " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  if (raw.size() != 20 + length + 4) throw CorruptFileError(where + ": length field does not match file size");
  const std::string payload = raw.substr(20, length);
  Reader tail(raw.data() + 20 + length, 4, where);
  if (tail.u32() != checksum(payload)) throw CorruptFileError(where + ": checksum mismatch");

  Reader r(payload.data(), payload.size(), where);
  try {
    nlohmann::json arch_json = nlohmann::json::parse(r.bytes());
    ArchConfig arch = arch_from_json(arch_json);
    ParamStore<float> params;
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = r.bytes();
      const std::uint32_t rows = r.u32();
      const std::uint32_t cols = r.u32();
      Matrix<float> m(rows, cols);
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = r.f32();
      params.add(std::move(name), std::move(m));
    }
    check_parameters(arch, params);
    const std::uint8_t kind = r.u8();
    if (kind > 1) throw CorruptFileError(where + ": unknown schedule kind");
    const double b0 = r.f64();
    const double b1 = r.f64();
    const double wf = r.f64();
    const std::uint32_t T = r.u32();
    std::vector<double> betas(T);
    for (auto& b : betas) b = r.f64();
    NoiseSchedule sched =
        NoiseSchedule::from_betas(std::move(betas), kind ? ScheduleKind::Warmup : ScheduleKind::Linear, b0, b1, wf);
    const std::uint64_t step = r.u64();
    if (!r.done()) throw CorruptFileError(where + ": trailing bytes in payload");
    return Checkpoint{std::move(arch), std::move(params), std::move(sched), step};
  } catch (const CorruptFileError&) {
    throw;
  } catch (const std::exception& e) {
    throw CorruptFileError(where + ": " + e.what());
  }
}

}  // namespace pvd
