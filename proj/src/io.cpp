#include "afreeqc/io.hpp"

#include "afreeqc/errors.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace afreeqc {

namespace {

constexpr std::array<unsigned char, 8> kMagic = {'A', 'F', 'K', '1', 'F', 'L', 'D', '\0'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "AFK1 I/O assumes a little-endian host");

template <class T>
void put(std::vector<unsigned char>& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& b) : b_(b) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > b_.size()) throw FormatError("AFK1: truncated file");
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<unsigned char>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

FieldData FieldData::from(const PeriodicField& u) {
  return FieldData{u.grid(), u.m(), std::nullopt, std::vector<double>(u.values().begin(), u.values().end())};
}

FieldData FieldData::from(const DomainField& u) {
  return FieldData{u.grid(), u.m(), u.mask(), std::vector<double>(u.values().begin(), u.values().end())};
}

PeriodicField FieldData::periodic() const { return PeriodicField(grid, m, values); }

DomainField FieldData::domain() const {
  return DomainField(grid, mask ? *mask : Mask(grid.size(), 1), m, values);
}

std::vector<unsigned char> encode_afk1(const FieldData& f) {
  std::vector<unsigned char> out(kMagic.begin(), kMagic.end());
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, 0);
  const int n = f.grid.n();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(n));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.m));
  for (int a = 0; a < n; ++a) put<std::uint32_t>(out, static_cast<std::uint32_t>(f.grid.points(a)));
  for (int a = 0; a < n; ++a) put<double>(out, f.grid.lo(a));
  for (int a = 0; a < n; ++a) put<double>(out, f.grid.hi(a));
  put<std::uint8_t>(out, f.mask ? 1 : 0);
  if (f.mask) out.insert(out.end(), f.mask->begin(), f.mask->end());
  if (f.values.size() != f.grid.size() * static_cast<std::size_t>(f.m))
    throw InvalidArgument("AFK1: value count does not match grid");
  for (double v : f.values) put<double>(out, v);
  return out;
}

FieldData decode_afk1(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 16 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    throw FormatError("AFK1: bad magic");
  Reader r(bytes);
  for (std::size_t i = 0; i < kMagic.size(); ++i) r.get<std::uint8_t>();
  if (r.get<std::uint32_t>() != kVersion) throw FormatError("AFK1: unsupported version");
  r.get<std::uint32_t>();
  const auto n = r.get<std::uint32_t>();
  const auto m = r.get<std::uint32_t>();
  if (n < 1 || n > 8 || m < 1 || m > 1024) throw FormatError("AFK1: implausible dimensions");
  std::vector<int> pts(n);
  std::vector<double> lo(n), hi(n);
  for (auto& p : pts) p = static_cast<int>(r.get<std::uint32_t>());
  for (auto& v : lo) v = r.get<double>();
  for (auto& v : hi) v = r.get<double>();
  GridSpec grid = [&] {
    try {
      return GridSpec(pts, lo, hi);
    } catch (const InvalidArgument& e) {
      throw FormatError(std::string("AFK1: ") + e.what());
    }
  }();
  FieldData f{grid, static_cast<int>(m), std::nullopt, {}};
  const auto flag = r.get<std::uint8_t>();
  if (flag > 1) throw FormatError("AFK1: bad mask flag");
  if (flag == 1) {
    Mask mask(grid.size());
    for (auto& b : mask) b = r.get<std::uint8_t>();
    f.mask = std::move(mask);
  }
  f.values.resize(grid.size() * m);
  for (auto& v : f.values) v = r.get<double>();
  if (!r.done()) throw FormatError("AFK1: trailing bytes");
  return f;
}

void write_afk1(const std::string& path, const FieldData& f) {
  const auto bytes = encode_afk1(f);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

FieldData read_afk1(const std::string& path) {
  const auto text = read_file(path);
  return decode_afk1(std::vector<unsigned char>(text.begin(), text.end()));
}

void write_file_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string magnitude_csv(const FieldData& f) {
  std::string out;
  const int n = f.grid.n();
  for (int a = 0; a < n; ++a) out += "x" + std::to_string(a) + ",";
  out += "magnitude\n";
  std::vector<double> x(static_cast<std::size_t>(n));
  const auto m = static_cast<std::size_t>(f.m);
  for (std::size_t i = 0; i < f.grid.size(); ++i) {
    if (f.mask && !(*f.mask)[i]) continue;
    f.grid.node(i, x);
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += f.values[i * m + c] * f.values[i * m + c];
    for (double xa : x) out += format_double(xa) + ",";
    out += format_double(std::sqrt(s)) + "\n";
  }
  return out;
}

}  // namespace afreeqc
