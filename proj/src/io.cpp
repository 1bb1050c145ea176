#include "eigenscope/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace eigenscope {

namespace {

static_assert(std::endian::native == std::endian::little, "EGSC I/O assumes a little-endian host");

constexpr char kMagic[4] = {'E', 'G', 'S', 'C'};

std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing");
  return f;
}

void put_u32(std::ofstream& f, std::uint32_t x) { f.write(reinterpret_cast<const char*>(&x), 4); }

void write_payload(const std::string& path, Index n, const cplx* data, std::size_t count) {
  if (n > Index(UINT32_MAX)) throw Error(ErrorKind::InvalidArgument, "dimension too large for EGSC");
  auto f = open_out(path, true);
  f.write(kMagic, 4);
  put_u32(f, 1);
  put_u32(f, std::uint32_t(n));
  f.write(reinterpret_cast<const char*>(data), std::streamsize(count * sizeof(cplx)));
  if (!f) throw Error(ErrorKind::Io, "short write to '" + path + "'");
}

}  // namespace

void write_egsc(const std::string& path, const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "EGSC stores square matrices or vectors");
  }
  write_payload(path, m.rows(), m.data(), std::size_t(m.size()));
}

void write_egsc(const std::string& path, const Vector& v) {
  write_payload(path, v.size(), v.data(), std::size_t(v.size()));
}

Matrix read_egsc(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  const auto size = std::uint64_t(f.tellg());
  f.seekg(0);
  char magic[4];
  std::uint32_t version = 0, n = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&n), 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorKind::Io, "'" + path + "' is not an EGSC file");
  }
  if (version != 1) throw Error(ErrorKind::Io, "unsupported EGSC version", double(version));
  const std::uint64_t payload = size - 12;
  const std::uint64_t per = 16;
  Index cols = 0;
  if (payload == per * n * n) {
    cols = n;
  } else if (payload == per * n) {
    cols = 1;
  } else {
    throw Error(ErrorKind::Io, "EGSC payload length does not match N = " + std::to_string(n),
                double(payload));
  }
  Matrix m(Index(n), cols);
  f.read(reinterpret_cast<char*>(m.data()), std::streamsize(payload));
  if (!f) throw Error(ErrorKind::Io, "truncated EGSC payload in '" + path + "'");
  return m;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_grid_csv(const std::string& path, const RealMatrix& grid) {
  auto f = open_out(path, false);
  for (Index r = 0; r < grid.rows(); ++r) {
    for (Index c = 0; c < grid.cols(); ++c) {
      if (c) f << ',';
      f << format_double(grid(r, c));
    }
    f << '\n';
  }
}

void write_jacobian_csv(const std::string& path, const JacobianTable& jac) {
  write_grid_csv(path, jac.j1());
}

void write_cylinder_csv(const std::string& path, const CylinderMeasure& measure) {
  auto f = open_out(path, false);
  f << "word,mass\n";
  for (std::size_t i = 0; i < measure.size(); ++i) {
    const auto w = SymbolWord::from_index(measure.words()[i], measure.n() + 1, measure.K());
    f << w.str() << ',' << format_double(std::max(0.0, measure.masses()[i])) << '\n';
  }
}

void write_series_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  auto f = open_out(path, false);
  for (std::size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
  f << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) f << (i ? "," : "") << format_double(r[i]);
    f << '\n';
  }
}

}  // namespace eigenscope
