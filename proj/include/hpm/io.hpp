#ifndef HPM_IO_HPP
#define HPM_IO_HPP

#include "hpm/common.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace hpm::io {

namespace fs = std::filesystem;

// Feature binary format: header of 4 little-endian uint32 dims, then float32
// row-major data. Matrices use dims (T, D, 1, 1); lip tracks (T, H, W, C).
struct BinArray {
  std::array<std::uint32_t, 4> dims{};
  RMat data;  // dims[0] rows x (dims[1]*dims[2]*dims[3]) cols
};

inline void write_bin(const fs::path& path,
                      const std::array<std::uint32_t, 4>& dims,
                      const RMat& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::uint32_t d : dims)
    out.write(reinterpret_cast<const char*>(&d), 4);
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      const float f = float(rows(i, j));
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  if (!out) throw IoError("write failed: " + path.string());
}

inline BinArray read_bin(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  BinArray a;
  for (auto& d : a.dims) in.read(reinterpret_cast<char*>(&d), 4);
  if (!in) throw IoError("truncated header: " + path.string());
  const Eigen::Index rows = a.dims[0];
  const Eigen::Index cols =
      Eigen::Index(a.dims[1]) * a.dims[2] * std::max<std::uint32_t>(1, a.dims[3]);
  a.data.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      float f = 0.0f;
      in.read(reinterpret_cast<char*>(&f), 4);
      a.data(i, j) = f;
    }
  if (!in) throw IoError("truncated data: " + path.string());
  return a;
}

// two-column csv with a header line, e.g. "frame,valence,arousal"
inline void write_csv(const fs::path& path, const std::string& header,
                      const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << header << "\n";
  out.setf(std::ios::fixed);
  out.precision(9);
  for (size_t i = 0; i < rows.size(); ++i) {
    out << i;
    for (double v : rows[i]) out << "," << v;
    out << "\n";
  }
}

inline std::vector<std::vector<double>> read_csv(const fs::path& path,
                                                 int value_cols) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> vals;
    size_t pos = line.find(',');  // skip frame index
    while (pos != std::string::npos && int(vals.size()) < value_cols) {
      const size_t next = line.find(',', pos + 1);
      vals.push_back(std::stod(line.substr(pos + 1, next - pos - 1)));
      pos = next;
    }
    if (int(vals.size()) != value_cols)
      throw IoError("bad csv row in " + path.string());
    rows.push_back(std::move(vals));
  }
  return rows;
}

inline void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_wav16(const fs::path& path, const RVec& samples, int sr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::uint32_t n = std::uint32_t(samples.size());
  const std::uint32_t data_bytes = n * 2;
  auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<char*>(&v), 2); };
  out.write("RIFF", 4);
  u32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(1);  // PCM
  u16(1);  // mono
  u32(std::uint32_t(sr));
  u32(std::uint32_t(sr) * 2);
  u16(2);
  u16(16);
  out.write("data", 4);
  u32(data_bytes);
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    const double clipped = std::clamp(samples(i), -1.0, 1.0);
    const std::int16_t s = std::int16_t(std::lround(clipped * 32767.0));
    out.write(reinterpret_cast<const char*>(&s), 2);
  }
}

}  // namespace hpm::io

#endif  // HPM_IO_HPP
