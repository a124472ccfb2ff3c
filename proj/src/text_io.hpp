#pragma once

// Shared helpers for the whitespace-separated text formats.

#include "spkdnn/core.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace spkdnn::text {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

// Shortest text that reads back to the same double.
inline std::string format_shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view s, double& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename Derived>
void write_row(std::ostream& os, const Eigen::DenseBase<Derived>& row) {
  for (Index i = 0; i < row.size(); ++i) {
    if (i) os << ' ';
    os << format_double(static_cast<double>(row.derived().coeff(i)));
  }
  os << '\n';
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "' for reading");
  return is;
}

inline void finish(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw IoError("write to '" + path.string() + "' failed");
}

/// Line reader over a block-structured file; skips blank lines and '#' comments.
class LineReader {
 public:
  LineReader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}

  bool next(std::vector<std::string_view>& fields) {
    while (std::getline(is_, line_)) {
      ++line_no_;
      fields = split(line_);
      if (fields.empty() || fields.front().front() == '#') continue;
      return true;
    }
    return false;
  }

  std::vector<std::string_view> expect() {
    std::vector<std::string_view> f;
    if (!next(f)) fail("unexpected end of file");
    return f;
  }

  std::vector<double> expect_doubles(std::size_t count) {
    auto f = expect();
    if (f.size() != count)
      fail("expected " + std::to_string(count) + " values, got " + std::to_string(f.size()));
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i)
      if (!parse_double(f[i], out[i])) fail("malformed number '" + std::string(f[i]) + "'");
    return out;
  }

  Eigen::VectorXd expect_vector(Index count) {
    auto v = expect_doubles(static_cast<std::size_t>(count));
    return Eigen::Map<Eigen::VectorXd>(v.data(), count);
  }

  Eigen::MatrixXd expect_matrix(Index rows, Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i) m.row(i) = expect_vector(cols).transpose();
    return m;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, line_no_, what); }

  std::size_t line_number() const { return line_no_; }

 private:
  std::istream& is_;
  std::string source_;
  std::string line_;
  std::size_t line_no_ = 0;
};

}  // namespace spkdnn::text
