#include "stackest/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <system_error>

#include "stackest/errors.hpp"

namespace stackest::csv {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string format_number(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

Dataset read(std::istream& in, const ReadOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("csv: missing header");
  std::vector<std::string> header = split_line(line);
  for (auto& h : header) {
    h = trim(h);
    if (h.empty()) throw ParseError("csv: empty column name in header");
  }

  const std::size_t width = header.size();
  std::vector<std::vector<double>> values(width);
  std::vector<std::vector<std::uint8_t>> observed(width);
  std::vector<bool> sentinel_col(width, false);
  for (std::size_t j = 0; j < width; ++j) {
    sentinel_col[j] = std::find(options.sentinel_columns.begin(), options.sentinel_columns.end(),
                                header[j]) != options.sentinel_columns.end();
  }

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line);
    if (fields.size() != width) {
      throw ParseError("csv: line " + std::to_string(line_no) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(width));
    }
    for (std::size_t j = 0; j < width; ++j) {
      const std::string f = trim(fields[j]);
      if (f.empty()) {
        values[j].push_back(0.0);
        observed[j].push_back(0);
        continue;
      }
      double v = 0.0;
      const char* first = f.data();
      const char* last = f.data() + f.size();
      if (*first == '+') ++first;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last) {
        throw ParseError("csv: line " + std::to_string(line_no) + ", column '" + header[j] +
                         "': not a number: '" + f + "'");
      }
      const bool missing = sentinel_col[j] && v == options.sentinel;
      values[j].push_back(missing ? 0.0 : v);
      observed[j].push_back(missing ? 0 : 1);
    }
  }

  Dataset data;
  for (std::size_t j = 0; j < width; ++j) {
    try {
      data.add_column(Column(header[j], std::move(values[j]), std::move(observed[j])));
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string("csv: ") + e.what());
    }
  }
  return data;
}

Dataset read_file(const std::filesystem::path& path, const ReadOptions& options) {
  std::ifstream in(path);
  if (!in) throw ParseError("csv: cannot open '" + path.string() + "'");
  return read(in, options);
}

void write(std::ostream& out, const Dataset& data) {
  const std::size_t width = data.columns();
  for (std::size_t j = 0; j < width; ++j) {
    if (j) out << ',';
    out << data.column(j).name();
  }
  out << '\n';
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      if (j) out << ',';
      const Column& c = data.column(j);
      if (c.observed(i)) out << format_number(c.raw()[i]);
    }
    out << '\n';
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace stackest::csv
