#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "stackest/dataset.hpp"

namespace stackest::csv {

// Comma-separated, header required, an empty field is a missing value.
struct ReadOptions {
  // Columns in which `sentinel` is also read as missing.
  std::vector<std::string> sentinel_columns;
  double sentinel = -9999.0;
};

Dataset read(std::istream& in, const ReadOptions& options = {});
Dataset read_file(const std::filesystem::path& path, const ReadOptions& options = {});

// Values are written in the shortest form that reads back to the same double;
// missing values as empty fields.
void write(std::ostream& out, const Dataset& data);

// Renders `text` to a temporary sibling of `path`, then renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

std::string format_number(double value);

}  // namespace stackest::csv
