#include "stackest/dataset.hpp"

#include <algorithm>
#include <stdexcept>

#include "stackest/errors.hpp"

namespace stackest {

Column::Column(std::string name, std::vector<double> values)
    : name_(std::move(name)),
      values_(std::move(values)),
      observed_(values_.size(), 1) {}

Column::Column(std::string name, std::vector<double> values,
               std::vector<std::uint8_t> observed)
    : name_(std::move(name)), values_(std::move(values)), observed_(std::move(observed)) {
  if (observed_.size() != values_.size()) {
    throw std::invalid_argument("column '" + name_ + "': mask length differs from values");
  }
  n_missing_ = static_cast<std::size_t>(std::count(observed_.begin(), observed_.end(), 0));
}

double Column::value(std::size_t row) const {
  if (observed_[row] == 0) {
    throw MissingValueRead("column '" + name_ + "' is missing at row " + std::to_string(row));
  }
  return values_[row];
}

void Dataset::add_column(Column column) {
  if (has_column(column.name())) {
    throw std::invalid_argument("duplicate column '" + column.name() + "'");
  }
  if (!columns_.empty() && column.size() != rows_) {
    throw std::invalid_argument("column '" + column.name() + "' has " +
                                std::to_string(column.size()) + " rows, expected " +
                                std::to_string(rows_));
  }
  rows_ = column.size();
  columns_.push_back(std::move(column));
}

bool Dataset::has_column(std::string_view name) const noexcept {
  return std::any_of(columns_.begin(), columns_.end(),
                     [&](const Column& c) { return c.name() == name; });
}

const Column& Dataset::column(std::string_view name) const {
  for (const auto& c : columns_) {
    if (c.name() == name) return c;
  }
  throw UnknownColumn(std::string(name));
}

std::vector<std::string> Dataset::column_names() const {
  std::vector<std::string> names;
  names.reserve(columns_.size());
  for (const auto& c : columns_) names.push_back(c.name());
  return names;
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
  Dataset out;
  for (const auto& c : columns_) {
    std::vector<double> values(rows.size());
    std::vector<std::uint8_t> mask(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      values[i] = c.raw()[rows[i]];
      mask[i] = c.observed_mask()[rows[i]];
    }
    out.add_column(Column(c.name(), std::move(values), std::move(mask)));
  }
  return out;
}

void require_binary(const Column& column) {
  if (!column.fully_observed()) {
    throw std::invalid_argument("column '" + column.name() + "' must be fully observed");
  }
  for (double v : column.raw()) {
    if (v != 0.0 && v != 1.0) {
      throw std::invalid_argument("column '" + column.name() + "' must be binary 0/1");
    }
  }
}

}  // namespace stackest
