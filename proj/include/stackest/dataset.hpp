#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stackest {

/// A named column of reals with an explicit per-row observed flag.
///
/// Unobserved slots keep whatever value was stored in them; nothing in the
/// library reads that value, so it can hold garbage without affecting results.
class Column {
 public:
  Column(std::string name, std::vector<double> values);
  Column(std::string name, std::vector<double> values,
         std::vector<std::uint8_t> observed);

  const std::string& name() const noexcept { return name_; }
  std::size_t size() const noexcept { return values_.size(); }

  bool observed(std::size_t row) const noexcept { return observed_[row] != 0; }
  bool fully_observed() const noexcept { return n_missing_ == 0; }
  std::size_t missing_count() const noexcept { return n_missing_; }

  // Throws MissingValueRead when the slot is unobserved.
  double value(std::size_t row) const;

  // Storage including unobserved slots.
  std::span<const double> raw() const noexcept { return values_; }
  std::span<const std::uint8_t> observed_mask() const noexcept { return observed_; }

 private:
  std::string name_;
  std::vector<double> values_;
  std::vector<std::uint8_t> observed_;
  std::size_t n_missing_ = 0;
};

/// Column-oriented observations. All columns share one row count.
class Dataset {
 public:
  Dataset() = default;

  void add_column(Column column);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t columns() const noexcept { return columns_.size(); }
  bool has_column(std::string_view name) const noexcept;

  // Throws UnknownColumn.
  const Column& column(std::string_view name) const;
  const Column& column(std::size_t index) const { return columns_.at(index); }
  std::vector<std::string> column_names() const;

  // New dataset made of the given rows, in the given order (repeats allowed).
  Dataset select_rows(std::span<const std::size_t> rows) const;

 private:
  std::vector<Column> columns_;
  std::size_t rows_ = 0;
};

// Throws std::invalid_argument unless every observed entry is 0 or 1 and the
// column is fully observed.
void require_binary(const Column& column);

}  // namespace stackest
