#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rerf {

/// Raised for malformed inputs: bad files, unknown columns, shape mismatches.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Column-major table of finite predictors with an optional response.
/// Immutable after construction; the constructor enforces every invariant.
class DataMatrix {
 public:
  DataMatrix() = default;
  DataMatrix(std::vector<std::string> column_names, std::vector<std::vector<double>> columns,
             std::optional<std::vector<double>> response = std::nullopt);

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return columns_.size(); }

  const std::vector<std::string>& column_names() const { return names_; }
  std::span<const double> column(std::size_t j) const { return columns_.at(j); }
  double at(std::size_t row, std::size_t col) const { return columns_[col][row]; }
  std::vector<double> row(std::size_t i) const;

  std::optional<std::size_t> find_column(std::string_view name) const;
  /// Throws DataError when the column does not exist.
  std::size_t column_index(std::string_view name) const;

  bool has_response() const { return response_.has_value(); }
  /// Throws DataError when no response is attached.
  std::span<const double> response() const;

  DataMatrix select_rows(std::span<const std::size_t> rows) const;
  /// Reorders / subsets columns by name; throws DataError on unknown names.
  DataMatrix select_columns(std::span<const std::string> names) const;
  DataMatrix drop_columns(std::span<const std::string> names) const;
  DataMatrix with_response(std::vector<double> response) const;
  DataMatrix without_response() const;
  DataMatrix with_column(std::string name, std::vector<double> values) const;

  friend bool operator==(const DataMatrix&, const DataMatrix&) = default;

 private:
  std::size_t n_rows_ = 0;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> columns_;
  std::optional<std::vector<double>> response_;
};

struct LoadResult {
  DataMatrix data;
  std::size_t dropped_rows = 0;
};

/// Column names from the header row of a comma-separated file.
std::vector<std::string> read_csv_header(const std::filesystem::path& path);

/// Reads a comma-separated file with one header row. Fields may be
/// double-quoted. Rows with an empty or non-numeric cell are dropped and
/// counted.
LoadResult load_csv(const std::filesystem::path& path, std::string_view response_column);

/// Writes predictors followed by the response (when present) under `response_name`.
void write_csv(const DataMatrix& data, const std::filesystem::path& path, std::string_view response_name = "y");

/// Step-1 design expansion: squares, pairwise products and ratios of
/// existing columns, appended in that order.
struct FeatureExpansionSpec {
  std::vector<std::string> quadratic_columns;
  std::vector<std::pair<std::string, std::string>> interaction_pairs;
  std::vector<std::pair<std::string, std::string>> custom_ratios;

  bool empty() const { return quadratic_columns.empty() && interaction_pairs.empty() && custom_ratios.empty(); }
  friend bool operator==(const FeatureExpansionSpec&, const FeatureExpansionSpec&) = default;
};

std::string quadratic_name(std::string_view column);
std::string interaction_name(std::string_view a, std::string_view b);
std::string ratio_name(std::string_view numerator, std::string_view denominator);

/// Appends generated columns named "x^2", "a*b" and "a/b". Throws DataError
/// on unknown columns or a zero denominator.
DataMatrix expand_features(const DataMatrix& data, const FeatureExpansionSpec& spec);

enum class SplitKind {
  random_fraction,
  response_threshold,
  response_band_complement,
  feature_threshold,
  feature_band_complement,
};

/// Which side of a threshold becomes the training set.
enum class Side { below, above };

/// Train/validation partition rule. Threshold rules put strict-inequality
/// rows into training (v > t for `above`, v < t for `below`); band-complement
/// rules train on v < low or v > high and validate on low <= v <= high.
struct SplitRule {
  SplitKind kind = SplitKind::random_fraction;
  double fraction = 0.5;
  double threshold = 0.0;
  double low = 0.0;
  double high = 0.0;
  Side side = Side::above;
  std::string column;
  std::uint64_t seed = 0;

  static SplitRule random(double fraction, std::uint64_t seed);
  static SplitRule response_threshold(double threshold, Side side);
  static SplitRule response_band_complement(double low, double high);
  static SplitRule feature_threshold(std::string column, double threshold, Side side);
  static SplitRule feature_band_complement(std::string column, double low, double high);
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

struct SplitResult {
  DataMatrix train;
  DataMatrix validation;
  SplitIndices indices;
};

/// Index-level partition; both index lists are sorted ascending.
SplitIndices split_indices(const DataMatrix& data, const SplitRule& rule);
/// Throws DataError if either partition is empty.
SplitResult split(const DataMatrix& data, const SplitRule& rule);

struct Standardization {
  DataMatrix standardized;
  std::vector<double> centers;
  std::vector<double> scales;
  std::vector<bool> constant;
};

/// Centers each column and divides by its population standard deviation.
/// Constant columns become zero with scale 1 and are flagged.
Standardization standardize(const DataMatrix& data);
DataMatrix unstandardize(const DataMatrix& data, std::span<const double> centers, std::span<const double> scales);

}  // namespace rerf
