#include "rerf/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "rerf/rng.hpp"

namespace rerf {

DataMatrix::DataMatrix(std::vector<std::string> column_names, std::vector<std::vector<double>> columns,
                       std::optional<std::vector<double>> response)
    : names_(std::move(column_names)), columns_(std::move(columns)), response_(std::move(response)) {
  if (names_.size() != columns_.size()) {
    throw DataError(fmt::format("{} column names for {} columns", names_.size(), columns_.size()));
  }
  std::set<std::string_view> seen;
  for (const auto& name : names_) {
    if (!seen.insert(name).second) {
      throw DataError(fmt::format("duplicate column name '{}'", name));
    }
  }
  if (!columns_.empty()) {
    n_rows_ = columns_.front().size();
  } else if (response_) {
    n_rows_ = response_->size();
  }
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    if (columns_[j].size() != n_rows_) {
      throw DataError(fmt::format("column '{}' has {} rows, expected {}", names_[j], columns_[j].size(), n_rows_));
    }
    for (double v : columns_[j]) {
      if (!std::isfinite(v)) {
        throw DataError(fmt::format("column '{}' contains a non-finite value", names_[j]));
      }
    }
  }
  if (response_) {
    if (response_->size() != n_rows_) {
      throw DataError(fmt::format("response has {} rows, expected {}", response_->size(), n_rows_));
    }
    for (double v : *response_) {
      if (!std::isfinite(v)) {
        throw DataError("response contains a non-finite value");
      }
    }
  }
}

std::vector<double> DataMatrix::row(std::size_t i) const {
  std::vector<double> out(columns_.size());
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    out[j] = columns_[j].at(i);
  }
  return out;
}

std::optional<std::size_t> DataMatrix::find_column(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t DataMatrix::column_index(std::string_view name) const {
  if (auto j = find_column(name)) {
    return *j;
  }
  throw DataError(fmt::format("unknown column '{}'", name));
}

std::span<const double> DataMatrix::response() const {
  if (!response_) {
    throw DataError("data has no response column");
  }
  return *response_;
}

DataMatrix DataMatrix::select_rows(std::span<const std::size_t> rows) const {
  std::vector<std::vector<double>> cols(columns_.size());
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    cols[j].reserve(rows.size());
    for (std::size_t r : rows) {
      cols[j].push_back(columns_[j].at(r));
    }
  }
  std::optional<std::vector<double>> resp;
  if (response_) {
    resp.emplace();
    resp->reserve(rows.size());
    for (std::size_t r : rows) {
      resp->push_back(response_->at(r));
    }
  }
  DataMatrix out(names_, std::move(cols), std::move(resp));
  out.n_rows_ = rows.size();
  return out;
}

DataMatrix DataMatrix::select_columns(std::span<const std::string> names) const {
  std::vector<std::vector<double>> cols;
  cols.reserve(names.size());
  for (const auto& name : names) {
    cols.push_back(columns_[column_index(name)]);
  }
  DataMatrix out(std::vector<std::string>(names.begin(), names.end()), std::move(cols), response_);
  out.n_rows_ = n_rows_;
  return out;
}

DataMatrix DataMatrix::drop_columns(std::span<const std::string> names) const {
  for (const auto& name : names) {
    column_index(name);
  }
  std::vector<std::string> keep;
  for (const auto& name : names_) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      keep.push_back(name);
    }
  }
  return select_columns(keep);
}

DataMatrix DataMatrix::with_response(std::vector<double> response) const {
  DataMatrix out(names_, columns_, std::move(response));
  return out;
}

DataMatrix DataMatrix::without_response() const {
  DataMatrix out(names_, columns_, std::nullopt);
  out.n_rows_ = n_rows_;
  return out;
}

DataMatrix DataMatrix::with_column(std::string name, std::vector<double> values) const {
  auto names = names_;
  auto cols = columns_;
  names.push_back(std::move(name));
  cols.push_back(std::move(values));
  return DataMatrix(std::move(names), std::move(cols), response_);
}

namespace {

std::string_view trim_space(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '\n')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

// Fields may be double-quoted; quoted fields can hold commas and "" escapes.
// Surrounding whitespace is trimmed outside and inside the quotes.
std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back(trim_space(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.emplace_back(trim_space(field));
  return fields;
}

std::vector<std::string> header_fields(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError(fmt::format("'{}' is empty", path.string()));
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    line.erase(0, 3);
  }
  return split_fields(line);
}

std::string csv_quote(std::string_view name) {
  if (name.find_first_of(",\"") == std::string_view::npos && trim_space(name) == name) {
    return std::string(name);
  }
  std::string out = "\"";
  for (char c : name) {
    out += c;
    if (c == '"') {
      out += '"';
    }
  }
  return out + "\"";
}

std::optional<double> parse_number(std::string_view field) {
  if (field.empty()) {
    return std::nullopt;
  }
  if (field.front() == '+') {
    field.remove_prefix(1);
  }
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

}  // namespace

std::vector<std::string> read_csv_header(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(fmt::format("cannot open '{}'", path.string()));
  }
  return header_fields(in, path);
}

LoadResult load_csv(const std::filesystem::path& path, std::string_view response_column) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(fmt::format("cannot open '{}'", path.string()));
  }
  const std::vector<std::string> header = header_fields(in, path);
  auto resp_it = std::find(header.begin(), header.end(), response_column);
  if (resp_it == header.end()) {
    throw DataError(fmt::format("response column '{}' not found in '{}'", response_column, path.string()));
  }
  const auto resp_idx = static_cast<std::size_t>(resp_it - header.begin());

  std::vector<std::string> names;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j != resp_idx) {
      names.push_back(header[j]);
    }
  }
  std::vector<std::vector<double>> cols(names.size());
  std::vector<double> response;
  std::size_t dropped = 0;
  std::vector<double> values(header.size());

  std::string line;
  while (std::getline(in, line)) {
    if (trim_space(line).empty()) {
      continue;
    }
    auto fields = split_fields(line);
    bool ok = fields.size() == header.size();
    for (std::size_t j = 0; ok && j < fields.size(); ++j) {
      auto v = parse_number(fields[j]);
      if (!v) {
        ok = false;
      } else {
        values[j] = *v;
      }
    }
    if (!ok) {
      ++dropped;
      continue;
    }
    std::size_t c = 0;
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j == resp_idx) {
        response.push_back(values[j]);
      } else {
        cols[c++].push_back(values[j]);
      }
    }
  }
  if (response.empty()) {
    throw DataError(fmt::format("'{}' has no usable rows ({} dropped)", path.string(), dropped));
  }
  return LoadResult{DataMatrix(std::move(names), std::move(cols), std::move(response)), dropped};
}

void write_csv(const DataMatrix& data, const std::filesystem::path& path, std::string_view response_name) {
  std::ofstream out(path);
  if (!out) {
    throw DataError(fmt::format("cannot write '{}'", path.string()));
  }
  const auto& names = data.column_names();
  for (std::size_t j = 0; j < names.size(); ++j) {
    out << (j ? "," : "") << csv_quote(names[j]);
  }
  if (data.has_response()) {
    out << (names.empty() ? "" : ",") << csv_quote(response_name);
  }
  out << '\n';
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    for (std::size_t j = 0; j < data.n_cols(); ++j) {
      out << (j ? "," : "") << fmt::format("{:.17g}", data.at(i, j));
    }
    if (data.has_response()) {
      out << (data.n_cols() ? "," : "") << fmt::format("{:.17g}", data.response()[i]);
    }
    out << '\n';
  }
}

std::string quadratic_name(std::string_view column) { return fmt::format("{}^2", column); }
std::string interaction_name(std::string_view a, std::string_view b) { return fmt::format("{}*{}", a, b); }
std::string ratio_name(std::string_view numerator, std::string_view denominator) {
  return fmt::format("{}/{}", numerator, denominator);
}

DataMatrix expand_features(const DataMatrix& data, const FeatureExpansionSpec& spec) {
  if (spec.empty()) {
    return data;
  }
  std::vector<std::string> names = data.column_names();
  std::vector<std::vector<double>> cols;
  cols.reserve(data.n_cols() + spec.quadratic_columns.size() + spec.interaction_pairs.size() +
               spec.custom_ratios.size());
  for (std::size_t j = 0; j < data.n_cols(); ++j) {
    auto c = data.column(j);
    cols.emplace_back(c.begin(), c.end());
  }
  const std::size_t n = data.n_rows();

  for (const auto& name : spec.quadratic_columns) {
    auto x = data.column(data.column_index(name));
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = x[i] * x[i];
    }
    names.push_back(quadratic_name(name));
    cols.push_back(std::move(v));
  }
  for (const auto& [a, b] : spec.interaction_pairs) {
    auto xa = data.column(data.column_index(a));
    auto xb = data.column(data.column_index(b));
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = xa[i] * xb[i];
    }
    names.push_back(interaction_name(a, b));
    cols.push_back(std::move(v));
  }
  for (const auto& [num, den] : spec.custom_ratios) {
    auto xn = data.column(data.column_index(num));
    auto xd = data.column(data.column_index(den));
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (xd[i] == 0.0) {
        throw DataError(fmt::format("zero denominator in ratio '{}' at row {}", ratio_name(num, den), i));
      }
      v[i] = xn[i] / xd[i];
    }
    names.push_back(ratio_name(num, den));
    cols.push_back(std::move(v));
  }

  std::optional<std::vector<double>> resp;
  if (data.has_response()) {
    auto r = data.response();
    resp.emplace(r.begin(), r.end());
  }
  return DataMatrix(std::move(names), std::move(cols), std::move(resp));
}

SplitRule SplitRule::random(double fraction, std::uint64_t seed) {
  SplitRule r;
  r.kind = SplitKind::random_fraction;
  r.fraction = fraction;
  r.seed = seed;
  return r;
}

SplitRule SplitRule::response_threshold(double threshold, Side side) {
  SplitRule r;
  r.kind = SplitKind::response_threshold;
  r.threshold = threshold;
  r.side = side;
  return r;
}

SplitRule SplitRule::response_band_complement(double low, double high) {
  SplitRule r;
  r.kind = SplitKind::response_band_complement;
  r.low = low;
  r.high = high;
  return r;
}

SplitRule SplitRule::feature_threshold(std::string column, double threshold, Side side) {
  SplitRule r;
  r.kind = SplitKind::feature_threshold;
  r.column = std::move(column);
  r.threshold = threshold;
  r.side = side;
  return r;
}

SplitRule SplitRule::feature_band_complement(std::string column, double low, double high) {
  SplitRule r;
  r.kind = SplitKind::feature_band_complement;
  r.column = std::move(column);
  r.low = low;
  r.high = high;
  return r;
}

SplitIndices split_indices(const DataMatrix& data, const SplitRule& rule) {
  const std::size_t n = data.n_rows();
  SplitIndices out;

  if (rule.kind == SplitKind::random_fraction) {
    if (!(rule.fraction > 0.0 && rule.fraction < 1.0)) {
      throw DataError(fmt::format("split fraction {} outside (0, 1)", rule.fraction));
    }
    const auto n_train = static_cast<std::size_t>(std::floor(rule.fraction * static_cast<double>(n)));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(rule.seed);
    for (std::size_t i = 0; i < n_train; ++i) {
      const std::size_t j = i + rng.uniform_index(n - i);
      std::swap(perm[i], perm[j]);
    }
    out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.validation.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.validation.begin(), out.validation.end());
    return out;
  }

  std::span<const double> values;
  if (rule.kind == SplitKind::response_threshold || rule.kind == SplitKind::response_band_complement) {
    values = data.response();
  } else {
    values = data.column(data.column_index(rule.column));
  }
  const bool band =
      rule.kind == SplitKind::response_band_complement || rule.kind == SplitKind::feature_band_complement;
  if (band && !(rule.low <= rule.high)) {
    throw DataError(fmt::format("band [{}, {}] is empty", rule.low, rule.high));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double v = values[i];
    bool to_train = false;
    if (band) {
      to_train = v < rule.low || v > rule.high;
    } else {
      to_train = rule.side == Side::above ? v > rule.threshold : v < rule.threshold;
    }
    (to_train ? out.train : out.validation).push_back(i);
  }
  return out;
}

SplitResult split(const DataMatrix& data, const SplitRule& rule) {
  auto idx = split_indices(data, rule);
  if (idx.train.empty()) {
    throw DataError("split produced an empty training partition");
  }
  if (idx.validation.empty()) {
    throw DataError("split produced an empty validation partition");
  }
  SplitResult out{data.select_rows(idx.train), data.select_rows(idx.validation), {}};
  out.indices = std::move(idx);
  return out;
}

Standardization standardize(const DataMatrix& data) {
  const std::size_t n = data.n_rows();
  const std::size_t p = data.n_cols();
  Standardization out;
  out.centers.resize(p);
  out.scales.resize(p);
  out.constant.resize(p);
  std::vector<std::vector<double>> cols(p);
  for (std::size_t j = 0; j < p; ++j) {
    auto x = data.column(j);
    double mean = 0.0;
    for (double v : x) {
      mean += v;
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : x) {
      ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    const bool is_constant = !(sd > 1e-12 * (1.0 + std::abs(mean)));
    out.centers[j] = is_constant ? x.empty() ? 0.0 : x[0] : mean;
    out.scales[j] = is_constant ? 1.0 : sd;
    out.constant[j] = is_constant;
    cols[j].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      cols[j][i] = is_constant ? 0.0 : (x[i] - mean) / sd;
    }
  }
  std::optional<std::vector<double>> resp;
  if (data.has_response()) {
    auto r = data.response();
    resp.emplace(r.begin(), r.end());
  }
  out.standardized = DataMatrix(data.column_names(), std::move(cols), std::move(resp));
  return out;
}

DataMatrix unstandardize(const DataMatrix& data, std::span<const double> centers, std::span<const double> scales) {
  if (centers.size() != data.n_cols() || scales.size() != data.n_cols()) {
    throw DataError("standardization vectors do not match column count");
  }
  std::vector<std::vector<double>> cols(data.n_cols());
  for (std::size_t j = 0; j < data.n_cols(); ++j) {
    auto z = data.column(j);
    cols[j].resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      cols[j][i] = z[i] * scales[j] + centers[j];
    }
  }
  std::optional<std::vector<double>> resp;
  if (data.has_response()) {
    auto r = data.response();
    resp.emplace(r.begin(), r.end());
  }
  return DataMatrix(data.column_names(), std::move(cols), std::move(resp));
}

}  // namespace rerf
