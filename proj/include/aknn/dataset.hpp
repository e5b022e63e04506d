#pragma once

// Labeled datasets: construction, CSV and binary I/O, label noise, splits.
//
// Features are stored as one contiguous row-major block of doubles so the
// neighbor search can stream over them without indirection. Labels are
// indices into an ordered alphabet; the alphabet order is the order in
// which labels first appear in the source.

#include <aknn/errors.hpp>
#include <aknn/random.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace aknn {

using LabelId = std::uint32_t;

class LabeledDataset {
 public:
  LabeledDataset(std::vector<double> features, std::size_t dim, std::vector<LabelId> labels,
                 std::vector<std::string> alphabet, std::vector<std::string> feature_names = {})
      : features_(std::move(features)),
        dim_(dim),
        labels_(std::move(labels)),
        alphabet_(std::move(alphabet)),
        feature_names_(std::move(feature_names)) {
    if (dim_ == 0) throw DataError("dataset: no feature columns");
    if (labels_.empty()) throw DataError("dataset: empty dataset");
    if (features_.size() != labels_.size() * dim_)
      throw DataError("dataset: feature block size does not match n * D");
    if (alphabet_.empty()) throw DataError("dataset: empty label alphabet");
    for (std::size_t i = 0; i < alphabet_.size(); ++i)
      for (std::size_t j = i + 1; j < alphabet_.size(); ++j)
        if (alphabet_[i] == alphabet_[j]) throw DataError("dataset: duplicate label '" + alphabet_[i] + "'");
    for (LabelId y : labels_)
      if (y >= alphabet_.size()) throw DataError("dataset: label index outside alphabet");
    if (feature_names_.empty()) {
      feature_names_.reserve(dim_);
      for (std::size_t j = 0; j < dim_; ++j) feature_names_.push_back("x" + std::to_string(j));
    } else if (feature_names_.size() != dim_) {
      throw DataError("dataset: feature name count does not match D");
    }
  }

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t alphabet_size() const noexcept { return alphabet_.size(); }

  std::span<const double> row(std::size_t i) const { return {features_.data() + i * dim_, dim_}; }
  LabelId label(std::size_t i) const { return labels_[i]; }

  std::span<const double> features() const noexcept { return features_; }
  std::span<const LabelId> labels() const noexcept { return labels_; }
  const std::vector<std::string>& alphabet() const noexcept { return alphabet_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }

  // Same features and alphabet, new labels.
  LabeledDataset with_labels(std::vector<LabelId> labels) const {
    return LabeledDataset(features_, dim_, std::move(labels), alphabet_, feature_names_);
  }

  // Rows at `indices`, in that order, sharing this alphabet.
  LabeledDataset subset(std::span<const std::size_t> indices) const {
    std::vector<double> f;
    f.reserve(indices.size() * dim_);
    std::vector<LabelId> y;
    y.reserve(indices.size());
    for (std::size_t i : indices) {
      if (i >= size()) throw std::out_of_range("dataset: subset index out of range");
      auto r = row(i);
      f.insert(f.end(), r.begin(), r.end());
      y.push_back(labels_[i]);
    }
    return LabeledDataset(std::move(f), dim_, std::move(y), alphabet_, feature_names_);
  }

  // Index of `name` in the alphabet, or alphabet_size() if absent.
  std::size_t find_label(std::string_view name) const {
    auto it = std::find(alphabet_.begin(), alphabet_.end(), name);
    return static_cast<std::size_t>(it - alphabet_.begin());
  }

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

 private:
  std::vector<double> features_;
  std::size_t dim_;
  std::vector<LabelId> labels_;
  std::vector<std::string> alphabet_;
  std::vector<std::string> feature_names_;
};

struct NoiseSpec {
  double flip_probability = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  bool done() const { return pos_ == data_.size(); }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(data_[pos_++])} << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(data_[pos_++])} << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw DataError("binary dataset: truncated file");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

// Parses a comma-separated file with a header row. Every column other than
// `label_column` is a feature and must hold finite reals.
inline LabeledDataset parse_csv(std::string_view text, std::string_view label_column) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  while (!lines.empty() && detail::trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty() || detail::trim(lines.front()).empty()) throw DataError("csv: missing header row");

  const auto header = detail::split_csv_line(lines.front());
  std::size_t label_idx = header.size();
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j].empty()) throw DataError("csv: empty column name in header");
    for (std::size_t k = 0; k < j; ++k)
      if (header[k] == header[j]) throw DataError("csv: duplicate header '" + std::string(header[j]) + "'");
    if (header[j] == label_column) label_idx = j;
  }
  if (label_idx == header.size()) throw DataError("csv: label column '" + std::string(label_column) + "' not found");
  if (header.size() < 2) throw DataError("csv: no feature columns");

  std::vector<std::string> names;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (j != label_idx) names.emplace_back(header[j]);
  const std::size_t dim = names.size();

  std::vector<double> features;
  std::vector<LabelId> labels;
  std::vector<std::string> alphabet;
  std::unordered_map<std::string, LabelId> lookup;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (detail::trim(lines[li]).empty()) continue;
    const auto cells = detail::split_csv_line(lines[li]);
    if (cells.size() != header.size())
      throw DataError("csv: line " + std::to_string(li + 1) + " has " + std::to_string(cells.size()) +
                      " cells, expected " + std::to_string(header.size()));
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (j == label_idx) {
        std::string key(cells[j]);
        auto [it, inserted] = lookup.try_emplace(key, static_cast<LabelId>(alphabet.size()));
        if (inserted) alphabet.push_back(key);
        labels.push_back(it->second);
        continue;
      }
      std::string_view cell = cells[j];
      double v = 0.0;
      if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        if (res.ec == std::errc::result_out_of_range)
          throw DataError("csv: non-finite feature at line " + std::to_string(li + 1));
        throw DataError("csv: non-numeric feature '" + std::string(cells[j]) + "' at line " + std::to_string(li + 1));
      }
      if (!std::isfinite(v)) throw DataError("csv: non-finite feature at line " + std::to_string(li + 1));
      features.push_back(v);
    }
  }
  if (labels.empty()) throw DataError("csv: empty dataset");
  return LabeledDataset(std::move(features), dim, std::move(labels), std::move(alphabet), std::move(names));
}

inline LabeledDataset load_csv(const std::string& path, std::string_view label_column) {
  return parse_csv(detail::read_file(path), label_column);
}

// Inverse of parse_csv: feature columns first, the label column last.
// Reals are written in shortest round-trip form, so parsing the output
// reproduces features bit for bit.
inline std::string to_csv(const LabeledDataset& ds, std::string_view label_column) {
  std::string out;
  for (const auto& name : ds.feature_names()) {
    out += name;
    out += ',';
  }
  out += label_column;
  out += '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.row(i)) {
      out += detail::format_double(v);
      out += ',';
    }
    out += ds.alphabet()[ds.label(i)];
    out += '\n';
  }
  return out;
}

inline void write_csv(const LabeledDataset& ds, const std::string& path, std::string_view label_column) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << to_csv(ds, label_column);
}

// Binary layout, all integers little-endian:
//   8 bytes  magic "AKNNDS01"
//   u32 n, u32 D
//   n*D f64 features, row-major
//   n u32 label indices
//   optional trailer: u32 alphabet size, then per label u32 byte length + UTF-8 bytes
// Without the trailer the alphabet is "0", "1", ... up to the largest index.
inline constexpr std::string_view kBinaryMagic = "AKNNDS01";

inline std::string to_binary(const LabeledDataset& ds) {
  std::string out(kBinaryMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(ds.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(ds.dim()));
  for (double v : ds.features()) detail::put_f64(out, v);
  for (LabelId y : ds.labels()) detail::put_u32(out, y);
  detail::put_u32(out, static_cast<std::uint32_t>(ds.alphabet_size()));
  for (const auto& name : ds.alphabet()) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
  }
  return out;
}

inline LabeledDataset parse_binary(std::string_view data) {
  detail::ByteReader in(data);
  if (in.bytes(kBinaryMagic.size()) != kBinaryMagic) throw DataError("binary dataset: bad magic");
  const std::uint32_t n = in.u32();
  const std::uint32_t dim = in.u32();
  std::vector<double> features(std::size_t{n} * dim);
  for (double& v : features) {
    v = in.f64();
    if (!std::isfinite(v)) throw DataError("binary dataset: non-finite feature");
  }
  std::vector<LabelId> labels(n);
  LabelId max_label = 0;
  for (LabelId& y : labels) {
    y = in.u32();
    max_label = std::max(max_label, y);
  }
  std::vector<std::string> alphabet;
  if (in.done()) {
    for (LabelId y = 0; y <= max_label; ++y) alphabet.push_back(std::to_string(y));
  } else {
    const std::uint32_t count = in.u32();
    for (std::uint32_t i = 0; i < count; ++i) alphabet.emplace_back(in.bytes(in.u32()));
    if (!in.done()) throw DataError("binary dataset: trailing bytes");
  }
  return LabeledDataset(std::move(features), dim, std::move(labels), std::move(alphabet));
}

inline void save_binary(const LabeledDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << to_binary(ds);
}

inline LabeledDataset load_binary(const std::string& path) { return parse_binary(detail::read_file(path)); }

// Each label is replaced, with probability flip_probability, by a label drawn
// uniformly from the *other* labels of the alphabet.
inline LabeledDataset inject_label_noise(const LabeledDataset& ds, const NoiseSpec& spec) {
  if (!(spec.flip_probability >= 0.0 && spec.flip_probability <= 1.0))
    throw std::invalid_argument("inject_label_noise: flip_probability must lie in [0,1]");
  const std::size_t k = ds.alphabet_size();
  if (k < 2) throw std::invalid_argument("inject_label_noise: alphabet needs at least two labels");
  Rng rng(derive_seed(spec.seed, {0x4E015Eu}));
  std::vector<LabelId> labels(ds.labels().begin(), ds.labels().end());
  for (LabelId& y : labels) {
    if (!rng.bernoulli(spec.flip_probability)) continue;
    auto other = static_cast<LabelId>(rng.below(k - 1));
    y = other >= y ? other + 1 : other;
  }
  return ds.with_labels(std::move(labels));
}

struct SplitResult {
  LabeledDataset train;
  LabeledDataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

// Uniform shuffle, then the first round(n * test_fraction) rows become the
// test part.
inline SplitResult split(const LabeledDataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("split: test_fraction must lie in (0,1)");
  const std::size_t n = ds.size();
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  if (n < 2 || n_test == 0 || n_test >= n)
    throw std::invalid_argument("split: fraction leaves one part empty");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {0x5B117u}));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  std::vector<std::size_t> test_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train_rows(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  auto train = ds.subset(train_rows);
  auto test = ds.subset(test_rows);
  return {std::move(train), std::move(test), std::move(train_rows), std::move(test_rows)};
}

}  // namespace aknn
