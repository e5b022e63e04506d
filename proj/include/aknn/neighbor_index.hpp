#pragma once

// Exact neighbor enumeration.
//
// A query is answered with its NeighborProfile: the distinct distances from
// the query to the training points in ascending order, and for each distance
// the cumulative per-label count of training points within it. Only the
// cumulative totals are valid neighborhood sizes; when several points share
// a distance, the sizes in between are skipped.

#include <aknn/dataset.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace aknn {

enum class Metric { euclidean, manhattan };

inline std::string_view to_string(Metric m) { return m == Metric::euclidean ? "euclidean" : "manhattan"; }

inline Metric parse_metric(std::string_view s) {
  if (s == "euclidean") return Metric::euclidean;
  if (s == "manhattan") return Metric::manhattan;
  throw std::invalid_argument("unknown metric '" + std::string(s) + "'");
}

inline double distance(Metric m, std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("distance: dimension mismatch");
  double acc = 0.0;
  if (m == Metric::euclidean) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double d = a[j] - b[j];
      acc += d * d;
    }
    return std::sqrt(acc);
  }
  for (std::size_t j = 0; j < a.size(); ++j) acc += std::abs(a[j] - b[j]);
  return acc;
}

// Non-owning window onto a profile, possibly truncated to a prefix of groups.
class ProfileView {
 public:
  ProfileView(std::span<const double> radii, std::span<const std::size_t> totals,
              std::span<const std::uint32_t> counts, std::size_t alphabet_size, std::size_t n_reference)
      : radii_(radii), totals_(totals), counts_(counts), alphabet_size_(alphabet_size), n_reference_(n_reference) {}

  std::size_t groups() const noexcept { return radii_.size(); }
  bool empty() const noexcept { return radii_.empty(); }
  std::size_t alphabet_size() const noexcept { return alphabet_size_; }
  // Training-set size the confidence thresholds are computed against.
  std::size_t n_reference() const noexcept { return n_reference_; }

  double radius(std::size_t g) const { return radii_[g]; }
  std::size_t total(std::size_t g) const { return totals_[g]; }
  std::uint32_t count(std::size_t g, std::size_t y) const { return counts_[g * alphabet_size_ + y]; }
  std::span<const std::uint32_t> counts(std::size_t g) const {
    return counts_.subspan(g * alphabet_size_, alphabet_size_);
  }
  std::span<const std::size_t> defined_k() const noexcept { return totals_; }
  std::span<const double> radii() const noexcept { return radii_; }

  // Keeps groups up to and including the first whose total reaches max_k.
  ProfileView truncated(std::size_t max_k) const {
    auto it = std::lower_bound(totals_.begin(), totals_.end(), max_k);
    std::size_t keep = it == totals_.end() ? totals_.size() : static_cast<std::size_t>(it - totals_.begin()) + 1;
    return ProfileView(radii_.first(keep), totals_.first(keep), counts_.first(keep * alphabet_size_), alphabet_size_,
                       n_reference_);
  }

 private:
  std::span<const double> radii_;
  std::span<const std::size_t> totals_;
  std::span<const std::uint32_t> counts_;
  std::size_t alphabet_size_;
  std::size_t n_reference_;
};

class NeighborProfile {
 public:
  NeighborProfile() = default;
  NeighborProfile(std::vector<double> radii, std::vector<std::size_t> totals, std::vector<std::uint32_t> counts,
                  std::size_t alphabet_size, std::size_t n_reference)
      : radii_(std::move(radii)),
        totals_(std::move(totals)),
        counts_(std::move(counts)),
        alphabet_size_(alphabet_size),
        n_reference_(n_reference) {
    if (radii_.size() != totals_.size() || counts_.size() != radii_.size() * alphabet_size_)
      throw std::invalid_argument("NeighborProfile: inconsistent sizes");
  }

  ProfileView view() const { return {radii_, totals_, counts_, alphabet_size_, n_reference_}; }
  operator ProfileView() const { return view(); }  // NOLINT(google-explicit-constructor)

  std::size_t groups() const noexcept { return radii_.size(); }
  std::size_t alphabet_size() const noexcept { return alphabet_size_; }
  std::size_t n_reference() const noexcept { return n_reference_; }
  const std::vector<double>& radii() const noexcept { return radii_; }
  const std::vector<std::size_t>& defined_k() const noexcept { return totals_; }
  const std::vector<std::uint32_t>& cum_counts() const noexcept { return counts_; }
  std::span<const std::uint32_t> counts(std::size_t g) const {
    return std::span<const std::uint32_t>(counts_).subspan(g * alphabet_size_, alphabet_size_);
  }

  friend bool operator==(const NeighborProfile&, const NeighborProfile&) = default;

 private:
  std::vector<double> radii_;
  std::vector<std::size_t> totals_;
  std::vector<std::uint32_t> counts_;
  std::size_t alphabet_size_ = 0;
  std::size_t n_reference_ = 0;
};

struct ProfileOptions {
  // Training row to leave out; it must coincide with the query.
  std::optional<std::size_t> exclude_row;
  // Stop after the first group whose cumulative total reaches max_k.
  std::optional<std::size_t> max_k;
};

// Full-scan exact index over a private contiguous copy of the features.
class NeighborIndex {
 public:
  explicit NeighborIndex(const LabeledDataset& ds, Metric metric = Metric::euclidean)
      : features_(ds.features().begin(), ds.features().end()),
        labels_(ds.labels().begin(), ds.labels().end()),
        dim_(ds.dim()),
        alphabet_size_(ds.alphabet_size()),
        metric_(metric) {}

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t alphabet_size() const noexcept { return alphabet_size_; }
  Metric metric() const noexcept { return metric_; }

  NeighborProfile profile(std::span<const double> query, const ProfileOptions& opts = {}) const {
    if (query.size() != dim_)
      throw std::invalid_argument("neighbor_profile: query dimension " + std::to_string(query.size()) +
                                  " does not match index dimension " + std::to_string(dim_));
    const std::size_t n = size();
    std::vector<Entry> entries;
    entries.reserve(n);
    // Ordering keys: squared distance for euclidean (sqrt is applied only to
    // group representatives), plain L1 otherwise.
    const double* row = features_.data();
    for (std::size_t i = 0; i < n; ++i, row += dim_) {
      double acc = 0.0;
      if (metric_ == Metric::euclidean) {
        for (std::size_t j = 0; j < dim_; ++j) {
          const double d = query[j] - row[j];
          acc += d * d;
        }
      } else {
        for (std::size_t j = 0; j < dim_; ++j) acc += std::abs(query[j] - row[j]);
      }
      entries.push_back({acc, labels_[i]});
    }

    std::size_t n_reference = n;
    if (opts.exclude_row) {
      const std::size_t r = *opts.exclude_row;
      if (r >= n) throw std::out_of_range("neighbor_profile: excluded row out of range");
      if (entries[r].key != 0.0)
        throw std::invalid_argument("neighbor_profile: excluded row does not coincide with the query");
      entries.erase(entries.begin() + static_cast<std::ptrdiff_t>(r));
      n_reference = n - 1;
    }

    auto by_key = [](const Entry& a, const Entry& b) { return a.key < b.key; };
    if (opts.max_k && *opts.max_k == 0) throw std::invalid_argument("neighbor_profile: max_k must be positive");
    if (opts.max_k && *opts.max_k < entries.size()) {
      auto nth = entries.begin() + static_cast<std::ptrdiff_t>(*opts.max_k - 1);
      std::nth_element(entries.begin(), nth, entries.end(), by_key);
      const double cutoff = nth->key;
      auto tail = std::partition(nth + 1, entries.end(), [cutoff](const Entry& e) { return e.key <= cutoff; });
      entries.erase(tail, entries.end());
    }
    std::sort(entries.begin(), entries.end(), by_key);

    std::vector<double> radii;
    std::vector<std::size_t> totals;
    std::vector<std::uint32_t> counts;
    std::vector<std::uint32_t> running(alphabet_size_, 0);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      ++running[entries[i].label];
      const double r = to_radius(entries[i].key);
      const bool last_of_group = i + 1 == entries.size() || to_radius(entries[i + 1].key) != r;
      if (!last_of_group) continue;
      radii.push_back(r);
      totals.push_back(i + 1);
      counts.insert(counts.end(), running.begin(), running.end());
    }
    return NeighborProfile(std::move(radii), std::move(totals), std::move(counts), alphabet_size_, n_reference);
  }

 private:
  struct Entry {
    double key;
    LabelId label;
  };

  double to_radius(double key) const { return metric_ == Metric::euclidean ? std::sqrt(key) : key; }

  std::vector<double> features_;
  std::vector<LabelId> labels_;
  std::size_t dim_;
  std::size_t alphabet_size_;
  Metric metric_;
};

}  // namespace aknn
