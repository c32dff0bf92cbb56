#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qwp/error.hpp"

namespace qwp {

struct Factor {
  std::string label;
  std::size_t dim = 2;
  bool fock = false;
  // Poisson tail mass a coherent amplitude may leave beyond dim (Fock factors only).
  double tail_tolerance = 0.0;
};

inline Factor qubit_factor(std::string label) { return {std::move(label), 2, false, 0.0}; }

inline Factor fock_factor(std::string label, std::size_t dim, double tail_tolerance = 1e-10) {
  return {std::move(label), dim, true, tail_tolerance};
}

// Ordered tensor-product basis. The first factor is the most significant digit of the
// basis index. An optional cap on the total Fock excitation restricts the basis to
// states with sum of Fock levels <= max_excitations (qubit levels do not count).
class HilbertSpec {
public:
  HilbertSpec() : HilbertSpec(std::vector<Factor>{}) {}

  explicit HilbertSpec(std::vector<Factor> factors,
                       std::optional<std::size_t> max_excitations = std::nullopt) {
    auto owned = std::make_shared<Impl>();
    auto& im = *owned;
    im.factors = std::move(factors);
    im.cap = max_excitations;
    for (std::size_t i = 0; i < im.factors.size(); ++i) {
      const auto& f = im.factors[i];
      detail::require(f.dim >= 1, "factor '" + f.label + "' has zero dimension");
      detail::require(!f.fock || f.tail_tolerance > 0.0,
                      "Fock factor '" + f.label + "' needs a positive tail tolerance");
      detail::require(f.fock || f.dim == 2, "qubit factor '" + f.label + "' must have dim 2");
      for (std::size_t j = 0; j < i; ++j)
        detail::require(im.factors[j].label != f.label, "duplicate factor label '" + f.label + "'");
    }
    im.build();
    impl_ = std::move(owned);
  }

  std::size_t size() const { return impl_->count; }
  std::size_t num_factors() const { return impl_->factors.size(); }
  const std::vector<Factor>& factors() const { return impl_->factors; }
  const Factor& factor(std::size_t f) const { return impl_->factors.at(f); }
  std::optional<std::size_t> max_excitations() const { return impl_->cap; }
  bool capped() const { return impl_->cap.has_value(); }

  bool has(const std::string& label) const {
    for (const auto& f : impl_->factors)
      if (f.label == label) return true;
    return false;
  }

  std::size_t index_of(const std::string& label) const {
    for (std::size_t i = 0; i < impl_->factors.size(); ++i)
      if (impl_->factors[i].label == label) return i;
    throw ValidationError("no factor labelled '" + label + "'");
  }

  std::size_t dim_of(const std::string& label) const { return factor(index_of(label)).dim; }

  // Level of factor f in basis state i.
  std::size_t level(std::size_t i, std::size_t f) const {
    return impl_->levels[i * impl_->factors.size() + f];
  }

  std::size_t excitations(std::size_t i) const {
    std::size_t n = 0;
    for (std::size_t f = 0; f < num_factors(); ++f)
      if (impl_->factors[f].fock) n += level(i, f);
    return n;
  }

  // Basis index with factor f of state i replaced by `lvl`, if that state is in the basis.
  std::optional<std::size_t> with_level(std::size_t i, std::size_t f, std::size_t lvl) const {
    const auto& im = *impl_;
    if (lvl >= im.factors[f].dim) return std::nullopt;
    const std::size_t full = im.full_index[i] + (lvl - level(i, f)) * im.stride[f];
    const std::int64_t k = im.lookup[full];
    if (k < 0) return std::nullopt;
    return static_cast<std::size_t>(k);
  }

  // Basis index with factors fa, fb of state i set to la, lb.
  std::optional<std::size_t> with_levels(std::size_t i, std::size_t fa, std::size_t la,
                                         std::size_t fb, std::size_t lb) const {
    const auto& im = *impl_;
    if (la >= im.factors[fa].dim || lb >= im.factors[fb].dim) return std::nullopt;
    const std::size_t full = im.full_index[i] + (la - level(i, fa)) * im.stride[fa] +
                             (lb - level(i, fb)) * im.stride[fb];
    const std::int64_t k = im.lookup[full];
    if (k < 0) return std::nullopt;
    return static_cast<std::size_t>(k);
  }

  std::optional<std::size_t> find(const std::vector<std::size_t>& levels) const {
    const auto& im = *impl_;
    detail::require(levels.size() == im.factors.size(), "level list does not match factor count");
    std::size_t full = 0;
    for (std::size_t f = 0; f < levels.size(); ++f) {
      if (levels[f] >= im.factors[f].dim) return std::nullopt;
      full += levels[f] * im.stride[f];
    }
    const std::int64_t k = im.lookup[full];
    if (k < 0) return std::nullopt;
    return static_cast<std::size_t>(k);
  }

  bool operator==(const HilbertSpec& o) const {
    if (impl_ == o.impl_) return true;
    if (impl_->cap != o.impl_->cap || impl_->factors.size() != o.impl_->factors.size()) return false;
    for (std::size_t i = 0; i < impl_->factors.size(); ++i) {
      const auto& a = impl_->factors[i];
      const auto& b = o.impl_->factors[i];
      if (a.label != b.label || a.dim != b.dim || a.fock != b.fock) return false;
    }
    return true;
  }

  // Same factors in the same order with some labels replaced.
  HilbertSpec relabel(const std::vector<std::pair<std::string, std::string>>& renames) const {
    auto fs = impl_->factors;
    for (const auto& [from, to] : renames) fs[index_of(from)].label = to;
    return HilbertSpec(std::move(fs), impl_->cap);
  }

  // Subsystem made of the listed factors, kept in their original order.
  HilbertSpec subsystem(const std::vector<std::string>& keep) const {
    std::vector<Factor> fs;
    for (const auto& f : impl_->factors)
      for (const auto& k : keep)
        if (k == f.label) fs.push_back(f);
    detail::require(fs.size() == keep.size(), "unknown or repeated label in subsystem list");
    return HilbertSpec(std::move(fs), impl_->cap);
  }

private:
  struct Impl {
    std::vector<Factor> factors;
    std::optional<std::size_t> cap;
    std::size_t count = 1;
    std::vector<std::size_t> stride;
    std::vector<std::uint16_t> levels;
    std::vector<std::size_t> full_index;
    std::vector<std::int64_t> lookup;

    void build() {
      const std::size_t nf = factors.size();
      stride.assign(nf, 1);
      std::size_t full = 1;
      for (std::size_t f = nf; f-- > 0;) {
        stride[f] = full;
        full *= factors[f].dim;
        detail::require(full < (std::size_t{1} << 27), "Hilbert space too large");
      }
      lookup.assign(full, -1);
      levels.clear();
      full_index.clear();
      std::vector<std::size_t> lv(nf, 0);
      count = 0;
      for (std::size_t k = 0; k < full; ++k) {
        std::size_t rem = k, exc = 0;
        for (std::size_t f = 0; f < nf; ++f) {
          lv[f] = rem / stride[f];
          rem %= stride[f];
          if (factors[f].fock) exc += lv[f];
        }
        if (cap && exc > *cap) continue;
        lookup[k] = static_cast<std::int64_t>(count++);
        full_index.push_back(k);
        for (std::size_t f = 0; f < nf; ++f) levels.push_back(static_cast<std::uint16_t>(lv[f]));
      }
    }
  };
  std::shared_ptr<const Impl> impl_;
};

}  // namespace qwp
