#pragma once

#include <cstdint>
#include <vector>

#include "idla/lattice.hpp"

namespace idla::test_support {

// Numbers sites on first sight so clusters can be fed to the occupation test.
template <int D>
class SiteIndex {
 public:
  std::vector<std::int32_t> indices(const Region<D>& cluster) {
    std::vector<std::int32_t> out;
    out.reserve(cluster.size());
    for (const auto& p : cluster) {
      seen_.insert(p);
      out.push_back(seen_.index_of(p));
    }
    return out;
  }
  std::size_t size() const { return seen_.size(); }

 private:
  Region<D> seen_;
};

}  // namespace idla::test_support
