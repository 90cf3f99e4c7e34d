#pragma once

// Z^d geometry: points, Euclidean balls and annuli with strict membership,
// finite regions with O(1) membership, outer boundaries.
//
// The dimension is a template parameter; with_dimension() turns a runtime d
// into the matching instantiation.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdlib>
#include <sstream>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "idla/errors.hpp"

namespace idla {

inline constexpr int kMinDimension = 2;
inline constexpr int kMaxDimension = 4;

template <int D>
struct Point {
  static_assert(D >= kMinDimension && D <= kMaxDimension, "unsupported dimension");

  std::array<std::int32_t, D> x{};

  constexpr std::int32_t& operator[](int i) { return x[static_cast<std::size_t>(i)]; }
  constexpr std::int32_t operator[](int i) const { return x[static_cast<std::size_t>(i)]; }

  // Lexicographic, which is also the enumeration order everywhere.
  constexpr auto operator<=>(const Point&) const = default;

  friend constexpr Point operator+(Point a, const Point& b) {
    for (int i = 0; i < D; ++i) a[i] += b[i];
    return a;
  }
  friend constexpr Point operator-(Point a, const Point& b) {
    for (int i = 0; i < D; ++i) a[i] -= b[i];
    return a;
  }
};

template <int D>
constexpr std::int64_t dot(const Point<D>& a, const Point<D>& b) {
  std::int64_t s = 0;
  for (int i = 0; i < D; ++i) s += static_cast<std::int64_t>(a[i]) * b[i];
  return s;
}

template <int D>
constexpr std::int64_t norm2(const Point<D>& p) {
  return dot(p, p);
}

template <int D>
double norm(const Point<D>& p) {
  return std::sqrt(static_cast<double>(norm2(p)));
}

template <int D>
constexpr bool is_origin(const Point<D>& p) {
  return p == Point<D>{};
}

template <int D>
std::string to_string(const Point<D>& p) {
  std::ostringstream os;
  os << '(';
  for (int i = 0; i < D; ++i) os << (i ? "," : "") << p[i];
  os << ')';
  return os.str();
}

// Neighbor k in the fixed order +e1, -e1, +e2, -e2, ...
template <int D>
constexpr Point<D> neighbor(Point<D> p, unsigned k) {
  p[static_cast<int>(k >> 1)] += (k & 1u) ? -1 : 1;
  return p;
}

template <int D>
inline constexpr unsigned kNeighborCount = 2 * D;

// Strict test ||y|| < r from the exact squared norm. Exact whenever r*r is
// exactly representable in long double, which covers integer and
// half-integer radii at lattice scale.
inline bool norm2_below(std::int64_t n2, double r) {
  if (r <= 0) return false;
  const long double rr = static_cast<long double>(r) * r;
  return static_cast<long double>(n2) < rr;
}

template <int D>
struct Ball {
  Point<D> center{};
  double radius = 0;

  bool contains(const Point<D>& y) const { return norm2_below(norm2(y - center), radius); }
};

// A(inner, outer) = B(0, outer) \ B(0, inner), centered at the origin.
struct Annulus {
  double inner = 0;
  double outer = 0;

  template <int D>
  bool contains(const Point<D>& y) const {
    const auto n2 = norm2(y);
    return norm2_below(n2, outer) && !norm2_below(n2, inner);
  }
};

// Dense storage over the box [-half, half]^D that grows on write. Reads
// outside the box return the empty value.
template <int D, typename T>
class SiteGrid {
 public:
  explicit SiteGrid(T empty = T{}, std::int32_t half_width = 8) : empty_(empty) {
    reshape(std::max<std::int32_t>(half_width, 1));
  }

  const T& get(const Point<D>& p) const {
    std::size_t idx = 0;
    if (!index(p, idx)) return empty_;
    return data_[idx];
  }

  T& ref(const Point<D>& p) {
    std::size_t idx = 0;
    if (!index(p, idx)) {
      std::int32_t need = 0;
      for (int i = 0; i < D; ++i) need = std::max(need, std::abs(p[i]));
      std::int32_t h = half_;
      while (h < need) h *= 2;
      reshape(h);
      index(p, idx);
    }
    return data_[idx];
  }

  void set(const Point<D>& p, T value) { ref(p) = value; }

  std::int32_t half_width() const { return half_; }

 private:
  bool index(const Point<D>& p, std::size_t& out) const {
    std::size_t idx = 0;
    for (int i = D - 1; i >= 0; --i) {
      const auto c = static_cast<std::uint64_t>(static_cast<std::int64_t>(p[i]) + half_);
      if (c >= side_) return false;
      idx = idx * side_ + c;
    }
    out = idx;
    return true;
  }

  void reshape(std::int32_t new_half) {
    const std::uint64_t new_side = 2 * static_cast<std::uint64_t>(new_half) + 1;
    std::uint64_t total = 1;
    for (int i = 0; i < D; ++i) total *= new_side;
    std::vector<T> fresh(total, empty_);
    if (!data_.empty()) {
      // Copy the old box into the new one.
      Point<D> p;
      for (int i = 0; i < D; ++i) p[i] = -half_;
      for (;;) {
        std::size_t from = 0;
        index(p, from);
        std::size_t to = 0;
        for (int i = D - 1; i >= 0; --i) to = to * new_side + static_cast<std::uint64_t>(p[i] + new_half);
        fresh[to] = data_[from];
        int i = 0;
        for (; i < D; ++i) {
          if (++p[i] <= half_) break;
          p[i] = -half_;
        }
        if (i == D) break;
      }
    }
    data_ = std::move(fresh);
    half_ = new_half;
    side_ = new_side;
  }

  T empty_;
  std::int32_t half_ = 0;
  std::uint64_t side_ = 0;
  std::vector<T> data_;
};

// Finite site set. Iteration follows insertion order; index_of() gives the
// position in that order, -1 when absent.
template <int D>
class Region {
 public:
  Region() : index_(-1) {}

  template <typename It>
  Region(It first, It last) : Region() {
    for (; first != last; ++first) insert(*first);
  }

  bool insert(const Point<D>& p) {
    auto& slot = index_.ref(p);
    if (slot >= 0) return false;
    slot = static_cast<std::int32_t>(sites_.size());
    sites_.push_back(p);
    return true;
  }

  bool contains(const Point<D>& p) const { return index_.get(p) >= 0; }
  std::int32_t index_of(const Point<D>& p) const { return index_.get(p); }

  std::size_t size() const { return sites_.size(); }
  bool empty() const { return sites_.empty(); }
  std::span<const Point<D>> sites() const { return sites_; }
  const Point<D>& operator[](std::size_t i) const { return sites_[i]; }

  auto begin() const { return sites_.begin(); }
  auto end() const { return sites_.end(); }

  // Same site set, ignoring order.
  bool same_sites(const Region& other) const {
    if (size() != other.size()) return false;
    return std::all_of(sites_.begin(), sites_.end(), [&](const Point<D>& p) { return other.contains(p); });
  }

  std::vector<Point<D>> sorted_sites() const {
    auto out = sites_;
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  SiteGrid<D, std::int32_t> index_;
  std::vector<Point<D>> sites_;
};

namespace detail {

// Calls f(p) for every p in the box [lo, hi] (per coordinate), lexicographic.
template <int D, typename F>
void for_each_in_box(const Point<D>& lo, const Point<D>& hi, F&& f) {
  for (int i = 0; i < D; ++i)
    if (lo[i] > hi[i]) return;
  Point<D> p = lo;
  for (;;) {
    f(p);
    int i = D - 1;
    for (; i >= 0; --i) {
      if (++p[i] <= hi[i]) break;
      p[i] = lo[i];
    }
    if (i < 0) return;
  }
}

inline std::int32_t box_half_width(double radius) {
  return static_cast<std::int32_t>(std::ceil(std::max(radius, 0.0))) + 1;
}

}  // namespace detail

// { y : ||y - center|| < radius }, lexicographic order.
template <int D>
Region<D> enumerate_ball(const Point<D>& center, double radius) {
  if (radius < 0) throw ConfigError("enumerate_ball: negative radius");
  Region<D> out;
  const auto h = detail::box_half_width(radius);
  Point<D> lo = center, hi = center;
  for (int i = 0; i < D; ++i) {
    lo[i] -= h;
    hi[i] += h;
  }
  detail::for_each_in_box<D>(lo, hi, [&](const Point<D>& p) {
    if (norm2_below(norm2(p - center), radius)) out.insert(p);
  });
  return out;
}

// Lattice points of A(inner, outer) around the origin, lexicographic order.
template <int D>
Region<D> enumerate_annulus(const Annulus& a) {
  if (a.inner > a.outer || a.inner < 0) throw ConfigError("enumerate_annulus: need 0 <= inner <= outer");
  Region<D> out;
  const auto h = detail::box_half_width(a.outer);
  Point<D> lo, hi;
  for (int i = 0; i < D; ++i) {
    lo[i] = -h;
    hi[i] = h;
  }
  detail::for_each_in_box<D>(lo, hi, [&](const Point<D>& p) {
    if (a.contains(p)) out.insert(p);
  });
  return out;
}

// |B(0, radius)| without materializing the sites.
template <int D>
std::int64_t ball_size(double radius) {
  std::int64_t count = 0;
  const auto h = detail::box_half_width(radius);
  Point<D> lo, hi;
  for (int i = 0; i < D; ++i) {
    lo[i] = -h;
    hi[i] = h;
  }
  detail::for_each_in_box<D>(lo, hi, [&](const Point<D>& p) { count += norm2_below(norm2(p), radius); });
  return count;
}

// Sites of B(0, radius) ordered by (squared norm, lexicographic).
template <int D>
std::vector<Point<D>> sites_by_norm(double radius) {
  auto ball = enumerate_ball<D>(Point<D>{}, radius);
  std::vector<Point<D>> out(ball.begin(), ball.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const Point<D>& a, const Point<D>& b) { return norm2(a) < norm2(b); });
  return out;
}

// Outer boundary { z not in region : z ~ z' for some z' in region },
// lexicographic order.
template <int D>
Region<D> boundary(const Region<D>& region) {
  std::vector<Point<D>> found;
  Region<D> seen;
  for (const auto& p : region) {
    for (unsigned k = 0; k < kNeighborCount<D>; ++k) {
      const auto q = neighbor(p, k);
      if (!region.contains(q) && seen.insert(q)) found.push_back(q);
    }
  }
  std::sort(found.begin(), found.end());
  return Region<D>(found.begin(), found.end());
}

// Neighbor of z != 0 obtained by moving the largest |coordinate| (lowest
// index on ties) one unit toward 0. Satisfies ||result|| <= ||z|| - 1/(2 sqrt d).
template <int D>
Point<D> norm_decreasing_neighbor(Point<D> z) {
  if (is_origin(z)) throw ConfigError("norm_decreasing_neighbor: z must be nonzero");
  int best = 0;
  for (int i = 1; i < D; ++i)
    if (std::abs(z[i]) > std::abs(z[best])) best = i;
  z[best] += z[best] > 0 ? -1 : 1;
  return z;
}

template <typename F>
decltype(auto) with_dimension(int d, F&& f) {
  switch (d) {
    case 2:
      return std::forward<F>(f)(std::integral_constant<int, 2>{});
    case 3:
      return std::forward<F>(f)(std::integral_constant<int, 3>{});
    case 4:
      return std::forward<F>(f)(std::integral_constant<int, 4>{});
    default:
      throw ConfigError("unsupported dimension d=" + std::to_string(d) + " (supported: 2..4)");
  }
}

}  // namespace idla
