#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace traplab {

using Coord = std::array<int, 3>;
using Point = std::array<double, 3>;

// Periodic box in d = 1,2,3 dimensions. Site order is the canonical row-major
// sweep over [-L, L]^d (last axis fastest), which fixes serialization and the
// mixed-radix state codecs downstream.
//
// Neighbors are the distinct torus sites at +-e_i. On an extent-2 ring both
// directions wrap to the same site and count as a single edge; this is the
// convention used by all small enumeration boxes.
struct Lattice {
  int dim = 1;
  std::array<int, 3> extent = {1, 1, 1};

  static Lattice box(int d, int L) {
    if (d < 1 || d > 3) throw std::invalid_argument("lattice: d must be in {1,2,3}");
    if (L < 1) throw std::invalid_argument("lattice: L must be >= 1");
    Lattice lat;
    lat.dim = d;
    for (int i = 0; i < d; ++i) lat.extent[i] = 2 * L + 1;
    return lat;
  }

  // Arbitrary extents (>= 2 per used axis); for small enumeration boxes.
  static Lattice of_extents(int d, const std::array<int, 3>& ext) {
    if (d < 1 || d > 3) throw std::invalid_argument("lattice: d must be in {1,2,3}");
    Lattice lat;
    lat.dim = d;
    for (int i = 0; i < d; ++i) {
      if (ext[i] < 2) throw std::invalid_argument("lattice: extent must be >= 2");
      lat.extent[i] = ext[i];
    }
    return lat;
  }

  std::int64_t n_sites() const {
    std::int64_t n = 1;
    for (int i = 0; i < dim; ++i) n *= extent[i];
    return n;
  }

  int half(int axis) const { return extent[axis] / 2; }

  bool is_box() const {
    for (int i = 0; i < dim; ++i)
      if (extent[i] != extent[0] || extent[i] % 2 == 0) return false;
    return true;
  }

  int box_half_width() const { return half(0); }

  std::int64_t index_of(const Coord& c) const {
    std::int64_t idx = 0;
    for (int i = 0; i < dim; ++i) {
      const int o = c[i] + half(i);
      if (o < 0 || o >= extent[i]) throw std::out_of_range("lattice: coordinate outside box");
      idx = idx * extent[i] + o;
    }
    return idx;
  }

  Coord coord_of(std::int64_t idx) const {
    Coord c = {0, 0, 0};
    for (int i = dim - 1; i >= 0; --i) {
      c[i] = static_cast<int>(idx % extent[i]) - half(i);
      idx /= extent[i];
    }
    return c;
  }

  Point point_of(std::int64_t idx, double n = 1.0) const {
    const Coord c = coord_of(idx);
    Point p = {0.0, 0.0, 0.0};
    for (int i = 0; i < dim; ++i) p[i] = static_cast<double>(c[i]) / n;
    return p;
  }

  std::int64_t wrap_step(std::int64_t idx, int axis, int dir) const {
    Coord c = coord_of(idx);
    int o = c[axis] + half(axis) + dir;
    if (o < 0) o += extent[axis];
    if (o >= extent[axis]) o -= extent[axis];
    c[axis] = o - half(axis);
    return index_of(c);
  }

  // Distinct torus neighbors, self excluded.
  std::vector<std::int64_t> neighbors(std::int64_t idx) const {
    std::vector<std::int64_t> out;
    out.reserve(2 * dim);
    for (int axis = 0; axis < dim; ++axis) {
      for (int dir : {+1, -1}) {
        const std::int64_t y = wrap_step(idx, axis, dir);
        if (y == idx) continue;
        bool seen = false;
        for (std::int64_t z : out)
          if (z == y) seen = true;
        if (!seen) out.push_back(y);
      }
    }
    return out;
  }
};

}  // namespace traplab
