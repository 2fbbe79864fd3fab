#pragma once

// Uniform tensor-product grids, node-major grid functions, and their
// HGF1 binary / CSV import-export.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "homoglab/error.hpp"

namespace homoglab {

/// Box [origin, origin + side] cut into n cells per axis. A periodic axis carries
/// n nodes (the far endpoint is identified with the origin); a non-periodic axis
/// carries n + 1 nodes including both endpoints.
class Grid {
 public:
  Grid() = default;

  Grid(std::vector<double> origin, std::vector<double> side, std::vector<int> cells,
       std::vector<bool> periodic)
      : origin_(std::move(origin)), side_(std::move(side)), cells_(std::move(cells)), periodic_(std::move(periodic)) {
    const std::size_t d = origin_.size();
    if (d < 1 || side_.size() != d || cells_.size() != d || periodic_.size() != d)
      throw ValidationError("Grid: inconsistent dimensions");
    points_.resize(d);
    h_.resize(d);
    stride_.resize(d);
    std::size_t stride = 1;
    for (std::size_t i = 0; i < d; ++i) {
      if (cells_[i] < 4) throw ValidationError("Grid: need at least 4 cells per axis");
      if (!(side_[i] > 0.0)) throw ValidationError("Grid: side must be > 0");
      h_[i] = side_[i] / cells_[i];
      points_[i] = periodic_[i] ? cells_[i] : cells_[i] + 1;
      stride_[i] = stride;
      stride *= static_cast<std::size_t>(points_[i]);
    }
    node_count_ = stride;
  }

  /// Periodic cube [0, side]^d with n nodes per axis.
  static Grid periodic_box(int d, double side, int n) {
    return Grid(std::vector<double>(static_cast<std::size_t>(d), 0.0), std::vector<double>(static_cast<std::size_t>(d), side),
                std::vector<int>(static_cast<std::size_t>(d), n), std::vector<bool>(static_cast<std::size_t>(d), true));
  }

  /// Periodic box with per-axis sides.
  static Grid periodic_box(std::vector<double> sides, int n) {
    const std::size_t d = sides.size();
    return Grid(std::vector<double>(d, 0.0), std::move(sides), std::vector<int>(d, n), std::vector<bool>(d, true));
  }

  /// Non-periodic rectangle with n cells per axis.
  static Grid rectangle(std::vector<double> origin, std::vector<double> side, int n) {
    const std::size_t d = origin.size();
    return Grid(std::move(origin), std::move(side), std::vector<int>(d, n), std::vector<bool>(d, false));
  }

  int dim() const noexcept { return static_cast<int>(origin_.size()); }
  const std::vector<double>& origin() const noexcept { return origin_; }
  const std::vector<double>& side() const noexcept { return side_; }
  const std::vector<int>& cells() const noexcept { return cells_; }
  const std::vector<bool>& periodic() const noexcept { return periodic_; }
  int points(int axis) const noexcept { return points_[static_cast<std::size_t>(axis)]; }
  double h(int axis) const noexcept { return h_[static_cast<std::size_t>(axis)]; }
  double h_max() const noexcept {
    double m = 0.0;
    for (double v : h_) m = std::max(m, v);
    return m;
  }
  std::size_t stride(int axis) const noexcept { return stride_[static_cast<std::size_t>(axis)]; }
  std::size_t node_count() const noexcept { return node_count_; }
  bool any_periodic() const noexcept {
    for (bool p : periodic_)
      if (p) return true;
    return false;
  }
  bool all_periodic() const noexcept {
    for (bool p : periodic_)
      if (!p) return false;
    return true;
  }

  int coord_index(std::size_t node, int axis) const noexcept {
    return static_cast<int>((node / stride_[static_cast<std::size_t>(axis)]) %
                            static_cast<std::size_t>(points_[static_cast<std::size_t>(axis)]));
  }

  double coord(std::size_t node, int axis) const noexcept {
    return origin_[static_cast<std::size_t>(axis)] + h_[static_cast<std::size_t>(axis)] * coord_index(node, axis);
  }

  void coords(std::size_t node, std::span<double> x) const noexcept {
    for (int i = 0; i < dim(); ++i) x[static_cast<std::size_t>(i)] = coord(node, i);
  }

  std::vector<double> coords(std::size_t node) const {
    std::vector<double> x(origin_.size());
    coords(node, x);
    return x;
  }

  /// Node reached by moving `offset` cells along `axis`; wraps on periodic axes,
  /// returns -1 when leaving a non-periodic axis.
  long neighbor(std::size_t node, int axis, int offset) const noexcept {
    const auto a = static_cast<std::size_t>(axis);
    const int k = coord_index(node, axis);
    int kk = k + offset;
    if (periodic_[a]) {
      kk = ((kk % points_[a]) + points_[a]) % points_[a];
    } else if (kk < 0 || kk >= points_[a]) {
      return -1;
    }
    return static_cast<long>(node) + (static_cast<long>(kk) - k) * static_cast<long>(stride_[a]);
  }

  bool on_boundary(std::size_t node, int axis) const noexcept {
    if (periodic_[static_cast<std::size_t>(axis)]) return false;
    const int k = coord_index(node, axis);
    return k == 0 || k == cells_[static_cast<std::size_t>(axis)];
  }

  bool on_boundary(std::size_t node) const noexcept {
    for (int i = 0; i < dim(); ++i)
      if (on_boundary(node, i)) return true;
    return false;
  }

  /// Trapezoid factor along one axis: 1/2 on non-periodic endpoints, else 1.
  double trapezoid(std::size_t node, int axis) const noexcept { return on_boundary(node, axis) ? 0.5 : 1.0; }

  /// Quadrature weight (dual cell volume) of a node.
  double weight(std::size_t node) const noexcept {
    double w = 1.0;
    for (int i = 0; i < dim(); ++i) w *= h_[static_cast<std::size_t>(i)] * trapezoid(node, i);
    return w;
  }

  double volume() const noexcept {
    double v = 1.0;
    for (double s : side_) v *= s;
    return v;
  }

  bool same_layout(const Grid& o) const noexcept {
    return cells_ == o.cells_ && periodic_ == o.periodic_ && origin_ == o.origin_ && side_ == o.side_;
  }

  bool operator==(const Grid& o) const noexcept { return same_layout(o); }

 private:
  std::vector<double> origin_;
  std::vector<double> side_;
  std::vector<int> cells_;
  std::vector<bool> periodic_;
  std::vector<int> points_;
  std::vector<double> h_;
  std::vector<std::size_t> stride_;
  std::size_t node_count_ = 0;
};

/// Node-major, component-minor values on a Grid.
struct GridFunction {
  Grid grid;
  int components = 1;
  std::vector<double> values;

  GridFunction() = default;
  GridFunction(Grid g, int comps) : grid(std::move(g)), components(comps), values(grid.node_count() * static_cast<std::size_t>(comps), 0.0) {
    if (comps < 1) throw ValidationError("GridFunction: components must be >= 1");
  }
  GridFunction(Grid g, int comps, std::vector<double> vals) : grid(std::move(g)), components(comps), values(std::move(vals)) {
    if (values.size() != grid.node_count() * static_cast<std::size_t>(comps))
      throw ValidationError("GridFunction: value count does not match grid");
  }

  double& at(std::size_t node, int c) noexcept { return values[node * static_cast<std::size_t>(components) + static_cast<std::size_t>(c)]; }
  double at(std::size_t node, int c) const noexcept { return values[node * static_cast<std::size_t>(components) + static_cast<std::size_t>(c)]; }

  std::span<const double> node_values(std::size_t node) const noexcept {
    return std::span<const double>(values).subspan(node * static_cast<std::size_t>(components), static_cast<std::size_t>(components));
  }

  bool finite() const noexcept {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

/// Samples fn(x, out) at every node; out has `components` entries.
inline GridFunction sample(const Grid& grid, int components,
                           const std::function<void(std::span<const double>, std::span<double>)>& fn) {
  GridFunction f(grid, components);
  std::vector<double> x(static_cast<std::size_t>(grid.dim()));
  for (std::size_t k = 0; k < grid.node_count(); ++k) {
    grid.coords(k, x);
    fn(x, std::span<double>(f.values).subspan(k * static_cast<std::size_t>(components), static_cast<std::size_t>(components)));
  }
  return f;
}

inline GridFunction sample_scalar(const Grid& grid, const std::function<double(std::span<const double>)>& fn) {
  return sample(grid, 1, [&](std::span<const double> x, std::span<double> out) { out[0] = fn(x); });
}

// ---------------------------------------------------------------------------
// HGF1: "HGF1", uint32 d, uint32 points per axis (d of them), uint32 components,
// then little-endian float64 values, node-major. All integers little-endian.

struct HgfData {
  std::vector<std::uint32_t> points;
  std::uint32_t components = 0;
  std::vector<double> values;
};

namespace detail {

template <class T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (!is) throw ValidationError("HGF1: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

}  // namespace detail

inline void write_hgf1(std::ostream& os, const GridFunction& f) {
  os.write("HGF1", 4);
  const int d = f.grid.dim();
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  for (int i = 0; i < d; ++i) detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.grid.points(i)));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.components));
  for (double v : f.values) detail::write_le<double>(os, v);
}

inline void write_hgf1(const std::string& path, const GridFunction& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot open " + path + " for writing");
  write_hgf1(os, f);
}

inline HgfData read_hgf1(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "HGF1", 4) != 0) throw ValidationError("HGF1: bad magic");
  HgfData data;
  const auto d = detail::read_le<std::uint32_t>(is);
  if (d < 1 || d > 8) throw ValidationError("HGF1: unsupported dimension");
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < d; ++i) {
    data.points.push_back(detail::read_le<std::uint32_t>(is));
    count *= data.points.back();
  }
  data.components = detail::read_le<std::uint32_t>(is);
  count *= data.components;
  data.values.resize(count);
  for (double& v : data.values) v = detail::read_le<double>(is);
  return data;
}

inline HgfData read_hgf1(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open " + path);
  return read_hgf1(is);
}

/// Attaches imported values to a grid whose node layout must match the header.
inline GridFunction to_grid_function(HgfData data, const Grid& grid) {
  if (static_cast<int>(data.points.size()) != grid.dim()) throw ValidationError("HGF1: dimension mismatch");
  for (int i = 0; i < grid.dim(); ++i)
    if (static_cast<int>(data.points[static_cast<std::size_t>(i)]) != grid.points(i))
      throw ValidationError("HGF1: node count mismatch");
  return GridFunction(grid, static_cast<int>(data.components), std::move(data.values));
}

/// CSV with columns i1..id, x1..xd, v1..vc.
inline void write_csv(std::ostream& os, const GridFunction& f) {
  const int d = f.grid.dim();
  for (int i = 0; i < d; ++i) os << "i" << i + 1 << ',';
  for (int i = 0; i < d; ++i) os << "x" << i + 1 << ',';
  for (int c = 0; c < f.components; ++c) os << "v" << c + 1 << (c + 1 < f.components ? "," : "\n");
  os << std::setprecision(17);
  for (std::size_t k = 0; k < f.grid.node_count(); ++k) {
    for (int i = 0; i < d; ++i) os << f.grid.coord_index(k, i) << ',';
    for (int i = 0; i < d; ++i) os << f.grid.coord(k, i) << ',';
    for (int c = 0; c < f.components; ++c) os << f.at(k, c) << (c + 1 < f.components ? "," : "\n");
  }
}

}  // namespace homoglab
