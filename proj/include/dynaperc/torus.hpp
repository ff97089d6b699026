#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace dynaperc::torus {

using Vertex = std::uint32_t;
using EdgeId = std::uint32_t;

struct Neighbor {
  Vertex vertex;
  EdgeId edge;
};

struct EdgeEnds {
  Vertex lo;  // owning vertex; the edge points in its +axis direction
  Vertex hi;
  unsigned axis;
};

/// The discrete torus Z_n^d.
///
/// Layout (frozen, relied on by the trajectory dump format):
///  - vertex index = sum_i c_i * n^(d-1-i), i.e. lexicographic in (c_0, ..., c_{d-1});
///  - edge id = vertex * d + axis, joining vertex to vertex + e_axis (mod n).
class TorusGraph {
 public:
  TorusGraph(unsigned d, unsigned n);

  unsigned dim() const { return d_; }
  unsigned side() const { return n_; }
  std::size_t vertex_count() const { return vertex_count_; }
  std::size_t edge_count() const { return vertex_count_ * d_; }
  unsigned degree() const { return 2 * d_; }

  std::vector<unsigned> coords(Vertex v) const;
  Vertex vertex_at(const std::vector<unsigned>& coords) const;

  /// v + step * e_axis (mod n), step in {-1, +1}.
  Vertex shift(Vertex v, unsigned axis, int step) const;

  EdgeId edge_id(Vertex owner, unsigned axis) const;
  EdgeEnds edge_ends(EdgeId e) const;

  /// Incident (vertex, edge) pairs, ordered (axis 0 +, axis 0 -, axis 1 +, ...).
  std::vector<Neighbor> neighbors(Vertex v) const;

  /// Neighbor in direction k in [0, 2d): axis k/2, sign + for even k.
  Neighbor neighbor(Vertex v, unsigned direction) const;

 private:
  void check_vertex(Vertex v) const;

  unsigned d_;
  unsigned n_;
  std::size_t vertex_count_;
  std::vector<std::size_t> stride_;
};

/// Dense bit-indexed subset of the torus vertices with a cached cardinality.
class VertexSet {
 public:
  explicit VertexSet(std::size_t universe = 0);
  static VertexSet from_vertices(std::size_t universe, const std::vector<Vertex>& members);
  static VertexSet from_mask(std::size_t universe, std::uint64_t mask);
  static VertexSet full(std::size_t universe);

  std::size_t universe() const { return universe_; }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  bool contains(Vertex v) const;
  void insert(Vertex v);
  void erase(Vertex v);
  VertexSet complement() const;
  std::vector<Vertex> members() const;
  /// Uniform stationary mass |S| / n^d.
  double mass() const;

  bool operator==(const VertexSet& other) const = default;

 private:
  std::size_t universe_;
  std::vector<std::uint64_t> words_;
  std::size_t count_ = 0;
};

/// Edges with exactly one endpoint in s, ascending by id.
std::vector<EdgeId> edge_boundary(const TorusGraph& g, const VertexSet& s);

/// The box {c : c_0 < floor(n/2)}, i.e. half-arc for d = 1, half-slab for d >= 2.
VertexSet half_box(const TorusGraph& g);

struct IsoProfile {
  double value;        // min |dS| / |S|^((d-1)/d) over 0 < |S| <= n^d/2
  VertexSet minimizer;
};

inline constexpr std::size_t kIsoEnumerationLimit = 24;

/// Exhaustive isoperimetric constant; throws CapabilityError when n^d > 24.
IsoProfile iso_profile(const TorusGraph& g);

}  // namespace dynaperc::torus
