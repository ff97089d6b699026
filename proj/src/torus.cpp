#include "dynaperc/torus.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "dynaperc/error.hpp"

namespace dynaperc::torus {

TorusGraph::TorusGraph(unsigned d, unsigned n) : d_(d), n_(n), vertex_count_(1) {
  if (d < 1) throw InputError("torus dimension must be >= 1");
  if (n < 3) throw InputError("torus side must be >= 3 (n = 2 creates parallel edges)");
  stride_.assign(d, 1);
  for (unsigned i = 0; i < d; ++i) {
    if (vertex_count_ > std::numeric_limits<std::uint32_t>::max() / n / d) {
      throw InputError("torus too large for 32-bit indexing");
    }
    vertex_count_ *= n;
  }
  for (int i = static_cast<int>(d) - 2; i >= 0; --i) stride_[i] = stride_[i + 1] * n;
}

void TorusGraph::check_vertex(Vertex v) const {
  if (v >= vertex_count_) {
    throw InputError("vertex index " + std::to_string(v) + " out of range");
  }
}

std::vector<unsigned> TorusGraph::coords(Vertex v) const {
  check_vertex(v);
  std::vector<unsigned> c(d_);
  for (unsigned i = 0; i < d_; ++i) c[i] = static_cast<unsigned>((v / stride_[i]) % n_);
  return c;
}

Vertex TorusGraph::vertex_at(const std::vector<unsigned>& c) const {
  if (c.size() != d_) throw InputError("coordinate arity mismatch");
  std::size_t v = 0;
  for (unsigned i = 0; i < d_; ++i) {
    if (c[i] >= n_) throw InputError("coordinate out of range");
    v += c[i] * stride_[i];
  }
  return static_cast<Vertex>(v);
}

Vertex TorusGraph::shift(Vertex v, unsigned axis, int step) const {
  const std::size_t s = stride_[axis];
  const auto c = static_cast<unsigned>((v / s) % n_);
  const unsigned next = step > 0 ? (c + 1 == n_ ? 0 : c + 1) : (c == 0 ? n_ - 1 : c - 1);
  return static_cast<Vertex>(v + (static_cast<std::ptrdiff_t>(next) - static_cast<std::ptrdiff_t>(c)) *
                                     static_cast<std::ptrdiff_t>(s));
}

EdgeId TorusGraph::edge_id(Vertex owner, unsigned axis) const {
  check_vertex(owner);
  if (axis >= d_) throw InputError("axis out of range");
  return static_cast<EdgeId>(owner * d_ + axis);
}

EdgeEnds TorusGraph::edge_ends(EdgeId e) const {
  if (e >= edge_count()) throw InputError("edge id " + std::to_string(e) + " out of range");
  const Vertex owner = e / d_;
  const unsigned axis = e % d_;
  return {owner, shift(owner, axis, +1), axis};
}

Neighbor TorusGraph::neighbor(Vertex v, unsigned direction) const {
  const unsigned axis = direction / 2;
  if (direction % 2 == 0) {
    return {shift(v, axis, +1), static_cast<EdgeId>(v * d_ + axis)};
  }
  const Vertex u = shift(v, axis, -1);
  return {u, static_cast<EdgeId>(u * d_ + axis)};
}

std::vector<Neighbor> TorusGraph::neighbors(Vertex v) const {
  check_vertex(v);
  std::vector<Neighbor> out;
  out.reserve(degree());
  for (unsigned k = 0; k < degree(); ++k) out.push_back(neighbor(v, k));
  return out;
}

VertexSet::VertexSet(std::size_t universe) : universe_(universe), words_((universe + 63) / 64, 0) {}

VertexSet VertexSet::from_vertices(std::size_t universe, const std::vector<Vertex>& members) {
  VertexSet s(universe);
  for (Vertex v : members) s.insert(v);
  return s;
}

VertexSet VertexSet::from_mask(std::size_t universe, std::uint64_t mask) {
  if (universe > 64) throw InputError("mask construction needs universe <= 64");
  VertexSet s(universe);
  if (universe < 64) mask &= (std::uint64_t{1} << universe) - 1;
  if (!s.words_.empty()) s.words_[0] = mask;
  s.count_ = static_cast<std::size_t>(std::popcount(mask));
  return s;
}

VertexSet VertexSet::full(std::size_t universe) { return VertexSet(universe).complement(); }

bool VertexSet::contains(Vertex v) const {
  if (v >= universe_) throw InputError("vertex outside set universe");
  return (words_[v / 64] >> (v % 64)) & 1U;
}

void VertexSet::insert(Vertex v) {
  if (contains(v)) return;
  words_[v / 64] |= std::uint64_t{1} << (v % 64);
  ++count_;
}

void VertexSet::erase(Vertex v) {
  if (!contains(v)) return;
  words_[v / 64] &= ~(std::uint64_t{1} << (v % 64));
  --count_;
}

VertexSet VertexSet::complement() const {
  VertexSet c(universe_);
  for (std::size_t i = 0; i < words_.size(); ++i) c.words_[i] = ~words_[i];
  if (universe_ % 64 != 0 && !c.words_.empty()) {
    c.words_.back() &= (std::uint64_t{1} << (universe_ % 64)) - 1;
  }
  c.count_ = universe_ - count_;
  return c;
}

std::vector<Vertex> VertexSet::members() const {
  std::vector<Vertex> out;
  out.reserve(count_);
  for (std::size_t w = 0; w < words_.size(); ++w) {
    std::uint64_t bits = words_[w];
    while (bits != 0) {
      out.push_back(static_cast<Vertex>(w * 64 + static_cast<std::size_t>(std::countr_zero(bits))));
      bits &= bits - 1;
    }
  }
  return out;
}

double VertexSet::mass() const {
  return universe_ == 0 ? 0.0 : static_cast<double>(count_) / static_cast<double>(universe_);
}

std::vector<EdgeId> edge_boundary(const TorusGraph& g, const VertexSet& s) {
  if (s.universe() != g.vertex_count()) throw InputError("vertex set does not match graph");
  std::vector<EdgeId> out;
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    const auto ends = g.edge_ends(e);
    if (s.contains(ends.lo) != s.contains(ends.hi)) out.push_back(e);
  }
  return out;
}

VertexSet half_box(const TorusGraph& g) {
  VertexSet s(g.vertex_count());
  const unsigned cut = g.side() / 2;
  for (Vertex v = 0; v < g.vertex_count(); ++v) {
    if (g.coords(v)[0] < cut) s.insert(v);
  }
  return s;
}

IsoProfile iso_profile(const TorusGraph& g) {
  const std::size_t count = g.vertex_count();
  if (count > kIsoEnumerationLimit) {
    throw CapabilityError("iso_profile enumerates 2^(n^d) subsets; n^d = " + std::to_string(count) +
                          " exceeds the limit of " + std::to_string(kIsoEnumerationLimit));
  }
  std::vector<std::uint32_t> lo(g.edge_count());
  std::vector<std::uint32_t> hi(g.edge_count());
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    const auto ends = g.edge_ends(e);
    lo[e] = ends.lo;
    hi[e] = ends.hi;
  }
  const double exponent = static_cast<double>(g.dim() - 1) / static_cast<double>(g.dim());
  std::vector<double> size_power(count + 1);
  for (std::size_t k = 0; k <= count; ++k) size_power[k] = std::pow(static_cast<double>(k), exponent);

  double best = std::numeric_limits<double>::infinity();
  std::uint64_t best_mask = 0;
  const std::uint64_t limit = std::uint64_t{1} << count;
  for (std::uint64_t mask = 1; mask < limit; ++mask) {
    const auto k = static_cast<std::size_t>(std::popcount(mask));
    if (2 * k > count) continue;
    unsigned boundary = 0;
    for (std::size_t e = 0; e < lo.size(); ++e) {
      boundary += static_cast<unsigned>(((mask >> lo[e]) ^ (mask >> hi[e])) & 1U);
    }
    const double value = boundary / size_power[k];
    if (value < best) {
      best = value;
      best_mask = mask;
    }
  }
  return {best, VertexSet::from_mask(count, best_mask)};
}

}  // namespace dynaperc::torus
