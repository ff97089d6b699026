#include "dynaperc/dynenv.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "dynaperc/error.hpp"
#include "dynaperc/rng.hpp"

namespace dynaperc::dynenv {

void DynParams::validate() const {
  if (!(p > 0.0 && p <= 1.0)) throw InputError("p must lie in (0, 1]");
  if (!(mu >= 0.0 && mu <= 0.5)) throw InputError("mu must lie in [0, 1/2]");
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw InputError("horizon must be finite and >= 0");
}

std::string to_string(InitKind kind) {
  switch (kind) {
    case InitKind::Stationary: return "stationary";
    case InitKind::AllClosed: return "all-closed";
    case InitKind::AllOpen: return "all-open";
    case InitKind::Explicit: return "explicit";
  }
  return "unknown";
}

InitKind parse_init_kind(const std::string& text) {
  if (text == "stationary") return InitKind::Stationary;
  if (text == "all-closed" || text == "closed") return InitKind::AllClosed;
  if (text == "all-open" || text == "open") return InitKind::AllOpen;
  if (text == "explicit") return InitKind::Explicit;
  throw InputError("unknown initial condition '" + text + "'");
}

EdgeTrajectory::EdgeTrajectory(bool initial, std::vector<double> flips)
    : initial_(initial), flips_(std::move(flips)) {
  for (std::size_t i = 1; i < flips_.size(); ++i) {
    if (!(flips_[i] > flips_[i - 1])) throw InputError("flip times must be strictly increasing");
  }
}

bool EdgeTrajectory::state_at(double t) const {
  const auto k = std::upper_bound(flips_.begin(), flips_.end(), t) - flips_.begin();
  return initial_ != ((k & 1) != 0);
}

std::size_t EdgeTrajectory::flips_in(double a, double b) const {
  if (b <= a) return 0;
  const auto lo = std::upper_bound(flips_.begin(), flips_.end(), a);
  const auto hi = std::upper_bound(flips_.begin(), flips_.end(), b);
  return static_cast<std::size_t>(hi - lo);
}

bool EdgeTrajectory::open_throughout(double a, double b) const {
  return state_at(a) && flips_in(a, b) == 0;
}

bool EdgeTrajectory::closed_throughout(double a, double b) const {
  return !state_at(a) && flips_in(a, b) == 0;
}

EnvTrajectory::EnvTrajectory(TorusGraph graph, DynParams params, InitKind init, std::uint64_t seed,
                             std::vector<EdgeTrajectory> edges)
    : graph_(std::move(graph)), params_(params), init_(init), seed_(seed), edges_(std::move(edges)) {
  if (edges_.size() != graph_.edge_count()) throw InputError("edge trajectory count mismatch");
  std::size_t total = 0;
  for (const auto& e : edges_) total += e.flips().size();
  events_.reserve(total);
  for (EdgeId e = 0; e < edges_.size(); ++e) {
    for (double t : edges_[e].flips()) {
      if (t < 0.0 || t > params_.horizon) throw InputError("flip time outside horizon");
      events_.push_back({t, e});
    }
  }
  std::sort(events_.begin(), events_.end(), [](const FlipEvent& a, const FlipEvent& b) {
    return a.time != b.time ? a.time < b.time : a.edge < b.edge;
  });
}

void EnvTrajectory::check_time(double t) const {
  if (!(t >= 0.0 && t <= params_.horizon)) {
    throw HorizonError("time " + std::to_string(t) + " outside environment horizon [0, " +
                       std::to_string(params_.horizon) + "]");
  }
}

bool EnvTrajectory::state_at(EdgeId e, double t) const {
  check_time(t);
  return edges_.at(e).state_at(t);
}

std::vector<std::uint8_t> EnvTrajectory::configuration_at(double t) const {
  check_time(t);
  std::vector<std::uint8_t> out(edges_.size());
  for (std::size_t e = 0; e < edges_.size(); ++e) out[e] = edges_[e].state_at(t) ? 1 : 0;
  return out;
}

bool EnvTrajectory::operator==(const EnvTrajectory& other) const {
  return graph_.dim() == other.graph_.dim() && graph_.side() == other.graph_.side() &&
         params_.p == other.params_.p && params_.mu == other.params_.mu &&
         params_.horizon == other.params_.horizon && init_ == other.init_ && seed_ == other.seed_ &&
         edges_ == other.edges_;
}

namespace {

bool initial_state(const EnvInit& init, EdgeId e, double p, Rng& rng) {
  switch (init.kind) {
    case InitKind::Stationary: return rng.bernoulli(p);
    case InitKind::AllClosed: return false;
    case InitKind::AllOpen: return true;
    case InitKind::Explicit: return init.states[e] != 0;
  }
  return false;
}

void check_init(const TorusGraph& g, const EnvInit& init) {
  if (init.kind == InitKind::Explicit && init.states.size() != g.edge_count()) {
    throw InputError("explicit initial configuration must have one entry per edge");
  }
}

}  // namespace

EnvTrajectory sample_env(const TorusGraph& g, const DynParams& params, const EnvInit& init,
                         std::uint64_t seed) {
  params.validate();
  check_init(g, init);
  const std::uint64_t stream = derive_seed(seed, kEnvStream);
  std::vector<EdgeTrajectory> edges;
  edges.reserve(g.edge_count());
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    Rng rng(derive_seed(stream, e));
    const bool start = initial_state(init, e, params.p, rng);
    std::vector<double> flips;
    bool state = start;
    double t = 0.0;
    for (;;) {
      const double rate = state ? params.close_rate() : params.open_rate();
      if (rate <= 0.0) break;
      t += rng.exponential(rate);
      if (t > params.horizon) break;
      flips.push_back(t);
      state = !state;
    }
    edges.emplace_back(start, std::move(flips));
  }
  return EnvTrajectory(g, params, init.kind, seed, std::move(edges));
}

EnvTrajectory sample_env_refresh(const TorusGraph& g, const DynParams& params, const EnvInit& init,
                                 std::uint64_t seed) {
  params.validate();
  check_init(g, init);
  const std::uint64_t stream = derive_seed(seed, kEnvStream ^ 0x7265667265736800ULL);
  std::vector<EdgeTrajectory> edges;
  edges.reserve(g.edge_count());
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    Rng rng(derive_seed(stream, e));
    const bool start = initial_state(init, e, params.p, rng);
    std::vector<double> flips;
    bool state = start;
    double t = 0.0;
    if (params.mu > 0.0) {
      for (;;) {
        t += rng.exponential(params.mu);
        if (t > params.horizon) break;
        const bool next = rng.bernoulli(params.p);
        if (next != state) {
          flips.push_back(t);
          state = next;
        }
      }
    }
    edges.emplace_back(start, std::move(flips));
  }
  return EnvTrajectory(g, params, init.kind, seed, std::move(edges));
}

double edge_transition_prob(double p, double mu, double t, int from, int to) {
  if (t < 0.0) throw InputError("transition time must be >= 0");
  if ((from != 0 && from != 1) || (to != 0 && to != 1)) throw InputError("edge states are 0 or 1");
  const double decay = std::exp(-mu * t);
  const double open = from == 1 ? p + (1.0 - p) * decay : p * (1.0 - decay);
  return to == 1 ? open : 1.0 - open;
}

double open_throughout_prob(double p, double mu, int from, double a, double b) {
  if (b < a) throw InputError("interval must satisfy a <= b");
  return edge_transition_prob(p, mu, a, from, 1) * std::exp(-(1.0 - p) * mu * (b - a));
}

double open_throughout_prob_stationary(double p, double mu, double a, double b) {
  if (b < a) throw InputError("interval must satisfy a <= b");
  return p * std::exp(-(1.0 - p) * mu * (b - a));
}

std::size_t count_open_throughout(const EnvTrajectory& env, const std::vector<EdgeId>& edges,
                                  double a, double b) {
  if (a > b) throw InputError("interval must satisfy a <= b");
  env.check_time(a);
  env.check_time(b);
  std::size_t count = 0;
  for (EdgeId e : edges) count += env.edge(e).open_throughout(a, b) ? 1 : 0;
  return count;
}

BinomialLemmaReport binomial_lemma_check(const TorusGraph& g, const DynParams& params,
                                         const std::vector<EdgeId>& edges, double sigma,
                                         double a, double b, std::size_t trials,
                                         const EnvInit& init, std::uint64_t seed) {
  if (trials == 0) throw InputError("trials must be >= 1");
  if (a > b || a < 0.0) throw InputError("interval must satisfy 0 <= a <= b");
  DynParams run = params;
  run.horizon = b;
  BinomialLemmaReport r;
  r.trials = trials;
  r.threshold = static_cast<double>(edges.size()) * sigma * params.mu;
  for (std::size_t i = 0; i < trials; ++i) {
    const auto env = sample_env(g, run, init, derive_seed(seed, i));
    const auto count = count_open_throughout(env, edges, a, b);
    if (static_cast<double>(count) >= r.threshold) ++r.successes;
  }
  r.probability.value = static_cast<double>(r.successes) / static_cast<double>(trials);
  r.probability.ci = stats::wilson(r.successes, trials);
  r.per_edge_worst_case = open_throughout_prob(params.p, params.mu, 0, a, b);
  const auto k = static_cast<std::size_t>(std::ceil(r.threshold - 1e-12));
  r.analytic_worst_case = stats::binomial_upper_tail(edges.size(), r.per_edge_worst_case, k);
  r.lemma_inequality = r.analytic_worst_case >= sigma * params.mu;
  return r;
}

double largest_valid_sigma(std::size_t edge_count, double p, double mu, double a, double b,
                           std::size_t grid_size) {
  const double q = open_throughout_prob(p, mu, 0, a, b);
  double best = 0.0;
  for (std::size_t i = 1; i <= grid_size; ++i) {
    const double sigma = static_cast<double>(i) / static_cast<double>(grid_size);
    const double threshold = static_cast<double>(edge_count) * sigma * mu;
    const auto k = static_cast<std::size_t>(std::ceil(threshold - 1e-12));
    if (stats::binomial_upper_tail(edge_count, q, k) >= sigma * mu) best = sigma;
  }
  return best;
}

IsolatedVertex isolated_vertex_exists(const EnvTrajectory& env, double length) {
  env.check_time(length);
  const auto& g = env.graph();
  std::vector<std::uint8_t> closed(g.edge_count());
  for (EdgeId e = 0; e < g.edge_count(); ++e) closed[e] = env.edge(e).closed_throughout(0.0, length) ? 1 : 0;
  for (Vertex v = 0; v < g.vertex_count(); ++v) {
    bool isolated = true;
    for (unsigned k = 0; k < g.degree() && isolated; ++k) isolated = closed[g.neighbor(v, k).edge] != 0;
    if (isolated) return {true, v};
  }
  return {false, std::nullopt};
}

namespace {

constexpr char kMagic[8] = {'D', 'Y', 'N', 'P', 'E', 'R', 'C', '1'};
constexpr std::uint32_t kDumpVersion = 1;

static_assert(std::endian::native == std::endian::little, "dump format assumes little-endian host");

template <class T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw InputError("truncated trajectory dump");
  return value;
}

}  // namespace

void save_trajectory(const EnvTrajectory& env, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kDumpVersion);
  put<std::uint32_t>(out, env.graph().dim());
  put<std::uint32_t>(out, env.graph().side());
  put<double>(out, env.params().p);
  put<double>(out, env.params().mu);
  put<double>(out, env.params().horizon);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(env.init_kind()));
  put<std::uint64_t>(out, env.seed());
  for (const auto& e : env.edges()) {
    put<std::uint8_t>(out, e.initial() ? 1 : 0);
    put<std::uint64_t>(out, e.flips().size());
    for (double t : e.flips()) put<double>(out, t);
  }
}

EnvTrajectory load_trajectory(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw InputError("not a trajectory dump");
  const auto version = get<std::uint32_t>(in);
  if (version != kDumpVersion) throw InputError("unsupported trajectory dump version");
  const auto d = get<std::uint32_t>(in);
  const auto n = get<std::uint32_t>(in);
  DynParams params;
  params.p = get<double>(in);
  params.mu = get<double>(in);
  params.horizon = get<double>(in);
  const auto tag = get<std::uint8_t>(in);
  if (tag > 3) throw InputError("bad init tag in trajectory dump");
  const auto seed = get<std::uint64_t>(in);
  TorusGraph g(d, n);
  std::vector<EdgeTrajectory> edges;
  edges.reserve(g.edge_count());
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const bool initial = get<std::uint8_t>(in) != 0;
    const auto count = get<std::uint64_t>(in);
    std::vector<double> flips(count);
    for (auto& t : flips) t = get<double>(in);
    edges.emplace_back(initial, std::move(flips));
  }
  return EnvTrajectory(g, params, static_cast<InitKind>(tag), seed, std::move(edges));
}

}  // namespace dynaperc::dynenv
