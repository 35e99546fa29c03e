#include "cdgamma/distance.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>
#include <sstream>

#include "cdgamma/parallel.hpp"

namespace cdgamma {

std::size_t DistanceMatrix::row_of(std::size_t x) const {
  const auto it = std::find(sources.begin(), sources.end(), x);
  if (it == sources.end()) {
    throw std::out_of_range("distance: node " + std::to_string(x) + " is not a source");
  }
  return static_cast<std::size_t>(it - sources.begin());
}

namespace {

Eigen::VectorXd dijkstra(const GridModel& g, std::size_t s) {
  const std::size_t N = g.size();
  const double h = g.h();
  Eigen::VectorXd dist = Eigen::VectorXd::Constant(N, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[s] = 0;
  pq.emplace(0.0, s);
  while (!pq.empty()) {
    const auto [du, u] = pq.top();
    pq.pop();
    if (du > dist[u]) continue;
    for (SparseRM::InnerIterator it(g.G, u); it; ++it) {
      const auto v = static_cast<std::size_t>(it.col());
      if (v == u || it.value() <= 0) continue;
      if (du + h < dist[v]) {
        dist[v] = du + h;
        pq.emplace(dist[v], v);
      }
    }
  }
  return dist;
}

std::string sidecar_name(const GridModel& g, const std::vector<std::size_t>& sources) {
  std::uint64_t k = grid_hash(g);
  for (std::size_t s : sources) k = (k ^ s) * 1099511628211ULL;
  std::ostringstream os;
  os << "dist-" << std::hex << k << ".bin";
  return os.str();
}

constexpr char kMagic[8] = {'C', 'D', 'G', 'D', 'I', 'S', 'T', '1'};

}  // namespace

std::vector<std::size_t> component_labels(const SparseRM& G) {
  const auto N = static_cast<std::size_t>(G.rows());
  const std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> label(N, none);
  std::size_t next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < N; ++s) {
    if (label[s] != none) continue;
    label[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (SparseRM::InnerIterator it(G, static_cast<Eigen::Index>(u)); it; ++it) {
        const auto v = static_cast<std::size_t>(it.col());
        if (it.value() > 0 && label[v] == none) {
          label[v] = next;
          stack.push_back(v);
        }
      }
    }
    ++next;
  }
  return label;
}

DistanceMatrix subriemannian_distance(const GridModel& g, std::vector<std::size_t> sources,
                                      int jobs, bool within_component) {
  DistanceMatrix dm;
  dm.d.resize(static_cast<Eigen::Index>(sources.size()), static_cast<Eigen::Index>(g.size()));
  for (std::size_t s : sources) {
    if (s >= g.size()) throw std::out_of_range("distance: source out of range");
  }
  parallel_for(sources.size(), jobs, [&](std::size_t i) {
    dm.d.row(static_cast<Eigen::Index>(i)) = dijkstra(g, sources[i]).transpose();
  });
  if (!within_component && !dm.d.allFinite()) {
    throw DisconnectedGraphError("distance: the jump graph is disconnected");
  }
  dm.sources = std::move(sources);
  return dm;
}

DistanceMatrix all_pairs_distance(const GridModel& g, int jobs) {
  std::vector<std::size_t> all(g.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return subriemannian_distance(g, std::move(all), jobs);
}

std::uint64_t grid_hash(const GridModel& g) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ULL;
  };
  const std::string head = g.model_name + grid_spec_to_json(g.spec).dump();
  mix(head.data(), head.size());
  mix(g.G.outerIndexPtr(), sizeof(int) * static_cast<std::size_t>(g.G.outerSize() + 1));
  mix(g.G.innerIndexPtr(), sizeof(int) * static_cast<std::size_t>(g.G.nonZeros()));
  mix(g.G.valuePtr(), sizeof(double) * static_cast<std::size_t>(g.G.nonZeros()));
  return h;
}

void save_distance(const std::string& path, const GridModel& g, const DistanceMatrix& dm) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("distance: cannot write " + path);
  const std::uint64_t hash = grid_hash(g), rows = dm.sources.size(), cols = g.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&hash), sizeof hash);
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  for (std::size_t s : dm.sources) {
    const std::uint64_t v = s;
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  out.write(reinterpret_cast<const char*>(dm.d.data()),
            static_cast<std::streamsize>(sizeof(double) * rows * cols));
}

bool load_distance(const std::string& path, const GridModel& g,
                   const std::vector<std::size_t>& sources, DistanceMatrix& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[8];
  std::uint64_t hash = 0, rows = 0, cols = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&hash), sizeof hash);
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in || !std::equal(magic, magic + 8, kMagic) || hash != grid_hash(g) ||
      rows != sources.size() || cols != g.size()) {
    return false;
  }
  for (std::size_t s : sources) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in || v != s) return false;
  }
  DistanceMatrix dm;
  dm.sources = sources;
  dm.d.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  in.read(reinterpret_cast<char*>(dm.d.data()),
          static_cast<std::streamsize>(sizeof(double) * rows * cols));
  if (!in) return false;
  out = std::move(dm);
  return true;
}

DistanceMatrix cached_distance(const std::string& dir, const GridModel& g,
                               const std::vector<std::size_t>& sources, int jobs) {
  const std::string path = (std::filesystem::path(dir) / sidecar_name(g, sources)).string();
  DistanceMatrix dm;
  if (load_distance(path, g, sources, dm)) return dm;
  dm = subriemannian_distance(g, sources, jobs);
  std::filesystem::create_directories(dir);
  save_distance(path, g, dm);
  return dm;
}

}  // namespace cdgamma
