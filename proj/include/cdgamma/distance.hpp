#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdgamma/grid.hpp"

namespace cdgamma {

class DisconnectedGraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest-path distances from a set of source nodes to every node.
struct DistanceMatrix {
  std::vector<std::size_t> sources;
  Eigen::MatrixXd d;  // rows follow sources, columns are grid nodes

  // Row holding the distances from node x; throws if x is not a source.
  std::size_t row_of(std::size_t x) const;
  double operator()(std::size_t x, std::size_t y) const { return d(row_of(x), y); }
  bool full() const { return sources.size() == static_cast<std::size_t>(d.cols()); }
};

// Component label of every node of the jump graph, numbered from 0 in node
// order.
std::vector<std::size_t> component_labels(const SparseRM& G);

// Dijkstra on the jump graph of the generator. Every jump is the time-h flow
// of a unit horizontal field, so each edge has length h and path lengths bound
// the control distance from above. A disconnected graph throws unless
// within_component is set, in which case nodes outside the source's component
// are at infinite distance.
DistanceMatrix subriemannian_distance(const GridModel& g, std::vector<std::size_t> sources,
                                      int jobs = 1, bool within_component = false);
DistanceMatrix all_pairs_distance(const GridModel& g, int jobs = 1);

std::uint64_t grid_hash(const GridModel& g);
void save_distance(const std::string& path, const GridModel& g, const DistanceMatrix& dm);
// Returns false when the file is missing or was written for another grid or
// source set.
bool load_distance(const std::string& path, const GridModel& g,
                   const std::vector<std::size_t>& sources, DistanceMatrix& out);
// Loads from the sidecar when it matches, otherwise computes and stores it.
DistanceMatrix cached_distance(const std::string& dir, const GridModel& g,
                               const std::vector<std::size_t>& sources, int jobs = 1);

}  // namespace cdgamma
