#pragma once

#include <array>
#include <vector>

namespace mimatch {

// Layer threshold schedule: full connectivity in the shallow half, then a
// halving decay clamped below at eps_min.
double epsilon_schedule(int layer, int total_layers, double eps0, double eps_min);

// Largest pairwise Euclidean distance; 0 for fewer than two points.
double max_pairwise_distance(const std::vector<std::array<double, 2>>& positions);

// Undirected distance-threshold graph over one image's keypoints. Self-edges
// are always present so no neighborhood is empty.
struct IntraGraph {
  int layer = 0;
  double epsilon = 0.0;
  std::vector<std::vector<int>> neighbors;  // sorted ascending, includes self

  size_t edge_count() const;  // undirected edges excluding self-loops
};

IntraGraph build_intra_graph(const std::vector<std::array<double, 2>>& positions, double epsilon,
                             int layer = 0);

// Directed cross-image graph: every source node keeps the ceil(M/2) most
// cosine-similar target nodes (ties to the lower index). Zero-norm rows score
// 0 against everything.
struct InterGraph {
  std::vector<std::vector<int>> neighbors;  // per source node, sorted ascending
  int target_count = 0;
};

InterGraph build_inter_graph(const std::vector<double>& d_sem_src, int src_count,
                             const std::vector<double>& d_sem_ref, int ref_count, int channels);

}  // namespace mimatch
