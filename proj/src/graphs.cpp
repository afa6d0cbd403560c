#include "mimatch/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mimatch {

double epsilon_schedule(int layer, int total_layers, double eps0, double eps_min) {
  if (layer < 0 || layer >= total_layers) throw std::invalid_argument("epsilon_schedule: bad layer index");
  if (!(eps0 >= eps_min) || !(eps_min > 0.0)) {
    throw std::invalid_argument("epsilon_schedule: need eps0 >= eps_min > 0");
  }
  if (layer < total_layers / 2) return eps0;
  const double decayed = eps0 * std::pow(0.5, static_cast<double>(layer - total_layers / 2));
  return std::max(decayed, eps_min);
}

double max_pairwise_distance(const std::vector<std::array<double, 2>>& positions) {
  double best = 0.0;
  for (size_t i = 0; i < positions.size(); ++i) {
    for (size_t j = i + 1; j < positions.size(); ++j) {
      const double dx = positions[i][0] - positions[j][0];
      const double dy = positions[i][1] - positions[j][1];
      best = std::max(best, dx * dx + dy * dy);
    }
  }
  return std::sqrt(best);
}

size_t IntraGraph::edge_count() const {
  size_t total = 0;
  for (size_t i = 0; i < neighbors.size(); ++i) {
    for (int j : neighbors[i]) {
      if (j > static_cast<int>(i)) ++total;
    }
  }
  return total;
}

IntraGraph build_intra_graph(const std::vector<std::array<double, 2>>& positions, double epsilon,
                             int layer) {
  if (positions.empty()) throw std::invalid_argument("build_intra_graph: no keypoints");
  const int n = static_cast<int>(positions.size());
  IntraGraph g;
  g.layer = layer;
  g.epsilon = epsilon;
  g.neighbors.assign(static_cast<size_t>(n), {});
  const double eps2 = epsilon * epsilon;
  for (int i = 0; i < n; ++i) {
    g.neighbors[static_cast<size_t>(i)].push_back(i);
    for (int j = i + 1; j < n; ++j) {
      const double dx = positions[static_cast<size_t>(i)][0] - positions[static_cast<size_t>(j)][0];
      const double dy = positions[static_cast<size_t>(i)][1] - positions[static_cast<size_t>(j)][1];
      if (dx * dx + dy * dy <= eps2) {
        g.neighbors[static_cast<size_t>(i)].push_back(j);
        g.neighbors[static_cast<size_t>(j)].push_back(i);
      }
    }
  }
  for (auto& nb : g.neighbors) std::sort(nb.begin(), nb.end());
  return g;
}

InterGraph build_inter_graph(const std::vector<double>& d_sem_src, int src_count,
                             const std::vector<double>& d_sem_ref, int ref_count, int channels) {
  if (src_count <= 0 || ref_count <= 0) throw std::invalid_argument("build_inter_graph: empty keypoint set");
  if (static_cast<size_t>(src_count) * channels != d_sem_src.size() ||
      static_cast<size_t>(ref_count) * channels != d_sem_ref.size()) {
    throw std::invalid_argument("build_inter_graph: descriptor sizes inconsistent with counts");
  }
  std::vector<double> src_norm(static_cast<size_t>(src_count));
  std::vector<double> ref_norm(static_cast<size_t>(ref_count));
  auto norms = [channels](const std::vector<double>& d, std::vector<double>& out) {
    for (size_t i = 0; i < out.size(); ++i) {
      double s = 0.0;
      const double* row = d.data() + i * static_cast<size_t>(channels);
      for (int c = 0; c < channels; ++c) s += row[c] * row[c];
      out[i] = std::sqrt(s);
    }
  };
  norms(d_sem_src, src_norm);
  norms(d_sem_ref, ref_norm);

  const int keep = (ref_count + 1) / 2;  // ceil(M/2)
  InterGraph g;
  g.target_count = ref_count;
  g.neighbors.assign(static_cast<size_t>(src_count), {});
  std::vector<std::pair<double, int>> sims(static_cast<size_t>(ref_count));
  for (int i = 0; i < src_count; ++i) {
    const double* a = d_sem_src.data() + static_cast<size_t>(i) * channels;
    for (int j = 0; j < ref_count; ++j) {
      const double* b = d_sem_ref.data() + static_cast<size_t>(j) * channels;
      double dot = 0.0;
      for (int c = 0; c < channels; ++c) dot += a[c] * b[c];
      const double denom = src_norm[static_cast<size_t>(i)] * ref_norm[static_cast<size_t>(j)];
      sims[static_cast<size_t>(j)] = {denom > 0.0 ? dot / denom : 0.0, j};
    }
    std::partial_sort(sims.begin(), sims.begin() + keep, sims.end(),
                      [](const auto& a2, const auto& b2) {
                        if (a2.first != b2.first) return a2.first > b2.first;
                        return a2.second < b2.second;
                      });
    auto& nb = g.neighbors[static_cast<size_t>(i)];
    nb.reserve(static_cast<size_t>(keep));
    for (int k = 0; k < keep; ++k) nb.push_back(sims[static_cast<size_t>(k)].second);
    std::sort(nb.begin(), nb.end());
  }
  return g;
}

}  // namespace mimatch
