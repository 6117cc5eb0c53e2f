#pragma once

#include <cstdint>
#include <vector>

#include "raretok/common.hpp"

namespace raretok {

// Undirected weighted graph as a dense symmetric matrix with zero diagonal.
struct WeightedGraph {
    Matrix weights;

    int node_count() const { return static_cast<int>(weights.rows()); }
    void validate() const;
    double total_weight() const; // m = (1/2) sum_ij A_ij
};

struct Partition {
    std::vector<int> community; // contiguous labels from 0
    double q = 0.0;

    int community_count() const;
    double mean_community_size() const;
};

// Newman modularity of the labeled partition, computed by the full double sum.
double modularity(const WeightedGraph& graph, const std::vector<int>& labels, double resolution = 1.0);

// Louvain with seeded-shuffle node sweeps; best of `restarts` runs by Q,
// ties broken by lowest restart index. Q is reported from the sweep's own
// community bookkeeping, not from modularity().
Partition louvain(const WeightedGraph& graph, double resolution = 1.0, int restarts = 10,
                  std::uint64_t seed = 0);

// Exhaustive best partition for small n; the test oracle.
Partition best_partition_brute_force(const WeightedGraph& graph);

}  // namespace raretok
