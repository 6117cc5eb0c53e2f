#include "raretok/graph.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace raretok {

void WeightedGraph::validate() const {
    if (weights.rows() != weights.cols()) fail(ErrorCode::ShapeMismatch, "adjacency must be square");
    for (Eigen::Index i = 0; i < weights.rows(); ++i) {
        if (weights(i, i) != 0.0) fail(ErrorCode::ShapeMismatch, "diagonal must be zero");
        for (Eigen::Index j = i + 1; j < weights.cols(); ++j) {
            if (weights(i, j) < 0.0) fail(ErrorCode::ShapeMismatch, "weights must be nonnegative");
            if (weights(i, j) != weights(j, i)) fail(ErrorCode::ShapeMismatch, "adjacency must be symmetric");
        }
    }
}

double WeightedGraph::total_weight() const {
    return 0.5 * weights.sum();
}

int Partition::community_count() const {
    int max_label = -1;
    for (int c : community) max_label = std::max(max_label, c);
    return max_label + 1;
}

double Partition::mean_community_size() const {
    int k = community_count();
    if (k == 0) return 0.0;
    return static_cast<double>(community.size()) / static_cast<double>(k);
}

double modularity(const WeightedGraph& graph, const std::vector<int>& labels, double resolution) {
    const int n = graph.node_count();
    if (static_cast<int>(labels.size()) != n) fail(ErrorCode::LabelOutOfRange, "label count");
    for (int c : labels)
        if (c < 0 || c >= n) fail(ErrorCode::LabelOutOfRange, "label " + std::to_string(c));
    double two_m = graph.weights.sum();
    if (two_m <= 0.0) fail(ErrorCode::EmptyGraph, "no positive edge weight");
    Vector degree = graph.weights.rowwise().sum();
    double q = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (labels[i] != labels[j]) continue;
            q += graph.weights(i, j) - resolution * degree(i) * degree(j) / two_m;
        }
    }
    return q / two_m;
}

namespace {

std::vector<int> relabel_contiguous(std::vector<int> labels) {
    std::vector<int> map(labels.size(), -1);
    int next = 0;
    for (int& c : labels) {
        if (map[c] < 0) map[c] = next++;
        c = map[c];
    }
    return labels;
}

struct LouvainLevel {
    Matrix weights;       // aggregated adjacency, self-loops on diagonal
    std::vector<double> loop; // intra-community weight kept through aggregation
};

// One pass of local moving on the (possibly aggregated) graph. Returns the
// labels and whether anything moved.
bool local_moving(const Matrix& w, double two_m, double resolution, std::mt19937_64& rng,
                  std::vector<int>& labels) {
    const int n = static_cast<int>(w.rows());
    // aggregate() stores twice the internal weight on the diagonal, so the
    // row sum is already the full super-node degree
    Vector degree = w.rowwise().sum();
    std::vector<double> tot(n, 0.0);
    for (int i = 0; i < n; ++i) tot[labels[i]] += degree(i);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    bool improved_any = false;
    bool improved = true;
    while (improved) {
        improved = false;
        for (int idx : order) {
            int current = labels[idx];
            // weight from idx to each community (self-loop excluded)
            std::vector<double> to_comm(n, 0.0);
            for (int j = 0; j < n; ++j) {
                if (j == idx) continue;
                double a = w(idx, j);
                if (a > 0.0) to_comm[labels[j]] += a;
            }
            tot[current] -= degree(idx);
            double best_gain = 0.0;
            int best_comm = current;
            double base = to_comm[current] - resolution * tot[current] * degree(idx) / two_m;
            for (int j = 0; j < n; ++j) {
                if (j == idx) continue;
                double a = w(idx, j);
                if (a <= 0.0) continue;
                int cand = labels[j];
                if (cand == current) continue;
                double gain = (to_comm[cand] - resolution * tot[cand] * degree(idx) / two_m) - base;
                if (gain > best_gain + 1e-15 ||
                    (gain > best_gain - 1e-15 && cand < best_comm)) {
                    if (gain > 1e-15) {
                        best_gain = gain;
                        best_comm = cand;
                    }
                }
            }
            tot[best_comm] += degree(idx);
            if (best_comm != current) {
                labels[idx] = best_comm;
                improved = true;
                improved_any = true;
            }
        }
    }
    return improved_any;
}

Matrix aggregate(const Matrix& w, const std::vector<int>& labels, int n_comm) {
    Matrix out = Matrix::Zero(n_comm, n_comm);
    const int n = static_cast<int>(w.rows());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out(labels[i], labels[j]) += w(i, j);
    return out;
}

}  // namespace

Partition louvain(const WeightedGraph& graph, double resolution, int restarts, std::uint64_t seed) {
    graph.validate();
    const int n = graph.node_count();
    if (n == 0 || graph.weights.sum() <= 0.0) fail(ErrorCode::EmptyGraph, "graph has no positive edge");
    if (restarts < 1) fail(ErrorCode::ConfigError, "restarts must be >= 1");
    const double two_m = graph.weights.sum();

    Partition best;
    bool have_best = false;
    for (int r = 0; r < restarts; ++r) {
        std::mt19937_64 rng(seed + static_cast<std::uint64_t>(r));
        Matrix w = graph.weights;
        std::vector<int> node_to_comm(n);
        std::iota(node_to_comm.begin(), node_to_comm.end(), 0);

        while (true) {
            std::vector<int> labels(static_cast<std::size_t>(w.rows()));
            std::iota(labels.begin(), labels.end(), 0);
            bool moved = local_moving(w, two_m, resolution, rng, labels);
            labels = relabel_contiguous(std::move(labels));
            int n_comm = 0;
            for (int c : labels) n_comm = std::max(n_comm, c + 1);
            for (int& c : node_to_comm) c = labels[c];
            if (!moved || n_comm == static_cast<int>(w.rows())) break;
            w = aggregate(w, labels, n_comm);
        }

        std::vector<int> final_labels = relabel_contiguous(node_to_comm);
        // Q from aggregated bookkeeping over the final level
        Matrix agg = aggregate(graph.weights, final_labels, [&] {
            int k = 0;
            for (int c : final_labels) k = std::max(k, c + 1);
            return k;
        }());
        double q = 0.0;
        for (Eigen::Index c = 0; c < agg.rows(); ++c) {
            double in_c = agg(c, c);
            double tot_c = agg.row(c).sum();
            q += in_c / two_m - resolution * (tot_c / two_m) * (tot_c / two_m);
        }
        if (!have_best || q > best.q) {
            best.community = final_labels;
            best.q = q;
            have_best = true;
        }
    }
    return best;
}

Partition best_partition_brute_force(const WeightedGraph& graph) {
    graph.validate();
    const int n = graph.node_count();
    if (n == 0 || graph.weights.sum() <= 0.0) fail(ErrorCode::EmptyGraph, "graph has no positive edge");
    if (n > 10) fail(ErrorCode::ConfigError, "brute force limited to n <= 10");
    std::vector<int> labels(n, 0);
    std::vector<int> best_labels(n, 0);
    double best_q = -2.0;
    // enumerate set partitions as restricted growth strings
    std::function<void(int, int)> rec = [&](int idx, int max_used) {
        if (idx == n) {
            double q = modularity(graph, labels);
            if (q > best_q) {
                best_q = q;
                best_labels = labels;
            }
            return;
        }
        for (int c = 0; c <= max_used + 1 && c < n; ++c) {
            labels[idx] = c;
            rec(idx + 1, std::max(max_used, c));
        }
    };
    rec(0, -1);
    Partition p;
    p.community = relabel_contiguous(best_labels);
    p.q = best_q;
    return p;
}

}  // namespace raretok
