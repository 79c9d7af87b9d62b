#include "mgcn/ball_tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mgcn {

BallTree::BallTree(const FeatureMatrix& x, std::size_t leaf_size)
    : x_(&x), leaf_size_(std::max<std::size_t>(leaf_size, 1)), dim_(x.cols()), order_(x.rows()) {
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<NodeId>(i);
    nodes_.reserve(2 * order_.size() / leaf_size_ + 1);
    build(0, order_.size());
}

int BallTree::build(std::size_t begin, std::size_t end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end, 0.0, -1, -1});
    centers_.resize(nodes_.size() * dim_, 0.0);

    std::span<double> center(centers_.data() + static_cast<std::size_t>(id) * dim_, dim_);
    const double count = static_cast<double>(end - begin);
    for (std::size_t p = begin; p < end; ++p) {
        auto row = x_->row(order_[p]);
        for (std::size_t j = 0; j < dim_; ++j) center[j] += row[j];
    }
    for (auto& c : center) c /= count;

    double radius2 = 0.0;
    for (std::size_t p = begin; p < end; ++p)
        radius2 = std::max(radius2, squared_distance(center, x_->row(order_[p])));
    nodes_[id].radius = std::sqrt(radius2);

    if (end - begin <= leaf_size_) return id;

    // Split on the coordinate with the widest spread, at the median.
    std::size_t split_dim = 0;
    double widest = -1.0;
    for (std::size_t j = 0; j < dim_; ++j) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t p = begin; p < end; ++p) {
            double v = x_->row(order_[p])[j];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo > widest) {
            widest = hi - lo;
            split_dim = j;
        }
    }
    if (widest <= 0.0) return id;  // all points coincide

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](NodeId a, NodeId b) {
                         double va = x_->row(a)[split_dim];
                         double vb = x_->row(b)[split_dim];
                         return va < vb || (va == vb && a < b);
                     });
    int left = build(begin, mid);
    int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

std::vector<NodeId> BallTree::query(std::size_t query_row, std::size_t k) const {
    k = std::min(k, order_.size());
    std::vector<Candidate> heap;
    heap.reserve(k + 1);
    if (k > 0) search(0, x_->row(query_row), k, heap);
    std::sort_heap(heap.begin(), heap.end());
    std::vector<NodeId> out(heap.size());
    for (std::size_t i = 0; i < heap.size(); ++i) out[i] = heap[i].second;
    return out;
}

void BallTree::search(int node_id, std::span<const double> q, std::size_t k,
                      std::vector<Candidate>& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(node_id)];
    std::span<const double> center(centers_.data() + static_cast<std::size_t>(node_id) * dim_, dim_);

    if (heap.size() == k) {
        const double to_center = std::sqrt(squared_distance(q, center));
        const double bound = to_center - node.radius;
        const double worst = std::sqrt(heap.front().first);
        // Slack absorbs rounding in the radius and the square roots.
        const double slack = 1e-9 * (1.0 + to_center + node.radius);
        if (bound - slack > worst) return;
    }

    if (node.left < 0) {
        for (std::size_t p = node.begin; p < node.end; ++p) {
            Candidate c{squared_distance(q, x_->row(order_[p])), order_[p]};
            if (heap.size() < k) {
                heap.push_back(c);
                std::push_heap(heap.begin(), heap.end());
            } else if (c < heap.front()) {
                std::pop_heap(heap.begin(), heap.end());
                heap.back() = c;
                std::push_heap(heap.begin(), heap.end());
            }
        }
        return;
    }

    auto center_dist = [&](int child) {
        std::span<const double> c(centers_.data() + static_cast<std::size_t>(child) * dim_, dim_);
        return squared_distance(q, c);
    };
    int first = node.left;
    int second = node.right;
    if (center_dist(second) < center_dist(first)) std::swap(first, second);
    search(first, q, k, heap);
    search(second, q, k, heap);
}

}  // namespace mgcn
