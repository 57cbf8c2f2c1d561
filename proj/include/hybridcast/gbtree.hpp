#pragma once

#include <hybridcast/error.hpp>
#include <hybridcast/numkernel.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace hybridcast::gbt {

struct TreeParams {
    double lambda = 1.0;         // L2 penalty on leaf weights
    double gamma = 0.0;          // penalty per leaf
    std::size_t max_depth = 4;
    std::size_t min_samples_leaf = 2;
    double learning_rate = 0.3;  // shrinkage applied to every tree; 1 gives the plain sum

    void validate() const {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("booster: lambda must be >= 0");
        if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("booster: gamma must be >= 0");
        if (min_samples_leaf < 1) throw ConfigError("booster: min_samples_leaf must be at least 1");
        if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
            throw ConfigError("booster: learning rate must lie in (0, 1]");
        }
    }

    friend bool operator==(const TreeParams&, const TreeParams&) = default;
};

struct GradHess {
    Vector grad;
    Vector hess;
};

/// First and second derivatives of the squared error (ŷ - y)^2.
inline GradHess grad_hess(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        throw ShapeError("grad_hess: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(target.size()) + " targets");
    }
    GradHess gh{Vector(pred.size()), Vector(pred.size(), 2.0)};
    for (std::size_t i = 0; i < pred.size(); ++i) gh.grad[i] = 2.0 * (pred[i] - target[i]);
    return gh;
}

/// Newton-optimal leaf value -G / (H + λ).
inline double leaf_weight(double G, double H, double lambda) {
    if (!(H + lambda > 0.0)) throw DomainError("leaf_weight: H + lambda must be positive");
    return -G / (H + lambda);
}

/// Reduction of the second-order objective from splitting a leaf, net of the
/// extra leaf penalty.
inline double split_gain(double GL, double HL, double GR, double HR, double lambda, double gamma) {
    if (!(HL + lambda > 0.0) || !(HR + lambda > 0.0) || !(HL + HR + lambda > 0.0)) {
        throw DomainError("split_gain: hessian sums plus lambda must be positive");
    }
    const double G = GL + GR;
    return 0.5 * (GL * GL / (HL + lambda) + GR * GR / (HR + lambda) - G * G / (HL + HR + lambda)) - gamma;
}

struct Node {
    bool leaf = true;
    std::size_t feature = 0;
    double threshold = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
    double weight = 0.0;  // leaves only
    double gain = 0.0;    // internal nodes only

    friend bool operator==(const Node&, const Node&) = default;
};

/// Binary regression tree stored as a node array, root at index 0. A sample
/// goes left iff x[feature] < threshold.
class RegTree {
public:
    RegTree() = default;
    explicit RegTree(std::vector<Node> nodes) : nodes_(std::move(nodes)) { validate(); }

    const std::vector<Node>& nodes() const noexcept { return nodes_; }

    std::size_t leaf_count() const noexcept {
        return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.leaf; }));
    }

    std::size_t depth() const { return nodes_.empty() ? 0 : depth_from(0); }

    /// Index of the leaf `x` lands in.
    std::size_t leaf_index(std::span<const double> x) const noexcept {
        std::size_t i = 0;
        while (!nodes_[i].leaf) i = x[nodes_[i].feature] < nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
        return i;
    }

    double predict(std::span<const double> x) const noexcept { return nodes_[leaf_index(x)].weight; }

    void validate() const {
        if (nodes_.empty()) throw ShapeError("RegTree: no nodes");
        std::vector<int> parents(nodes_.size(), 0);
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const Node& n = nodes_[i];
            if (n.leaf) continue;
            if (n.left >= nodes_.size() || n.right >= nodes_.size() || n.left == i || n.right == i ||
                n.left == n.right) {
                throw ShapeError("RegTree: node " + std::to_string(i) + " has invalid children");
            }
            ++parents[n.left];
            ++parents[n.right];
        }
        if (parents[0] != 0) throw ShapeError("RegTree: root has a parent");
        for (std::size_t i = 1; i < nodes_.size(); ++i) {
            if (parents[i] != 1) throw ShapeError("RegTree: node " + std::to_string(i) + " is not reachable exactly once");
        }
    }

    friend bool operator==(const RegTree&, const RegTree&) = default;

private:
    std::size_t depth_from(std::size_t i) const {
        const Node& n = nodes_[i];
        return n.leaf ? 0 : 1 + std::max(depth_from(n.left), depth_from(n.right));
    }

    std::vector<Node> nodes_;
};

/// Per-feature sample order (by value, ties by index). Computed once per
/// feature matrix and shared by every tree of a booster.
struct SortedColumns {
    std::vector<std::vector<std::size_t>> order;

    explicit SortedColumns(const Matrix& x) : order(x.cols()) {
        for (std::size_t f = 0; f < x.cols(); ++f) {
            auto& o = order[f];
            o.resize(x.rows());
            std::iota(o.begin(), o.end(), std::size_t{0});
            std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) { return x(a, f) < x(b, f); });
        }
    }
};

namespace detail {

struct SplitChoice {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
};

inline double midpoint(double lo, double hi) noexcept {
    double t = lo + (hi - lo) / 2.0;
    if (!(t > lo)) t = hi;  // adjacent doubles: keep lo strictly on the left
    return t;
}

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, std::span<const double> g, std::span<const double> h, const TreeParams& params,
                const SortedColumns& sorted)
        : x_(x), g_(g), h_(h), params_(params), sorted_(sorted), member_(x.rows(), 0) {}

    std::vector<Node> build() {
        std::vector<std::size_t> all(x_.rows());
        std::iota(all.begin(), all.end(), std::size_t{0});
        grow(all, 0);
        return std::move(nodes_);
    }

private:
    std::size_t grow(const std::vector<std::size_t>& samples, std::size_t depth) {
        double G = 0.0, H = 0.0;
        for (std::size_t i : samples) {
            G += g_[i];
            H += h_[i];
        }
        const std::size_t id = nodes_.size();
        nodes_.push_back(Node{});

        SplitChoice best;
        if (depth < params_.max_depth && samples.size() >= 2 * params_.min_samples_leaf) {
            best = find_split(samples, G, H);
        }
        if (!best.found) {
            nodes_[id].leaf = true;
            nodes_[id].weight = leaf_weight(G, H, params_.lambda);
            return id;
        }

        std::vector<std::size_t> left, right;
        for (std::size_t i : samples) (x_(i, best.feature) < best.threshold ? left : right).push_back(i);
        nodes_[id].leaf = false;
        nodes_[id].feature = best.feature;
        nodes_[id].threshold = best.threshold;
        nodes_[id].gain = best.gain;
        const std::size_t l = grow(left, depth + 1);
        const std::size_t r = grow(right, depth + 1);
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    // Scans every feature in index order and every distinct-value boundary in
    // ascending order; only a strictly larger gain replaces the incumbent, so
    // ties resolve to the lowest feature, then the lowest threshold.
    SplitChoice find_split(const std::vector<std::size_t>& samples, double G, double H) {
        for (std::size_t i : samples) member_[i] = 1;
        SplitChoice best;
        const std::size_t n = samples.size();
        const std::size_t msl = params_.min_samples_leaf;
        std::vector<std::size_t> ordered;
        ordered.reserve(n);
        for (std::size_t f = 0; f < x_.cols(); ++f) {
            ordered.clear();
            for (std::size_t i : sorted_.order[f])
                if (member_[i]) ordered.push_back(i);
            double GL = 0.0, HL = 0.0;
            for (std::size_t pos = 0; pos + 1 < n; ++pos) {
                GL += g_[ordered[pos]];
                HL += h_[ordered[pos]];
                const double lo = x_(ordered[pos], f);
                const double hi = x_(ordered[pos + 1], f);
                if (!(lo < hi)) continue;
                const std::size_t n_left = pos + 1;
                if (n_left < msl || n - n_left < msl) continue;
                const double gain = split_gain(GL, HL, G - GL, H - HL, params_.lambda, params_.gamma);
                if (gain > 0.0 && (!best.found || gain > best.gain)) {
                    best = {true, f, midpoint(lo, hi), gain};
                }
            }
        }
        for (std::size_t i : samples) member_[i] = 0;
        return best;
    }

    const Matrix& x_;
    std::span<const double> g_;
    std::span<const double> h_;
    const TreeParams& params_;
    const SortedColumns& sorted_;
    std::vector<char> member_;
    std::vector<Node> nodes_;
};

inline void check_finite(const Matrix& x, const char* op) {
    if (!x.all_finite()) throw DomainError(std::string(op) + ": features contain NaN or infinity");
}

}  // namespace detail

/// Exact greedy tree on (g, h) statistics.
inline RegTree build_tree(const Matrix& x, std::span<const double> g, std::span<const double> h,
                          const TreeParams& params, const SortedColumns* sorted = nullptr) {
    params.validate();
    if (x.rows() == 0) throw SizingError("build_tree: no samples");
    if (g.size() != x.rows() || h.size() != x.rows()) throw ShapeError("build_tree: gradient length mismatch");
    detail::check_finite(x, "build_tree");
    if (sorted) return RegTree(detail::TreeBuilder(x, g, h, params, *sorted).build());
    const SortedColumns local(x);
    return RegTree(detail::TreeBuilder(x, g, h, params, local).build());
}

/// Additive tree ensemble: base_score + η Σ tree(x).
struct Booster {
    double base_score = 0.0;
    std::size_t feature_count = 0;
    TreeParams params;
    std::vector<RegTree> trees;

    double predict(std::span<const double> x) const {
        if (x.size() != feature_count) {
            throw ShapeError("Booster::predict: got " + std::to_string(x.size()) + " features, expected " +
                             std::to_string(feature_count));
        }
        double sum = 0.0;
        for (const auto& t : trees) sum += t.predict(x);
        return base_score + params.learning_rate * sum;
    }

    Vector predict(const Matrix& x) const {
        Vector out(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict(x.row(i));
        return out;
    }

    friend bool operator==(const Booster&, const Booster&) = default;
};

/// Mean that is exact for constant input.
inline double stable_mean(std::span<const double> v) {
    double acc = 0.0;
    for (double y : v) acc += y - v.front();
    return v.front() + acc / static_cast<double>(v.size());
}

/// Called after every boosting round with (1-based round, training RMSE).
using RoundObserver = std::function<void(std::size_t, double)>;

inline Booster train_booster(const Matrix& x, std::span<const double> targets, const TreeParams& params,
                             std::size_t rounds, const RoundObserver& observer = {}) {
    params.validate();
    if (x.rows() == 0) throw SizingError("train_booster: no samples");
    if (targets.size() != x.rows()) throw ShapeError("train_booster: target length mismatch");
    detail::check_finite(x, "train_booster");
    if (!std::all_of(targets.begin(), targets.end(), [](double v) { return std::isfinite(v); })) {
        throw DomainError("train_booster: targets contain NaN or infinity");
    }

    Booster b;
    b.feature_count = x.cols();
    b.params = params;
    b.base_score = stable_mean(targets);
    Vector pred(x.rows(), b.base_score);
    const SortedColumns sorted(x);
    for (std::size_t m = 1; m <= rounds; ++m) {
        const GradHess gh = grad_hess(pred, targets);
        RegTree tree = build_tree(x, gh.grad, gh.hess, params, &sorted);
        double sq = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            pred[i] += params.learning_rate * tree.predict(x.row(i));
            sq += (pred[i] - targets[i]) * (pred[i] - targets[i]);
        }
        b.trees.push_back(std::move(tree));
        if (observer) observer(m, std::sqrt(sq / static_cast<double>(x.rows())));
    }
    return b;
}

}  // namespace hybridcast::gbt
