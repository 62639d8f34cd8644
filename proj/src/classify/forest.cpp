#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "skycast/classify.hpp"
#include "skycast/error.hpp"
#include "skycast/log.hpp"
#include "skycast/parallel.hpp"
#include "skycast/rng.hpp"

namespace skycast::classify {

namespace {

using Counts = std::array<std::uint32_t, kClasses>;

double gini(const Counts& c, double n) {
    if (n <= 0.0) return 0.0;
    double sum_sq = 0.0;
    for (auto v : c) sum_sq += (v / n) * (v / n);
    return 1.0 - sum_sq;
}

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = -std::numeric_limits<double>::infinity();
};

class TreeBuilder {
  public:
    TreeBuilder(const std::vector<FeatureVector>& x, const std::vector<Grade>& y, const RandomForestConfig& cfg,
                std::uint64_t seed)
        : x_(x), y_(y), cfg_(cfg), d_(x.front().values.size()), rng_(seed) {}

    DecisionTree build() {
        std::vector<std::size_t> idx(x_.size());
        if (cfg_.bootstrap) {
            for (auto& i : idx) i = static_cast<std::size_t>(rng_.below(x_.size()));
        } else {
            std::iota(idx.begin(), idx.end(), std::size_t{0});
        }
        grow(idx, 0);
        return std::move(tree_);
    }

  private:
    double value(std::size_t sample, int feature) const { return x_[sample].values[static_cast<std::size_t>(feature)]; }

    int grow(const std::vector<std::size_t>& idx, int depth) {
        TreeNode node;
        for (auto i : idx) ++node.counts[aqi::index_of(y_[i])];
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.push_back(node);

        const auto n = idx.size();
        const bool pure = std::count_if(node.counts.begin(), node.counts.end(), [](auto c) { return c > 0; }) <= 1;
        const bool depth_reached = cfg_.max_depth > 0 && depth >= cfg_.max_depth;
        if (pure || depth_reached || n < 2 * static_cast<std::size_t>(cfg_.min_samples_leaf)) return id;

        const Split best = choose_split(idx, node.counts);
        if (best.feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (auto i : idx) (value(i, best.feature) <= best.threshold ? left : right).push_back(i);
        const int l = grow(left, depth + 1);
        const int r = grow(right, depth + 1);
        auto& stored = tree_.nodes[static_cast<std::size_t>(id)];
        stored.feature = best.feature;
        stored.threshold = best.threshold;
        stored.left = l;
        stored.right = r;
        return id;
    }

    // Evaluates the first `candidates` features of a fresh random permutation;
    // when none of them admits a split, keeps drawing from the rest.
    Split choose_split(const std::vector<std::size_t>& idx, const Counts& parent) {
        std::vector<int> order(d_);
        std::iota(order.begin(), order.end(), 0);
        const auto candidates = static_cast<std::size_t>(cfg_.candidates_for(d_));
        Split best;
        for (std::size_t k = 0; k < d_; ++k) {
            const auto j = k + static_cast<std::size_t>(rng_.below(d_ - k));
            std::swap(order[k], order[j]);
            evaluate_feature(idx, parent, order[k], best);
            if (k + 1 >= candidates && best.feature >= 0) break;
        }
        return best;
    }

    void evaluate_feature(const std::vector<std::size_t>& idx, const Counts& parent, int feature, Split& best) const {
        std::vector<std::pair<double, std::size_t>> sorted;
        sorted.reserve(idx.size());
        for (auto i : idx) sorted.emplace_back(value(i, feature), aqi::index_of(y_[i]));
        std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

        const double n = static_cast<double>(sorted.size());
        const double parent_gini = gini(parent, n);
        const auto min_leaf = static_cast<std::size_t>(cfg_.min_samples_leaf);
        Counts left{};
        Counts right = parent;
        for (std::size_t p = 0; p + 1 < sorted.size(); ++p) {
            ++left[sorted[p].second];
            --right[sorted[p].second];
            const double a = sorted[p].first;
            const double b = sorted[p + 1].first;
            if (!(a < b)) continue;
            const std::size_t nl = p + 1;
            const std::size_t nr = sorted.size() - nl;
            if (nl < min_leaf || nr < min_leaf) continue;
            const double weighted = (nl * gini(left, static_cast<double>(nl)) + nr * gini(right, static_cast<double>(nr))) / n;
            const double gain = parent_gini - weighted;
            if (gain > best.gain) {
                double mid = a + (b - a) / 2.0;
                if (!(mid < b)) mid = a;
                best = {feature, mid, gain};
            }
        }
    }

    const std::vector<FeatureVector>& x_;
    const std::vector<Grade>& y_;
    const RandomForestConfig& cfg_;
    std::size_t d_;
    Rng rng_;
    DecisionTree tree_;
};

void check_training_set(const std::vector<FeatureVector>& x, const std::vector<Grade>& y) {
    if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "feature and label counts differ");
    if (x.empty()) throw Error(ErrorCode::EmptyInput, "no training samples");
    const auto d = x.front().values.size();
    if (d == 0) throw Error(ErrorCode::EmptyInput, "feature vectors are empty");
    for (const auto& fv : x) {
        if (fv.values.size() != d || fv.schema_id != x.front().schema_id) {
            throw Error(ErrorCode::SchemaMismatch, "training vectors do not share a schema");
        }
    }
}

} // namespace

std::size_t severity_argmax(const ClassVector& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] >= v[best]) best = i;
    }
    return best;
}

void RandomForestConfig::validate() const {
    if (n_trees < 1) throw Error(ErrorCode::InvalidArgument, "n_trees must be >= 1");
    if (max_depth < 0) throw Error(ErrorCode::InvalidArgument, "max_depth must be >= 0");
    if (min_samples_leaf < 1) throw Error(ErrorCode::InvalidArgument, "min_samples_leaf must be >= 1");
    if (features_per_split < 0) throw Error(ErrorCode::InvalidArgument, "features_per_split must be >= 0");
}

int RandomForestConfig::candidates_for(std::size_t d) const {
    if (features_per_split > 0) return std::min(features_per_split, static_cast<int>(d));
    return std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d)) - 1e-12)));
}

std::uint32_t TreeNode::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint32_t{0}); }

const TreeNode& DecisionTree::leaf_for(std::span<const double> x) const {
    std::size_t at = 0;
    while (!nodes[at].is_leaf()) {
        const auto& n = nodes[at];
        at = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[at];
}

Grade DecisionTree::predict(std::span<const double> x) const {
    const auto& leaf = leaf_for(x);
    ClassVector c{};
    for (std::size_t k = 0; k < kClasses; ++k) c[k] = leaf.counts[k];
    return aqi::grade_from_index(severity_argmax(c));
}

void DecisionTree::validate(std::size_t n_features) const {
    if (nodes.empty()) throw Error(ErrorCode::ParseError, "tree has no nodes");
    const int n = static_cast<int>(nodes.size());
    for (int i = 0; i < n; ++i) {
        const auto& node = nodes[static_cast<std::size_t>(i)];
        if (node.is_leaf()) continue;
        if (static_cast<std::size_t>(node.feature) >= n_features) throw Error(ErrorCode::ParseError, "feature index out of range");
        // Children are stored after their parent, so this also rules out cycles.
        if (node.left <= i || node.left >= n || node.right <= i || node.right >= n) {
            throw Error(ErrorCode::ParseError, "tree node has invalid children");
        }
    }
}

Prediction RandomForest::predict(std::span<const double> x) const {
    if (x.size() != n_features) {
        throw Error(ErrorCode::SchemaMismatch, "expected " + std::to_string(n_features) + " features, got " +
                                                   std::to_string(x.size()));
    }
    ClassVector votes{};
    for (const auto& t : trees) votes[aqi::index_of(t.predict(x))] += 1.0;
    Prediction p;
    p.grade = aqi::grade_from_index(severity_argmax(votes));
    for (std::size_t k = 0; k < kClasses; ++k) p.probabilities[k] = votes[k] / static_cast<double>(trees.size());
    return p;
}

Prediction RandomForest::predict(const FeatureVector& x) const {
    if (x.schema_id != schema_id) throw Error(ErrorCode::SchemaMismatch, "schema '" + x.schema_id + "' != '" + schema_id + "'");
    return predict(std::span<const double>(x.values));
}

RandomForest train_random_forest(const std::vector<FeatureVector>& x, const std::vector<Grade>& y,
                                 const RandomForestConfig& cfg) {
    cfg.validate();
    check_training_set(x, y);
    RandomForest forest;
    forest.config = cfg;
    forest.schema_id = x.front().schema_id;
    forest.n_features = x.front().values.size();

    const bool single_class = std::all_of(y.begin(), y.end(), [&](Grade g) { return g == y.front(); });
    if (single_class) {
        log_warning("training data has a single class; the forest is a constant classifier");
        forest.degenerate = true;
        TreeNode leaf;
        leaf.counts[aqi::index_of(y.front())] = static_cast<std::uint32_t>(y.size());
        forest.trees.push_back(DecisionTree{{leaf}});
        return forest;
    }

    forest.trees.resize(static_cast<std::size_t>(cfg.n_trees));
    parallel_for(forest.trees.size(), [&](std::size_t t) {
        forest.trees[t] = TreeBuilder(x, y, cfg, derive_seed(cfg.seed, t)).build();
    });
    return forest;
}

} // namespace skycast::classify
