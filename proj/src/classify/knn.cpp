#include <algorithm>
#include <cmath>
#include <numeric>

#include "skycast/classify.hpp"
#include "skycast/error.hpp"

namespace skycast::classify {

namespace {

std::vector<double> column_variances(const std::vector<FeatureVector>& x) {
    const auto d = x.front().values.size();
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (const auto& fv : x) {
        for (std::size_t j = 0; j < d; ++j) mean[j] += fv.values[j];
    }
    for (double& m : mean) m /= static_cast<double>(x.size());
    for (const auto& fv : x) {
        for (std::size_t j = 0; j < d; ++j) var[j] += (fv.values[j] - mean[j]) * (fv.values[j] - mean[j]);
    }
    for (double& v : var) v /= static_cast<double>(x.size());
    return var;
}

} // namespace

std::vector<std::size_t> select_high_variance_features(const std::vector<FeatureVector>& x, double keep_fraction) {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw Error(ErrorCode::InvalidArgument, "keep_fraction must be in (0, 1]");
    if (x.empty()) throw Error(ErrorCode::EmptyInput, "no feature vectors");
    const auto d = x.front().values.size();
    for (const auto& fv : x) {
        if (fv.values.size() != d) throw Error(ErrorCode::SchemaMismatch, "feature vectors differ in length");
    }
    const auto var = column_variances(x);
    const auto keep = std::min<std::size_t>(
        d, std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(d) - 1e-9))));
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return var[a] > var[b]; });
    order.resize(keep);
    std::sort(order.begin(), order.end());
    return order;
}

void KnnConfig::validate(std::size_t n_features) const {
    if (k < 1 || k % 2 == 0) throw Error(ErrorCode::InvalidArgument, "k must be odd and >= 1");
    if (selected_features) {
        if (selected_features->empty()) throw Error(ErrorCode::InvalidArgument, "selected feature list is empty");
        for (auto i : *selected_features) {
            if (i >= n_features) throw Error(ErrorCode::InvalidArgument, "selected feature index out of range");
        }
    }
}

KnnModel train_knn(const std::vector<FeatureVector>& x, const std::vector<Grade>& y, const KnnConfig& cfg) {
    if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "feature and label counts differ");
    if (x.empty()) throw Error(ErrorCode::EmptyInput, "no training samples");
    const auto d = x.front().values.size();
    for (const auto& fv : x) {
        if (fv.values.size() != d || fv.schema_id != x.front().schema_id) {
            throw Error(ErrorCode::SchemaMismatch, "training vectors do not share a schema");
        }
    }
    cfg.validate(d);
    if (x.size() < static_cast<std::size_t>(cfg.k)) throw Error(ErrorCode::InvalidArgument, "fewer training samples than k");

    KnnModel m;
    m.config = cfg;
    m.schema_id = x.front().schema_id;
    m.n_features = d;
    if (cfg.selected_features) {
        m.columns = *cfg.selected_features;
        std::sort(m.columns.begin(), m.columns.end());
        m.columns.erase(std::unique(m.columns.begin(), m.columns.end()), m.columns.end());
    } else {
        m.columns.resize(d);
        std::iota(m.columns.begin(), m.columns.end(), std::size_t{0});
    }
    const auto c = m.columns.size();
    m.mean.assign(c, 0.0);
    m.scale.assign(c, 0.0);
    for (const auto& fv : x) {
        for (std::size_t j = 0; j < c; ++j) m.mean[j] += fv.values[m.columns[j]];
    }
    for (double& v : m.mean) v /= static_cast<double>(x.size());
    for (const auto& fv : x) {
        for (std::size_t j = 0; j < c; ++j) {
            const double dv = fv.values[m.columns[j]] - m.mean[j];
            m.scale[j] += dv * dv;
        }
    }
    for (double& s : m.scale) {
        s = std::sqrt(s / static_cast<double>(x.size()));
        if (!(s > 0.0)) s = 1.0;
    }
    m.rows.reserve(x.size());
    for (const auto& fv : x) {
        std::vector<double> row(c);
        for (std::size_t j = 0; j < c; ++j) row[j] = (fv.values[m.columns[j]] - m.mean[j]) / m.scale[j];
        m.rows.push_back(std::move(row));
    }
    m.labels = y;
    return m;
}

Prediction KnnModel::predict(std::span<const double> x) const {
    if (x.size() != n_features) {
        throw Error(ErrorCode::SchemaMismatch, "expected " + std::to_string(n_features) + " features, got " +
                                                   std::to_string(x.size()));
    }
    const auto c = columns.size();
    std::vector<double> q(c);
    for (std::size_t j = 0; j < c; ++j) q[j] = (x[columns[j]] - mean[j]) / scale[j];

    std::vector<std::pair<double, std::size_t>> dist(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += (rows[i][j] - q[j]) * (rows[i][j] - q[j]);
        dist[i] = {s, i};
    }
    const auto k = std::min(static_cast<std::size_t>(config.k), dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());

    ClassVector votes{};
    for (std::size_t i = 0; i < k; ++i) votes[aqi::index_of(labels[dist[i].second])] += 1.0;
    Prediction p;
    p.grade = aqi::grade_from_index(severity_argmax(votes));
    for (std::size_t g = 0; g < kClasses; ++g) p.probabilities[g] = votes[g] / static_cast<double>(k);
    return p;
}

Prediction KnnModel::predict(const FeatureVector& x) const {
    if (x.schema_id != schema_id) throw Error(ErrorCode::SchemaMismatch, "schema '" + x.schema_id + "' != '" + schema_id + "'");
    return predict(std::span<const double>(x.values));
}

Grade knn_predict(const std::vector<FeatureVector>& x_train, const std::vector<Grade>& y_train, const KnnConfig& cfg,
                  const FeatureVector& x) {
    return train_knn(x_train, y_train, cfg).predict(x).grade;
}

} // namespace skycast::classify
