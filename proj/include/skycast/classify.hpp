#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skycast/aqi.hpp"
#include "skycast/features.hpp"

namespace skycast::classify {

using aqi::Grade;
using features::FeatureVector;

inline constexpr std::size_t kClasses = aqi::kGradeCount;
using ClassVector = std::array<double, kClasses>;

/// Index of the largest entry; ties go to the higher index (more severe grade).
std::size_t severity_argmax(const ClassVector& v);

struct Prediction {
    Grade grade = Grade::Good;
    ClassVector probabilities{};  ///< sums to 1
};

// --- random forest -----------------------------------------------------------

struct RandomForestConfig {
    int n_trees = 100;
    int max_depth = 0;           ///< 0 = unlimited
    int min_samples_leaf = 1;
    int features_per_split = 0;  ///< 0 = ceil(sqrt(d))
    bool bootstrap = true;
    std::uint64_t seed = 0;

    void validate() const;
    int candidates_for(std::size_t d) const;
};

/// Internal nodes have feature >= 0 and route x[feature] <= threshold left.
/// Every node keeps the class counts of the samples that reached it.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::array<std::uint32_t, kClasses> counts{};

    bool is_leaf() const { return feature < 0; }
    std::uint32_t total() const;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  ///< nodes[0] is the root

    const TreeNode& leaf_for(std::span<const double> x) const;
    /// Leaf majority, severity tie rule.
    Grade predict(std::span<const double> x) const;
    /// Throws ParseError on dangling children or out-of-range features.
    void validate(std::size_t n_features) const;
};

struct RandomForest {
    RandomForestConfig config;
    std::string schema_id;
    std::size_t n_features = 0;
    std::vector<DecisionTree> trees;
    /// Trained on a single class; every tree is a constant leaf.
    bool degenerate = false;
    /// Bank that produced the training features, when known.
    std::optional<features::GaborBank> bank;

    /// Hard vote; probabilities are vote fractions. Throws SchemaMismatch on a
    /// length mismatch.
    Prediction predict(std::span<const double> x) const;
    /// Also checks the schema id.
    Prediction predict(const FeatureVector& x) const;
};

/// CART on Gini impurity over ceil(sqrt(d)) random candidates per node, with
/// thresholds at midpoints of consecutive distinct values. Splits with zero
/// gain are taken when the node is impure. Trees are grown in parallel from
/// derive_seed(seed, tree index). Throws LengthMismatch, EmptyInput,
/// SchemaMismatch.
RandomForest train_random_forest(const std::vector<FeatureVector>& x, const std::vector<Grade>& y,
                                 const RandomForestConfig& cfg);

// --- feature selection and knn -------------------------------------------------

/// Indices of the ceil(keep_fraction * d) highest-variance coordinates (ties by
/// lower index), returned in ascending order.
std::vector<std::size_t> select_high_variance_features(const std::vector<FeatureVector>& x, double keep_fraction);

struct KnnConfig {
    int k = 3;
    std::optional<std::vector<std::size_t>> selected_features;

    void validate(std::size_t n_features) const;
};

struct KnnModel {
    KnnConfig config;
    std::string schema_id;
    std::size_t n_features = 0;
    std::vector<std::size_t> columns;        ///< features used, ascending
    std::vector<double> mean;                ///< per used column, training set
    std::vector<double> scale;               ///< population std, 1 where zero
    std::vector<std::vector<double>> rows;   ///< standardized training rows
    std::vector<Grade> labels;
    std::optional<features::GaborBank> bank;

    /// Majority of the k nearest by Euclidean distance; equal distances keep the
    /// lower training index; vote ties go to the more severe grade.
    Prediction predict(std::span<const double> x) const;
    Prediction predict(const FeatureVector& x) const;
};

KnnModel train_knn(const std::vector<FeatureVector>& x, const std::vector<Grade>& y, const KnnConfig& cfg);

Grade knn_predict(const std::vector<FeatureVector>& x_train, const std::vector<Grade>& y_train, const KnnConfig& cfg,
                  const FeatureVector& x);

// --- evaluation --------------------------------------------------------------

struct EvalReport {
    std::size_t total = 0;
    double accuracy = 0.0;
    double macro_f1 = 0.0;          ///< mean over all 5 classes
    double macro_f1_present = 0.0;  ///< mean over classes in truth or predictions
    std::array<std::array<std::size_t, kClasses>, kClasses> confusion{};  ///< [true][pred]
    ClassVector precision{};
    ClassVector recall{};
    ClassVector per_class_f1{};
    std::array<std::size_t, kClasses> support{};

    std::string to_json() const;
};

EvalReport evaluate(const std::vector<Grade>& y_true, const std::vector<Grade>& y_pred);

// --- persistence ---------------------------------------------------------------

inline constexpr std::string_view kRfMagic = "SKYCAST-RF v1";
inline constexpr std::string_view kKnnMagic = "SKYCAST-KNN v1";

/// Magic line followed by one JSON document.
std::string serialize(const RandomForest& model);
std::string serialize(const KnnModel& model);
RandomForest deserialize_forest(std::string_view text);
KnnModel deserialize_knn(std::string_view text);

void save_model(const RandomForest& model, const std::filesystem::path& path);
void save_model(const KnnModel& model, const std::filesystem::path& path);

} // namespace skycast::classify
