#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "skycast/classify.hpp"
#include "skycast/cnn.hpp"
#include "skycast/dataset.hpp"
#include "skycast/features.hpp"
#include "skycast/imaging.hpp"

namespace skycast::app {

using aqi::Grade;
using classify::Prediction;
using imaging::RasterImage;
using imaging::SkyMask;

/// Image at working size with its sky mask.
struct PreparedImage {
    RasterImage image;
    SkyMask mask;
};

/// Resizes to kWorkingSize square and replicates grayscale input to RGB. A
/// supplied mask is resized nearest-neighbour and must be nonempty; otherwise
/// the heuristic mask is computed. Throws NoSkyDetected.
PreparedImage prepare_image(const RasterImage& img, const std::optional<SkyMask>& mask = std::nullopt);

features::FeatureVector image_features(const PreparedImage& prepared, const features::GaborBank& bank);

/// Loads, augments and prepares each entry, then extracts features. Runs in
/// parallel; output order follows the entries.
std::vector<features::FeatureVector> features_for_entries(const std::vector<dataset::ManifestEntry>& entries,
                                                          const features::GaborBank& bank);

std::vector<Grade> labels_of(const std::vector<dataset::ManifestEntry>& entries);

enum class ModelKind { RandomForest, Knn, Cnn };
std::string_view model_kind_name(ModelKind k);

/// A trained classifier of any supported kind.
class AnyModel {
  public:
    using Variant = std::variant<classify::RandomForest, classify::KnnModel, cnn::CnnModel>;

    AnyModel(Variant model, std::string model_id);

    ModelKind kind() const;
    const std::string& model_id() const { return id_; }
    const Variant& get() const { return model_; }

    /// Bank used for the model's features (the standard bank for CNN models,
    /// whose features are only reported, not classified).
    const features::GaborBank& bank() const { return bank_; }

    Prediction predict(const PreparedImage& prepared) const;
    /// Feature-based models only; CNN models throw InvalidArgument.
    Prediction predict_features(const features::FeatureVector& fv) const;

    std::string serialize() const;

  private:
    Variant model_;
    std::string id_;
    features::GaborBank bank_;
};

/// "<kind>-<crc32 of the serialized model>".
std::string make_model_id(ModelKind kind, std::string_view serialized);

AnyModel wrap_model(AnyModel::Variant model);

/// Detects the format from the magic line.
AnyModel load_model(const std::filesystem::path& path);
AnyModel parse_model(std::string_view bytes);
void save_model(const AnyModel& model, const std::filesystem::path& path);

/// Full path used by the CLI and the service: prepare, then predict.
Prediction predict_image(const AnyModel& model, const RasterImage& img,
                         const std::optional<SkyMask>& mask = std::nullopt);

/// Prepared images (working size, unmasked pixels) resized to the model's input.
std::vector<cnn::Tensor> tensors_for_entries(const std::vector<dataset::ManifestEntry>& entries,
                                             const cnn::CnnModel& model);

struct TrainOptions {
    ModelKind kind = ModelKind::RandomForest;
    classify::RandomForestConfig forest;
    int knn_k = 3;
    double knn_keep_fraction = 0.5;  ///< 1 keeps every feature
    std::string cnn_arch = "C(6)(5)-S(2)-C(6)(5)-S(2)-C(10)(5)";
    int cnn_input_size = 64;
    cnn::TrainConfig cnn;
    features::GaborBank bank = features::GaborBank::standard();
};

struct TrainedModel {
    AnyModel model;
    std::vector<double> loss_history;  ///< CNN only
};

/// Trains on the entries' labels. One seed drives every random choice: the
/// forest and CNN configs carry their own, set by the caller.
TrainedModel train_model(const std::vector<dataset::ManifestEntry>& entries, const TrainOptions& opts);

/// Predicts every entry and scores against its label.
classify::EvalReport evaluate_model(const AnyModel& model, const std::vector<dataset::ManifestEntry>& entries);

} // namespace skycast::app
