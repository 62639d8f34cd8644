#include <fstream>
#include <sstream>

#include <zlib.h>

#include "skycast/error.hpp"
#include "skycast/parallel.hpp"
#include "skycast/pipeline.hpp"

namespace skycast::app {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

features::GaborBank bank_of(const AnyModel::Variant& v) {
    return std::visit(Overloaded{[](const classify::RandomForest& m) { return m.bank ? *m.bank : features::GaborBank::standard(); },
                                 [](const classify::KnnModel& m) { return m.bank ? *m.bank : features::GaborBank::standard(); },
                                 [](const cnn::CnnModel&) { return features::GaborBank::standard(); }},
                      v);
}

std::string serialize_variant(const AnyModel::Variant& v) {
    return std::visit([](const auto& m) { return serialize(m); }, v);
}

} // namespace

PreparedImage prepare_image(const RasterImage& img, const std::optional<SkyMask>& mask) {
    img.validate();
    PreparedImage out;
    out.image = imaging::resize_bilinear(img, imaging::kWorkingSize, imaging::kWorkingSize);
    if (out.image.channels == 1) {
        RasterImage rgb(out.image.width, out.image.height, 3);
        for (std::size_t i = 0; i < out.image.pixel_count(); ++i) {
            for (int c = 0; c < 3; ++c) rgb.pixels[i * 3 + c] = out.image.pixels[i];
        }
        out.image = std::move(rgb);
    }
    if (mask) {
        if (mask->width != img.width || mask->height != img.height) {
            throw Error(ErrorCode::DimensionMismatch, "mask and image sizes differ");
        }
        out.mask = imaging::resize_mask(*mask, imaging::kWorkingSize, imaging::kWorkingSize);
        if (out.mask.count() == 0) throw Error(ErrorCode::NoSkyDetected, "mask marks no sky pixels");
    } else {
        out.mask = imaging::heuristic_sky_mask(out.image);
    }
    return out;
}

features::FeatureVector image_features(const PreparedImage& prepared, const features::GaborBank& bank) {
    return features::extract_features(prepared.image, prepared.mask, bank);
}

std::vector<features::FeatureVector> features_for_entries(const std::vector<dataset::ManifestEntry>& entries,
                                                          const features::GaborBank& bank) {
    std::vector<features::FeatureVector> out(entries.size());
    parallel_for(entries.size(), [&](std::size_t i) {
        try {
            const auto sample = dataset::load_sample(entries[i]);
            out[i] = image_features(prepare_image(sample.image, sample.mask), bank);
        } catch (const Error& e) {
            throw Error(e.code(), entries[i].image_path + ": " + e.detail(), e.position());
        }
    });
    return out;
}

std::vector<Grade> labels_of(const std::vector<dataset::ManifestEntry>& entries) {
    std::vector<Grade> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.label());
    return out;
}

std::string_view model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::RandomForest: return "rf";
        case ModelKind::Knn: return "knn";
        case ModelKind::Cnn: return "cnn";
    }
    return "";
}

AnyModel::AnyModel(Variant model, std::string model_id)
    : model_(std::move(model)), id_(std::move(model_id)), bank_(bank_of(model_)) {}

ModelKind AnyModel::kind() const { return static_cast<ModelKind>(model_.index()); }

Prediction AnyModel::predict_features(const features::FeatureVector& fv) const {
    return std::visit(Overloaded{[&](const classify::RandomForest& m) { return m.predict(fv); },
                                 [&](const classify::KnnModel& m) { return m.predict(fv); },
                                 [](const cnn::CnnModel&) -> Prediction {
                                     throw Error(ErrorCode::InvalidArgument, "CNN models classify images, not features");
                                 }},
                      model_);
}

Prediction AnyModel::predict(const PreparedImage& prepared) const {
    if (const auto* m = std::get_if<cnn::CnnModel>(&model_)) return m->predict(prepared.image);
    return predict_features(image_features(prepared, bank_));
}

std::string AnyModel::serialize() const {
    return serialize_variant(model_);
}

std::string make_model_id(ModelKind kind, std::string_view serialized) {
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(serialized.data()), static_cast<uInt>(serialized.size()));
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string hex(8, '0');
    auto v = static_cast<std::uint32_t>(crc);
    for (int i = 7; i >= 0; --i, v >>= 4) hex[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
    return std::string(model_kind_name(kind)) + "-" + hex;
}

AnyModel wrap_model(AnyModel::Variant model) {
    const auto kind = static_cast<ModelKind>(model.index());
    const auto text = serialize_variant(model);
    return AnyModel(std::move(model), make_model_id(kind, text));
}

AnyModel parse_model(std::string_view bytes) {
    const auto first = bytes.substr(0, bytes.find('\n'));
    AnyModel::Variant v;
    if (first == classify::kRfMagic) {
        v = classify::deserialize_forest(bytes);
    } else if (first == classify::kKnnMagic) {
        v = classify::deserialize_knn(bytes);
    } else if (first == cnn::kCnnMagic) {
        v = cnn::deserialize_cnn(bytes);
    } else {
        throw Error(ErrorCode::ParseError, "unrecognized model header", 1);
    }
    const auto kind = static_cast<ModelKind>(v.index());
    return AnyModel(std::move(v), make_model_id(kind, bytes));
}

AnyModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open model " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_model(ss.str());
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.detail(), e.position());
    }
}

void save_model(const AnyModel& model, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << model.serialize();
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Prediction predict_image(const AnyModel& model, const RasterImage& img, const std::optional<SkyMask>& mask) {
    return model.predict(prepare_image(img, mask));
}

std::vector<cnn::Tensor> tensors_for_entries(const std::vector<dataset::ManifestEntry>& entries,
                                             const cnn::CnnModel& model) {
    std::vector<cnn::Tensor> out(entries.size());
    parallel_for(entries.size(), [&](std::size_t i) {
        try {
            const auto sample = dataset::load_sample(entries[i]);
            out[i] = model.prepare(prepare_image(sample.image, sample.mask).image);
        } catch (const Error& e) {
            throw Error(e.code(), entries[i].image_path + ": " + e.detail(), e.position());
        }
    });
    return out;
}

TrainedModel train_model(const std::vector<dataset::ManifestEntry>& entries, const TrainOptions& opts) {
    if (entries.empty()) throw Error(ErrorCode::EmptyInput, "no training entries");
    const auto labels = labels_of(entries);
    switch (opts.kind) {
        case ModelKind::RandomForest: {
            auto rf = classify::train_random_forest(features_for_entries(entries, opts.bank), labels, opts.forest);
            rf.bank = opts.bank;
            return {wrap_model(std::move(rf)), {}};
        }
        case ModelKind::Knn: {
            const auto x = features_for_entries(entries, opts.bank);
            classify::KnnConfig cfg;
            cfg.k = opts.knn_k;
            if (opts.knn_keep_fraction < 1.0) cfg.selected_features = classify::select_high_variance_features(x, opts.knn_keep_fraction);
            auto knn = classify::train_knn(x, labels, cfg);
            knn.bank = opts.bank;
            return {wrap_model(std::move(knn)), {}};
        }
        case ModelKind::Cnn: {
            const int s = opts.cnn_input_size;
            auto net = cnn::CnnModel::create(opts.cnn_arch, {s, s, 3}, opts.cnn.seed);
            auto result = cnn::train(net, tensors_for_entries(entries, net), labels, opts.cnn);
            return {wrap_model(std::move(net)), std::move(result.loss_history)};
        }
    }
    throw Error(ErrorCode::InvalidArgument, "unknown model kind");
}

classify::EvalReport evaluate_model(const AnyModel& model, const std::vector<dataset::ManifestEntry>& entries) {
    std::vector<Grade> predicted(entries.size());
    parallel_for(entries.size(), [&](std::size_t i) {
        try {
            const auto sample = dataset::load_sample(entries[i]);
            predicted[i] = model.predict(prepare_image(sample.image, sample.mask)).grade;
        } catch (const Error& e) {
            throw Error(e.code(), entries[i].image_path + ": " + e.detail(), e.position());
        }
    });
    return classify::evaluate(labels_of(entries), predicted);
}

} // namespace skycast::app
