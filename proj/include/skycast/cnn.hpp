#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skycast/classify.hpp"
#include "skycast/imaging.hpp"

namespace skycast::cnn {

using aqi::Grade;
using classify::ClassVector;
using classify::Prediction;
using imaging::RasterImage;

struct LayerSpec {
    enum class Kind { Conv, Pool, Dense, Softmax };
    Kind kind = Kind::Conv;
    int maps = 0;    ///< Conv
    int filter = 0;  ///< Conv, odd
    int scale = 0;   ///< Pool
    int units = 0;   ///< Dense and Softmax

    static LayerSpec conv(int maps, int filter) { return {Kind::Conv, maps, filter, 0, 0}; }
    static LayerSpec pool(int scale) { return {Kind::Pool, 0, 0, scale, 0}; }
    static LayerSpec dense(int units) { return {Kind::Dense, 0, 0, 0, units}; }
    static LayerSpec softmax(int classes) { return {Kind::Softmax, 0, 0, 0, classes}; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Dash-separated C(n)(f) and S(s) tokens, followed by an implicit Dense(5)
/// and Softmax(5). Throws EmptyArchitecture, or SyntaxError whose position is
/// the 1-based index of the offending token.
std::vector<LayerSpec> parse_arch(std::string_view text);

/// Canonical text of the explicit (Conv/Pool) layers.
std::string format_arch(const std::vector<LayerSpec>& layers);

struct Shape {
    int width = 0;
    int height = 0;
    int channels = 0;

    std::size_t size() const { return static_cast<std::size_t>(width) * height * channels; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Output shape after each layer: Conv w -> w - f + 1 with `maps` channels,
/// Pool w -> floor(w / s), Dense and Softmax -> 1x1xunits. Throws
/// ShapeMismatch when a dimension drops below 1.
std::vector<Shape> shape_chain(const std::vector<LayerSpec>& layers, Shape input);

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    int epochs = 10;
    int batch_size = 16;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Input tensor in channel-major (CHW) order.
using Tensor = std::vector<double>;

/// Network with all parameters in one flat vector, laid out in layer order:
/// Conv weights [maps][in_c][f][f] then biases [maps]; Dense weights
/// [units][in] then biases [units]. Convolutions are valid, stride 1,
/// cross-correlation, followed by ReLU; pooling averages s x s blocks and drops
/// trailing rows and columns.
class CnnModel {
  public:
    CnnModel() = default;

    /// He-uniform weights (bound sqrt(6 / fan_in)) from `seed`, zero biases.
    static CnnModel create(std::string_view arch, Shape input, std::uint64_t seed);

    const std::string& arch() const { return arch_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    Shape input_shape() const { return input_; }
    const std::vector<Shape>& shapes() const { return shapes_; }
    std::size_t parameter_count() const { return weights_.size(); }
    std::vector<double>& weights() { return weights_; }
    const std::vector<double>& weights() const { return weights_; }
    /// Start of layer i's parameters in weights().
    std::size_t parameter_offset(std::size_t layer) const { return offsets_[layer]; }

    /// Image pixels minus 0.5 in CHW order. Throws ShapeMismatch unless the
    /// image matches the input shape exactly.
    Tensor to_tensor(const RasterImage& img) const;
    /// Resizes to the input size first; throws ShapeMismatch on a channel
    /// mismatch.
    Tensor prepare(const RasterImage& img) const;

    ClassVector forward(const Tensor& x) const;
    ClassVector forward(const RasterImage& img) const { return forward(to_tensor(img)); }

    /// Mean cross-entropy over the batch; `gradients` is resized to
    /// parameter_count() and overwritten.
    double loss_and_gradients(const std::vector<Tensor>& batch, const std::vector<Grade>& labels,
                              std::vector<double>& gradients) const;
    double loss(const std::vector<Tensor>& batch, const std::vector<Grade>& labels) const;

    /// Severity-biased argmax of forward().
    Prediction predict(const Tensor& x) const;
    Prediction predict(const RasterImage& img) const { return predict(prepare(img)); }

    /// Used by deserialization; validates the layout against the weight count.
    static CnnModel from_parts(std::string_view arch, Shape input, std::vector<double> weights);

  private:
    struct Trace;
    void run(const Tensor& x, Trace& trace) const;
    void check_input(const Tensor& x) const;

    std::string arch_;
    std::vector<LayerSpec> layers_;
    Shape input_;
    std::vector<Shape> shapes_;
    std::vector<std::size_t> offsets_;
    std::vector<double> weights_;
};

/// Severity-biased argmax over probabilities, as a Prediction.
Prediction prediction_from(const ClassVector& probabilities);

struct TrainResult {
    std::vector<double> loss_history;  ///< full training-set loss after each epoch
};

/// Mini-batch SGD with momentum: v = momentum * v - lr * g; w += v. Epoch e
/// visits samples in an order shuffled by derive_seed(seed, e).
TrainResult train(CnnModel& model, const std::vector<Tensor>& inputs, const std::vector<Grade>& labels,
                  const TrainConfig& cfg);

inline constexpr std::string_view kCnnMagic = "SKYCAST-CNN v1";

std::string serialize(const CnnModel& model);
CnnModel deserialize_cnn(std::string_view bytes);
void save_model(const CnnModel& model, const std::filesystem::path& path);

} // namespace skycast::cnn
