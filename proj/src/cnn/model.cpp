#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "skycast/cnn.hpp"
#include "skycast/error.hpp"
#include "skycast/parallel.hpp"
#include "skycast/rng.hpp"

namespace skycast::cnn {

namespace {

constexpr int kMaxLayerArg = 4096;

using Kind = LayerSpec::Kind;

// Reads "(<int>)" at `pos`; returns false on any deviation.
bool read_group(std::string_view tok, std::size_t& pos, int& value) {
    if (pos >= tok.size() || tok[pos] != '(') return false;
    const auto close = tok.find(')', pos);
    if (close == std::string_view::npos) return false;
    const auto digits = tok.substr(pos + 1, close - pos - 1);
    if (digits.empty()) return false;
    for (char c : digits) {
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    }
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) return false;
    pos = close + 1;
    return true;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

LayerSpec parse_token(std::string_view tok, std::size_t index) {
    auto fail = [&](const std::string& why) {
        return Error(ErrorCode::SyntaxError, "token " + std::to_string(index) + " '" + std::string(tok) + "': " + why,
                     index);
    };
    if (tok.empty()) throw fail("empty token");
    std::size_t pos = 1;
    if (tok[0] == 'C') {
        int maps = 0, filter = 0;
        if (!read_group(tok, pos, maps) || !read_group(tok, pos, filter) || pos != tok.size()) {
            throw fail("expected C(n)(f)");
        }
        if (maps < 1 || filter < 1 || maps > kMaxLayerArg || filter > kMaxLayerArg) throw fail("arguments must be in [1, 4096]");
        if (filter % 2 == 0) throw fail("filter size must be odd");
        return LayerSpec::conv(maps, filter);
    }
    if (tok[0] == 'S') {
        int scale = 0;
        if (!read_group(tok, pos, scale) || pos != tok.size()) throw fail("expected S(s)");
        if (scale < 1 || scale > kMaxLayerArg) throw fail("scale must be in [1, 4096]");
        return LayerSpec::pool(scale);
    }
    throw fail("unknown layer code");
}

double he_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

} // namespace

std::vector<LayerSpec> parse_arch(std::string_view text) {
    text = trim(text);
    if (text.empty()) throw Error(ErrorCode::EmptyArchitecture, "architecture string is empty");
    std::vector<LayerSpec> layers;
    std::size_t start = 0;
    for (std::size_t index = 1;; ++index) {
        const auto dash = text.find('-', start);
        const auto tok = trim(text.substr(start, dash == std::string_view::npos ? std::string_view::npos : dash - start));
        layers.push_back(parse_token(tok, index));
        if (dash == std::string_view::npos) break;
        start = dash + 1;
    }
    layers.push_back(LayerSpec::dense(static_cast<int>(classify::kClasses)));
    layers.push_back(LayerSpec::softmax(static_cast<int>(classify::kClasses)));
    return layers;
}

std::string format_arch(const std::vector<LayerSpec>& layers) {
    std::string out;
    for (const auto& l : layers) {
        if (l.kind != Kind::Conv && l.kind != Kind::Pool) continue;
        if (!out.empty()) out += '-';
        out += l.kind == Kind::Conv ? "C(" + std::to_string(l.maps) + ")(" + std::to_string(l.filter) + ")"
                                    : "S(" + std::to_string(l.scale) + ")";
    }
    return out;
}

std::vector<Shape> shape_chain(const std::vector<LayerSpec>& layers, Shape in) {
    if (in.width < 1 || in.height < 1 || in.channels < 1) throw Error(ErrorCode::ShapeMismatch, "input shape is empty");
    std::vector<Shape> out;
    Shape s = in;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        switch (l.kind) {
            case Kind::Conv: s = {s.width - l.filter + 1, s.height - l.filter + 1, l.maps}; break;
            case Kind::Pool: s = {s.width / l.scale, s.height / l.scale, s.channels}; break;
            case Kind::Dense:
            case Kind::Softmax: s = {1, 1, l.units}; break;
        }
        if (s.width < 1 || s.height < 1) {
            throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(i + 1) + " shrinks the input below 1x1");
        }
        out.push_back(s);
    }
    return out;
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::InvalidArgument, "momentum must be in [0, 1)");
    if (epochs < 0) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 0");
    if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
}

// --- model -----------------------------------------------------------------

struct CnnModel::Trace {
    std::vector<Tensor> acts;  ///< acts[0] = input, acts[i + 1] = output of layer i
};

namespace {

std::vector<std::size_t> parameter_layout(const std::vector<LayerSpec>& layers, const std::vector<Shape>& shapes,
                                          Shape input, std::size_t& total) {
    std::vector<std::size_t> offsets(layers.size());
    total = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        offsets[i] = total;
        const Shape in = i == 0 ? input : shapes[i - 1];
        const auto& l = layers[i];
        if (l.kind == Kind::Conv) {
            total += static_cast<std::size_t>(l.maps) * in.channels * l.filter * l.filter + l.maps;
        } else if (l.kind == Kind::Dense) {
            total += static_cast<std::size_t>(l.units) * in.size() + l.units;
        }
    }
    return offsets;
}

} // namespace

CnnModel CnnModel::create(std::string_view arch, Shape input, std::uint64_t seed) {
    CnnModel m;
    m.layers_ = parse_arch(arch);
    m.arch_ = format_arch(m.layers_);
    m.input_ = input;
    m.shapes_ = shape_chain(m.layers_, input);
    std::size_t total = 0;
    m.offsets_ = parameter_layout(m.layers_, m.shapes_, input, total);
    m.weights_.assign(total, 0.0);

    Rng rng(seed);
    for (std::size_t i = 0; i < m.layers_.size(); ++i) {
        const auto& l = m.layers_[i];
        const Shape in = i == 0 ? input : m.shapes_[i - 1];
        std::size_t count = 0, fan_in = 0;
        if (l.kind == Kind::Conv) {
            fan_in = static_cast<std::size_t>(in.channels) * l.filter * l.filter;
            count = fan_in * l.maps;
        } else if (l.kind == Kind::Dense) {
            fan_in = in.size();
            count = fan_in * l.units;
        }
        const double b = count ? he_bound(fan_in) : 0.0;
        for (std::size_t k = 0; k < count; ++k) m.weights_[m.offsets_[i] + k] = rng.uniform(-b, b);
    }
    return m;
}

CnnModel CnnModel::from_parts(std::string_view arch, Shape input, std::vector<double> weights) {
    CnnModel m;
    m.layers_ = parse_arch(arch);
    m.arch_ = format_arch(m.layers_);
    m.input_ = input;
    m.shapes_ = shape_chain(m.layers_, input);
    std::size_t total = 0;
    m.offsets_ = parameter_layout(m.layers_, m.shapes_, input, total);
    if (weights.size() != total) {
        throw Error(ErrorCode::ShapeMismatch, "architecture needs " + std::to_string(total) + " weights, got " +
                                                  std::to_string(weights.size()));
    }
    for (double w : weights) {
        if (!std::isfinite(w)) throw Error(ErrorCode::ParseError, "non-finite weight");
    }
    m.weights_ = std::move(weights);
    return m;
}

Tensor CnnModel::to_tensor(const RasterImage& img) const {
    if (img.width != input_.width || img.height != input_.height || img.channels != input_.channels) {
        throw Error(ErrorCode::ShapeMismatch, "image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                                  "x" + std::to_string(img.channels) + ", network expects " +
                                                  std::to_string(input_.width) + "x" + std::to_string(input_.height) +
                                                  "x" + std::to_string(input_.channels));
    }
    Tensor t(input_.size());
    const std::size_t plane = img.pixel_count();
    for (std::size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < img.channels; ++c) t[c * plane + p] = img.pixels[p * img.channels + c] - 0.5;
    }
    return t;
}

Tensor CnnModel::prepare(const RasterImage& img) const {
    if (img.channels != input_.channels) {
        throw Error(ErrorCode::ShapeMismatch, "network expects " + std::to_string(input_.channels) + " channels");
    }
    if (img.width == input_.width && img.height == input_.height) return to_tensor(img);
    return to_tensor(imaging::resize_bilinear(img, input_.width, input_.height));
}

void CnnModel::check_input(const Tensor& x) const {
    if (layers_.empty()) throw Error(ErrorCode::ShapeMismatch, "model is not initialized");
    if (x.size() != input_.size()) throw Error(ErrorCode::ShapeMismatch, "input tensor has the wrong size");
}

void CnnModel::run(const Tensor& x, Trace& trace) const {
    check_input(x);
    trace.acts.resize(layers_.size() + 1);
    trace.acts[0] = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        const Shape in = i == 0 ? input_ : shapes_[i - 1];
        const Shape out = shapes_[i];
        const Tensor& a = trace.acts[i];
        Tensor& z = trace.acts[i + 1];
        z.assign(out.size(), 0.0);
        const double* w = weights_.data() + offsets_[i];
        switch (l.kind) {
            case Kind::Conv: {
                const int f = l.filter;
                const std::size_t in_plane = static_cast<std::size_t>(in.width) * in.height;
                const double* bias = w + static_cast<std::size_t>(l.maps) * in.channels * f * f;
                for (int m = 0; m < l.maps; ++m) {
                    double* zm = z.data() + static_cast<std::size_t>(m) * out.width * out.height;
                    std::fill(zm, zm + static_cast<std::size_t>(out.width) * out.height, bias[m]);
                    for (int c = 0; c < in.channels; ++c) {
                        const double* ac = a.data() + c * in_plane;
                        const double* wk = w + ((static_cast<std::size_t>(m) * in.channels + c) * f) * f;
                        for (int ki = 0; ki < f; ++ki) {
                            for (int kj = 0; kj < f; ++kj) {
                                const double wv = wk[ki * f + kj];
                                for (int y = 0; y < out.height; ++y) {
                                    const double* src = ac + static_cast<std::size_t>(y + ki) * in.width + kj;
                                    double* dst = zm + static_cast<std::size_t>(y) * out.width;
                                    for (int xx = 0; xx < out.width; ++xx) dst[xx] += wv * src[xx];
                                }
                            }
                        }
                    }
                    for (std::size_t k = 0; k < static_cast<std::size_t>(out.width) * out.height; ++k) zm[k] = std::max(0.0, zm[k]);
                }
                break;
            }
            case Kind::Pool: {
                const int s = l.scale;
                const double inv = 1.0 / (s * s);
                for (int c = 0; c < out.channels; ++c) {
                    for (int y = 0; y < out.height; ++y) {
                        for (int xx = 0; xx < out.width; ++xx) {
                            double acc = 0.0;
                            for (int dy = 0; dy < s; ++dy) {
                                const double* row = a.data() + (static_cast<std::size_t>(c) * in.height + y * s + dy) * in.width + xx * s;
                                for (int dx = 0; dx < s; ++dx) acc += row[dx];
                            }
                            z[(static_cast<std::size_t>(c) * out.height + y) * out.width + xx] = acc * inv;
                        }
                    }
                }
                break;
            }
            case Kind::Dense: {
                const std::size_t n_in = a.size();
                const double* bias = w + static_cast<std::size_t>(l.units) * n_in;
                for (int u = 0; u < l.units; ++u) {
                    const double* wu = w + static_cast<std::size_t>(u) * n_in;
                    double acc = bias[u];
                    for (std::size_t j = 0; j < n_in; ++j) acc += wu[j] * a[j];
                    z[static_cast<std::size_t>(u)] = acc;
                }
                break;
            }
            case Kind::Softmax: {
                const double mx = *std::max_element(a.begin(), a.end());
                double sum = 0.0;
                for (std::size_t k = 0; k < a.size(); ++k) sum += (z[k] = std::exp(a[k] - mx));
                for (double& v : z) v /= sum;
                break;
            }
        }
    }
}

ClassVector CnnModel::forward(const Tensor& x) const {
    Trace t;
    run(x, t);
    ClassVector p{};
    std::copy(t.acts.back().begin(), t.acts.back().end(), p.begin());
    return p;
}

Prediction prediction_from(const ClassVector& probabilities) {
    return {aqi::grade_from_index(classify::severity_argmax(probabilities)), probabilities};
}

Prediction CnnModel::predict(const Tensor& x) const { return prediction_from(forward(x)); }

namespace {

// -log softmax(logits)[label], computed from the logits for stability.
double cross_entropy(const Tensor& logits, std::size_t label) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    return -(logits[label] - mx - std::log(sum));
}

} // namespace

double CnnModel::loss(const std::vector<Tensor>& batch, const std::vector<Grade>& labels) const {
    if (batch.empty()) throw Error(ErrorCode::EmptyInput, "empty batch");
    if (batch.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "batch and label counts differ");
    std::vector<double> per(batch.size());
    parallel_for(batch.size(), [&](std::size_t b) {
        Trace t;
        run(batch[b], t);
        per[b] = cross_entropy(t.acts[t.acts.size() - 2], aqi::index_of(labels[b]));
    });
    double total = 0.0;
    for (double v : per) total += v;
    return total / static_cast<double>(batch.size());
}

double CnnModel::loss_and_gradients(const std::vector<Tensor>& batch, const std::vector<Grade>& labels,
                                    std::vector<double>& gradients) const {
    if (batch.empty()) throw Error(ErrorCode::EmptyInput, "empty batch");
    if (batch.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "batch and label counts differ");
    const std::size_t n = batch.size();
    std::vector<std::vector<double>> per_grad(n);
    std::vector<double> per_loss(n);

    parallel_for(n, [&](std::size_t b) {
        Trace t;
        run(batch[b], t);
        auto& g = per_grad[b];
        g.assign(weights_.size(), 0.0);
        const std::size_t label = aqi::index_of(labels[b]);
        per_loss[b] = cross_entropy(t.acts[t.acts.size() - 2], label);

        // Softmax + cross-entropy: d loss / d logits = p - onehot.
        Tensor delta = t.acts.back();
        delta[label] -= 1.0;
        for (std::size_t i = layers_.size() - 1; i-- > 0;) {
            const auto& l = layers_[i];
            const Shape in = i == 0 ? input_ : shapes_[i - 1];
            const Shape out = shapes_[i];
            const Tensor& a = t.acts[i];
            const Tensor& z = t.acts[i + 1];
            const double* w = weights_.data() + offsets_[i];
            double* gw = g.data() + offsets_[i];
            const bool need_input_grad = i > 0;
            Tensor prev(need_input_grad ? a.size() : 0, 0.0);
            switch (l.kind) {
                case Kind::Dense: {
                    const std::size_t n_in = a.size();
                    double* gb = gw + static_cast<std::size_t>(l.units) * n_in;
                    for (int u = 0; u < l.units; ++u) {
                        const double d = delta[static_cast<std::size_t>(u)];
                        const double* wu = w + static_cast<std::size_t>(u) * n_in;
                        double* gu = gw + static_cast<std::size_t>(u) * n_in;
                        for (std::size_t j = 0; j < n_in; ++j) gu[j] += d * a[j];
                        gb[u] += d;
                        if (need_input_grad) {
                            for (std::size_t j = 0; j < n_in; ++j) prev[j] += wu[j] * d;
                        }
                    }
                    break;
                }
                case Kind::Pool: {
                    if (!need_input_grad) break;
                    const int s = l.scale;
                    const double inv = 1.0 / (s * s);
                    for (int c = 0; c < out.channels; ++c) {
                        for (int y = 0; y < out.height; ++y) {
                            for (int xx = 0; xx < out.width; ++xx) {
                                const double d = delta[(static_cast<std::size_t>(c) * out.height + y) * out.width + xx] * inv;
                                for (int dy = 0; dy < s; ++dy) {
                                    double* row = prev.data() + (static_cast<std::size_t>(c) * in.height + y * s + dy) * in.width + xx * s;
                                    for (int dx = 0; dx < s; ++dx) row[dx] += d;
                                }
                            }
                        }
                    }
                    break;
                }
                case Kind::Conv: {
                    const int f = l.filter;
                    const std::size_t out_plane = static_cast<std::size_t>(out.width) * out.height;
                    const std::size_t in_plane = static_cast<std::size_t>(in.width) * in.height;
                    double* gb = gw + static_cast<std::size_t>(l.maps) * in.channels * f * f;
                    // ReLU: gradient flows only where the output was positive.
                    for (std::size_t k = 0; k < delta.size(); ++k) {
                        if (!(z[k] > 0.0)) delta[k] = 0.0;
                    }
                    for (int m = 0; m < l.maps; ++m) {
                        const double* dm = delta.data() + static_cast<std::size_t>(m) * out_plane;
                        for (std::size_t k = 0; k < out_plane; ++k) gb[m] += dm[k];
                        for (int c = 0; c < in.channels; ++c) {
                            const double* ac = a.data() + c * in_plane;
                            const std::size_t kbase = ((static_cast<std::size_t>(m) * in.channels + c) * f) * f;
                            for (int ki = 0; ki < f; ++ki) {
                                for (int kj = 0; kj < f; ++kj) {
                                    double acc = 0.0;
                                    const double wv = w[kbase + ki * f + kj];
                                    for (int y = 0; y < out.height; ++y) {
                                        const double* src = ac + static_cast<std::size_t>(y + ki) * in.width + kj;
                                        const double* dr = dm + static_cast<std::size_t>(y) * out.width;
                                        for (int xx = 0; xx < out.width; ++xx) acc += dr[xx] * src[xx];
                                        if (need_input_grad) {
                                            double* pr = prev.data() + c * in_plane + static_cast<std::size_t>(y + ki) * in.width + kj;
                                            for (int xx = 0; xx < out.width; ++xx) pr[xx] += wv * dr[xx];
                                        }
                                    }
                                    gw[kbase + ki * f + kj] += acc;
                                }
                            }
                        }
                    }
                    break;
                }
                case Kind::Softmax: break;
            }
            delta = std::move(prev);
        }
    });

    gradients.assign(weights_.size(), 0.0);
    double total = 0.0;
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t b = 0; b < n; ++b) {
        total += per_loss[b];
        for (std::size_t k = 0; k < gradients.size(); ++k) gradients[k] += per_grad[b][k] * inv;
    }
    return total * inv;
}

} // namespace skycast::cnn
