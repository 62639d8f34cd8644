#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "skycast/cnn.hpp"
#include "skycast/error.hpp"
#include "skycast/rng.hpp"
#include "support.hpp"

using namespace skycast;
using namespace skycast::cnn;
using skytest::code_of;

namespace {

Grade g(std::size_t i) { return aqi::grade_from_index(i); }

Tensor random_tensor(std::size_t n, Rng& rng, double spread = 0.5) {
    Tensor t(n);
    for (double& v : t) v = rng.uniform(-spread, spread);
    return t;
}

// Straight-line forward pass written from the documented parameter layout.
ClassVector reference_forward(const CnnModel& m, Tensor x) {
    const auto& w = m.weights();
    Shape s = m.input_shape();
    std::size_t off = 0;
    std::vector<double> logits;
    for (const auto& layer : m.layers()) {
        if (layer.kind == LayerSpec::Kind::Conv) {
            const int f = layer.filter, ow = s.width - f + 1, oh = s.height - f + 1;
            const std::size_t bias = off + static_cast<std::size_t>(layer.maps) * s.channels * f * f;
            Tensor y(static_cast<std::size_t>(layer.maps) * ow * oh);
            for (int o = 0; o < layer.maps; ++o)
                for (int yy = 0; yy < oh; ++yy)
                    for (int xx = 0; xx < ow; ++xx) {
                        double acc = w[bias + o];
                        for (int c = 0; c < s.channels; ++c)
                            for (int v = 0; v < f; ++v)
                                for (int u = 0; u < f; ++u)
                                    acc += w[off + ((static_cast<std::size_t>(o) * s.channels + c) * f + v) * f + u] *
                                           x[(static_cast<std::size_t>(c) * s.height + yy + v) * s.width + xx + u];
                        y[(static_cast<std::size_t>(o) * oh + yy) * ow + xx] = std::max(acc, 0.0);
                    }
            off = bias + layer.maps;
            x = std::move(y);
            s = {ow, oh, layer.maps};
        } else if (layer.kind == LayerSpec::Kind::Pool) {
            const int k = layer.scale, ow = s.width / k, oh = s.height / k;
            Tensor y(static_cast<std::size_t>(s.channels) * ow * oh, 0.0);
            for (int c = 0; c < s.channels; ++c)
                for (int yy = 0; yy < oh; ++yy)
                    for (int xx = 0; xx < ow; ++xx) {
                        double acc = 0;
                        for (int v = 0; v < k; ++v)
                            for (int u = 0; u < k; ++u)
                                acc += x[(static_cast<std::size_t>(c) * s.height + yy * k + v) * s.width + xx * k + u];
                        y[(static_cast<std::size_t>(c) * oh + yy) * ow + xx] = acc / (k * k);
                    }
            x = std::move(y);
            s = {ow, oh, s.channels};
        } else if (layer.kind == LayerSpec::Kind::Dense) {
            logits.assign(static_cast<std::size_t>(layer.units), 0.0);
            const std::size_t in = x.size(), bias = off + static_cast<std::size_t>(layer.units) * in;
            for (int o = 0; o < layer.units; ++o) {
                double acc = w[bias + o];
                for (std::size_t i = 0; i < in; ++i) acc += w[off + o * in + i] * x[i];
                logits[static_cast<std::size_t>(o)] = acc;
            }
            off = bias + layer.units;
        }
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    ClassVector p{};
    double z = 0;
    for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
    for (double& v : p) v /= z;
    return p;
}

struct Blobs {
    std::vector<Tensor> x;
    std::vector<Grade> y;
};

// Two classes separated by mean brightness and a left/right gradient.
Blobs toy_blobs(int n, std::uint64_t seed) {
    Rng rng(seed);
    Blobs b;
    for (int i = 0; i < n; ++i) {
        const bool hi = i % 2 == 1;
        Tensor t(8 * 8 * 3);
        for (int c = 0; c < 3; ++c)
            for (int yy = 0; yy < 8; ++yy)
                for (int xx = 0; xx < 8; ++xx)
                    t[(static_cast<std::size_t>(c) * 8 + yy) * 8 + xx] =
                        (hi ? 0.25 : -0.25) + (hi ? 0.03 : -0.03) * (xx - 3.5) + rng.normal() * 0.08;
        b.x.push_back(std::move(t));
        b.y.push_back(hi ? g(3) : g(0));
    }
    return b;
}

} // namespace

TEST_CASE("architecture parsing") {
    const auto layers = parse_arch("C(6)(5)-S(2)-C(6)(5)-S(2)-C(10)(5)");
    const std::vector<LayerSpec> want = {LayerSpec::conv(6, 5), LayerSpec::pool(2), LayerSpec::conv(6, 5),
                                         LayerSpec::pool(2), LayerSpec::conv(10, 5), LayerSpec::dense(5),
                                         LayerSpec::softmax(5)};
    CHECK(layers == want);
    CHECK(format_arch(layers) == "C(6)(5)-S(2)-C(6)(5)-S(2)-C(10)(5)");
    CHECK(code_of([] { parse_arch(""); }) == ErrorCode::EmptyArchitecture);
    auto syntax_at = [](std::string_view text) {
        try {
            parse_arch(text);
        } catch (const Error& e) {
            return e.code() == ErrorCode::SyntaxError ? e.position() : std::size_t{999};
        }
        return std::size_t{0};
    };
    CHECK(syntax_at("C(4)(5)-X(2)") == 2);
    CHECK(syntax_at("C(4)") == 1);
    CHECK(syntax_at("C(4)(4)") == 1);
    CHECK(syntax_at("S(2)-C(3)(3)-") == 3);
    CHECK(syntax_at("C(4)(5)--S(2)") == 2);
    CHECK(syntax_at("C(0)(5)") == 1);
    CHECK(syntax_at("S(2)x") == 1);
}

TEST_CASE("shape chain for the reference architecture") {
    const auto chain = shape_chain(parse_arch("C(6)(5)-S(2)-C(6)(5)-S(2)-C(10)(5)"), {200, 200, 3});
    const std::vector<int> widths = {196, 98, 94, 47, 43};
    for (std::size_t i = 0; i < widths.size(); ++i) {
        CHECK(chain[i].width == widths[i]);
        CHECK(chain[i].height == widths[i]);
    }
    CHECK(chain[4].size() == 18490);
    CHECK(chain[5] == Shape{1, 1, 5});
    CHECK(chain[6] == Shape{1, 1, 5});
    for (std::string_view arch : {"C(4)(5)-S(2)-C(6)(7)-S(2)-C(10)(5)", "C(4)(5)-S(2)-C(6)(5)-S(2)-C(10)(5)",
                                  "C(6)(5)-S(2)-C(6)(5)-S(2)-C(10)(5)", "C(3)(3)-S(3)-C(2)(5)-S(2)"}) {
        for (int in : {64, 97, 200}) {
            const auto layers = parse_arch(arch);
            const auto sh = shape_chain(layers, {in, in, 3});
            int w = in, c = 3;
            for (std::size_t i = 0; i + 2 < layers.size(); ++i) {
                if (layers[i].kind == LayerSpec::Kind::Conv) {
                    w = w - layers[i].filter + 1;
                    c = layers[i].maps;
                } else {
                    w = w / layers[i].scale;
                }
                CHECK(sh[i] == Shape{w, w, c});
            }
        }
    }
    CHECK(code_of([] { shape_chain(parse_arch("C(2)(9)"), {8, 8, 3}); }) == ErrorCode::ShapeMismatch);
    // 47 -> 23 with the trailing row dropped.
    CHECK(shape_chain(parse_arch("S(2)"), {47, 47, 1})[0].width == 23);
}

TEST_CASE("forward pass agrees with a direct evaluation") {
    Rng rng(1);
    for (std::string_view arch : {"C(2)(3)-S(2)", "C(3)(3)-S(2)-C(2)(3)", "C(2)(5)-S(3)"}) {
        auto m = CnnModel::create(arch, {13, 11, 3}, 4);
        for (double& w : m.weights()) w = rng.uniform(-0.5, 0.5);
        for (int t = 0; t < 5; ++t) {
            const auto x = random_tensor(m.input_shape().size(), rng);
            const auto got = m.forward(x);
            const auto want = reference_forward(m, x);
            for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("softmax output properties") {
    auto m = CnnModel::create("C(2)(3)-S(2)", {8, 8, 3}, 2);
    std::fill(m.weights().begin(), m.weights().end(), 0.0);
    Rng rng(2);
    const auto x = random_tensor(m.input_shape().size(), rng);
    for (double p : m.forward(x)) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));
    const std::vector<Tensor> batch = {x, random_tensor(x.size(), rng)};
    CHECK(m.loss(batch, {g(0), g(4)}) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    auto r = CnnModel::create("C(2)(3)-S(2)", {8, 8, 3}, 3);
    for (int t = 0; t < 50; ++t) {
        const auto p = r.forward(random_tensor(x.size(), rng, 3.0));
        CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
        for (double v : p) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
}

TEST_CASE("loss of a confident correct prediction is about epsilon") {
    auto m = CnnModel::create("S(8)", {8, 8, 1}, 1);
    std::fill(m.weights().begin(), m.weights().end(), 0.0);
    // Dense biases come last; make class 2 dominate by a margin L.
    const double margin = 12.0;
    m.weights()[m.weights().size() - 5 + 2] = margin;
    const double eps = 4.0 * std::exp(-margin) / (1.0 + 4.0 * std::exp(-margin));
    const Tensor x(64, 0.1);
    CHECK(m.forward(x)[2] == doctest::Approx(1.0 - eps).epsilon(1e-14));
    CHECK(m.loss({x}, {g(2)}) == doctest::Approx(-std::log1p(-eps)).epsilon(1e-9));
    CHECK(m.loss({x}, {g(2)}) == doctest::Approx(eps).epsilon(1e-4));
}

TEST_CASE("analytic gradients match central differences") {
    Rng rng(3);
    for (std::string_view arch : {"C(2)(3)-S(2)", "C(2)(3)-S(2)-C(3)(3)", "S(2)-C(2)(3)"}) {
        auto m = CnnModel::create(arch, {8, 8, 3}, rng.next());
        std::vector<Tensor> batch;
        std::vector<Grade> labels;
        for (int i = 0; i < 3; ++i) {
            batch.push_back(random_tensor(m.input_shape().size(), rng));
            labels.push_back(g(rng.below(5)));
        }
        for (double& w : m.weights())
            if (w == 0.0) w = rng.uniform(-0.1, 0.1);  // nonzero biases
        std::vector<double> grad;
        m.loss_and_gradients(batch, labels, grad);
        REQUIRE(grad.size() == m.parameter_count());
        const double h = 1e-4;
        int checked = 0;
        for (std::size_t i = 0; i < m.parameter_count(); ++i) {
            const double w0 = m.weights()[i];
            m.weights()[i] = w0 + h;
            const double up = m.loss(batch, labels);
            m.weights()[i] = w0 - h;
            const double down = m.loss(batch, labels);
            m.weights()[i] = w0;
            const double numeric = (up - down) / (2 * h);
            const double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-6});
            CAPTURE(arch);
            CAPTURE(i);
            CHECK(std::abs(numeric - grad[i]) / denom <= 1e-3);
            ++checked;
        }
        CHECK(checked == static_cast<int>(m.parameter_count()));
    }
}

TEST_CASE("training: toy blobs, zero learning rate and determinism") {
    const auto blobs = toy_blobs(60, 5);
    auto m = CnnModel::create("C(2)(3)-S(2)", {8, 8, 3}, 11);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 8;
    cfg.seed = 2;
    const auto r = train(m, blobs.x, blobs.y, cfg);
    REQUIRE(r.loss_history.size() == 50);
    for (std::size_t e = 5; e + 1 < r.loss_history.size(); ++e) CHECK(r.loss_history[e + 1] <= r.loss_history[e] + 1e-3);
    int correct = 0;
    for (std::size_t i = 0; i < blobs.x.size(); ++i) correct += m.predict(blobs.x[i]).grade == blobs.y[i];
    CHECK(correct >= 57);

    auto again = CnnModel::create("C(2)(3)-S(2)", {8, 8, 3}, 11);
    CHECK(train(again, blobs.x, blobs.y, cfg).loss_history == r.loss_history);
    CHECK(again.weights() == m.weights());

    auto frozen = CnnModel::create("C(2)(3)-S(2)", {8, 8, 3}, 11);
    const auto before = frozen.weights();
    cfg.learning_rate = 0.0;
    cfg.epochs = 7;
    train(frozen, blobs.x, blobs.y, cfg);
    CHECK(frozen.weights() == before);

    TrainConfig bad;
    bad.momentum = 1.0;
    CHECK(code_of([&] { train(frozen, blobs.x, blobs.y, bad); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { train(frozen, blobs.x, {g(0)}, TrainConfig{}); }) == ErrorCode::LengthMismatch);
}

TEST_CASE("prediction from probabilities and logit rescaling") {
    CHECK(prediction_from({0.1, 0.1, 0.6, 0.1, 0.1}).grade == Grade::UnhealthySensitive);
    CHECK(prediction_from({0.3, 0.3, 0.2, 0.1, 0.1}).grade == Grade::Moderate);
    Rng rng(4);
    for (int t = 0; t < 500; ++t) {
        ClassVector logits{}, scaled{};
        for (std::size_t i = 0; i < 5; ++i) {
            logits[i] = rng.normal();
            scaled[i] = std::exp(2.0 * logits[i]) + 3.0 * logits[i];  // strictly increasing
        }
        CHECK(classify::severity_argmax(logits) == classify::severity_argmax(scaled));
    }
}

TEST_CASE("tensor preparation") {
    const auto m = CnnModel::create("C(2)(3)-S(2)", {8, 8, 3}, 1);
    const auto img = skytest::random_image(8, 8, 3, 7);
    const auto t = m.to_tensor(img);
    CHECK(t[0] == doctest::Approx(img.at(0, 0, 0) - 0.5));
    CHECK(t[64 + 9] == doctest::Approx(img.at(1, 1, 1) - 0.5));
    CHECK(m.prepare(img) == t);
    CHECK(m.prepare(skytest::random_image(20, 16, 3, 8)).size() == 192);
    CHECK(code_of([&] { m.to_tensor(skytest::random_image(9, 8, 3, 1)); }) == ErrorCode::ShapeMismatch);
    CHECK(code_of([&] { m.prepare(skytest::random_image(8, 8, 1, 1)); }) == ErrorCode::ShapeMismatch);
    CHECK(code_of([&] { m.forward(Tensor(5)); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("serialization round trip and corruption") {
    const auto m = CnnModel::create("C(3)(3)-S(2)", {10, 10, 3}, 9);
    const auto bytes = serialize(m);
    CHECK(bytes.rfind(kCnnMagic, 0) == 0);
    const auto back = deserialize_cnn(bytes);
    CHECK(back.weights() == m.weights());
    CHECK(back.arch() == m.arch());
    CHECK(back.input_shape() == m.input_shape());
    auto corrupt = bytes;
    corrupt[corrupt.size() / 2] ^= 0x10;
    CHECK(code_of([&] { deserialize_cnn(corrupt); }) == ErrorCode::ParseError);
    CHECK(code_of([&] { deserialize_cnn(bytes.substr(0, bytes.size() - 20)); }) == ErrorCode::ParseError);
    CHECK(code_of([&] { deserialize_cnn("SKYCAST-RF v1\n"); }) == ErrorCode::ParseError);
    CHECK(code_of([&] { CnnModel::from_parts("C(3)(3)-S(2)", {10, 10, 3}, std::vector<double>(3)); }) ==
          ErrorCode::ShapeMismatch);
}
