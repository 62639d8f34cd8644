#include <algorithm>
#include <numeric>

#include "skycast/cnn.hpp"
#include "skycast/error.hpp"
#include "skycast/rng.hpp"

namespace skycast::cnn {

TrainResult train(CnnModel& model, const std::vector<Tensor>& inputs, const std::vector<Grade>& labels,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (inputs.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "input and label counts differ");
    if (inputs.empty()) throw Error(ErrorCode::EmptyInput, "no training samples");

    auto& w = model.weights();
    std::vector<double> velocity(w.size(), 0.0);
    std::vector<double> grad;
    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(std::span(order));
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            std::vector<Tensor> xb;
            std::vector<Grade> yb;
            xb.reserve(end - start);
            yb.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) {
                xb.push_back(inputs[order[k]]);
                yb.push_back(labels[order[k]]);
            }
            model.loss_and_gradients(xb, yb, grad);
            for (std::size_t k = 0; k < w.size(); ++k) {
                velocity[k] = cfg.momentum * velocity[k] - cfg.learning_rate * grad[k];
                w[k] += velocity[k];
            }
        }
        result.loss_history.push_back(model.loss(inputs, labels));
    }
    return result;
}

} // namespace skycast::cnn
