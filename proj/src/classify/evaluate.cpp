#include <json.hpp>

#include "skycast/classify.hpp"
#include "skycast/error.hpp"

namespace skycast::classify {

EvalReport evaluate(const std::vector<Grade>& y_true, const std::vector<Grade>& y_pred) {
    if (y_true.size() != y_pred.size()) throw Error(ErrorCode::LengthMismatch, "truth and prediction counts differ");
    if (y_true.empty()) throw Error(ErrorCode::EmptyInput, "nothing to evaluate");
    EvalReport r;
    r.total = y_true.size();
    for (std::size_t i = 0; i < y_true.size(); ++i) ++r.confusion[aqi::index_of(y_true[i])][aqi::index_of(y_pred[i])];

    std::size_t correct = 0;
    std::size_t present = 0;
    double f1_sum = 0.0;
    for (std::size_t c = 0; c < kClasses; ++c) {
        const std::size_t tp = r.confusion[c][c];
        std::size_t predicted = 0;
        std::size_t actual = 0;
        for (std::size_t k = 0; k < kClasses; ++k) {
            predicted += r.confusion[k][c];
            actual += r.confusion[c][k];
        }
        correct += tp;
        r.support[c] = actual;
        r.precision[c] = predicted == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted);
        r.recall[c] = actual == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(actual);
        const double pr = r.precision[c] + r.recall[c];
        r.per_class_f1[c] = pr == 0.0 ? 0.0 : 2.0 * r.precision[c] * r.recall[c] / pr;
        f1_sum += r.per_class_f1[c];
        if (predicted + actual > 0) {
            ++present;
            r.macro_f1_present += r.per_class_f1[c];
        }
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
    r.macro_f1 = f1_sum / static_cast<double>(kClasses);
    r.macro_f1_present /= static_cast<double>(present);
    return r;
}

std::string EvalReport::to_json() const {
    nlohmann::json doc;
    doc["total"] = total;
    doc["accuracy"] = accuracy;
    doc["macro_f1"] = macro_f1;
    doc["macro_f1_present"] = macro_f1_present;
    doc["confusion"] = confusion;
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t c = 0; c < kClasses; ++c) {
        classes.push_back({{"grade", aqi::grade_name(aqi::grade_from_index(c))},
                           {"precision", precision[c]},
                           {"recall", recall[c]},
                           {"f1", per_class_f1[c]},
                           {"support", support[c]}});
    }
    doc["classes"] = classes;
    return doc.dump(2);
}

} // namespace skycast::classify
