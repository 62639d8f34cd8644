#include <fstream>

#include <json.hpp>

#include "skycast/classify.hpp"
#include "skycast/error.hpp"

namespace skycast::classify {

namespace {

using nlohmann::json;

json bank_to_json(const std::optional<features::GaborBank>& bank) {
    if (!bank) return nullptr;
    return {{"orientations_deg", bank->orientations_deg}, {"frequencies", bank->frequencies}};
}

std::optional<features::GaborBank> bank_from_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    return features::GaborBank::make(j.at("orientations_deg").get<std::vector<double>>(),
                                     j.at("frequencies").get<std::vector<double>>());
}

json body_of(std::string_view text, std::string_view magic) {
    const auto nl = text.find('\n');
    const auto first = text.substr(0, nl);
    if (first != magic) throw Error(ErrorCode::ParseError, "expected header '" + std::string(magic) + "'", 1);
    if (nl == std::string_view::npos) throw Error(ErrorCode::ParseError, "model body missing", 2);
    try {
        return json::parse(text.substr(nl + 1));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ParseError, std::string("model body: ") + e.what(), 2);
    }
}

void write_text(const std::string& text, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

} // namespace

std::string serialize(const RandomForest& m) {
    json trees = json::array();
    for (const auto& t : m.trees) {
        json nodes = json::array();
        for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.counts});
        trees.push_back(std::move(nodes));
    }
    json doc = {{"config",
                 {{"n_trees", m.config.n_trees},
                  {"max_depth", m.config.max_depth},
                  {"min_samples_leaf", m.config.min_samples_leaf},
                  {"features_per_split", m.config.features_per_split},
                  {"bootstrap", m.config.bootstrap},
                  {"seed", m.config.seed}}},
                {"schema_id", m.schema_id},
                {"n_features", m.n_features},
                {"degenerate", m.degenerate},
                {"bank", bank_to_json(m.bank)},
                {"trees", std::move(trees)}};
    return std::string(kRfMagic) + "\n" + doc.dump() + "\n";
}

RandomForest deserialize_forest(std::string_view text) {
    const json doc = body_of(text, kRfMagic);
    RandomForest m;
    try {
        const auto& c = doc.at("config");
        m.config.n_trees = c.at("n_trees").get<int>();
        m.config.max_depth = c.at("max_depth").get<int>();
        m.config.min_samples_leaf = c.at("min_samples_leaf").get<int>();
        m.config.features_per_split = c.at("features_per_split").get<int>();
        m.config.bootstrap = c.at("bootstrap").get<bool>();
        m.config.seed = c.at("seed").get<std::uint64_t>();
        m.schema_id = doc.at("schema_id").get<std::string>();
        m.n_features = doc.at("n_features").get<std::size_t>();
        m.degenerate = doc.at("degenerate").get<bool>();
        m.bank = bank_from_json(doc.at("bank"));
        for (const auto& jt : doc.at("trees")) {
            DecisionTree t;
            for (const auto& jn : jt) {
                TreeNode n;
                n.feature = jn.at(0).get<int>();
                n.threshold = jn.at(1).get<double>();
                n.left = jn.at(2).get<int>();
                n.right = jn.at(3).get<int>();
                n.counts = jn.at(4).get<std::array<std::uint32_t, kClasses>>();
                t.nodes.push_back(n);
            }
            t.validate(m.n_features);
            m.trees.push_back(std::move(t));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("forest model: ") + e.what());
    }
    m.config.validate();
    if (m.trees.empty()) throw Error(ErrorCode::ParseError, "forest has no trees");
    return m;
}

std::string serialize(const KnnModel& m) {
    json labels = json::array();
    for (Grade g : m.labels) labels.push_back(aqi::index_of(g));
    json doc = {{"k", m.config.k},
                {"selected_features", m.config.selected_features ? json(*m.config.selected_features) : json(nullptr)},
                {"schema_id", m.schema_id},
                {"n_features", m.n_features},
                {"columns", m.columns},
                {"mean", m.mean},
                {"scale", m.scale},
                {"rows", m.rows},
                {"labels", labels},
                {"bank", bank_to_json(m.bank)}};
    return std::string(kKnnMagic) + "\n" + doc.dump() + "\n";
}

KnnModel deserialize_knn(std::string_view text) {
    const json doc = body_of(text, kKnnMagic);
    KnnModel m;
    try {
        m.config.k = doc.at("k").get<int>();
        if (!doc.at("selected_features").is_null()) {
            m.config.selected_features = doc.at("selected_features").get<std::vector<std::size_t>>();
        }
        m.schema_id = doc.at("schema_id").get<std::string>();
        m.n_features = doc.at("n_features").get<std::size_t>();
        m.columns = doc.at("columns").get<std::vector<std::size_t>>();
        m.mean = doc.at("mean").get<std::vector<double>>();
        m.scale = doc.at("scale").get<std::vector<double>>();
        m.rows = doc.at("rows").get<std::vector<std::vector<double>>>();
        for (const auto& g : doc.at("labels")) m.labels.push_back(aqi::grade_from_index(g.get<std::size_t>()));
        m.bank = bank_from_json(doc.at("bank"));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("knn model: ") + e.what());
    } catch (const Error& e) {
        throw Error(ErrorCode::ParseError, std::string("knn model: ") + e.what());
    }
    m.config.validate(m.n_features);
    const auto c = m.columns.size();
    bool ok = c > 0 && m.mean.size() == c && m.scale.size() == c && m.rows.size() == m.labels.size() &&
              m.rows.size() >= static_cast<std::size_t>(m.config.k);
    for (auto col : m.columns) ok = ok && col < m.n_features;
    for (const auto& row : m.rows) ok = ok && row.size() == c;
    if (!ok) throw Error(ErrorCode::ParseError, "knn model arrays are inconsistent");
    return m;
}

void save_model(const RandomForest& model, const std::filesystem::path& path) { write_text(serialize(model), path); }
void save_model(const KnnModel& model, const std::filesystem::path& path) { write_text(serialize(model), path); }

} // namespace skycast::classify
