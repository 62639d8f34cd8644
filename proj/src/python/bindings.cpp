#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "skycast/aqi.hpp"
#include "skycast/cnn.hpp"
#include "skycast/dataset.hpp"
#include "skycast/error.hpp"
#include "skycast/features.hpp"
#include "skycast/imaging.hpp"
#include "skycast/pipeline.hpp"
#include "skycast/synth.hpp"

namespace py = pybind11;
using namespace skycast;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Images cross the boundary as float64 arrays in [0, 1], shape (H, W) or (H, W, C).
imaging::RasterImage to_raster(const Array& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw Error(ErrorCode::InvalidArgument, "image must have shape (H, W) or (H, W, C)");
    const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
    imaging::RasterImage img(w, h, c);
    std::memcpy(img.pixels.data(), a.data(), img.pixels.size() * sizeof(double));
    img.validate();
    return img;
}

Array from_raster(const imaging::RasterImage& img) {
    Array out({static_cast<py::ssize_t>(img.height), static_cast<py::ssize_t>(img.width),
               static_cast<py::ssize_t>(img.channels)});
    std::memcpy(out.mutable_data(), img.pixels.data(), img.pixels.size() * sizeof(double));
    return out;
}

features::Plane to_plane(const Array& a) {
    if (a.ndim() != 2) throw Error(ErrorCode::InvalidArgument, "plane must be two-dimensional");
    features::Plane p(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::memcpy(p.values.data(), a.data(), p.values.size() * sizeof(double));
    return p;
}

Array from_plane(const features::Plane& p) {
    Array out({static_cast<py::ssize_t>(p.height), static_cast<py::ssize_t>(p.width)});
    std::memcpy(out.mutable_data(), p.values.data(), p.values.size() * sizeof(double));
    return out;
}

aqi::Grade grade_arg(const std::string& name) {
    const auto g = aqi::parse_grade(name);
    if (!g) throw Error(ErrorCode::InvalidArgument, "unknown grade '" + name + "'");
    return *g;
}

std::vector<features::FeatureVector> rows_of(const Array& a) {
    if (a.ndim() != 2) throw Error(ErrorCode::InvalidArgument, "feature sets must be (n, d) arrays");
    std::vector<features::FeatureVector> out(static_cast<std::size_t>(a.shape(0)));
    const auto d = static_cast<std::size_t>(a.shape(1));
    for (std::size_t i = 0; i < out.size(); ++i) out[i].values.assign(a.data() + i * d, a.data() + (i + 1) * d);
    return out;
}

py::dict prediction_dict(const classify::Prediction& p) {
    py::dict d;
    d["grade"] = std::string(aqi::grade_name(p.grade));
    d["color"] = std::string(aqi::grade_info(p.grade).color_hex);
    d["probabilities"] = std::vector<double>(p.probabilities.begin(), p.probabilities.end());
    return d;
}

} // namespace

PYBIND11_MODULE(_skycast, m) {
    m.doc() = "Sky-image air quality estimation: Gabor features, AQI grading, classifiers, grade rendering.";

    // Raised instances carry .code (the ErrorCode name) and .position.
    PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> exc_type;
    exc_type.call_once_and_store_result([&] { return py::exception<Error>(m, "SkycastError", PyExc_ValueError); });
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            const py::object& type = exc_type.get_stored();
            py::object err = type(e.what());
            err.attr("code") = std::string(to_string(e.code()));
            err.attr("position") = e.position();
            PyErr_SetObject(type.ptr(), err.ptr());
        }
    });

    m.attr("WORKING_SIZE") = imaging::kWorkingSize;

    // imaging
    m.def("decode_image", [](py::bytes data) {
        const std::string s = data;
        return from_raster(imaging::decode_image(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())));
    }, py::arg("data"));
    m.def("encode_png", [](const Array& img) {
        const auto v = imaging::encode_png(to_raster(img));
        return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
    }, py::arg("image"));
    m.def("load_image", [](const std::filesystem::path& p) { return from_raster(imaging::load_image(p)); }, py::arg("path"));
    m.def("sky_mask", [](const Array& img) {
        const auto mask = imaging::heuristic_sky_mask(to_raster(img));
        py::array_t<bool> out({static_cast<py::ssize_t>(mask.height), static_cast<py::ssize_t>(mask.width)});
        for (std::size_t i = 0; i < mask.bits.size(); ++i) out.mutable_data()[i] = mask.bits[i] != 0;
        return out;
    }, py::arg("image"), "Heuristic sky mask, True on sky pixels.");

    // features
    m.def("gabor_kernels", [](double theta, double freq) {
        const auto k = features::make_gabor_kernels(features::GaborParams::for_frequency(theta, freq));
        return py::make_tuple(from_plane(k.even), from_plane(k.odd));
    }, py::arg("theta"), py::arg("freq"), "Zero-mean, unit-norm (even, odd) kernels.");
    m.def("convolve_2d", [](const Array& img, const Array& k) { return from_plane(features::convolve_2d(to_plane(img), to_plane(k))); },
          py::arg("plane"), py::arg("kernel"), "Clamp-to-edge convolution; output has the input's size.");
    m.def("magnitude_response", [](const Array& img, double theta, double freq) {
        return from_plane(features::magnitude_response(to_raster(img), features::GaborParams::for_frequency(theta, freq)));
    }, py::arg("image"), py::arg("theta"), py::arg("freq"));
    m.def("extract_features", [](const Array& img) {
        const auto fv = app::image_features(app::prepare_image(to_raster(img)), features::GaborBank::standard());
        return py::array_t<double>(static_cast<py::ssize_t>(fv.values.size()), fv.values.data());
    }, py::arg("image"), "48 moments of the standard bank on the prepared image.");

    // aqi
    m.def("sub_index", [](const std::string& pollutant, double conc) { return aqi::sub_index(pollutant, conc); },
          py::arg("pollutant"), py::arg("concentration"));
    m.def("composite_aqi", [](const std::map<std::string, double>& conc) {
        aqi::PollutantRecord rec;
        for (const auto& [key, v] : conc) {
            const auto p = aqi::parse_pollutant(key);
            if (!p) throw Error(ErrorCode::UnknownPollutant, "unknown pollutant '" + key + "'");
            rec.set(*p, v);
        }
        return aqi::composite_aqi(rec);
    }, py::arg("concentrations"));
    m.def("grade_of_aqi", [](double v) { return std::string(aqi::grade_name(aqi::grade_of_aqi(v))); }, py::arg("aqi"));
    m.def("grades", [] {
        py::list out;
        for (auto g : aqi::kAllGrades) {
            const auto& info = aqi::grade_info(g);
            py::dict d;
            d["name"] = std::string(info.name);
            d["id"] = std::string(aqi::grade_id(g));
            d["color"] = std::string(info.color_hex);
            d["aqi_lo"] = info.aqi_lo;
            d["aqi_hi"] = info.aqi_hi < 0 ? py::object(py::none()) : py::object(py::int_(info.aqi_hi));
            d["prompt"] = std::string(synth::prompt_for_grade(g));
            out.append(d);
        }
        return out;
    }, "Grade catalog in severity order.");

    // dataset
    m.def("stratified_split", [](const std::vector<std::string>& labels, std::uint64_t seed) {
        std::vector<dataset::ManifestEntry> es(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            es[i].image_path = std::to_string(i);
            es[i].grade = grade_arg(labels[i]);
        }
        std::vector<std::string> out;
        for (auto s : dataset::stratified_split(es, {}, seed).tags) out.emplace_back(dataset::split_name(s));
        return out;
    }, py::arg("labels"), py::arg("seed"), "70/15/15 per class; one split name per label.");
    m.def("generate_synthetic_dataset", [](const std::filesystem::path& out, int per_grade, int size, std::uint64_t seed) {
        dataset::SyntheticSkyConfig cfg;
        cfg.images_per_grade = per_grade;
        cfg.image_size = size;
        cfg.seed = seed;
        dataset::generate_synthetic_dataset(cfg, out);
        return out / "manifest.jsonl";
    }, py::arg("out_dir"), py::arg("per_grade") = 100, py::arg("size") = imaging::kWorkingSize, py::arg("seed") = 0,
       "Writes images and a manifest; returns the manifest path.");

    // classify
    m.def("evaluate", [](const std::vector<std::string>& y_true, const std::vector<std::string>& y_pred) {
        std::vector<aqi::Grade> t, p;
        for (const auto& s : y_true) t.push_back(grade_arg(s));
        for (const auto& s : y_pred) p.push_back(grade_arg(s));
        const auto r = classify::evaluate(t, p);
        py::dict d;
        d["accuracy"] = r.accuracy;
        d["macro_f1"] = r.macro_f1;
        return d;
    }, py::arg("y_true"), py::arg("y_pred"));

    // cnn
    m.def("shape_chain", [](const std::string& arch, int width, int height, int channels) {
        std::vector<std::tuple<int, int, int>> out;
        for (const auto& s : cnn::shape_chain(cnn::parse_arch(arch), {width, height, channels}))
            out.emplace_back(s.width, s.height, s.channels);
        return out;
    }, py::arg("arch"), py::arg("width"), py::arg("height"), py::arg("channels") = 3);

    // synth
    m.def("render_base_sky", [](int size, std::uint64_t seed) { return from_raster(synth::render_base_sky(size, seed)); },
          py::arg("size"), py::arg("seed"));
    m.def("render_variant", [](const Array& img, const std::string& target, std::uint64_t seed, const std::string& source) {
        return from_raster(synth::render_variant(to_raster(img), grade_arg(target), synth::RenderParams::defaults(), seed,
                                                 grade_arg(source)));
    }, py::arg("image"), py::arg("target"), py::arg("seed") = 0, py::arg("source") = "Good");
    m.def("ssim", [](const Array& a, const Array& b) { return synth::ssim(to_raster(a), to_raster(b)); }, py::arg("a"), py::arg("b"));
    m.def("frechet_distance", [](const Array& a, const Array& b) { return synth::frechet_feature_distance(rows_of(a), rows_of(b)); },
          py::arg("a"), py::arg("b"), "Diagonal-covariance Frechet distance between (n, d) feature sets.");

    // models
    py::class_<app::AnyModel>(m, "Model")
        .def_static("load", &app::load_model, py::arg("path"))
        .def_property_readonly("model_id", &app::AnyModel::model_id)
        .def_property_readonly("kind", [](const app::AnyModel& mdl) { return std::string(app::model_kind_name(mdl.kind())); })
        .def("predict", [](const app::AnyModel& mdl, const Array& img) { return prediction_dict(app::predict_image(mdl, to_raster(img))); },
             py::arg("image"))
        .def("save", [](const app::AnyModel& mdl, const std::filesystem::path& p) { app::save_model(mdl, p); }, py::arg("path"));

    m.def("train", [](const std::filesystem::path& manifest, const std::string& kind, std::uint64_t seed) {
        app::TrainOptions opts;
        if (kind == "rf") opts.kind = app::ModelKind::RandomForest;
        else if (kind == "knn") opts.kind = app::ModelKind::Knn;
        else if (kind == "cnn") opts.kind = app::ModelKind::Cnn;
        else throw Error(ErrorCode::InvalidArgument, "kind must be rf, knn or cnn");
        opts.forest.seed = seed;
        opts.cnn.seed = seed;
        py::gil_scoped_release release;
        return app::train_model(dataset::load_manifest(manifest), opts).model;
    }, py::arg("manifest"), py::arg("kind") = "rf", py::arg("seed") = 0, "Trains on every record of the manifest.");
}
