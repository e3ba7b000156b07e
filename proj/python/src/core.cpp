#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tcedit/cli.hpp"
#include "tcedit/diagnostics.hpp"
#include "tcedit/edit.hpp"
#include "tcedit/error.hpp"
#include "tcedit/eval.hpp"
#include "tcedit/io.hpp"

namespace py = pybind11;
using namespace tcedit;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> matrix_from(const FloatArray& a, const char* what) {
    if (a.ndim() != 2) {
        throw py::value_error(std::string(what) + " must be a 2-d array");
    }
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto cols = static_cast<std::size_t>(a.shape(1));
    return Tensor<float>({rows, cols}, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_array(const Shape& shape, std::span<const float> values) {
    std::vector<py::ssize_t> dims(shape.begin(), shape.end());
    py::array_t<float> out(dims);
    std::copy(values.begin(), values.end(), out.mutable_data());
    return out;
}

struct Model {
    ModelParams<float> params;

    std::vector<double> scores(const FloatArray& history, const FloatArray& context) const {
        auto h = matrix_from(history, "history");
        auto c = matrix_from(context, "context");
        std::vector<Sample> batch;
        for (std::size_t j = 0; j < c.dim(0); ++j) {
            batch.push_back(Sample{h, c, j, 0, {}});
        }
        std::vector<double> out;
        for (const auto& s : forward_batch(params, std::span<const Sample>(batch))) {
            out.push_back(s.score);
        }
        return out;
    }
};

std::vector<ScoredGroup> to_groups(const std::vector<std::pair<std::vector<double>, std::vector<int>>>& groups) {
    std::vector<ScoredGroup> out;
    for (const auto& [scores, labels] : groups) {
        out.push_back({scores, labels});
    }
    return out;
}

py::dict report_dict(const EvalReport& r) {
    py::dict d;
    d["precision_at_half"] = r.precision_at_half;
    d["average_precision"] = r.average_precision;
    d["track_accuracy"] = r.track_accuracy;
    d["instance_count"] = r.instance_count;
    d["group_count"] = r.group_count;
    d["positives_count"] = r.positives_count;
    d["no_predicted_positive"] = r.no_predicted_positive;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Core bindings: data generation, model, training, metrics and editing.";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);

    py::enum_<StreamMode>(m, "StreamMode")
        .value("joint", StreamMode::joint)
        .value("contextual_only", StreamMode::contextual_only)
        .value("temporal_only", StreamMode::temporal_only);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("d_in", &ModelConfig::d_in)
        .def_readwrite("d_model", &ModelConfig::d_model)
        .def_readwrite("n_heads", &ModelConfig::n_heads)
        .def_readwrite("n_layers_t", &ModelConfig::n_layers_t)
        .def_readwrite("n_layers_c", &ModelConfig::n_layers_c)
        .def_readwrite("window", &ModelConfig::window)
        .def_readwrite("d_ff", &ModelConfig::d_ff)
        .def_readwrite("d_fuse", &ModelConfig::d_fuse)
        .def_readwrite("use_track_embedding", &ModelConfig::use_track_embedding)
        .def_readwrite("max_tracks", &ModelConfig::max_tracks)
        .def_readwrite("seed", &ModelConfig::seed)
        .def_readwrite("streams", &ModelConfig::streams)
        .def("problems", &ModelConfig::problems)
        .def(py::self == py::self)
        .def("__repr__", [](const ModelConfig& c) { return "ModelConfig(" + nlohmann::json(c).dump() + ")"; });

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("beta1", &TrainConfig::beta1)
        .def_readwrite("beta2", &TrainConfig::beta2)
        .def_readwrite("adam_eps", &TrainConfig::adam_eps)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("step", &TrainConfig::step)
        .def_readwrite("groups_per_boundary", &TrainConfig::groups_per_boundary)
        .def("problems", &TrainConfig::problems);

    py::class_<SyntheticSpec>(m, "SyntheticSpec")
        .def(py::init<>())
        .def_readwrite("tracks", &SyntheticSpec::tracks)
        .def_readwrite("width", &SyntheticSpec::width)
        .def_readwrite("duration_frames", &SyntheticSpec::duration_frames)
        .def_readwrite("fps", &SyntheticSpec::fps)
        .def_readwrite("min_shot_frames", &SyntheticSpec::min_shot_frames)
        .def_readwrite("switch_margin", &SyntheticSpec::switch_margin)
        .def_readwrite("smoothness", &SyntheticSpec::smoothness)
        .def_readwrite("noise", &SyntheticSpec::noise)
        .def_readwrite("seed", &SyntheticSpec::seed)
        .def_readwrite("rule_seed", &SyntheticSpec::rule_seed)
        .def("problems", &SyntheticSpec::problems);

    py::class_<EditOptions>(m, "EditOptions")
        .def(py::init<>())
        .def_readwrite("decision_stride", &EditOptions::decision_stride)
        .def_readwrite("min_shot_frames", &EditOptions::min_shot_frames);

    py::class_<FeaturePool>(m, "FeaturePool")
        .def(py::init([](const FloatArray& features, double fps) {
                 if (features.ndim() != 3) {
                     throw py::value_error("features must be a frames x tracks x width array");
                 }
                 FeaturePool pool(static_cast<std::size_t>(features.shape(0)),
                                  static_cast<std::size_t>(features.shape(1)),
                                  static_cast<std::size_t>(features.shape(2)), fps);
                 std::copy(features.data(), features.data() + features.size(), pool.features.begin());
                 pool.validate();
                 return pool;
             }),
             py::arg("features"), py::arg("fps") = 24.0)
        .def_readonly("frames", &FeaturePool::frames)
        .def_readonly("tracks", &FeaturePool::tracks)
        .def_readonly("width", &FeaturePool::width)
        .def_readonly("fps", &FeaturePool::fps)
        .def_property_readonly("features",
                               [](const FeaturePool& p) {
                                   return to_array({p.frames, p.tracks, p.width}, p.features);
                               })
        .def(py::self == py::self);

    py::class_<EditAnnotation>(m, "EditAnnotation")
        .def(py::init([](std::vector<TrackIndex> selected, std::size_t tracks) {
                 EditAnnotation a{tracks, std::move(selected)};
                 a.validate();
                 return a;
             }),
             py::arg("selected"), py::arg("tracks"))
        .def_readonly("tracks", &EditAnnotation::tracks)
        .def_readonly("selected", &EditAnnotation::selected)
        .def_property_readonly("frames", &EditAnnotation::frames)
        .def(py::self == py::self);

    py::class_<Shot>(m, "Shot")
        .def(py::init<std::size_t, std::size_t, std::size_t>(), py::arg("start"), py::arg("end"), py::arg("track"))
        .def_readwrite("start", &Shot::start)
        .def_readwrite("end", &Shot::end)
        .def_readwrite("track", &Shot::track)
        .def(py::self == py::self)
        .def("__repr__", [](const Shot& s) {
            return "Shot(" + std::to_string(s.start) + ", " + std::to_string(s.end) + ", " +
                   std::to_string(s.track) + ")";
        });

    py::class_<Scene>(m, "Scene")
        .def(py::init<std::string, FeaturePool, EditAnnotation>(), py::arg("id"), py::arg("pool"),
             py::arg("annotation"))
        .def_readonly("id", &Scene::id)
        .def_readonly("pool", &Scene::pool)
        .def_readonly("annotation", &Scene::annotation);

    py::class_<EvalReport>(m, "EvalReport")
        .def_readonly("precision_at_half", &EvalReport::precision_at_half)
        .def_readonly("average_precision", &EvalReport::average_precision)
        .def_readonly("track_accuracy", &EvalReport::track_accuracy)
        .def_readonly("instance_count", &EvalReport::instance_count)
        .def_readonly("group_count", &EvalReport::group_count)
        .def_readonly("positives_count", &EvalReport::positives_count)
        .def_readonly("no_predicted_positive", &EvalReport::no_predicted_positive)
        .def("to_dict", &report_dict)
        .def(py::self == py::self);

    py::class_<Model>(m, "Model")
        .def_property_readonly("config", [](const Model& mdl) { return mdl.params.config; })
        .def("parameter_names",
             [](const Model& mdl) {
                 std::vector<std::string> names;
                 for (const auto& p : mdl.params.named()) {
                     names.push_back(p.name);
                 }
                 return names;
             })
        .def("parameter",
             [](const Model& mdl, const std::string& name) {
                 for (const auto& p : mdl.params.named()) {
                     if (p.name == name) {
                         return to_array(p.tensor.shape(), p.tensor.data());
                     }
                 }
                 throw py::key_error(name);
             })
        .def("predict_score",
             [](const Model& mdl, const FloatArray& history, const FloatArray& context, std::size_t track) {
                 return predict_score(mdl.params, matrix_from(history, "history"), matrix_from(context, "context"),
                                      track);
             },
             py::arg("history"), py::arg("context"), py::arg("track"))
        .def("scores", &Model::scores, py::arg("history"), py::arg("context"),
             "Scores of every track of `context` against one history.");

    m.def("init_params", [](const ModelConfig& c) { return Model{init_params(c)}; }, py::arg("config"));
    m.def("tiny_model_config", &tiny_model_config);

    m.def("generate_synthetic_show",
          [](const SyntheticSpec& spec) {
              auto show = generate_synthetic_show(spec);
              return py::make_tuple(show.pool, show.annotation);
          },
          py::arg("spec"), "Returns (pool, annotation).");
    m.def("shots_from_annotation", &shots_from_annotation, py::arg("annotation"));
    m.def("annotation_from_shots",
          [](const std::vector<Shot>& shots, std::size_t frames, std::size_t tracks) {
              return annotation_from_shots(shots, frames, tracks);
          },
          py::arg("shots"), py::arg("frames"), py::arg("tracks"));
    m.def("split_scenes", &split_scenes<Scene>, py::arg("scenes"), py::arg("seed"));

    m.def("precision_at",
          [](const std::vector<double>& scores, const std::vector<int>& labels, double tau) {
              return precision_at(scores, labels, tau);
          },
          py::arg("scores"), py::arg("labels"), py::arg("tau") = 0.5);
    m.def("average_precision",
          [](const std::vector<double>& scores, const std::vector<int>& labels) {
              return average_precision(scores, labels);
          },
          py::arg("scores"), py::arg("labels"));
    m.def("track_accuracy",
          [](const std::vector<std::pair<std::vector<double>, std::vector<int>>>& groups) {
              return track_accuracy(to_groups(groups));
          },
          py::arg("groups"), "groups: list of (scores, labels) pairs.");
    m.def("random_baseline",
          [](const std::vector<std::pair<std::vector<double>, std::vector<int>>>& groups, std::uint64_t seed) {
              return random_baseline(to_groups(groups), seed);
          },
          py::arg("groups"), py::arg("seed") = 0);

    m.def("train",
          [](const std::vector<Scene>& scenes, const ModelConfig& mc, const TrainConfig& tc) {
              TrainResult result = [&] {
                  py::gil_scoped_release release;
                  return train(scenes, mc, tc);
              }();
              std::vector<std::tuple<std::size_t, std::size_t, double>> curve;
              for (const auto& e : result.curve) {
                  curve.emplace_back(e.step, e.epoch, e.mean_loss);
              }
              return py::make_tuple(Model{std::move(result.params)}, curve);
          },
          py::arg("scenes"), py::arg("model_config"), py::arg("train_config"),
          "Returns (model, [(step, epoch, mean_loss), ...]).");
    m.def("evaluate",
          [](const Model& mdl, const std::vector<Scene>& scenes, std::size_t step, std::size_t groups_per_boundary) {
              py::gil_scoped_release release;
              return evaluate(mdl.params, scenes, {mdl.params.config.window, step, groups_per_boundary});
          },
          py::arg("model"), py::arg("scenes"), py::arg("step") = 5, py::arg("groups_per_boundary") = 6);
    m.def("autoregressive_edit",
          [](const Model& mdl, const FeaturePool& pool, const EditOptions& options) {
              py::gil_scoped_release release;
              return autoregressive_edit(mdl.params, pool, options);
          },
          py::arg("model"), py::arg("pool"), py::arg("options") = EditOptions{});
    m.def("gradcheck_model",
          [](const ModelConfig& config, std::size_t tracks, std::size_t groups, std::uint64_t seed) {
              const auto report = gradcheck_model(config, {tracks, groups, seed});
              py::list tensors;
              for (const auto& t : report.tensors) {
                  tensors.append(py::make_tuple(t.name, t.count, t.worst_relative_error, t.passed));
              }
              py::dict d;
              d["passed"] = report.passed();
              d["worst"] = report.worst();
              d["tensors"] = tensors;
              return d;
          },
          py::arg("config"), py::arg("tracks") = 3, py::arg("groups") = 2, py::arg("seed") = 0);

    m.def("save_pool", &save_pool, py::arg("path"), py::arg("pool"));
    m.def("load_pool", &load_pool, py::arg("path"));
    m.def("save_annotation", &save_annotation, py::arg("path"), py::arg("annotation"));
    m.def("load_annotation", &load_annotation, py::arg("path"));
    m.def("save_checkpoint", [](const std::filesystem::path& path, const Model& mdl) { save_checkpoint(path, mdl.params); },
          py::arg("path"), py::arg("model"));
    m.def("load_checkpoint", [](const std::filesystem::path& path) { return Model{load_checkpoint(path)}; },
          py::arg("path"));

    m.def("run_cli",
          [](const std::vector<std::string>& args) {
              std::ostringstream out;
              std::ostringstream err;
              int code = 0;
              {
                  py::gil_scoped_release release;
                  code = run_cli(args, out, err);
              }
              return py::make_tuple(code, out.str(), err.str());
          },
          py::arg("args"), "Runs a subcommand; returns (exit_code, stdout, stderr).");
}
