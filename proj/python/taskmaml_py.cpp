#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "taskmaml/baseline.hpp"
#include "taskmaml/checkpoint.hpp"
#include "taskmaml/errors.hpp"
#include "taskmaml/evalharness.hpp"
#include "taskmaml/meta.hpp"
#include "taskmaml/synthgen.hpp"
#include "taskmaml/taskbank.hpp"

namespace py = pybind11;
using namespace taskmaml;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(std::span<const double> values) {
    py::array_t<double> out(static_cast<py::ssize_t>(values.size()));
    std::copy(values.begin(), values.end(), out.mutable_data());
    return out;
}

ParameterVector params_from(const Backbone& net, const Array& values) {
    if (values.ndim() != 1 || static_cast<std::size_t>(values.size()) != net.parameter_count()) {
        throw ShapeError("expected a flat array of " + std::to_string(net.parameter_count()) + " parameters");
    }
    return ParameterVector(net.layout(), std::vector<double>(values.data(), values.data() + values.size()));
}

/// inputs: (n, example_size); labels: (n,)
LabeledBatch batch_from(const Backbone& net, const Array& inputs, const Array& labels) {
    const std::size_t size = net.config().input.size();
    if (inputs.ndim() != 2 || static_cast<std::size_t>(inputs.shape(1)) != size || labels.ndim() != 1 ||
        inputs.shape(0) != labels.shape(0)) {
        throw ShapeError("expected inputs of shape (n, " + std::to_string(size) + ") and labels of shape (n,)");
    }
    LabeledBatch b;
    b.example_size = size;
    b.inputs.assign(inputs.data(), inputs.data() + inputs.size());
    b.labels.assign(labels.data(), labels.data() + labels.size());
    for (py::ssize_t i = 0; i < labels.shape(0); ++i) b.rows.push_back(static_cast<std::size_t>(i));
    return b;
}

py::dict plan_dict(const SplitPlan& plan) {
    py::dict d;
    d["held_out_subject"] = plan.held_out_subject;
    auto pairs = [](const std::vector<TaskId>& tasks) {
        py::list out;
        for (const auto& t : tasks) out.append(py::make_tuple(t.subject, t.attribute));
        return out;
    };
    d["train_tasks"] = pairs(plan.train_tasks);
    d["test_tasks"] = pairs(plan.test_tasks);
    return d;
}

py::dict report_dict(const EvalReport& r) {
    py::dict d;
    d["model"] = r.model;
    d["shots"] = r.shots;
    d["steps"] = r.steps;
    d["grand_mean"] = r.grand_mean;
    d["per_attribute"] = r.per_attribute;
    d["per_subject"] = r.per_subject;
    d["novel_attributes"] = r.novel_attributes;
    py::list tasks;
    for (const auto& t : r.tasks) {
        py::dict row;
        row["subject"] = t.task.subject;
        row["attribute"] = t.task.attribute;
        row["mean_accuracy"] = t.mean_accuracy;
        row["std_accuracy"] = t.std_accuracy;
        row["repetitions"] = t.repetitions;
        row["novel_attribute"] = t.novel_attribute;
        tasks.append(row);
    }
    d["tasks"] = tasks;
    return d;
}

FoldParameters folds_from(const Backbone& net, const std::map<std::string, Array>& folds) {
    FoldParameters out;
    for (const auto& [subject, values] : folds) out.emplace(subject, params_from(net, values));
    return out;
}

}  // namespace

PYBIND11_MODULE(taskmaml, m) {
    m.doc() = "Task-level meta-learning for few-shot attribute detection";

    auto base_error = py::register_exception<Error>(m, "Error");
    py::register_exception<ConfigError>(m, "ConfigError", base_error);
    py::register_exception<ShapeError>(m, "ShapeError", base_error);
    py::register_exception<DataError>(m, "DataError", base_error);

    py::enum_<Precision>(m, "Precision").value("f32", Precision::f32).value("f64", Precision::f64);
    py::enum_<GradientOrder>(m, "GradientOrder")
        .value("exact", GradientOrder::exact)
        .value("first_order", GradientOrder::first_order);
    py::enum_<OptimizerKind>(m, "OptimizerKind").value("sgd", OptimizerKind::sgd).value("adam", OptimizerKind::adam);

    py::class_<SynthConfig>(m, "SynthConfig")
        .def(py::init<>())
        .def_readwrite("n_subjects", &SynthConfig::n_subjects)
        .def_readwrite("n_attributes", &SynthConfig::n_attributes)
        .def_readwrite("examples_per_subject", &SynthConfig::examples_per_subject)
        .def_readwrite("feature_dim", &SynthConfig::feature_dim)
        .def_readwrite("subject_shift_scale", &SynthConfig::subject_shift_scale)
        .def_readwrite("attribute_overlap", &SynthConfig::attribute_overlap)
        .def_readwrite("positive_rate_min", &SynthConfig::positive_rate_min)
        .def_readwrite("positive_rate_max", &SynthConfig::positive_rate_max)
        .def_readwrite("noise_scale", &SynthConfig::noise_scale)
        .def_readwrite("nonlinear_scale", &SynthConfig::nonlinear_scale)
        .def_readwrite("render_image", &SynthConfig::render_image)
        .def_readwrite("seed", &SynthConfig::seed);

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("subjects", &Dataset::subjects)
        .def_readonly("attributes", &Dataset::attributes)
        .def_property_readonly("n_examples", [](const Dataset& d) { return d.examples.size(); })
        .def_property_readonly("example_size", [](const Dataset& d) { return d.shape.size(); })
        .def_property_readonly("is_image", [](const Dataset& d) { return d.shape.kind == InputKind::image; })
        .def_property_readonly("example_ids",
                               [](const Dataset& d) {
                                   std::vector<std::string> ids;
                                   for (const auto& e : d.examples) ids.push_back(e.id);
                                   return ids;
                               })
        .def("features",
             [](const Dataset& d) {
                 py::array_t<float> out({d.examples.size(), d.shape.size()});
                 std::copy(d.payload.begin(), d.payload.end(), out.mutable_data());
                 return out;
             })
        .def("labels",
             [](const Dataset& d) {
                 py::array_t<std::int8_t> out({d.examples.size(), d.attributes.size()});
                 std::copy(d.labels.begin(), d.labels.end(), out.mutable_data());
                 return out;
             });

    m.def("generate_bank", &generate_bank, py::arg("config"));
    m.def("load_dataset", &load_dataset, py::arg("path"));
    m.def("write_dataset", [](const Dataset& d, const std::filesystem::path& dir) { write_dataset(d, dir); },
          py::arg("dataset"), py::arg("directory"));
    m.def("subset", &subset, py::arg("dataset"), py::arg("subjects"), py::arg("attributes"));
    m.def("enumerate_tasks", [](const Dataset& d, const std::string& s) { return plan_dict(enumerate_tasks(d, s)); },
          py::arg("dataset"), py::arg("held_out_subject"));
    m.def("imbalance_stats", [](const Dataset& d) {
        py::list rows;
        for (const auto& r : imbalance_stats(d)) {
            rows.append(py::make_tuple(r.task.subject, r.task.attribute, r.labeled, r.positives, r.positive_fraction));
        }
        return rows;
    });

    py::class_<BackboneConfig>(m, "BackboneConfig")
        .def(py::init<>())
        .def_property(
            "input_shape",
            [](const BackboneConfig& c) {
                if (c.input.kind == InputKind::vector) return py::tuple(py::make_tuple(c.input.dim));
                return py::tuple(py::make_tuple(c.input.height, c.input.width, c.input.channels));
            },
            [](BackboneConfig& c, const std::vector<std::size_t>& s) {
                if (s.size() == 1) {
                    c.input = InputShape::vector(s[0]);
                } else if (s.size() == 3) {
                    c.input = InputShape::image(s[0], s[1], s[2]);
                } else {
                    throw ConfigError("input_shape must be (dim,) or (height, width, channels)");
                }
            })
        .def_readwrite("conv_channels", &BackboneConfig::conv_channels)
        .def_readwrite("kernel_size", &BackboneConfig::kernel_size)
        .def_readwrite("pool_size", &BackboneConfig::pool_size)
        .def_readwrite("use_batchnorm", &BackboneConfig::use_batchnorm)
        .def_readwrite("seed", &BackboneConfig::seed)
        .def_readwrite("precision", &BackboneConfig::precision);

    py::class_<Backbone>(m, "Backbone")
        .def(py::init<BackboneConfig>(), py::arg("config"))
        .def_property_readonly("config", &Backbone::config)
        .def_property_readonly("parameter_count", &Backbone::parameter_count)
        .def("init_params", [](const Backbone& b, std::uint64_t seed) { return to_numpy(b.init_params(seed).values()); },
             py::arg("seed"))
        .def("forward",
             [](const Backbone& b, const Array& p, const Array& x, const Array& y) {
                 const auto probs = b.forward(params_from(b, p), batch_from(b, x, y));
                 return to_numpy(probs);
             },
             py::arg("params"), py::arg("inputs"), py::arg("labels"))
        .def("loss", [](const Backbone& b, const Array& p, const Array& x, const Array& y) {
                 return b.loss(params_from(b, p), batch_from(b, x, y));
             },
             py::arg("params"), py::arg("inputs"), py::arg("labels"))
        .def("gradient",
             [](const Backbone& b, const Array& p, const Array& x, const Array& y) {
                 return to_numpy(b.gradient(params_from(b, p), batch_from(b, x, y)).values());
             },
             py::arg("params"), py::arg("inputs"), py::arg("labels"))
        .def("adapt",
             [](const Backbone& b, const Array& p, const Array& x, const Array& y, double alpha, std::size_t steps) {
                 return to_numpy(adapt(b, params_from(b, p), batch_from(b, x, y), alpha, steps).values());
             },
             py::arg("params"), py::arg("inputs"), py::arg("labels"), py::arg("alpha"), py::arg("steps"))
        .def("meta_gradient",
             [](const Backbone& b, const Array& p, const std::vector<std::tuple<Array, Array, Array, Array>>& tasks,
                double alpha, std::size_t steps, GradientOrder order) {
                 std::vector<TaskEpisode> eps;
                 for (const auto& [sx, sy, qx, qy] : tasks) {
                     eps.push_back({{"", ""}, batch_from(b, sx, sy), batch_from(b, qx, qy)});
                 }
                 return to_numpy(meta_gradient(b, params_from(b, p), eps, alpha, steps, order).values());
             },
             py::arg("params"), py::arg("tasks"), py::arg("alpha"), py::arg("steps") = 1,
             py::arg("order") = GradientOrder::exact);

    py::class_<MetaConfig>(m, "MetaConfig")
        .def(py::init<>())
        .def_readwrite("alpha", &MetaConfig::alpha)
        .def_readwrite("beta", &MetaConfig::beta)
        .def_readwrite("inner_steps_train", &MetaConfig::inner_steps_train)
        .def_readwrite("meta_batch_size", &MetaConfig::meta_batch_size)
        .def_readwrite("gradient_order", &MetaConfig::gradient_order)
        .def_readwrite("outer_optimizer", &MetaConfig::outer_optimizer)
        .def_readwrite("meta_iterations", &MetaConfig::meta_iterations)
        .def_readwrite("shots_train", &MetaConfig::shots_train)
        .def_readwrite("seed", &MetaConfig::seed)
        .def_readwrite("patience", &MetaConfig::patience)
        .def_readwrite("validation_interval", &MetaConfig::validation_interval)
        .def_readwrite("threads", &MetaConfig::threads);

    py::class_<EvalConfig>(m, "EvalConfig")
        .def(py::init<>())
        .def_readwrite("k_values", &EvalConfig::k_values)
        .def_readwrite("steps", &EvalConfig::steps)
        .def_readwrite("repetitions", &EvalConfig::repetitions)
        .def_readwrite("eval_per_class", &EvalConfig::eval_per_class)
        .def_readwrite("alpha", &EvalConfig::alpha)
        .def_readwrite("seed", &EvalConfig::seed)
        .def_readwrite("threads", &EvalConfig::threads);

    m.def(
        "meta_train",
        [](const Backbone& b, const Dataset& d, const MetaConfig& c, std::optional<std::string> held_out) {
            const auto plan = held_out ? enumerate_tasks(d, *held_out) : enumerate_all_tasks(d);
            const auto cfg = c.resolved(d.attributes.size());
            TaskBankSource source(d, plan, cfg.shots_train);
            ParameterVector theta;
            {
                py::gil_scoped_release release;
                theta = meta_train(b, cfg, source);
            }
            return to_numpy(theta.values());
        },
        "Meta-trains on every task not belonging to the held-out subject",
        py::arg("backbone"), py::arg("dataset"), py::arg("config"), py::arg("held_out_subject") = py::none());

    m.def(
        "train_baseline",
        [](const Backbone& b, const Dataset& d, const MetaConfig& c, std::optional<std::string> held_out,
           std::optional<std::size_t> iterations, std::size_t batch_per_class) {
            const auto plan = held_out ? enumerate_tasks(d, *held_out) : enumerate_all_tasks(d);
            const auto meta = c.resolved(d.attributes.size());
            auto cfg = BaselineConfig::matching(meta);
            cfg.iterations = iterations;
            cfg.batch_per_class = batch_per_class;
            const auto merged = baseline_training_set(d, plan);
            ParameterVector theta;
            {
                py::gil_scoped_release release;
                theta = train_baseline(b, merged, cfg.resolved_iterations(meta), cfg);
            }
            return to_numpy(theta.values());
        },
        "Trains the merged-label baseline with the budget matched to the meta configuration",
        py::arg("backbone"), py::arg("dataset"), py::arg("config"), py::arg("held_out_subject") = py::none(),
        py::arg("iterations") = py::none(), py::arg("batch_per_class") = 5);

    m.def(
        "evaluate_task",
        [](const Backbone& b, const Array& p, const Dataset& d, const std::string& subject,
           const std::string& attribute, std::size_t shots, const EvalConfig& c) {
            return evaluate_task(b, params_from(b, p), d, {subject, attribute}, shots, c).accuracies;
        },
        py::arg("backbone"), py::arg("params"), py::arg("dataset"), py::arg("subject"), py::arg("attribute"),
        py::arg("shots"), py::arg("config"));

    m.def(
        "run_loso",
        [](const Backbone& b, const Dataset& d, const std::map<std::string, Array>& meta,
           const std::map<std::string, Array>& baseline, const EvalConfig& c) {
            py::list out;
            for (const auto& cmp : run_loso(b, d, folds_from(b, meta), folds_from(b, baseline), c)) {
                py::dict row;
                row["shots"] = cmp.shots;
                row["meta"] = report_dict(cmp.meta);
                row["baseline"] = report_dict(cmp.baseline);
                out.append(row);
            }
            return out;
        },
        py::arg("backbone"), py::arg("dataset"), py::arg("meta"), py::arg("baseline"), py::arg("config"));

    m.def(
        "cross_bank_eval",
        [](const Backbone& b, const Array& p, const Dataset& target, const std::vector<std::string>& training_attributes,
           std::size_t shots, const EvalConfig& c) {
            return report_dict(cross_bank_eval(b, params_from(b, p), target, training_attributes, shots, c));
        },
        py::arg("backbone"), py::arg("params"), py::arg("target"), py::arg("training_attributes"), py::arg("shots"),
        py::arg("config"));

    m.def(
        "save_checkpoint",
        [](const std::filesystem::path& path, const Backbone& b, const Array& p, const std::string& origin,
           std::optional<std::string> held_out, const std::vector<std::string>& attributes) {
            save_checkpoint(path, {b.config(), params_from(b, p), {origin, held_out, attributes}});
        },
        py::arg("path"), py::arg("backbone"), py::arg("params"), py::arg("origin"),
        py::arg("held_out_subject") = py::none(), py::arg("training_attributes") = std::vector<std::string>{});

    m.def(
        "load_checkpoint",
        [](const std::filesystem::path& path) {
            auto ck = load_checkpoint(path);
            py::dict d;
            d["backbone"] = Backbone(ck.config);
            d["params"] = to_numpy(ck.params.values());
            d["origin"] = ck.info.origin;
            d["held_out_subject"] = ck.info.held_out_subject;
            d["training_attributes"] = ck.info.training_attributes;
            return d;
        },
        py::arg("path"));
}
