#include "taskmaml/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <functional>
#include <set>
#include <sstream>

#include "taskmaml/errors.hpp"
#include "taskmaml/io.hpp"

namespace taskmaml {

namespace {

struct Field {
    std::string section;
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& name, const std::string& value, const std::string& expected) {
    throw ConfigError(name + ": invalid value '" + value + "' (expected " + expected + ")");
}

double as_double(const std::string& name, const std::string& v) {
    double out = 0.0;
    const auto t = trim(v);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) bad_value(name, v, "a number");
    return out;
}

std::uint64_t as_u64(const std::string& name, const std::string& v) {
    std::uint64_t out = 0;
    const auto t = trim(v);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) bad_value(name, v, "a non-negative integer");
    return out;
}

bool as_bool(const std::string& name, const std::string& v) {
    const auto t = trim(v);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    bad_value(name, v, "true or false");
}

std::vector<std::size_t> as_list(const std::string& name, const std::string& v) {
    std::vector<std::size_t> out;
    const auto t = trim(v);
    if (t.empty()) return out;
    for (const auto& item : io::split_csv_line(t)) out.push_back(as_u64(name, item));
    return out;
}

std::string list_str(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

template <typename T>
Field number(std::string section, std::string key, T RunConfig::*group, double T::*member) {
    const std::string name = section + "." + key;
    return {section, key, [=](RunConfig& c, const std::string& v) { (c.*group).*member = as_double(name, v); },
            [=](const RunConfig& c) { return io::format_double((c.*group).*member); }};
}

template <typename T, typename U>
Field count(std::string section, std::string key, T RunConfig::*group, U T::*member) {
    const std::string name = section + "." + key;
    return {section, key,
            [=](RunConfig& c, const std::string& v) { (c.*group).*member = static_cast<U>(as_u64(name, v)); },
            [=](const RunConfig& c) { return std::to_string((c.*group).*member); }};
}

template <typename T>
Field flag(std::string section, std::string key, T RunConfig::*group, bool T::*member) {
    const std::string name = section + "." + key;
    return {section, key, [=](RunConfig& c, const std::string& v) { (c.*group).*member = as_bool(name, v); },
            [=](const RunConfig& c) { return bool_str((c.*group).*member); }};
}

template <typename T>
Field text(std::string section, std::string key, T RunConfig::*group, std::string T::*member) {
    return {section, key, [=](RunConfig& c, const std::string& v) { (c.*group).*member = trim(v); },
            [=](const RunConfig& c) { return (c.*group).*member; }};
}

OptimizerKind as_optimizer(const std::string& name, const std::string& v) {
    const auto t = trim(v);
    if (t == "adam") return OptimizerKind::adam;
    if (t == "sgd") return OptimizerKind::sgd;
    bad_value(name, v, "adam or sgd");
}

std::string optimizer_str(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        using R = RunConfig;
        // backbone
        f.push_back({"backbone", "conv_channels",
                     [](R& c, const std::string& v) { c.backbone.conv_channels = as_list("backbone.conv_channels", v); },
                     [](const R& c) { return list_str(c.backbone.conv_channels); }});
        f.push_back(count("backbone", "kernel_size", &R::backbone, &BackboneConfig::kernel_size));
        f.push_back(count("backbone", "pool_size", &R::backbone, &BackboneConfig::pool_size));
        f.push_back(flag("backbone", "use_batchnorm", &R::backbone, &BackboneConfig::use_batchnorm));
        f.push_back(count("backbone", "seed", &R::backbone, &BackboneConfig::seed));
        f.push_back({"backbone", "precision",
                     [](R& c, const std::string& v) {
                         const auto t = trim(v);
                         if (t == "f32") c.backbone.precision = Precision::f32;
                         else if (t == "f64") c.backbone.precision = Precision::f64;
                         else bad_value("backbone.precision", v, "f32 or f64");
                     },
                     [](const R& c) { return std::string(c.backbone.precision == Precision::f32 ? "f32" : "f64"); }});
        // meta
        f.push_back(number("meta", "alpha", &R::meta, &MetaConfig::alpha));
        f.push_back(number("meta", "beta", &R::meta, &MetaConfig::beta));
        f.push_back(count("meta", "inner_steps_train", &R::meta, &MetaConfig::inner_steps_train));
        f.push_back(count("meta", "meta_batch_size", &R::meta, &MetaConfig::meta_batch_size));
        f.push_back({"meta", "gradient_order",
                     [](R& c, const std::string& v) {
                         const auto t = trim(v);
                         if (t == "exact") c.meta.gradient_order = GradientOrder::exact;
                         else if (t == "first_order") c.meta.gradient_order = GradientOrder::first_order;
                         else bad_value("meta.gradient_order", v, "exact or first_order");
                     },
                     [](const R& c) {
                         return std::string(c.meta.gradient_order == GradientOrder::exact ? "exact" : "first_order");
                     }});
        f.push_back({"meta", "outer_optimizer",
                     [](R& c, const std::string& v) { c.meta.outer_optimizer = as_optimizer("meta.outer_optimizer", v); },
                     [](const R& c) { return optimizer_str(c.meta.outer_optimizer); }});
        f.push_back({"meta", "adam_beta1", [](R& c, const std::string& v) { c.meta.adam.beta1 = as_double("meta.adam_beta1", v); },
                     [](const R& c) { return io::format_double(c.meta.adam.beta1); }});
        f.push_back({"meta", "adam_beta2", [](R& c, const std::string& v) { c.meta.adam.beta2 = as_double("meta.adam_beta2", v); },
                     [](const R& c) { return io::format_double(c.meta.adam.beta2); }});
        f.push_back({"meta", "adam_epsilon",
                     [](R& c, const std::string& v) { c.meta.adam.epsilon = as_double("meta.adam_epsilon", v); },
                     [](const R& c) { return io::format_double(c.meta.adam.epsilon); }});
        f.push_back(count("meta", "meta_iterations", &R::meta, &MetaConfig::meta_iterations));
        f.push_back(count("meta", "shots_train", &R::meta, &MetaConfig::shots_train));
        f.push_back(count("meta", "seed", &R::meta, &MetaConfig::seed));
        f.push_back(count("meta", "patience", &R::meta, &MetaConfig::patience));
        f.push_back(count("meta", "validation_interval", &R::meta, &MetaConfig::validation_interval));
        f.push_back(count("meta", "threads", &R::meta, &MetaConfig::threads));
        // baseline: optimizer, rate and seed follow the meta section
        f.push_back({"baseline", "iterations",
                     [](R& c, const std::string& v) {
                         if (trim(v) == "auto") c.baseline.iterations.reset();
                         else c.baseline.iterations = as_u64("baseline.iterations", v);
                     },
                     [](const R& c) {
                         return c.baseline.iterations ? std::to_string(*c.baseline.iterations) : std::string("auto");
                     }});
        f.push_back(count("baseline", "batch_per_class", &R::baseline, &BaselineConfig::batch_per_class));
        // eval
        f.push_back({"eval", "k_values", [](R& c, const std::string& v) { c.eval.k_values = as_list("eval.k_values", v); },
                     [](const R& c) { return list_str(c.eval.k_values); }});
        f.push_back(count("eval", "steps", &R::eval, &EvalConfig::steps));
        f.push_back(count("eval", "repetitions", &R::eval, &EvalConfig::repetitions));
        f.push_back(count("eval", "eval_per_class", &R::eval, &EvalConfig::eval_per_class));
        f.push_back(number("eval", "alpha", &R::eval, &EvalConfig::alpha));
        f.push_back(count("eval", "seed", &R::eval, &EvalConfig::seed));
        f.push_back(count("eval", "threads", &R::eval, &EvalConfig::threads));
        f.push_back({"eval", "sweep_max_steps",
                     [](R& c, const std::string& v) { c.sweep_max_steps = as_u64("eval.sweep_max_steps", v); },
                     [](const R& c) { return std::to_string(c.sweep_max_steps); }});
        // synth
        f.push_back(count("synth", "n_subjects", &R::synth, &SynthConfig::n_subjects));
        f.push_back(count("synth", "n_attributes", &R::synth, &SynthConfig::n_attributes));
        f.push_back(count("synth", "examples_per_subject", &R::synth, &SynthConfig::examples_per_subject));
        f.push_back(count("synth", "feature_dim", &R::synth, &SynthConfig::feature_dim));
        f.push_back(number("synth", "subject_shift_scale", &R::synth, &SynthConfig::subject_shift_scale));
        f.push_back(number("synth", "attribute_overlap", &R::synth, &SynthConfig::attribute_overlap));
        f.push_back(number("synth", "positive_rate_min", &R::synth, &SynthConfig::positive_rate_min));
        f.push_back(number("synth", "positive_rate_max", &R::synth, &SynthConfig::positive_rate_max));
        f.push_back(number("synth", "noise_scale", &R::synth, &SynthConfig::noise_scale));
        f.push_back(number("synth", "nonlinear_scale", &R::synth, &SynthConfig::nonlinear_scale));
        f.push_back(flag("synth", "render_image", &R::synth, &SynthConfig::render_image));
        f.push_back(count("synth", "seed", &R::synth, &SynthConfig::seed));
        // paths
        f.push_back(text("paths", "dataset", &R::paths, &PathsConfig::dataset));
        f.push_back(text("paths", "target_dataset", &R::paths, &PathsConfig::target_dataset));
        f.push_back(text("paths", "checkpoint_dir", &R::paths, &PathsConfig::checkpoint_dir));
        f.push_back(text("paths", "report_dir", &R::paths, &PathsConfig::report_dir));
        return f;
    }();
    return table;
}

const Field* find_field(const std::string& section, const std::string& key) {
    for (const auto& f : fields()) {
        if (f.section == section && f.key == key) return &f;
    }
    return nullptr;
}

void check(const RunConfig& c) {
    MetaConfig meta = c.meta;
    if (meta.meta_batch_size == 0) meta.meta_batch_size = 1;  // resolved from the dataset later
    meta.validate();
    c.eval.validate();
    c.synth.validate();
    if (c.baseline.batch_per_class < 1) throw ConfigError("baseline.batch_per_class must be >= 1");
    if (c.sweep_max_steps < 1) throw ConfigError("eval.sweep_max_steps must be >= 1");
    if (c.backbone.kernel_size % 2 == 0) throw ConfigError("backbone.kernel_size must be odd");
    if (c.backbone.pool_size < 1) throw ConfigError("backbone.pool_size must be >= 1");
}

}  // namespace

void apply_override(RunConfig& config, const std::string& dotted_key, const std::string& value) {
    const auto dot = dotted_key.find('.');
    if (dot == std::string::npos) throw ConfigError("override '" + dotted_key + "' must be section.key");
    const auto* f = find_field(dotted_key.substr(0, dot), dotted_key.substr(dot + 1));
    if (!f) throw ConfigError("unknown config key '" + dotted_key + "'");
    f->set(config, value);
    check(config);
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    RunConfig config;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError(origin + ": key '" + section + "' appears outside any section");
        }
        bool known_section = false;
        for (const auto& f : fields()) known_section |= f.section == section;
        if (!known_section) throw ConfigError(origin + ": unknown section [" + section + "]");
        for (const auto& [key, value] : body) {
            const auto* f = find_field(section, key);
            if (!f) throw ConfigError(origin + ": unknown config key '" + section + "." + key + "'");
            f->set(config, value.data());
        }
    }
    check(config);
    return config;
}

RunConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    return parse_config(io::read_file(path), path.string());
}

std::string to_ini(const RunConfig& config) {
    std::string out;
    std::string current;
    for (const auto& f : fields()) {
        if (f.section != current) {
            out += (current.empty() ? "" : "\n") + std::string("[") + f.section + "]\n";
            current = f.section;
        }
        out += f.key + " = " + f.get(config) + "\n";
    }
    return out;
}

}  // namespace taskmaml
