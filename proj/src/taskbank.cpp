#include "taskmaml/taskbank.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

#include "taskmaml/errors.hpp"
#include "taskmaml/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace taskmaml {

std::size_t Dataset::subject_index(const std::string& name) const {
    auto it = std::find(subjects.begin(), subjects.end(), name);
    if (it == subjects.end()) throw UnknownIdError("unknown subject '" + name + "'");
    return static_cast<std::size_t>(it - subjects.begin());
}

std::size_t Dataset::attribute_index(const std::string& name) const {
    auto it = std::find(attributes.begin(), attributes.end(), name);
    if (it == attributes.end()) throw UnknownIdError("unknown attribute '" + name + "'");
    return static_cast<std::size_t>(it - attributes.begin());
}

bool Dataset::has_subject(const std::string& name) const {
    return std::find(subjects.begin(), subjects.end(), name) != subjects.end();
}

bool Dataset::has_attribute(const std::string& name) const {
    return std::find(attributes.begin(), attributes.end(), name) != attributes.end();
}

std::size_t Dataset::label_count() const {
    return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto v) { return v != kUnlabeled; }));
}

std::vector<std::size_t> Dataset::subject_rows(std::size_t subject) const {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < examples.size(); ++r) {
        if (examples[r].subject == subject) rows.push_back(r);
    }
    return rows;
}

void Dataset::validate() const {
    if (shape.size() == 0) throw DataError("dataset input shape is empty");
    if (payload.size() != examples.size() * shape.size()) {
        throw DataError("payload holds " + std::to_string(payload.size()) + " values, expected " +
                        std::to_string(examples.size() * shape.size()));
    }
    if (labels.size() != examples.size() * attributes.size()) throw DataError("label table size mismatch");
    std::unordered_set<std::string> ids;
    for (const auto& e : examples) {
        if (!ids.insert(e.id).second) throw DuplicateIdError("duplicate example_id '" + e.id + "'");
        if (e.subject >= subjects.size()) throw UnknownIdError("example '" + e.id + "' has no valid subject");
    }
    for (auto v : labels) {
        if (v != kUnlabeled && v != 0 && v != 1) throw DataError("label outside {0,1}");
    }
}

int binarize_intensity(int intensity) {
    if (intensity < 0 || intensity > 5) {
        throw DataError("intensity " + std::to_string(intensity) + " outside 0-5");
    }
    return intensity > 0 ? 1 : 0;
}

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
    if (!fs::exists(path)) throw MissingFileError("missing file", path.string());
    std::istringstream in(io::read_file(path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

void expect_header(const std::vector<std::string>& lines, const std::string& header, const fs::path& path) {
    if (lines.empty()) throw DataError("empty file, expected header '" + header + "'", path.string(), 1);
    std::string first = lines.front();
    if (!first.empty() && first.back() == '\r') first.pop_back();
    if (first != header) throw DataError("expected header '" + header + "', found '" + first + "'", path.string(), 1);
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

}  // namespace

Dataset load_dataset(const fs::path& manifest_path) {
    const fs::path dir = fs::is_directory(manifest_path) ? manifest_path : manifest_path.parent_path();
    const fs::path header_path = fs::is_directory(manifest_path) ? dir / "manifest.json" : manifest_path;
    if (!fs::exists(header_path)) throw MissingFileError("missing manifest header", header_path.string());

    json header;
    try {
        header = json::parse(io::read_file(header_path));
    } catch (const json::exception& e) {
        throw DataError(std::string("invalid JSON: ") + e.what(), header_path.string());
    }

    Dataset ds;
    LabelMode mode = LabelMode::binary;
    std::string payload_name;
    try {
        const auto kind = header.at("input_kind").get<std::string>();
        const auto shape = header.at("shape").get<std::vector<std::size_t>>();
        if (kind == "vector") {
            if (shape.size() != 1) throw DataError("vector shape must have one dimension", header_path.string());
            ds.shape = InputShape::vector(shape[0]);
        } else if (kind == "image") {
            if (shape.size() != 3) throw DataError("image shape must be [height, width, channels]", header_path.string());
            ds.shape = InputShape::image(shape[0], shape[1], shape[2]);
        } else {
            throw DataError("unknown input_kind '" + kind + "'", header_path.string());
        }
        const auto label_mode = header.value("label_mode", std::string("binary"));
        if (label_mode == "intensity") {
            mode = LabelMode::intensity;
        } else if (label_mode != "binary") {
            throw DataError("unknown label_mode '" + label_mode + "'", header_path.string());
        }
        payload_name = header.at("payload").get<std::string>();
        if (header.contains("subjects")) ds.subjects = header["subjects"].get<std::vector<std::string>>();
        if (header.contains("attributes")) ds.attributes = header["attributes"].get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed manifest: ") + e.what(), header_path.string());
    }
    const bool fixed_subjects = !ds.subjects.empty();
    const bool fixed_attributes = !ds.attributes.empty();

    // examples.csv
    const fs::path examples_path = dir / header.value("examples", std::string("examples.csv"));
    auto lines = read_lines(examples_path);
    expect_header(lines, "example_id,subject_id", examples_path);
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (blank(lines[ln])) continue;
        auto fields = io::split_csv_line(lines[ln]);
        if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
            throw DataError("expected 'example_id,subject_id'", examples_path.string(), ln + 1);
        }
        if (row_of.count(fields[0])) {
            throw DuplicateIdError("duplicate example_id '" + fields[0] + "'", examples_path.string(), ln + 1);
        }
        auto sit = std::find(ds.subjects.begin(), ds.subjects.end(), fields[1]);
        if (sit == ds.subjects.end()) {
            if (fixed_subjects) {
                throw UnknownIdError("subject '" + fields[1] + "' not declared in manifest", examples_path.string(),
                                     ln + 1);
            }
            ds.subjects.push_back(fields[1]);
            sit = ds.subjects.end() - 1;
        }
        row_of[fields[0]] = ds.examples.size();
        ds.examples.push_back({fields[0], static_cast<std::size_t>(sit - ds.subjects.begin())});
    }

    // labels.csv
    const fs::path labels_path = dir / header.value("labels", std::string("labels.csv"));
    lines = read_lines(labels_path);
    expect_header(lines, "example_id,subject_id,attribute_id,value", labels_path);
    struct Raw {
        std::size_t row, attribute;
        int value;
    };
    std::vector<Raw> raw;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> seen;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (blank(lines[ln])) continue;
        auto fields = io::split_csv_line(lines[ln]);
        if (fields.size() != 4) {
            throw DataError("expected 'example_id,subject_id,attribute_id,value'", labels_path.string(), ln + 1);
        }
        auto rit = row_of.find(fields[0]);
        if (rit == row_of.end()) {
            throw UnknownIdError("label row cites unknown example_id '" + fields[0] + "'", labels_path.string(),
                                 ln + 1);
        }
        const auto& ex = ds.examples[rit->second];
        if (ds.subjects[ex.subject] != fields[1]) {
            throw DataError("subject_id '" + fields[1] + "' disagrees with examples.csv ('" +
                                ds.subjects[ex.subject] + "')",
                            labels_path.string(), ln + 1);
        }
        auto ait = std::find(ds.attributes.begin(), ds.attributes.end(), fields[2]);
        if (ait == ds.attributes.end()) {
            if (fixed_attributes) {
                throw UnknownIdError("attribute '" + fields[2] + "' not declared in manifest", labels_path.string(),
                                     ln + 1);
            }
            ds.attributes.push_back(fields[2]);
            ait = ds.attributes.end() - 1;
        }
        int value = 0;
        const auto& v = fields[3];
        auto res = std::from_chars(v.data(), v.data() + v.size(), value);
        if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
            throw DataError("label value '" + v + "' is not an integer", labels_path.string(), ln + 1);
        }
        if (mode == LabelMode::binary) {
            if (value != 0 && value != 1) {
                throw DataError("binary label must be 0 or 1, got " + v, labels_path.string(), ln + 1);
            }
        } else {
            try {
                value = binarize_intensity(value);
            } catch (const DataError& e) {
                throw DataError(e.what(), labels_path.string(), ln + 1);
            }
        }
        const std::size_t attr = static_cast<std::size_t>(ait - ds.attributes.begin());
        if (!seen.emplace(std::make_pair(rit->second, attr), ln + 1).second) {
            throw DuplicateIdError("duplicate label for (" + fields[0] + ", " + fields[2] + ")", labels_path.string(),
                                   ln + 1);
        }
        raw.push_back({rit->second, attr, value});
    }
    ds.labels.assign(ds.examples.size() * ds.attributes.size(), kUnlabeled);
    for (const auto& r : raw) ds.labels[r.row * ds.attributes.size() + r.attribute] = static_cast<std::int8_t>(r.value);

    // payload
    const std::size_t row_size = ds.shape.size();
    const fs::path payload_path = dir / payload_name;
    if (!fs::exists(payload_path)) throw MissingFileError("missing payload", payload_path.string());
    if (fs::is_directory(payload_path)) {
        ds.payload.reserve(ds.examples.size() * row_size);
        for (const auto& ex : ds.examples) {
            const fs::path file = payload_path / (ex.id + ".f32");
            if (!fs::exists(file)) throw MissingFileError("missing image payload for '" + ex.id + "'", file.string());
            auto values = io::decode_f32_le(io::read_file(file));
            if (values.size() != row_size) {
                throw DataError("image payload has " + std::to_string(values.size()) + " values, expected " +
                                    std::to_string(row_size),
                                file.string());
            }
            ds.payload.insert(ds.payload.end(), values.begin(), values.end());
        }
    } else {
        ds.payload = io::decode_f32_le(io::read_file(payload_path));
        if (ds.payload.size() != ds.examples.size() * row_size) {
            throw DataError("payload holds " + std::to_string(ds.payload.size()) + " floats, expected " +
                                std::to_string(ds.examples.size()) + " rows x " + std::to_string(row_size),
                            payload_path.string());
        }
    }
    ds.validate();
    return ds;
}

void write_dataset(const Dataset& ds, const fs::path& dir, const WriteOptions& options) {
    ds.validate();
    fs::create_directories(dir);
    json header;
    header["format"] = "taskmaml-taskbank";
    header["version"] = 1;
    header["input_kind"] = ds.shape.kind == InputKind::vector ? "vector" : "image";
    header["shape"] = ds.shape.kind == InputKind::vector
                          ? std::vector<std::size_t>{ds.shape.dim}
                          : std::vector<std::size_t>{ds.shape.height, ds.shape.width, ds.shape.channels};
    header["label_mode"] = "binary";
    header["payload"] = options.payload == PayloadKind::features_file ? "features.f32" : "images";
    header["examples"] = "examples.csv";
    header["labels"] = "labels.csv";
    header["subjects"] = ds.subjects;
    header["attributes"] = ds.attributes;

    std::string examples = "example_id,subject_id\n";
    std::string labels = "example_id,subject_id,attribute_id,value\n";
    for (std::size_t r = 0; r < ds.examples.size(); ++r) {
        const auto& ex = ds.examples[r];
        const auto& subject = ds.subjects[ex.subject];
        examples += ex.id + "," + subject + "\n";
        for (std::size_t a = 0; a < ds.attributes.size(); ++a) {
            const auto v = ds.label(r, a);
            if (v == kUnlabeled) continue;
            labels += ex.id + "," + subject + "," + ds.attributes[a] + "," + std::to_string(v) + "\n";
        }
    }
    if (options.payload == PayloadKind::features_file) {
        io::write_file_atomic(dir / "features.f32", io::encode_f32_le(ds.payload));
    } else {
        for (std::size_t r = 0; r < ds.examples.size(); ++r) {
            io::write_file_atomic(dir / "images" / (ds.examples[r].id + ".f32"), io::encode_f32_le(ds.features(r)));
        }
    }
    io::write_file_atomic(dir / "examples.csv", examples);
    io::write_file_atomic(dir / "labels.csv", labels);
    io::write_file_atomic(dir / "manifest.json", header.dump(2) + "\n");
}

Dataset subset(const Dataset& ds, const std::vector<std::string>& subjects, const std::vector<std::string>& attributes) {
    Dataset out;
    out.shape = ds.shape;
    out.subjects = subjects;
    out.attributes = attributes;
    std::vector<std::size_t> attr_src;
    for (const auto& a : attributes) attr_src.push_back(ds.attribute_index(a));
    std::vector<std::ptrdiff_t> subject_map(ds.subjects.size(), -1);
    for (std::size_t i = 0; i < subjects.size(); ++i) subject_map[ds.subject_index(subjects[i])] = static_cast<std::ptrdiff_t>(i);
    for (std::size_t r = 0; r < ds.examples.size(); ++r) {
        const auto mapped = subject_map[ds.examples[r].subject];
        if (mapped < 0) continue;
        out.examples.push_back({ds.examples[r].id, static_cast<std::size_t>(mapped)});
        auto f = ds.features(r);
        out.payload.insert(out.payload.end(), f.begin(), f.end());
        for (auto a : attr_src) out.labels.push_back(ds.label(r, a));
    }
    out.validate();
    return out;
}

SplitPlan enumerate_tasks(const Dataset& ds, const std::string& held_out_subject) {
    if (!ds.has_subject(held_out_subject)) throw UnknownIdError("unknown held-out subject '" + held_out_subject + "'");
    SplitPlan plan;
    plan.held_out_subject = held_out_subject;
    for (const auto& s : ds.subjects) {
        for (const auto& a : ds.attributes) {
            if (s == held_out_subject) {
                plan.test_tasks.push_back({s, a});
            } else {
                plan.train_tasks.push_back({s, a});
            }
        }
    }
    return plan;
}

SplitPlan enumerate_all_tasks(const Dataset& ds) {
    SplitPlan plan;
    for (const auto& s : ds.subjects) {
        for (const auto& a : ds.attributes) plan.train_tasks.push_back({s, a});
    }
    return plan;
}

TaskPools task_pools(const Dataset& ds, const TaskId& task) {
    const std::size_t s = ds.subject_index(task.subject);
    const std::size_t a = ds.attribute_index(task.attribute);
    TaskPools pools;
    for (std::size_t r = 0; r < ds.examples.size(); ++r) {
        if (ds.examples[r].subject != s) continue;
        const auto v = ds.label(r, a);
        if (v == 1) {
            pools.positives.push_back(r);
        } else if (v == 0) {
            pools.negatives.push_back(r);
        }
    }
    return pools;
}

namespace {

SkippedTask deficit(const TaskId& task, const TaskPools& pools, std::size_t shots) {
    const std::size_t need = 2 * shots;
    SkippedTask out{task, 0, 0};
    if (pools.positives.size() < need) out.positive_deficit = need - pools.positives.size();
    if (pools.negatives.size() < need) out.negative_deficit = need - pools.negatives.size();
    return out;
}

// Removes and returns `count` uniformly chosen rows from `pool`.
std::vector<std::size_t> take(std::vector<std::size_t>& pool, std::size_t count, Rng& rng) {
    count = std::min(count, pool.size());
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    std::vector<std::size_t> out(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    pool.erase(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    return out;
}

void append_rows(LabeledBatch& batch, const Dataset& ds, std::span<const std::size_t> rows, std::size_t attribute) {
    for (auto r : rows) batch.push_back(ds.features(r), static_cast<double>(ds.label(r, attribute)), r);
}

// `total` rows aiming at per_class of each class; a short class is filled from the other.
LabeledBatch draw_filled(const Dataset& ds, TaskPools& pools, std::size_t per_class, std::size_t attribute, Rng& rng) {
    const std::size_t total = 2 * per_class;
    std::size_t pos = std::min(per_class, pools.positives.size());
    std::size_t neg = std::min(total - pos, pools.negatives.size());
    pos = std::min(total - neg, pools.positives.size());
    auto prow = take(pools.positives, pos, rng);
    auto nrow = take(pools.negatives, neg, rng);
    LabeledBatch batch;
    batch.example_size = ds.shape.size();
    append_rows(batch, ds, prow, attribute);
    append_rows(batch, ds, nrow, attribute);
    return batch;
}

}  // namespace

SplitPlan apply_skip_rule(const Dataset& ds, SplitPlan plan, std::size_t shots) {
    std::vector<TaskId> keep;
    for (const auto& t : plan.train_tasks) {
        auto d = deficit(t, task_pools(ds, t), shots);
        if (d.positive_deficit == 0 && d.negative_deficit == 0) {
            keep.push_back(t);
        } else {
            plan.skipped.push_back(d);
        }
    }
    plan.train_tasks = std::move(keep);
    return plan;
}

LabeledBatch make_batch(const Dataset& ds, std::span<const std::size_t> rows, std::size_t attribute) {
    LabeledBatch batch;
    batch.example_size = ds.shape.size();
    append_rows(batch, ds, rows, attribute);
    return batch;
}

EpisodeOrSkip sample_episode(const Dataset& ds, const TaskId& task, std::size_t shots, Rng& rng) {
    if (shots < 1) throw SamplingError("sample_episode: shots must be >= 1");
    auto pools = task_pools(ds, task);
    auto d = deficit(task, pools, shots);
    if (d.positive_deficit > 0 || d.negative_deficit > 0) return d;
    const std::size_t a = ds.attribute_index(task.attribute);
    auto pos = take(pools.positives, 2 * shots, rng);
    auto neg = take(pools.negatives, 2 * shots, rng);
    TaskEpisode ep;
    ep.task = task;
    ep.support.example_size = ep.query.example_size = ds.shape.size();
    append_rows(ep.support, ds, std::span(pos).first(shots), a);
    append_rows(ep.support, ds, std::span(neg).first(shots), a);
    append_rows(ep.query, ds, std::span(pos).last(shots), a);
    append_rows(ep.query, ds, std::span(neg).last(shots), a);
    return ep;
}

AdaptationPair sample_adaptation_pair(const Dataset& ds, const TaskId& task, std::size_t shots,
                                      std::size_t eval_per_class, Rng& rng) {
    if (shots < 1) throw SamplingError("sample_adaptation_pair: K must be >= 1");
    if (eval_per_class < 1) throw SamplingError("sample_adaptation_pair: eval_per_class must be >= 1");
    auto pools = task_pools(ds, task);
    const std::size_t available = pools.positives.size() + pools.negatives.size();
    const std::size_t needed = 2 * shots + 2 * eval_per_class;
    if (available < needed) {
        throw SamplingError("task " + task.str() + " has " + std::to_string(available) +
                            " labeled examples, adaptation needs " + std::to_string(needed));
    }
    const std::size_t a = ds.attribute_index(task.attribute);
    AdaptationPair out;
    out.support = draw_filled(ds, pools, shots, a, rng);
    out.evalset = draw_filled(ds, pools, eval_per_class, a, rng);
    return out;
}

std::vector<ImbalanceRow> imbalance_stats(const Dataset& ds) {
    std::vector<ImbalanceRow> rows;
    const std::size_t na = ds.attributes.size();
    std::vector<std::size_t> labeled(ds.subjects.size() * na, 0), positive(ds.subjects.size() * na, 0);
    for (std::size_t r = 0; r < ds.examples.size(); ++r) {
        const std::size_t s = ds.examples[r].subject;
        for (std::size_t a = 0; a < na; ++a) {
            const auto v = ds.label(r, a);
            if (v == kUnlabeled) continue;
            ++labeled[s * na + a];
            if (v == 1) ++positive[s * na + a];
        }
    }
    for (std::size_t s = 0; s < ds.subjects.size(); ++s) {
        for (std::size_t a = 0; a < na; ++a) {
            ImbalanceRow row;
            row.task = {ds.subjects[s], ds.attributes[a]};
            row.labeled = labeled[s * na + a];
            row.positives = positive[s * na + a];
            row.positive_fraction =
                row.labeled == 0 ? 0.0 : static_cast<double>(row.positives) / static_cast<double>(row.labeled);
            rows.push_back(row);
        }
    }
    return rows;
}

TaskBankSource::TaskBankSource(const Dataset& dataset, const SplitPlan& plan, std::size_t shots)
    : dataset_(dataset), shots_(shots) {
    auto filtered = apply_skip_rule(dataset, plan, shots);
    tasks_ = std::move(filtered.train_tasks);
    skipped_ = std::move(filtered.skipped);
    skipped_.insert(skipped_.begin(), plan.skipped.begin(), plan.skipped.end());
}

std::vector<TaskEpisode> TaskBankSource::sample(std::size_t count, Rng& rng) {
    if (tasks_.size() < count) {
        throw TaskSourceExhausted("only " + std::to_string(tasks_.size()) + " trainable tasks, " +
                                      std::to_string(count) + " requested",
                                  0);
    }
    std::vector<std::size_t> order(tasks_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto chosen = take(order, count, rng);
    std::vector<TaskEpisode> out;
    out.reserve(count);
    for (auto i : chosen) {
        auto draw = sample_episode(dataset_, tasks_[i], shots_, rng);
        out.push_back(std::get<TaskEpisode>(std::move(draw)));
    }
    return out;
}

}  // namespace taskmaml
