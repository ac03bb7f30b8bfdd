#include "taskmaml/checkpoint.hpp"

#include <cstring>

#include "json.hpp"
#include "taskmaml/errors.hpp"
#include "taskmaml/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace taskmaml {

namespace {

constexpr char kMagic[8] = {'T', 'M', 'C', 'K', 'P', 'T', '0', '1'};

json config_to_json(const BackboneConfig& c) {
    json j;
    j["input_kind"] = c.input.kind == InputKind::vector ? "vector" : "image";
    j["shape"] = c.input.kind == InputKind::vector ? std::vector<std::size_t>{c.input.dim}
                                                   : std::vector<std::size_t>{c.input.height, c.input.width,
                                                                              c.input.channels};
    j["conv_channels"] = c.conv_channels;
    j["kernel_size"] = c.kernel_size;
    j["pool_size"] = c.pool_size;
    j["use_batchnorm"] = c.use_batchnorm;
    j["fc_output_dim"] = c.fc_output_dim;
    j["seed"] = c.seed;
    j["precision"] = c.precision == Precision::f32 ? "f32" : "f64";
    return j;
}

BackboneConfig config_from_json(const json& j) {
    BackboneConfig c;
    const auto shape = j.at("shape").get<std::vector<std::size_t>>();
    if (j.at("input_kind").get<std::string>() == "vector") {
        if (shape.size() != 1) throw DataError("checkpoint: vector shape needs one dimension");
        c.input = InputShape::vector(shape[0]);
    } else {
        if (shape.size() != 3) throw DataError("checkpoint: image shape needs three dimensions");
        c.input = InputShape::image(shape[0], shape[1], shape[2]);
    }
    c.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
    c.kernel_size = j.at("kernel_size").get<std::size_t>();
    c.pool_size = j.at("pool_size").get<std::size_t>();
    c.use_batchnorm = j.at("use_batchnorm").get<bool>();
    c.fc_output_dim = j.at("fc_output_dim").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.precision = j.at("precision").get<std::string>() == "f64" ? Precision::f64 : Precision::f32;
    return c;
}

}  // namespace

fs::path sidecar_path(const fs::path& checkpoint_path) {
    auto p = checkpoint_path;
    p += ".json";
    return p;
}

std::string backbone_config_json(const BackboneConfig& config) { return config_to_json(config).dump(2); }

BackboneConfig backbone_config_from_json(const std::string& text) { return config_from_json(json::parse(text)); }

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    const auto& layout = *ckpt.params.layout();
    std::string bin(kMagic, sizeof(kMagic));
    io::append_u64_le(bin, layout.entries().size());
    for (const auto& e : layout.entries()) {
        io::append_u64_le(bin, e.name.size());
        bin += e.name;
        io::append_u64_le(bin, e.offset);
        io::append_u64_le(bin, e.length);
    }
    io::append_u64_le(bin, ckpt.params.size());
    for (double v : ckpt.params.values()) io::append_f32_le(bin, static_cast<float>(v));

    json side;
    side["format"] = "taskmaml-checkpoint";
    side["version"] = 1;
    side["origin"] = ckpt.info.origin;
    side["held_out_subject"] = ckpt.info.held_out_subject ? json(*ckpt.info.held_out_subject) : json(nullptr);
    side["training_attributes"] = ckpt.info.training_attributes;
    side["backbone"] = config_to_json(ckpt.config);
    side["parameter_count"] = ckpt.params.size();
    side["layout_checksum"] = layout.checksum();
    side["content_crc32"] = io::crc32(bin);

    io::write_file_atomic(path, bin);
    io::write_file_atomic(sidecar_path(path), side.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& path) {
    if (!fs::exists(path)) throw MissingFileError("missing checkpoint", path.string());
    const auto side_file = sidecar_path(path);
    if (!fs::exists(side_file)) throw MissingFileError("missing checkpoint manifest", side_file.string());
    const std::string bin = io::read_file(path);
    json side;
    try {
        side = json::parse(io::read_file(side_file));
    } catch (const json::exception& e) {
        throw DataError(std::string("invalid checkpoint manifest: ") + e.what(), side_file.string());
    }

    Checkpoint ckpt;
    try {
        ckpt.config = config_from_json(side.at("backbone"));
        ckpt.info.origin = side.at("origin").get<std::string>();
        if (!side.at("held_out_subject").is_null()) ckpt.info.held_out_subject = side["held_out_subject"].get<std::string>();
        ckpt.info.training_attributes = side.at("training_attributes").get<std::vector<std::string>>();
        if (side.at("content_crc32").get<std::uint32_t>() != io::crc32(bin)) {
            throw DataError("checksum mismatch", path.string());
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed checkpoint manifest: ") + e.what(), side_file.string());
    }

    const auto* p = reinterpret_cast<const unsigned char*>(bin.data());
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (pos + n > bin.size()) throw DataError("truncated checkpoint", path.string());
    };
    need(sizeof(kMagic));
    if (std::memcmp(bin.data(), kMagic, sizeof(kMagic)) != 0) throw DataError("bad checkpoint magic", path.string());
    pos += sizeof(kMagic);
    auto u64 = [&] {
        need(8);
        const auto v = io::read_u64_le(p + pos);
        pos += 8;
        return v;
    };
    std::vector<LayoutEntry> entries(u64());
    for (auto& e : entries) {
        const auto len = u64();
        need(len);
        e.name.assign(bin.data() + pos, len);
        pos += len;
        e.offset = u64();
        e.length = u64();
    }
    auto layout = std::make_shared<ParameterLayout>(std::move(entries));
    const auto count = u64();
    need(count * 4);
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) values[i] = io::read_f32_le(p + pos + 4 * i);

    Backbone net(ckpt.config);
    if (!(*layout == *net.layout())) {
        throw ShapeError("checkpoint layout does not match its backbone configuration: " + path.string());
    }
    ckpt.params = ParameterVector(net.layout(), std::move(values));
    return ckpt;
}

}  // namespace taskmaml
