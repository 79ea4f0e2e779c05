#include "simmerge/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace simmerge {

using nlohmann::json;

void ArchConfig::validate() const {
    require(vocab_size > 0, "arch: vocab_size must be positive");
    require(d_model > 0, "arch: d_model must be positive");
    require(n_layers > 0, "arch: n_layers must be positive");
    require(n_heads > 0, "arch: n_heads must be positive");
    require(d_ff > 0, "arch: d_ff must be positive");
    require(max_seq_len >= 2, "arch: max_seq_len must be at least 2");
    require(d_model % n_heads == 0, "arch: d_model must be divisible by n_heads");
}

std::vector<TensorSpec> tensor_layout(const ArchConfig& arch) {
    arch.validate();
    const auto v = static_cast<std::int64_t>(arch.vocab_size);
    const auto d = static_cast<std::int64_t>(arch.d_model);
    const auto f = static_cast<std::int64_t>(arch.d_ff);

    std::vector<TensorSpec> layout;
    std::size_t offset = 0;
    auto add = [&](std::string name, std::vector<std::int64_t> shape) {
        TensorSpec spec{std::move(name), std::move(shape), offset};
        offset += spec.elem_count();
        layout.push_back(std::move(spec));
    };

    add("embed.tok", {v, d});
    for (int l = 0; l < arch.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        add(p + "attn.norm", {d});
        add(p + "attn.wq", {d, d});
        add(p + "attn.wk", {d, d});
        add(p + "attn.wv", {d, d});
        add(p + "attn.wo", {d, d});
        add(p + "mlp.norm", {d});
        add(p + "mlp.w_in", {d, f});
        add(p + "mlp.w_out", {f, d});
    }
    add("unembed", {d, v});
    return layout;
}

std::size_t param_count(const ArchConfig& arch) {
    std::size_t n = 0;
    for (const auto& spec : tensor_layout(arch)) {
        n += spec.elem_count();
    }
    return n;
}

Checkpoint::Checkpoint(ArchConfig arch, std::string id)
    : arch_(arch), id_(std::move(id)), layout_(tensor_layout(arch)), data_(param_count(arch), 0.0f) {}

Checkpoint::Checkpoint(ArchConfig arch, std::string id, std::vector<float> flat)
    : arch_(arch), id_(std::move(id)), layout_(tensor_layout(arch)), data_(std::move(flat)) {
    require(data_.size() == param_count(arch_), "checkpoint: flat buffer size does not match arch");
}

const TensorSpec& Checkpoint::spec(const std::string& name) const {
    for (const auto& s : layout_) {
        if (s.name == name) {
            return s;
        }
    }
    fail("checkpoint: unknown tensor '" + name + "'");
}

std::span<const float> Checkpoint::tensor(const std::string& name) const {
    const auto& s = spec(name);
    return {data_.data() + s.offset, s.elem_count()};
}

std::span<float> Checkpoint::tensor_mut(const std::string& name) {
    const auto& s = spec(name);
    return {data_.data() + s.offset, s.elem_count()};
}

std::span<const float> Checkpoint::tensor_at(std::size_t index) const {
    require(index < layout_.size(), "checkpoint: tensor index out of range");
    const auto& s = layout_[index];
    return {data_.data() + s.offset, s.elem_count()};
}

std::span<float> Checkpoint::tensor_at_mut(std::size_t index) {
    require(index < layout_.size(), "checkpoint: tensor index out of range");
    const auto& s = layout_[index];
    return {data_.data() + s.offset, s.elem_count()};
}

void Checkpoint::check_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) {
            fail("checkpoint '" + id_ + "': non-finite tensor value");
        }
    }
}

bool Checkpoint::bit_identical(const Checkpoint& other) const {
    if (!(arch_ == other.arch_) || data_.size() != other.data_.size()) {
        return false;
    }
    return std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

Checkpoint unflatten(const ArchConfig& arch, std::string id, std::span<const float> params) {
    require(params.size() == param_count(arch), "unflatten: parameter vector size does not match arch");
    return Checkpoint(arch, std::move(id), std::vector<float>(params.begin(), params.end()));
}

namespace {

json arch_to_json(const ArchConfig& a) {
    return json{{"vocab_size", a.vocab_size}, {"d_model", a.d_model},   {"n_layers", a.n_layers},
                {"n_heads", a.n_heads},       {"d_ff", a.d_ff},         {"max_seq_len", a.max_seq_len}};
}

ArchConfig arch_from_json(const json& j) {
    ArchConfig a;
    a.vocab_size = j.at("vocab_size").get<int>();
    a.d_model = j.at("d_model").get<int>();
    a.n_layers = j.at("n_layers").get<int>();
    a.n_heads = j.at("n_heads").get<int>();
    a.d_ff = j.at("d_ff").get<int>();
    a.max_seq_len = j.at("max_seq_len").get<int>();
    a.validate();
    return a;
}

void write_f32_le(std::ofstream& out, std::span<const float> values) {
    for (float v : values) {
        const auto bits = std::bit_cast<std::uint32_t>(v);
        const char bytes[4] = {
            static_cast<char>(bits & 0xFF),
            static_cast<char>((bits >> 8) & 0xFF),
            static_cast<char>((bits >> 16) & 0xFF),
            static_cast<char>((bits >> 24) & 0xFF),
        };
        out.write(bytes, 4);
    }
}

std::vector<float> read_f32_le(std::ifstream& in, std::size_t count) {
    std::vector<float> values(count);
    std::vector<char> buf(count * 4);
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    require(static_cast<std::size_t>(in.gcount()) == buf.size(), "load_checkpoint: truncated blob");
    for (std::size_t i = 0; i < count; ++i) {
        const auto b = reinterpret_cast<const unsigned char*>(buf.data() + 4 * i);
        const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                                   (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
        values[i] = std::bit_cast<float>(bits);
    }
    return values;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path_stem) {
    ckpt.check_finite();

    json manifest;
    manifest["id"] = ckpt.id();
    manifest["arch"] = arch_to_json(ckpt.arch());
    manifest["dtype"] = "f32";
    manifest["byte_order"] = "little";
    json tensors = json::array();
    for (const auto& spec : ckpt.layout()) {
        tensors.push_back(json{{"name", spec.name}, {"shape", spec.shape}, {"byte_offset", spec.offset * 4}});
    }
    manifest["tensors"] = tensors;

    {
        std::ofstream out(path_stem + ".manifest.json", std::ios::binary | std::ios::trunc);
        require(out.good(), "save_checkpoint: cannot open '" + path_stem + ".manifest.json' for writing");
        out << manifest.dump(2) << "\n";
        require(out.good(), "save_checkpoint: write failed for manifest");
    }
    {
        std::ofstream out(path_stem + ".bin", std::ios::binary | std::ios::trunc);
        require(out.good(), "save_checkpoint: cannot open '" + path_stem + ".bin' for writing");
        write_f32_le(out, ckpt.flat());
        require(out.good(), "save_checkpoint: write failed for blob");
    }
}

Checkpoint load_checkpoint(const std::string& path_stem) {
    const std::string manifest_path = path_stem + ".manifest.json";
    std::ifstream min(manifest_path, std::ios::binary);
    require(min.good(), "load_checkpoint: missing manifest '" + manifest_path + "'");
    json manifest;
    try {
        min >> manifest;
    } catch (const json::exception& e) {
        fail("load_checkpoint: bad manifest JSON: " + std::string(e.what()));
    }

    const ArchConfig arch = arch_from_json(manifest.at("arch"));
    const auto expected = tensor_layout(arch);
    const auto& tensors = manifest.at("tensors");
    require(tensors.size() == expected.size(), "load_checkpoint: manifest tensor count inconsistent with arch");
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto& t = tensors.at(i);
        require(t.at("name").get<std::string>() == expected[i].name,
                "load_checkpoint: manifest tensor name inconsistent with arch");
        require(t.at("shape").get<std::vector<std::int64_t>>() == expected[i].shape,
                "load_checkpoint: manifest shape inconsistent with arch");
        require(t.at("byte_offset").get<std::size_t>() == expected[i].offset * 4,
                "load_checkpoint: manifest offset inconsistent with arch");
    }

    const std::string bin_path = path_stem + ".bin";
    std::ifstream bin(bin_path, std::ios::binary);
    require(bin.good(), "load_checkpoint: missing blob '" + bin_path + "'");
    std::vector<float> data = read_f32_le(bin, param_count(arch));
    char extra = 0;
    bin.read(&extra, 1);
    require(bin.eof(), "load_checkpoint: blob longer than manifest total");

    Checkpoint ckpt(arch, manifest.at("id").get<std::string>(), std::move(data));
    ckpt.check_finite();
    return ckpt;
}

} // namespace simmerge
