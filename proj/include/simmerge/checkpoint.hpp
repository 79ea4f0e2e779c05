#pragma once

// Toy-transformer parameter container and its on-disk format.
//
// A checkpoint is a single flat f32 buffer viewed through a tensor layout
// that is fully determined by the architecture: token embedding, per-layer
// attention Q/K/V/O, per-layer MLP in/out, per-layer norm scales, and the
// unembedding. Flattening is the identity on the buffer, so the parameter
// vector is always consistent with the manifest order.
//
// On disk: `<stem>.manifest.json` (arch + tensor index) and `<stem>.bin`
// (little-endian f32, row-major, byte offsets as listed in the manifest).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "simmerge/common.hpp"

namespace simmerge {

struct ArchConfig {
    int vocab_size = 64;
    int d_model = 16;
    int n_layers = 2;
    int n_heads = 2;
    int d_ff = 32;
    int max_seq_len = 24;

    void validate() const;
    bool operator==(const ArchConfig&) const = default;

    int head_dim() const { return d_model / n_heads; }
};

struct TensorSpec {
    std::string name;
    std::vector<std::int64_t> shape; // 1-D for norm scales, 2-D otherwise
    std::size_t offset = 0;          // element offset into the flat buffer

    std::size_t elem_count() const {
        std::size_t n = 1;
        for (auto d : shape) {
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }
};

// Manifest-ordered tensor layout for an architecture.
std::vector<TensorSpec> tensor_layout(const ArchConfig& arch);
std::size_t param_count(const ArchConfig& arch);

class Checkpoint {
public:
    Checkpoint() = default;
    Checkpoint(ArchConfig arch, std::string id);
    Checkpoint(ArchConfig arch, std::string id, std::vector<float> flat);

    const ArchConfig& arch() const { return arch_; }
    const std::string& id() const { return id_; }
    void set_id(std::string id) { id_ = std::move(id); }

    const std::vector<TensorSpec>& layout() const { return layout_; }

    std::span<const float> flat() const { return data_; }
    std::span<float> flat_mut() { return data_; }

    std::span<const float> tensor(const std::string& name) const;
    std::span<float> tensor_mut(const std::string& name);
    std::span<const float> tensor_at(std::size_t index) const;
    std::span<float> tensor_at_mut(std::size_t index);

    // Throws if any value is non-finite.
    void check_finite() const;

    bool same_arch(const Checkpoint& other) const { return arch_ == other.arch_; }
    bool bit_identical(const Checkpoint& other) const;

private:
    const TensorSpec& spec(const std::string& name) const;

    ArchConfig arch_{};
    std::string id_;
    std::vector<TensorSpec> layout_;
    std::vector<float> data_;
};

// Rebuild a checkpoint from a flattened parameter vector (inverse of flat()).
Checkpoint unflatten(const ArchConfig& arch, std::string id, std::span<const float> params);

// Writes `<path_stem>.manifest.json` and `<path_stem>.bin`. Two saves of the
// same checkpoint produce byte-identical files.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path_stem);
Checkpoint load_checkpoint(const std::string& path_stem);

} // namespace simmerge
