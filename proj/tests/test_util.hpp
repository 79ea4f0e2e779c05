#pragma once

// Shared helpers for the unit suites.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <string>

#include "simmerge/checkpoint.hpp"
#include "simmerge/common.hpp"

namespace simmerge::test {

inline Checkpoint random_checkpoint(const ArchConfig& arch, std::uint64_t seed, const std::string& id,
                                    double stddev = 0.3) {
    Rng rng(seed);
    Checkpoint ckpt(arch, id);
    for (auto& v : ckpt.flat_mut()) {
        v = static_cast<float>(rng.normal(0.0, stddev));
    }
    return ckpt;
}

struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<std::uint64_t> counter{0};
        const auto now = std::chrono::steady_clock::now().time_since_epoch().count();
        path = std::filesystem::temp_directory_path() /
               ("simmerge_test_" + std::to_string(now) + "_" + std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }

    std::string file(const std::string& name) const { return (path / name).string(); }
};

} // namespace simmerge::test
