#pragma once

// Synthetic checkpoint catalogs with a planted-teacher utility oracle.
//
// Each task owns a hidden teacher (base + task direction). Task checkpoints
// are base + scaled task direction + idiosyncratic noise; the designated
// expert of a task is its cleanest checkpoint (strong direction, low noise).
// Probe and eval sets are sampled ancestrally from the teacher, so utilities
// of arbitrary merged models can be measured without ever training anything.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "simmerge/checkpoint.hpp"
#include "simmerge/common.hpp"

namespace simmerge {

struct ProbeSet {
    std::string task_id;
    std::vector<std::vector<int>> prompts; // unlabeled token-id sequences

    void validate(const ArchConfig& arch) const;
};

struct TaskEntry {
    std::string task_id;
    std::string expert_id;                 // the designated expert
    std::vector<std::string> checkpoint_ids; // all checkpoints of this task
};

struct CatalogGenConfig {
    int probe_len = 16;
    int eval_len = 16;

    // Base initialization scales per tensor family.
    double init_embed = 1.0;
    double init_attn = 0.30;
    double init_mlp = 0.30;
    double init_unembed = 0.25;
    double init_norm_jitter = 0.05;

    // Task direction: global norm as a fraction of the base parameter norm,
    // with a fraction of its energy concentrated on a per-task focus tensor
    // group (drives per-tensor angles between experts of different tasks).
    double dir_scale = 0.10;
    double focus_fraction = 0.7;

    // Designated expert: strong direction, low noise. Auxiliary-pool
    // checkpoints overshoot the teacher and carry more noise, so the
    // designated expert is reliably the best model of its task.
    double expert_strength = 0.75;
    double expert_noise = 0.01;
    double aux_strength_min = 0.95;
    double aux_strength_max = 1.30;
    double aux_noise_min = 0.02;
    double aux_noise_max = 0.07;

    // Uniform radial jitter applied to non-designated checkpoints.
    double scale_jitter = 0.05;
};

class Catalog {
public:
    ArchConfig arch;
    std::uint64_t seed = 0;
    Checkpoint base;
    std::vector<Checkpoint> checkpoints;           // all task checkpoints
    std::vector<Checkpoint> teachers;              // hidden, oracle-only
    std::vector<TaskEntry> tasks;
    std::vector<ProbeSet> probe_sets;              // one per task
    std::map<std::string, std::vector<std::vector<int>>> eval_sets; // task -> sequences
    CatalogGenConfig gen_config;

    const Checkpoint& by_id(const std::string& id) const;
    bool has_id(const std::string& id) const;
    const Checkpoint& teacher_of(const std::string& task_id) const;
    const TaskEntry& task(const std::string& task_id) const;
    int task_index(const std::string& task_id) const;
    std::vector<std::string> task_ids() const;

    // Task of origin for a checkpoint id; empty for the base.
    std::string task_of(const std::string& ckpt_id) const;
    bool is_designated_expert(const std::string& ckpt_id) const;

    const ProbeSet& probes(const std::string& task_id) const;
    const std::vector<std::vector<int>>& evals(const std::string& task_id) const;

    // Utility of a model on a task's eval set.
    double utility(const Checkpoint& ckpt, const std::string& task_id) const;

    void validate() const;
};

Catalog generate_catalog(const ArchConfig& arch, int n_tasks, int experts_per_task, int probe_size,
                         int eval_size, std::uint64_t seed, const CatalogGenConfig& cfg = {});

// Directory layout: base/, teachers/, ckpt_<task>_<k>/ (manifest + blob each),
// probes_<task>.json, eval_<task>.json, catalog.json.
void save_catalog(const Catalog& catalog, const std::string& dir);
Catalog load_catalog(const std::string& dir);

} // namespace simmerge
