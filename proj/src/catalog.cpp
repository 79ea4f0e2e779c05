#include "simmerge/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "simmerge/transformer.hpp"

namespace simmerge {

namespace fs = std::filesystem;
using nlohmann::json;

void ProbeSet::validate(const ArchConfig& arch) const {
    require(!prompts.empty(), "probe set '" + task_id + "' is empty");
    for (const auto& p : prompts) {
        require(!p.empty() && static_cast<int>(p.size()) <= arch.max_seq_len,
                "probe set '" + task_id + "': prompt length out of range");
        for (int tok : p) {
            require(tok >= 0 && tok < arch.vocab_size, "probe set '" + task_id + "': invalid token id");
        }
    }
}

const Checkpoint& Catalog::by_id(const std::string& id) const {
    if (id == base.id()) {
        return base;
    }
    for (const auto& c : checkpoints) {
        if (c.id() == id) {
            return c;
        }
    }
    fail("catalog: unknown checkpoint id '" + id + "'");
}

bool Catalog::has_id(const std::string& id) const {
    if (id == base.id()) {
        return true;
    }
    return std::any_of(checkpoints.begin(), checkpoints.end(),
                       [&](const Checkpoint& c) { return c.id() == id; });
}

const Checkpoint& Catalog::teacher_of(const std::string& task_id) const {
    const int idx = task_index(task_id);
    return teachers[static_cast<std::size_t>(idx)];
}

const TaskEntry& Catalog::task(const std::string& task_id) const {
    return tasks[static_cast<std::size_t>(task_index(task_id))];
}

int Catalog::task_index(const std::string& task_id) const {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (tasks[i].task_id == task_id) {
            return static_cast<int>(i);
        }
    }
    fail("catalog: unknown task '" + task_id + "'");
}

std::vector<std::string> Catalog::task_ids() const {
    std::vector<std::string> ids;
    ids.reserve(tasks.size());
    for (const auto& t : tasks) {
        ids.push_back(t.task_id);
    }
    return ids;
}

std::string Catalog::task_of(const std::string& ckpt_id) const {
    for (const auto& t : tasks) {
        for (const auto& id : t.checkpoint_ids) {
            if (id == ckpt_id) {
                return t.task_id;
            }
        }
    }
    return "";
}

bool Catalog::is_designated_expert(const std::string& ckpt_id) const {
    return std::any_of(tasks.begin(), tasks.end(),
                       [&](const TaskEntry& t) { return t.expert_id == ckpt_id; });
}

const ProbeSet& Catalog::probes(const std::string& task_id) const {
    for (const auto& p : probe_sets) {
        if (p.task_id == task_id) {
            return p;
        }
    }
    fail("catalog: no probe set for task '" + task_id + "'");
}

const std::vector<std::vector<int>>& Catalog::evals(const std::string& task_id) const {
    const auto it = eval_sets.find(task_id);
    require(it != eval_sets.end(), "catalog: no eval set for task '" + task_id + "'");
    return it->second;
}

double Catalog::utility(const Checkpoint& ckpt, const std::string& task_id) const {
    return evaluate_utility(ckpt, evals(task_id));
}

void Catalog::validate() const {
    arch.validate();
    base.check_finite();
    require(!tasks.empty(), "catalog: no tasks");
    require(teachers.size() == tasks.size(), "catalog: teacher count mismatch");
    for (const auto& c : checkpoints) {
        require(c.arch() == arch, "catalog: checkpoint '" + c.id() + "' arch mismatch");
        c.check_finite();
    }
    for (const auto& t : tasks) {
        require(!t.checkpoint_ids.empty(), "catalog: task '" + t.task_id + "' has no checkpoints");
        require(std::find(t.checkpoint_ids.begin(), t.checkpoint_ids.end(), t.expert_id) != t.checkpoint_ids.end(),
                "catalog: task '" + t.task_id + "' expert not among its checkpoints");
        probes(t.task_id).validate(arch);
        require(!evals(t.task_id).empty(), "catalog: task '" + t.task_id + "' eval set empty");
    }
}

namespace {

enum class TensorFamily { Embed, AttnNorm, AttnWeight, MlpNorm, MlpWeight, Unembed };

TensorFamily family_of(const std::string& name) {
    if (name == "embed.tok") {
        return TensorFamily::Embed;
    }
    if (name == "unembed") {
        return TensorFamily::Unembed;
    }
    if (name.find("attn.norm") != std::string::npos) {
        return TensorFamily::AttnNorm;
    }
    if (name.find("mlp.norm") != std::string::npos) {
        return TensorFamily::MlpNorm;
    }
    if (name.find("attn.") != std::string::npos) {
        return TensorFamily::AttnWeight;
    }
    return TensorFamily::MlpWeight;
}

Checkpoint random_base(const ArchConfig& arch, const CatalogGenConfig& cfg, Rng& rng) {
    Checkpoint base(arch, "base");
    for (std::size_t ti = 0; ti < base.layout().size(); ++ti) {
        const auto& spec = base.layout()[ti];
        auto out = base.tensor_at_mut(ti);
        switch (family_of(spec.name)) {
        case TensorFamily::Embed:
            for (auto& v : out) {
                v = static_cast<float>(rng.normal(0.0, cfg.init_embed));
            }
            break;
        case TensorFamily::Unembed:
            for (auto& v : out) {
                v = static_cast<float>(rng.normal(0.0, cfg.init_unembed));
            }
            break;
        case TensorFamily::AttnNorm:
        case TensorFamily::MlpNorm:
            for (auto& v : out) {
                v = static_cast<float>(1.0 + rng.normal(0.0, cfg.init_norm_jitter));
            }
            break;
        case TensorFamily::AttnWeight:
            for (auto& v : out) {
                v = static_cast<float>(rng.normal(0.0, cfg.init_attn));
            }
            break;
        case TensorFamily::MlpWeight:
            for (auto& v : out) {
                v = static_cast<float>(rng.normal(0.0, cfg.init_mlp));
            }
            break;
        }
    }
    return base;
}

double flat_norm(std::span<const float> v) {
    double acc = 0.0;
    for (float x : v) {
        acc += static_cast<double>(x) * x;
    }
    return std::sqrt(acc);
}

// Task direction: dense Gaussian with `focus_fraction` of its energy
// concentrated on one weight-tensor group, rescaled to a fixed fraction of
// the base norm. Different tasks focus on different groups, which gives
// merge-relevant per-tensor geometry some diversity across task pairs.
std::vector<double> task_direction(const Checkpoint& base, const CatalogGenConfig& cfg, int task_idx, Rng& rng) {
    const auto& layout = base.layout();
    std::vector<std::string> groups;
    for (const auto& spec : layout) {
        const auto fam = family_of(spec.name);
        if (fam == TensorFamily::AttnWeight || fam == TensorFamily::MlpWeight) {
            const auto dot_pos = spec.name.find('.');
            const std::string group = spec.name.substr(0, spec.name.find('.', dot_pos + 1));
            if (std::find(groups.begin(), groups.end(), group) == groups.end()) {
                groups.push_back(group);
            }
        }
    }
    const std::string focus = groups[static_cast<std::size_t>(task_idx) % groups.size()];

    std::vector<double> dir(base.flat().size());
    std::vector<double> focus_part(base.flat().size(), 0.0);
    for (std::size_t i = 0; i < dir.size(); ++i) {
        dir[i] = rng.normal();
    }
    for (std::size_t ti = 0; ti < layout.size(); ++ti) {
        const auto& spec = layout[ti];
        if (spec.name.rfind(focus, 0) == 0 &&
            (family_of(spec.name) == TensorFamily::AttnWeight || family_of(spec.name) == TensorFamily::MlpWeight)) {
            for (std::size_t i = spec.offset; i < spec.offset + spec.elem_count(); ++i) {
                focus_part[i] = rng.normal();
            }
        }
    }

    auto normalize_to = [](std::vector<double>& v, double target) {
        double n = 0.0;
        for (double x : v) {
            n += x * x;
        }
        n = std::sqrt(n);
        require(n > 0.0, "task_direction: degenerate direction");
        const double s = target / n;
        for (double& x : v) {
            x *= s;
        }
    };

    const double total = cfg.dir_scale * flat_norm(base.flat());
    normalize_to(focus_part, std::sqrt(cfg.focus_fraction) * total);
    normalize_to(dir, std::sqrt(1.0 - cfg.focus_fraction) * total);
    for (std::size_t i = 0; i < dir.size(); ++i) {
        dir[i] += focus_part[i];
    }
    return dir;
}

Checkpoint displaced(const Checkpoint& base, const std::vector<double>& direction, double strength,
                     double noise_frac, double radial, std::string id, Rng& rng) {
    const double base_norm = flat_norm(base.flat());
    std::vector<float> flat(base.flat().begin(), base.flat().end());

    std::vector<double> noise(flat.size());
    double nn = 0.0;
    for (auto& x : noise) {
        x = rng.normal();
        nn += x * x;
    }
    const double noise_scale = noise_frac * base_norm / std::sqrt(nn);

    for (std::size_t i = 0; i < flat.size(); ++i) {
        const double v = static_cast<double>(flat[i]) + strength * direction[i] + noise_scale * noise[i];
        flat[i] = static_cast<float>(radial * v);
    }
    return Checkpoint(base.arch(), std::move(id), std::move(flat));
}

} // namespace

Catalog generate_catalog(const ArchConfig& arch, int n_tasks, int experts_per_task, int probe_size,
                         int eval_size, std::uint64_t seed, const CatalogGenConfig& cfg) {
    arch.validate();
    require(n_tasks >= 2, "generate_catalog: need at least 2 tasks");
    require(experts_per_task >= 1, "generate_catalog: experts_per_task must be positive");
    require(probe_size >= 1 && eval_size >= 1, "generate_catalog: probe/eval sizes must be positive");
    require(cfg.probe_len >= 2 && cfg.probe_len <= arch.max_seq_len, "generate_catalog: bad probe_len");
    require(cfg.eval_len >= 2 && cfg.eval_len <= arch.max_seq_len, "generate_catalog: bad eval_len");

    const Rng root(seed);

    Catalog catalog;
    catalog.arch = arch;
    catalog.seed = seed;
    catalog.gen_config = cfg;

    Rng init_rng = root.split("init");
    catalog.base = random_base(arch, cfg, init_rng);

    for (int t = 0; t < n_tasks; ++t) {
        const std::string task_id = "t" + std::to_string(t);
        Rng dir_rng = root.split("teacher", static_cast<std::uint64_t>(t));
        const std::vector<double> direction = task_direction(catalog.base, cfg, t, dir_rng);

        // Teacher: base + full-strength task direction.
        {
            std::vector<float> flat(catalog.base.flat().begin(), catalog.base.flat().end());
            for (std::size_t i = 0; i < flat.size(); ++i) {
                flat[i] = static_cast<float>(static_cast<double>(flat[i]) + direction[i]);
            }
            catalog.teachers.emplace_back(arch, "teacher_" + task_id, std::move(flat));
        }

        TaskEntry entry;
        entry.task_id = task_id;
        for (int k = 0; k < experts_per_task; ++k) {
            Rng ckpt_rng = root.split("ckpt", static_cast<std::uint64_t>(t) * 100000 + static_cast<std::uint64_t>(k));
            const std::string id = "ckpt_" + task_id + "_" + std::to_string(k);
            double strength = cfg.expert_strength;
            double noise = cfg.expert_noise;
            double radial = 1.0;
            if (k != 0) {
                strength = ckpt_rng.uniform(cfg.aux_strength_min, cfg.aux_strength_max);
                noise = ckpt_rng.uniform(cfg.aux_noise_min, cfg.aux_noise_max);
                radial = ckpt_rng.uniform(1.0 - cfg.scale_jitter, 1.0 + cfg.scale_jitter);
            }
            catalog.checkpoints.push_back(
                displaced(catalog.base, direction, strength, noise, radial, id, ckpt_rng));
            entry.checkpoint_ids.push_back(id);
            if (k == 0) {
                entry.expert_id = id;
            }
        }
        catalog.tasks.push_back(std::move(entry));

        const Checkpoint& teacher = catalog.teachers.back();
        Rng probe_rng = root.split("probes", static_cast<std::uint64_t>(t));
        ProbeSet probes;
        probes.task_id = task_id;
        for (int i = 0; i < probe_size; ++i) {
            probes.prompts.push_back(sample_sequence(teacher, cfg.probe_len, probe_rng));
        }
        catalog.probe_sets.push_back(std::move(probes));

        Rng eval_rng = root.split("eval", static_cast<std::uint64_t>(t));
        std::vector<std::vector<int>> evals;
        for (int i = 0; i < eval_size; ++i) {
            evals.push_back(sample_sequence(teacher, cfg.eval_len, eval_rng));
        }
        catalog.eval_sets[task_id] = std::move(evals);
    }

    catalog.validate();
    return catalog;
}

namespace {

json sequences_to_json(const std::string& task_id, const std::vector<std::vector<int>>& seqs) {
    json j;
    j["task_id"] = task_id;
    j["sequences"] = seqs;
    return j;
}

std::vector<std::vector<int>> sequences_from_json(const json& j) {
    return j.at("sequences").get<std::vector<std::vector<int>>>();
}

json gen_config_to_json(const CatalogGenConfig& c) {
    return json{{"probe_len", c.probe_len},
                {"eval_len", c.eval_len},
                {"init_embed", c.init_embed},
                {"init_attn", c.init_attn},
                {"init_mlp", c.init_mlp},
                {"init_unembed", c.init_unembed},
                {"init_norm_jitter", c.init_norm_jitter},
                {"dir_scale", c.dir_scale},
                {"focus_fraction", c.focus_fraction},
                {"expert_strength", c.expert_strength},
                {"expert_noise", c.expert_noise},
                {"aux_strength_min", c.aux_strength_min},
                {"aux_strength_max", c.aux_strength_max},
                {"aux_noise_min", c.aux_noise_min},
                {"aux_noise_max", c.aux_noise_max},
                {"scale_jitter", c.scale_jitter}};
}

CatalogGenConfig gen_config_from_json(const json& j) {
    CatalogGenConfig c;
    c.probe_len = j.at("probe_len").get<int>();
    c.eval_len = j.at("eval_len").get<int>();
    c.init_embed = j.at("init_embed").get<double>();
    c.init_attn = j.at("init_attn").get<double>();
    c.init_mlp = j.at("init_mlp").get<double>();
    c.init_unembed = j.at("init_unembed").get<double>();
    c.init_norm_jitter = j.at("init_norm_jitter").get<double>();
    c.dir_scale = j.at("dir_scale").get<double>();
    c.focus_fraction = j.at("focus_fraction").get<double>();
    c.expert_strength = j.at("expert_strength").get<double>();
    c.expert_noise = j.at("expert_noise").get<double>();
    c.aux_strength_min = j.at("aux_strength_min").get<double>();
    c.aux_strength_max = j.at("aux_strength_max").get<double>();
    c.aux_noise_min = j.at("aux_noise_min").get<double>();
    c.aux_noise_max = j.at("aux_noise_max").get<double>();
    c.scale_jitter = j.at("scale_jitter").get<double>();
    return c;
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), "cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << "\n";
    require(out.good(), "write failed for '" + path.string() + "'");
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail("bad JSON in '" + path.string() + "': " + std::string(e.what()));
    }
    return j;
}

} // namespace

void save_catalog(const Catalog& catalog, const std::string& dir) {
    catalog.validate();
    const fs::path root(dir);
    fs::create_directories(root / "base");
    fs::create_directories(root / "teachers");

    save_checkpoint(catalog.base, (root / "base" / "base").string());
    for (const auto& t : catalog.teachers) {
        save_checkpoint(t, (root / "teachers" / t.id()).string());
    }
    for (const auto& c : catalog.checkpoints) {
        fs::create_directories(root / c.id());
        save_checkpoint(c, (root / c.id() / c.id()).string());
    }
    for (const auto& p : catalog.probe_sets) {
        write_json_file(root / ("probes_" + p.task_id + ".json"), sequences_to_json(p.task_id, p.prompts));
    }
    for (const auto& [task_id, seqs] : catalog.eval_sets) {
        write_json_file(root / ("eval_" + task_id + ".json"), sequences_to_json(task_id, seqs));
    }

    json top;
    top["seed"] = catalog.seed;
    top["arch"] = json{{"vocab_size", catalog.arch.vocab_size}, {"d_model", catalog.arch.d_model},
                       {"n_layers", catalog.arch.n_layers},     {"n_heads", catalog.arch.n_heads},
                       {"d_ff", catalog.arch.d_ff},             {"max_seq_len", catalog.arch.max_seq_len}};
    top["gen_config"] = gen_config_to_json(catalog.gen_config);
    json tasks = json::array();
    for (const auto& t : catalog.tasks) {
        tasks.push_back(json{{"task_id", t.task_id}, {"expert_id", t.expert_id}, {"checkpoints", t.checkpoint_ids}});
    }
    top["tasks"] = tasks;
    write_json_file(root / "catalog.json", top);
}

Catalog load_catalog(const std::string& dir) {
    const fs::path root(dir);
    const json top = read_json_file(root / "catalog.json");

    Catalog catalog;
    catalog.seed = top.at("seed").get<std::uint64_t>();
    const auto& a = top.at("arch");
    catalog.arch.vocab_size = a.at("vocab_size").get<int>();
    catalog.arch.d_model = a.at("d_model").get<int>();
    catalog.arch.n_layers = a.at("n_layers").get<int>();
    catalog.arch.n_heads = a.at("n_heads").get<int>();
    catalog.arch.d_ff = a.at("d_ff").get<int>();
    catalog.arch.max_seq_len = a.at("max_seq_len").get<int>();
    catalog.arch.validate();
    catalog.gen_config = gen_config_from_json(top.at("gen_config"));

    catalog.base = load_checkpoint((root / "base" / "base").string());
    for (const auto& tj : top.at("tasks")) {
        TaskEntry entry;
        entry.task_id = tj.at("task_id").get<std::string>();
        entry.expert_id = tj.at("expert_id").get<std::string>();
        entry.checkpoint_ids = tj.at("checkpoints").get<std::vector<std::string>>();
        for (const auto& id : entry.checkpoint_ids) {
            catalog.checkpoints.push_back(load_checkpoint((root / id / id).string()));
        }
        catalog.teachers.push_back(load_checkpoint((root / "teachers" / ("teacher_" + entry.task_id)).string()));

        ProbeSet probes;
        probes.task_id = entry.task_id;
        probes.prompts = sequences_from_json(read_json_file(root / ("probes_" + entry.task_id + ".json")));
        catalog.probe_sets.push_back(std::move(probes));
        catalog.eval_sets[entry.task_id] =
            sequences_from_json(read_json_file(root / ("eval_" + entry.task_id + ".json")));
        catalog.tasks.push_back(std::move(entry));
    }
    catalog.validate();
    return catalog;
}

} // namespace simmerge
