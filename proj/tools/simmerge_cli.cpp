// Command-line driver for catalog generation, feature extraction, selector
// training, plan selection, merging, and the evaluation campaigns. Every run
// exits 0 on success and nonzero with a one-line diagnostic on error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "simmerge/campaign.hpp"

using namespace simmerge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ArchConfig parse_arch(const std::string& spec) {
    // "V,d,L,H,ff,T" with empty fields keeping defaults, e.g. "64,16,2,2,32,24".
    ArchConfig arch;
    if (spec.empty()) {
        return arch;
    }
    std::stringstream ss(spec);
    std::string cell;
    int* fields[6] = {&arch.vocab_size, &arch.d_model, &arch.n_layers,
                      &arch.n_heads,    &arch.d_ff,    &arch.max_seq_len};
    for (int i = 0; i < 6 && std::getline(ss, cell, ','); ++i) {
        if (!cell.empty()) {
            *fields[i] = std::stoi(cell);
        }
    }
    arch.validate();
    return arch;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (!cell.empty()) {
            out.push_back(cell);
        }
    }
    return out;
}

void write_run_manifest(const std::string& dir, const json& config, std::uint64_t seed) {
    fs::create_directories(dir);
    json manifest;
    manifest["config"] = config;
    manifest["seed"] = seed;
    std::ofstream out(fs::path(dir) / "run_manifest.json", std::ios::binary | std::ios::trunc);
    out << manifest.dump(2) << "\n";
}

SimilarityTable table_for(const Catalog& catalog, const std::string& features_csv) {
    if (!features_csv.empty()) {
        return import_similarity_csv(features_csv);
    }
    return build_similarity_table(catalog);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"similarity-driven merge selection for toy-transformer checkpoints"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "generate a synthetic checkpoint catalog");
    std::string gen_arch, gen_out;
    int gen_tasks = 4, gen_experts = 6, gen_probe = 16, gen_eval = 64;
    std::uint64_t gen_seed = 1;
    gen->add_option("--arch", gen_arch, "arch as V,d,L,H,ff,T (default 64,16,2,2,32,24)");
    gen->add_option("--tasks", gen_tasks, "number of tasks")->check(CLI::PositiveNumber);
    gen->add_option("--experts-per-task", gen_experts, "checkpoints per task")->check(CLI::PositiveNumber);
    gen->add_option("--probe-size", gen_probe, "probe prompts per task");
    gen->add_option("--eval-size", gen_eval, "eval sequences per task");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output directory")->required();

    // features
    auto* feat = app.add_subcommand("features", "build the pairwise similarity table");
    std::string feat_catalog, feat_out;
    feat->add_option("--catalog", feat_catalog, "catalog directory")->required();
    feat->add_option("--out", feat_out, "output CSV path")->required();

    // train-selector
    auto* train = app.add_subcommand("train-selector", "train the operator-utility predictor");
    std::string train_catalog, train_features, train_out;
    int train_pairs = 240, train_test_pairs = 60;
    std::uint64_t train_seed = 1;
    train->add_option("--catalog", train_catalog, "catalog directory")->required();
    train->add_option("--features", train_features, "similarity CSV (rebuilt when omitted)");
    train->add_option("--pairs", train_pairs, "training pairs (includes validation)");
    train->add_option("--test-pairs", train_test_pairs, "held-out pairs");
    train->add_option("--seed", train_seed, "training seed");
    train->add_option("--out", train_out, "model path stem")->required();

    // select
    auto* sel = app.add_subcommand("select", "select a merge plan for a model set");
    std::string sel_catalog, sel_features, sel_models, sel_task, sel_model_file, sel_mode = "exhaustive";
    int sel_max_candidates = 64;
    std::uint64_t sel_seed = 1;
    sel->add_option("--catalog", sel_catalog, "catalog directory")->required();
    sel->add_option("--features", sel_features, "similarity CSV (rebuilt when omitted)");
    sel->add_option("--models", sel_models, "comma-separated checkpoint ids")->required();
    sel->add_option("--task", sel_task, "target task id")->required();
    sel->add_option("--model-file", sel_model_file, "trained selector path stem")->required();
    sel->add_option("--mode", sel_mode, "exhaustive|sampled")->check(CLI::IsMember({"exhaustive", "sampled"}));
    sel->add_option("--max-candidates", sel_max_candidates, "sampled-mode candidate budget");
    sel->add_option("--seed", sel_seed, "sampling seed");

    // merge
    auto* mrg = app.add_subcommand("merge", "execute a merge plan");
    std::string mrg_catalog, mrg_plan, mrg_out;
    mrg->add_option("--catalog", mrg_catalog, "catalog directory")->required();
    mrg->add_option("--plan", mrg_plan, "plan JSON file")->required();
    mrg->add_option("--out", mrg_out, "output checkpoint path stem")->required();

    // eval-offline
    auto* off = app.add_subcommand("eval-offline", "pairwise campaign against fixed operators");
    std::string off_out, off_arch;
    int off_catalogs = 1, off_tasks = 4, off_experts = 26, off_probe = 16, off_eval = 64;
    int off_pairs = 240, off_test = 60;
    std::uint64_t off_seed = 1;
    off->add_option("--out", off_out, "report directory")->required();
    off->add_option("--arch", off_arch, "arch as V,d,L,H,ff,T");
    off->add_option("--catalogs", off_catalogs, "number of seeded catalogs");
    off->add_option("--tasks", off_tasks, "tasks per catalog");
    off->add_option("--experts-per-task", off_experts, "checkpoints per task");
    off->add_option("--probe-size", off_probe, "probe prompts per task");
    off->add_option("--eval-size", off_eval, "eval sequences per task");
    off->add_option("--pairs", off_pairs, "training pairs per catalog");
    off->add_option("--test-pairs", off_test, "held-out pairs per catalog");
    off->add_option("--seed", off_seed, "base seed");

    // eval-multiway
    auto* multi = app.add_subcommand("eval-multiway", "multiway campaign with order ablation");
    std::string multi_out, multi_arch;
    int multi_k = 3, multi_catalogs = 1, multi_tasks = 4, multi_experts = 12, multi_probe = 16, multi_eval = 64;
    int multi_instances = 24, multi_pairs = 120;
    std::uint64_t multi_seed = 1;
    multi->add_option("--k", multi_k, "merge width (3 or 4)")->check(CLI::IsMember({3, 4}));
    multi->add_option("--out", multi_out, "report directory")->required();
    multi->add_option("--arch", multi_arch, "arch as V,d,L,H,ff,T");
    multi->add_option("--catalogs", multi_catalogs, "number of seeded catalogs");
    multi->add_option("--tasks", multi_tasks, "tasks per catalog");
    multi->add_option("--experts-per-task", multi_experts, "checkpoints per task");
    multi->add_option("--probe-size", multi_probe, "probe prompts per task");
    multi->add_option("--eval-size", multi_eval, "eval sequences per task");
    multi->add_option("--instances", multi_instances, "merge instances per catalog");
    multi->add_option("--pairs", multi_pairs, "training pairs per catalog");
    multi->add_option("--seed", multi_seed, "base seed");

    // bandit
    auto* ban = app.add_subcommand("bandit", "online operator selection under distribution shift");
    std::string ban_out, ban_arch, ban_policy = "lints", ban_shift;
    int ban_rounds = 60, ban_tasks = 5, ban_experts = 10, ban_probe = 16, ban_eval = 64, ban_pairs = 160;
    std::uint64_t ban_seed = 1;
    ban->add_option("--policy", ban_policy, "lints|linucb|uniform|oracle|all")
        ->check(CLI::IsMember({"lints", "linucb", "uniform", "oracle", "all"}));
    ban->add_option("--rounds", ban_rounds, "online rounds");
    ban->add_option("--shift-task", ban_shift, "held-out task id (default: last task)");
    ban->add_option("--out", ban_out, "report directory")->required();
    ban->add_option("--arch", ban_arch, "arch as V,d,L,H,ff,T");
    ban->add_option("--tasks", ban_tasks, "tasks in the catalog (incl. shift task)");
    ban->add_option("--experts-per-task", ban_experts, "checkpoints per task");
    ban->add_option("--probe-size", ban_probe, "probe prompts per task");
    ban->add_option("--eval-size", ban_eval, "eval sequences per task");
    ban->add_option("--pairs", ban_pairs, "logged pairs for warm start");
    ban->add_option("--seed", ban_seed, "seed");

    // report
    auto* rep = app.add_subcommand("report", "render a report bundle to text and plot CSVs");
    std::string rep_in;
    rep->add_option("--in", rep_in, "report bundle directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            const ArchConfig arch = parse_arch(gen_arch);
            const Catalog catalog = generate_catalog(arch, gen_tasks, gen_experts, gen_probe, gen_eval, gen_seed);
            save_catalog(catalog, gen_out);
            write_run_manifest(gen_out,
                               json{{"command", "generate"},
                                    {"tasks", gen_tasks},
                                    {"experts_per_task", gen_experts},
                                    {"probe_size", gen_probe},
                                    {"eval_size", gen_eval}},
                               gen_seed);
            std::cout << "catalog written to " << gen_out << " (" << catalog.checkpoints.size()
                      << " checkpoints, " << catalog.tasks.size() << " tasks)\n";
        } else if (*feat) {
            const Catalog catalog = load_catalog(feat_catalog);
            const SimilarityTable table = build_similarity_table(catalog);
            export_similarity_csv(table, feat_out);
            std::cout << "similarity table: " << table.stats.pair_entries << " entries, "
                      << table.stats.trace_sets_computed << " trace sets -> " << feat_out << "\n";
        } else if (*train) {
            const Catalog catalog = load_catalog(train_catalog);
            const SimilarityTable table = table_for(catalog, train_features);
            DatasetConfig dc;
            dc.n_test = train_test_pairs;
            const PairwiseDataset dataset = build_pairwise_dataset(catalog, table, train_pairs, train_seed, dc);
            SelectorHyperparams hyper;
            hyper.seed = train_seed;
            const SelectorModel model = train_selector(dataset, hyper);
            save_selector(model, train_out);
            const ClassifierReport report = evaluate_classifier(model, dataset);
            std::cout << "selector saved to " << train_out << " (test accuracy "
                      << report.accuracy << " on " << report.n << " pairs; labels linear/slerp/ties = "
                      << dataset.label_balance[0] << "/" << dataset.label_balance[1] << "/"
                      << dataset.label_balance[2] << ")\n";
        } else if (*sel) {
            const Catalog catalog = load_catalog(sel_catalog);
            const SimilarityTable table = table_for(catalog, sel_features);
            const SelectorModel model = load_selector(sel_model_file);
            const EnumerationMode mode =
                sel_mode == "exhaustive" ? EnumerationMode::Exhaustive : EnumerationMode::Sampled;
            const MergePlan plan =
                select_plan(split_csv(sel_models), table, model, sel_task, mode, sel_max_candidates, sel_seed);
            std::cout << plan.to_json_string() << "\n";
        } else if (*mrg) {
            const Catalog catalog = load_catalog(mrg_catalog);
            std::ifstream in(mrg_plan, std::ios::binary);
            if (!in.good()) {
                throw SimmergeError("cannot open plan file '" + mrg_plan + "'");
            }
            std::stringstream ss;
            ss << in.rdbuf();
            const MergePlan plan = MergePlan::from_json_string(ss.str());
            const Checkpoint merged = execute_plan(plan, catalog);
            save_checkpoint(merged, mrg_out);
            std::cout << "merged checkpoint written to " << mrg_out << ".manifest.json/.bin\n";
        } else if (*off) {
            const ArchConfig arch = parse_arch(off_arch);
            for (int c = 0; c < off_catalogs; ++c) {
                const std::uint64_t seed = off_seed + static_cast<std::uint64_t>(c);
                const Catalog catalog =
                    generate_catalog(arch, off_tasks, off_experts, off_probe, off_eval, seed);
                OfflineCampaignConfig cfg;
                cfg.n_train_pairs = off_pairs;
                cfg.n_test_pairs = off_test;
                cfg.seed = seed;
                cfg.selector.seed = seed;
                const ReportBundle bundle = run_offline_campaign(catalog, cfg);
                const std::string dir =
                    off_catalogs == 1 ? off_out : off_out + "/catalog_" + std::to_string(seed);
                const json echo{{"command", "eval-offline"}, {"pairs", off_pairs},
                                {"test_pairs", off_test},    {"tasks", off_tasks},
                                {"experts_per_task", off_experts}};
                write_report_bundle(bundle, dir, echo.dump());
                std::cout << "offline campaign (seed " << seed << "): simmerge macro gap-closed "
                          << bundle.macro.at("simmerge").mean_gap_closed << " -> " << dir << "\n";
            }
        } else if (*multi) {
            const ArchConfig arch = parse_arch(multi_arch);
            for (int c = 0; c < multi_catalogs; ++c) {
                const std::uint64_t seed = multi_seed + static_cast<std::uint64_t>(c);
                const Catalog catalog =
                    generate_catalog(arch, multi_tasks, multi_experts, multi_probe, multi_eval, seed);
                MultiwayCampaignConfig cfg;
                cfg.n_instances = multi_instances;
                cfg.n_train_pairs = multi_pairs;
                cfg.seed = seed;
                cfg.selector.seed = seed;
                const ReportBundle bundle = run_multiway_campaign(catalog, multi_k, cfg);
                const std::string dir =
                    multi_catalogs == 1 ? multi_out : multi_out + "/catalog_" + std::to_string(seed);
                const json echo{{"command", "eval-multiway"}, {"k", multi_k},
                                {"instances", multi_instances}, {"pairs", multi_pairs}};
                write_report_bundle(bundle, dir, echo.dump());
                std::cout << "multiway campaign k=" << multi_k << " (seed " << seed
                          << "): simmerge macro gap-closed " << bundle.macro.at("simmerge").mean_gap_closed
                          << " -> " << dir << "\n";
            }
        } else if (*ban) {
            const ArchConfig arch = parse_arch(ban_arch);
            const Catalog catalog = generate_catalog(arch, ban_tasks, ban_experts, ban_probe, ban_eval, ban_seed);
            BanditCampaignConfig cfg;
            cfg.rounds = ban_rounds;
            cfg.shift_task = ban_shift;
            cfg.n_train_pairs = ban_pairs;
            cfg.seed = ban_seed;
            cfg.encoder.seed = ban_seed;
            if (ban_policy != "all") {
                cfg.policies = {policy_from_name(ban_policy)};
            }
            const ReportBundle bundle = run_bandit_campaign(catalog, cfg);
            const json echo{{"command", "bandit"}, {"policy", ban_policy}, {"rounds", ban_rounds},
                            {"pairs", ban_pairs}};
            write_report_bundle(bundle, ban_out, echo.dump());
            for (const auto& [policy, trace] : bundle.regret_traces) {
                std::cout << "policy " << policy << ": final cumulative regret "
                          << (trace.empty() ? 0.0 : trace.back()) << "\n";
            }
            std::cout << "bandit report -> " << ban_out << "\n";
        } else if (*rep) {
            std::cout << render_report_text(rep_in);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
