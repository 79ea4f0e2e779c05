#include "simmerge/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

namespace simmerge {

using nlohmann::json;
namespace fs = std::filesystem;

void aggregate_outcomes(ReportBundle& bundle) {
    bundle.per_task.clear();
    bundle.macro.clear();

    struct Acc {
        double score = 0.0, de = 0.0, da = 0.0, gc = 0.0;
        int n = 0;
    };
    std::map<std::string, std::map<std::string, Acc>> acc;
    for (const auto& o : bundle.outcomes) {
        Acc& a = acc[o.method][o.plan.task_id];
        a.score += o.score;
        a.de += delta_expert(o.score, o.s_expert);
        a.da += delta_aux(o.score, o.s_aux);
        a.gc += gap_closed(o.score, o.s_expert, o.s_aux);
        a.n += 1;
    }
    for (const auto& [method, tasks] : acc) {
        MethodStats macro;
        int task_count = 0;
        for (const auto& [task, a] : tasks) {
            MethodStats s;
            s.mean_score = a.score / a.n;
            s.mean_delta_expert = a.de / a.n;
            s.mean_delta_aux = a.da / a.n;
            s.mean_gap_closed = a.gc / a.n;
            s.n = a.n;
            bundle.per_task[method][task] = s;
            macro.mean_score += s.mean_score;
            macro.mean_delta_expert += s.mean_delta_expert;
            macro.mean_delta_aux += s.mean_delta_aux;
            macro.mean_gap_closed += s.mean_gap_closed;
            macro.n += s.n;
            task_count += 1;
        }
        macro.mean_score /= task_count;
        macro.mean_delta_expert /= task_count;
        macro.mean_delta_aux /= task_count;
        macro.mean_gap_closed /= task_count;
        bundle.macro[method] = macro;
    }
}

double case_feature_value(const SimilarityTable& table, const std::vector<std::string>& model_ids,
                          const std::string& task_id, const std::string& feature) {
    require(model_ids.size() >= 2, "case_feature_value: need at least 2 models");
    double acc = 0.0;
    int count = 0;
    for (const auto& a : model_ids) {
        for (const auto& b : model_ids) {
            if (a == b) {
                continue;
            }
            acc += table.pair(a, b, task_id).raw.at(feature);
            count += 1;
        }
    }
    return acc / count;
}

namespace {

const char* kFixedMethods[kOperatorCount] = {"fixed-linear", "fixed-slerp", "fixed-ties"};

// Expert utility per task, computed once.
std::map<std::string, double> expert_baselines(const Catalog& catalog) {
    std::map<std::string, double> s;
    for (const auto& t : catalog.tasks) {
        s[t.task_id] = catalog.utility(catalog.by_id(t.expert_id), t.task_id);
    }
    return s;
}

MergePlan pair_plan(const std::string& task, const std::string& a, const std::string& b, OperatorKind kind,
                    double alpha, double tau) {
    MergePlan plan;
    plan.task_id = task;
    plan.model_ids = {a, b};
    plan.operators = {MergeOperator::make(kind, alpha, tau)};
    return plan;
}

void fill_feature_analyses(ReportBundle& bundle, const SimilarityTable& table,
                           const std::vector<OperatorCase>& template_cases,
                           const std::vector<std::vector<std::string>>& case_models,
                           const std::vector<std::string>& case_tasks) {
    bundle.correlation_cells.clear();
    bundle.tail_cells.clear();
    if (template_cases.size() < 5) {
        return;
    }
    for (const auto& feature : feature_names()) {
        std::vector<OperatorCase> cases = template_cases;
        for (std::size_t i = 0; i < cases.size(); ++i) {
            cases[i].feature_value = case_feature_value(table, case_models[i], case_tasks[i], feature);
        }
        const auto cells = correlations(cases, feature);
        bundle.correlation_cells.insert(bundle.correlation_cells.end(), cells.begin(), cells.end());
        for (int o = 0; o < kOperatorCount; ++o) {
            TailCell tc;
            tc.feature = feature;
            tc.op = operator_from_index(o);
            tc.dp_win = tail_effect(cases, tc.op);
            tc.n = static_cast<int>(cases.size());
            bundle.tail_cells.push_back(tc);
        }
    }
}

} // namespace

ReportBundle run_offline_campaign(const Catalog& catalog, const OfflineCampaignConfig& cfg) {
    ReportBundle bundle;
    bundle.kind = "offline";
    bundle.seed = cfg.seed;

    const SimilarityTable table = build_similarity_table(catalog);
    DatasetConfig dc = cfg.dataset;
    dc.n_test = cfg.n_test_pairs;
    const PairwiseDataset dataset = build_pairwise_dataset(catalog, table, cfg.n_train_pairs, cfg.seed, dc);
    bundle.label_balance = dataset.label_balance;

    SelectorHyperparams hyper = cfg.selector;
    hyper.use_task_encoding = true;
    const SelectorModel model = train_selector(dataset, hyper);
    bundle.confusion_with_encoding = evaluate_classifier(model, dataset);
    if (cfg.task_encoding_ablation) {
        SelectorHyperparams no_enc = cfg.selector;
        no_enc.use_task_encoding = false;
        const SelectorModel model_no_enc = train_selector(dataset, no_enc);
        bundle.confusion_without_encoding = evaluate_classifier(model_no_enc, dataset);
    }

    const auto s_expert = expert_baselines(catalog);

    std::vector<OperatorCase> cases;
    std::vector<std::vector<std::string>> case_models;
    std::vector<std::string> case_tasks;

    for (const auto& row : dataset.rows) {
        if (row.split != 2) {
            continue;
        }
        const std::string expert_id = catalog.task(row.task_id).expert_id;
        const std::string aux_id = row.id_a == expert_id ? row.id_b : row.id_a;
        const double aux_utility = catalog.utility(catalog.by_id(aux_id), row.task_id);
        const double expert_utility = s_expert.at(row.task_id);

        for (int o = 0; o < kOperatorCount; ++o) {
            MergeOutcome out;
            out.plan = pair_plan(row.task_id, row.id_a, row.id_b, operator_from_index(o), dc.alpha, dc.tau);
            out.method = kFixedMethods[o];
            out.score = row.utilities[static_cast<std::size_t>(o)];
            out.s_expert = expert_utility;
            out.s_aux = aux_utility;
            bundle.outcomes.push_back(std::move(out));
        }

        const OperatorKind predicted = predict_operator(model, row.input(true));
        MergeOutcome sim;
        sim.plan = pair_plan(row.task_id, row.id_a, row.id_b, predicted, dc.alpha, dc.tau);
        sim.method = "simmerge";
        sim.score = row.utilities[static_cast<std::size_t>(operator_index(predicted))];
        sim.s_expert = expert_utility;
        sim.s_aux = aux_utility;
        bundle.outcomes.push_back(std::move(sim));

        OperatorCase oc;
        oc.case_id = row.id_a + "|" + row.id_b + "|" + row.task_id;
        oc.scores = row.utilities;
        cases.push_back(std::move(oc));
        case_models.push_back({row.id_a, row.id_b});
        case_tasks.push_back(row.task_id);
    }

    aggregate_outcomes(bundle);
    fill_feature_analyses(bundle, table, cases, case_models, case_tasks);
    return bundle;
}

namespace {

struct MultiwayInstance {
    std::string task_id;
    std::vector<std::string> model_ids; // expert first, then auxiliaries
};

std::vector<MultiwayInstance> draw_instances(const Catalog& catalog, int k, int n_instances, Rng& rng) {
    require(static_cast<int>(catalog.tasks.size()) >= k,
            "multiway: need at least k tasks for distinct-task auxiliaries");
    std::vector<MultiwayInstance> instances;
    std::set<std::vector<std::string>> seen;
    int attempts = 0;
    while (static_cast<int>(instances.size()) < n_instances) {
        require(++attempts < n_instances * 1000, "multiway: could not draw enough distinct instances");
        const auto& target = catalog.tasks[rng.uniform_int(catalog.tasks.size())];

        std::vector<const TaskEntry*> others;
        for (const auto& t : catalog.tasks) {
            if (t.task_id != target.task_id) {
                others.push_back(&t);
            }
        }
        rng.shuffle(others);

        MultiwayInstance inst;
        inst.task_id = target.task_id;
        inst.model_ids.push_back(target.expert_id);
        for (int j = 0; j < k - 1; ++j) {
            const auto& pool = others[static_cast<std::size_t>(j)]->checkpoint_ids;
            inst.model_ids.push_back(pool[rng.uniform_int(pool.size())]);
        }
        std::vector<std::string> key = inst.model_ids;
        key.push_back(inst.task_id);
        if (seen.insert(key).second) {
            instances.push_back(std::move(inst));
        }
    }
    return instances;
}

double mean_aux_utility(const Catalog& catalog, const std::vector<std::string>& model_ids,
                        const std::string& task_id) {
    const std::string expert_id = catalog.task(task_id).expert_id;
    double acc = 0.0;
    int n = 0;
    for (const auto& id : model_ids) {
        if (id == expert_id) {
            continue;
        }
        acc += catalog.utility(catalog.by_id(id), task_id);
        n += 1;
    }
    require(n > 0, "multiway: no auxiliaries in plan");
    return acc / n;
}

MergePlan ordered_plan(const std::string& task, const std::vector<std::string>& order,
                       const std::vector<MergeOperator>& ops) {
    MergePlan plan;
    plan.task_id = task;
    plan.model_ids = order;
    plan.operators = ops;
    plan.validate();
    return plan;
}

} // namespace

ReportBundle run_multiway_campaign(const Catalog& catalog, int k, const MultiwayCampaignConfig& cfg) {
    require(k == 3 || k == 4, "run_multiway_campaign: k must be 3 or 4");

    ReportBundle bundle;
    bundle.kind = "multiway";
    bundle.seed = cfg.seed;

    const SimilarityTable table = build_similarity_table(catalog);
    DatasetConfig dc = cfg.dataset;
    dc.n_test = 0;
    const PairwiseDataset dataset = build_pairwise_dataset(catalog, table, cfg.n_train_pairs, cfg.seed, dc);
    bundle.label_balance = dataset.label_balance;
    SelectorHyperparams hyper = cfg.selector;
    hyper.use_task_encoding = true;
    const SelectorModel model = train_selector(dataset, hyper);

    const auto s_expert = expert_baselines(catalog);

    Rng rng = Rng(cfg.seed).split("multiway-campaign");
    const auto instances = draw_instances(catalog, k, cfg.n_instances, rng);

    std::vector<OperatorCase> cases;
    std::vector<std::vector<std::string>> case_models;
    std::vector<std::string> case_tasks;

    for (std::size_t idx = 0; idx < instances.size(); ++idx) {
        const auto& inst = instances[idx];
        const double expert_utility = s_expert.at(inst.task_id);
        const double aux_utility = mean_aux_utility(catalog, inst.model_ids, inst.task_id);
        const auto& evals = catalog.evals(inst.task_id);

        // One shared random order for the fixed-operator arms.
        std::vector<std::string> fixed_order = inst.model_ids;
        rng.shuffle(fixed_order);

        OperatorCase oc;
        oc.case_id = "inst" + std::to_string(idx);

        for (int o = 0; o < kOperatorCount; ++o) {
            std::vector<MergeOperator> ops(static_cast<std::size_t>(k - 1),
                                           MergeOperator::make(operator_from_index(o), cfg.plan_search.alpha,
                                                               cfg.plan_search.tau));
            MergeOutcome out;
            out.plan = ordered_plan(inst.task_id, fixed_order, ops);
            out.method = kFixedMethods[o];
            out.score = evaluate_utility(execute_plan(out.plan, catalog), evals);
            out.s_expert = expert_utility;
            out.s_aux = aux_utility;
            oc.scores[static_cast<std::size_t>(o)] = out.score;
            bundle.outcomes.push_back(std::move(out));
        }
        cases.push_back(oc);
        case_models.push_back(inst.model_ids);
        case_tasks.push_back(inst.task_id);

        // SimMerge: selector-chosen order and per-step operators.
        const MergePlan sim_plan = select_plan(inst.model_ids, table, model, inst.task_id,
                                               EnumerationMode::Exhaustive, 0, cfg.seed, cfg.plan_search);
        MergeOutcome sim;
        sim.plan = sim_plan;
        sim.method = "simmerge";
        sim.score = evaluate_utility(execute_plan(sim_plan, catalog), evals);
        sim.s_expert = expert_utility;
        sim.s_aux = aux_utility;
        bundle.outcomes.push_back(std::move(sim));

        // Order ablation: SimMerge's operator sequence, random order.
        std::vector<std::string> random_order = inst.model_ids;
        rng.shuffle(random_order);
        MergeOutcome rnd;
        rnd.plan = ordered_plan(inst.task_id, random_order, sim_plan.operators);
        rnd.method = "random-order";
        rnd.score = evaluate_utility(execute_plan(rnd.plan, catalog), evals);
        rnd.s_expert = expert_utility;
        rnd.s_aux = aux_utility;
        bundle.outcomes.push_back(std::move(rnd));
    }

    aggregate_outcomes(bundle);
    fill_feature_analyses(bundle, table, cases, case_models, case_tasks);
    return bundle;
}

namespace {

// True utilities of every (order, operator-sequence) plan. Shares merge
// prefixes across operator sequences: for one order the fold is a depth-wise
// tree with 3 branches per step.
void brute_force_order(const Catalog& catalog, const std::vector<std::string>& order,
                       const std::vector<std::vector<int>>& evals, double alpha, double tau,
                       const Checkpoint& prefix, std::size_t step, std::vector<int>& ops,
                       std::map<std::string, double>& out) {
    if (step == order.size()) {
        std::string key;
        for (const auto& id : order) {
            key += id + ";";
        }
        key += "|";
        for (int o : ops) {
            key += operator_name(operator_from_index(o)) + ";";
        }
        out[key] = evaluate_utility(prefix, evals);
        return;
    }
    const Checkpoint& next = catalog.by_id(order[step]);
    for (int o = 0; o < kOperatorCount; ++o) {
        ops.push_back(o);
        const Checkpoint merged = apply_operator(MergeOperator::make(operator_from_index(o), alpha, tau),
                                                 prefix, next);
        brute_force_order(catalog, order, evals, alpha, tau, merged, step + 1, ops, out);
        ops.pop_back();
    }
}

std::string plan_key(const MergePlan& plan) {
    std::string key;
    for (const auto& id : plan.model_ids) {
        key += id + ";";
    }
    key += "|";
    for (const auto& op : plan.operators) {
        key += operator_name(op.kind) + ";";
    }
    return key;
}

} // namespace

PlanOracleStudy run_plan_oracle_study(const PlanOracleConfig& cfg) {
    PlanOracleStudy study;

    struct GapAcc {
        double sim = 0.0, rnd = 0.0;
        int n = 0;
    };
    std::map<std::string, GapAcc> gaps;

    for (int c = 0; c < cfg.n_catalogs; ++c) {
        const std::uint64_t catalog_seed = fnv1a_u64(static_cast<std::uint64_t>(c), fnv1a_u64(cfg.seed));
        const Catalog catalog = generate_catalog(ArchConfig{}, cfg.n_tasks, cfg.experts_per_task,
                                                 cfg.probe_size, cfg.eval_size, catalog_seed);
        const SimilarityTable table = build_similarity_table(catalog);
        DatasetConfig dc = cfg.dataset;
        dc.n_test = 0;
        const PairwiseDataset dataset = build_pairwise_dataset(catalog, table, cfg.n_train_pairs, catalog_seed, dc);
        SelectorHyperparams hyper = cfg.selector;
        hyper.use_task_encoding = true;
        const SelectorModel model = train_selector(dataset, hyper);

        const auto s_expert = expert_baselines(catalog);

        Rng rng = Rng(catalog_seed).split("plan-oracle");
        const auto instances = draw_instances(catalog, cfg.k, cfg.instances_per_catalog, rng);

        for (const auto& inst : instances) {
            const auto& evals = catalog.evals(inst.task_id);

            // Exhaustive merge-and-evaluate oracle over all plans.
            std::map<std::string, double> true_utilities;
            std::vector<std::string> sorted_ids = inst.model_ids;
            std::sort(sorted_ids.begin(), sorted_ids.end());
            std::vector<std::string> perm = sorted_ids;
            do {
                std::vector<int> ops;
                brute_force_order(catalog, perm, evals, cfg.plan_search.alpha, cfg.plan_search.tau,
                                  catalog.by_id(perm[0]), 1, ops, true_utilities);
            } while (std::next_permutation(perm.begin(), perm.end()));

            const MergePlan sim_plan = select_plan(inst.model_ids, table, model, inst.task_id,
                                                   EnumerationMode::Exhaustive, 0, catalog_seed, cfg.plan_search);

            PlanInstanceResult res;
            res.task_id = inst.task_id;
            res.model_ids = inst.model_ids;
            res.simmerge_plan = sim_plan;
            res.plan_count = true_utilities.size();
            res.simmerge_utility = true_utilities.at(plan_key(sim_plan));

            double best = -1e300, worst = 1e300;
            std::size_t better = 0;
            for (const auto& [key, u] : true_utilities) {
                best = std::max(best, u);
                worst = std::min(worst, u);
                if (u > res.simmerge_utility) {
                    ++better;
                }
            }
            res.best_utility = best;
            res.worst_utility = worst;
            res.rank_fraction = static_cast<double>(better) / static_cast<double>(true_utilities.size());

            // Order ablation: same operator sequence, uniformly random order.
            std::vector<std::string> random_order = inst.model_ids;
            rng.shuffle(random_order);
            MergePlan rnd_plan = sim_plan;
            rnd_plan.model_ids = random_order;
            res.random_order_utility = true_utilities.at(plan_key(rnd_plan));

            res.s_expert = s_expert.at(inst.task_id);
            res.s_aux = mean_aux_utility(catalog, inst.model_ids, inst.task_id);

            GapAcc& g = gaps[inst.task_id];
            g.sim += gap_closed(res.simmerge_utility, res.s_expert, res.s_aux);
            g.rnd += gap_closed(res.random_order_utility, res.s_expert, res.s_aux);
            g.n += 1;

            study.instances.push_back(std::move(res));
        }
    }

    int hits = 0;
    for (const auto& r : study.instances) {
        if (r.rank_fraction < 0.30) {
            ++hits;
        }
    }
    study.top30_hit_rate = static_cast<double>(hits) / static_cast<double>(study.instances.size());

    double sim_macro = 0.0, rnd_macro = 0.0;
    for (const auto& [task, g] : gaps) {
        sim_macro += g.sim / g.n;
        rnd_macro += g.rnd / g.n;
    }
    study.simmerge_macro_gap = sim_macro / static_cast<double>(gaps.size());
    study.random_macro_gap = rnd_macro / static_cast<double>(gaps.size());
    return study;
}

ReportBundle run_bandit_campaign(const Catalog& catalog, const BanditCampaignConfig& cfg) {
    ReportBundle bundle;
    bundle.kind = "bandit";
    bundle.seed = cfg.seed;

    const std::string shift_task = cfg.shift_task.empty() ? catalog.tasks.back().task_id : cfg.shift_task;
    const SimilarityTable table = build_similarity_table(catalog);

    DatasetConfig dc = cfg.dataset;
    dc.n_test = 0;
    dc.exclude_task = shift_task;
    const PairwiseDataset dataset = build_pairwise_dataset(catalog, table, cfg.n_train_pairs, cfg.seed, dc);
    bundle.label_balance = dataset.label_balance;

    const BanditState warm = warm_start(dataset, cfg.encoder, cfg.bandit);
    const auto s_expert = expert_baselines(catalog);

    for (Policy policy : cfg.policies) {
        BanditState state = warm; // each policy starts from the same warm posteriors
        const BanditLog log = run_online(state, catalog, table, policy, cfg.rounds, shift_task, cfg.seed,
                                         dc.alpha, dc.tau);
        bundle.regret_traces[policy_name(policy)] = log.cumulative_regret;

        for (const auto& r : log.rounds) {
            std::stringstream ss(r.context_id);
            std::string expert_id, aux_id;
            std::getline(ss, expert_id, '|');
            std::getline(ss, aux_id, '|');

            MergeOutcome out;
            out.plan = pair_plan(r.task_id, expert_id, aux_id, operator_from_index(r.arm), dc.alpha, dc.tau);
            out.method = "bandit-" + policy_name(policy);
            out.score = r.reward;
            out.s_expert = s_expert.at(r.task_id);
            out.s_aux = catalog.utility(catalog.by_id(aux_id), r.task_id);
            bundle.outcomes.push_back(std::move(out));
        }
    }

    aggregate_outcomes(bundle);
    return bundle;
}

// ---- persistence ----

std::uint64_t file_fnv1a(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "file_fnv1a: cannot open '" + path + "'");
    std::uint64_t h = kFnvOffset;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= kFnvPrime;
        }
        if (in.eof()) {
            break;
        }
    }
    return h;
}

namespace {

json stats_to_json(const MethodStats& s) {
    return json{{"mean_score", s.mean_score},
                {"delta_expert", s.mean_delta_expert},
                {"delta_aux", s.mean_delta_aux},
                {"gap_closed", s.mean_gap_closed},
                {"n", s.n}};
}

json confusion_to_json(const ClassifierReport& rep) {
    json j;
    j["confusion"] = rep.confusion;
    j["per_class_recall"] = rep.per_class_recall;
    j["accuracy"] = rep.accuracy;
    j["n"] = rep.n;
    return j;
}

std::string hex64(std::uint64_t h) {
    std::stringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << h;
    return ss.str();
}

} // namespace

void write_report_bundle(const ReportBundle& bundle, const std::string& dir, const std::string& config_echo_json) {
    fs::create_directories(dir);
    const fs::path root(dir);
    std::vector<std::string> artifacts;

    {
        std::ofstream out(root / "outcomes.csv", std::ios::binary | std::ios::trunc);
        require(out.good(), "write_report_bundle: cannot open outcomes.csv");
        out << "case,method,task_id,model_ids,operators,score,s_expert,s_aux,delta_expert,delta_aux,gap_closed\n";
        out.precision(17);
        for (std::size_t i = 0; i < bundle.outcomes.size(); ++i) {
            const auto& o = bundle.outcomes[i];
            std::string ids, ops;
            for (const auto& id : o.plan.model_ids) {
                ids += (ids.empty() ? "" : ";") + id;
            }
            for (const auto& op : o.plan.operators) {
                ops += (ops.empty() ? "" : ";") + operator_name(op.kind);
            }
            out << i << "," << o.method << "," << o.plan.task_id << "," << ids << "," << ops << "," << o.score
                << "," << o.s_expert << "," << o.s_aux << "," << delta_expert(o.score, o.s_expert) << ","
                << delta_aux(o.score, o.s_aux) << "," << gap_closed(o.score, o.s_expert, o.s_aux) << "\n";
        }
        artifacts.push_back("outcomes.csv");
    }
    {
        json per_task;
        for (const auto& [method, tasks] : bundle.per_task) {
            for (const auto& [task, s] : tasks) {
                per_task[method][task] = stats_to_json(s);
            }
        }
        std::ofstream out(root / "per_task.json", std::ios::binary | std::ios::trunc);
        out << per_task.dump(2) << "\n";
        artifacts.push_back("per_task.json");
    }
    {
        json macro;
        for (const auto& [method, s] : bundle.macro) {
            macro[method] = stats_to_json(s);
        }
        std::ofstream out(root / "macro.json", std::ios::binary | std::ios::trunc);
        out << macro.dump(2) << "\n";
        artifacts.push_back("macro.json");
    }
    {
        json stats;
        stats["label_balance"] = json{{"linear", bundle.label_balance[0]},
                                      {"slerp", bundle.label_balance[1]},
                                      {"ties", bundle.label_balance[2]}};
        if (bundle.confusion_with_encoding) {
            stats["confusion_with_encoding"] = confusion_to_json(*bundle.confusion_with_encoding);
        }
        if (bundle.confusion_without_encoding) {
            stats["confusion_without_encoding"] = confusion_to_json(*bundle.confusion_without_encoding);
        }
        std::ofstream out(root / "stats.json", std::ios::binary | std::ios::trunc);
        out << stats.dump(2) << "\n";
        artifacts.push_back("stats.json");
    }
    if (!bundle.correlation_cells.empty()) {
        std::ofstream out(root / "correlations.csv", std::ios::binary | std::ios::trunc);
        out << "feature,operator,pearson,spearman,n\n";
        out.precision(17);
        for (const auto& c : bundle.correlation_cells) {
            out << c.feature << "," << operator_name(c.op) << ",";
            if (c.pearson) {
                out << *c.pearson;
            }
            out << ",";
            if (c.spearman) {
                out << *c.spearman;
            }
            out << "," << c.n << "\n";
        }
        artifacts.push_back("correlations.csv");
    }
    if (!bundle.tail_cells.empty()) {
        std::ofstream out(root / "tail_effects.csv", std::ios::binary | std::ios::trunc);
        out << "feature,operator,dp_win,n\n";
        out.precision(17);
        for (const auto& c : bundle.tail_cells) {
            out << c.feature << "," << operator_name(c.op) << "," << c.dp_win << "," << c.n << "\n";
        }
        artifacts.push_back("tail_effects.csv");
    }
    for (const auto& [policy, trace] : bundle.regret_traces) {
        const std::string name = "regret_" + policy + ".csv";
        std::ofstream out(root / name, std::ios::binary | std::ios::trunc);
        out << "round,cumulative_regret\n";
        out.precision(17);
        for (std::size_t i = 0; i < trace.size(); ++i) {
            out << i << "," << trace[i] << "\n";
        }
        artifacts.push_back(name);
    }

    json manifest;
    manifest["kind"] = bundle.kind;
    manifest["seed"] = bundle.seed;
    try {
        manifest["config"] = json::parse(config_echo_json);
    } catch (const json::exception&) {
        manifest["config"] = config_echo_json;
    }
    json hashes;
    for (const auto& name : artifacts) {
        hashes[name] = hex64(file_fnv1a((root / name).string()));
    }
    manifest["artifact_hashes"] = hashes;
    std::ofstream out(root / "manifest.json", std::ios::binary | std::ios::trunc);
    out << manifest.dump(2) << "\n";
}

std::string render_report_text(const std::string& bundle_dir) {
    const fs::path root(bundle_dir);
    auto read_json = [&](const std::string& name) {
        std::ifstream in(root / name, std::ios::binary);
        require(in.good(), "render_report_text: missing '" + name + "' in " + bundle_dir);
        json j;
        in >> j;
        return j;
    };

    const json manifest = read_json("manifest.json");
    const json macro = read_json("macro.json");
    const json per_task = read_json("per_task.json");

    std::stringstream out;
    out << "report kind: " << manifest.at("kind").get<std::string>() << "  (seed "
        << manifest.at("seed").get<std::uint64_t>() << ")\n\n";

    auto print_table = [&](const json& table, const std::string& title) {
        out << title << "\n";
        out << std::left << std::setw(18) << "method" << std::setw(10) << "task" << std::right << std::setw(12)
            << "score" << std::setw(12) << "d_expert" << std::setw(12) << "d_aux" << std::setw(12) << "gap"
            << std::setw(6) << "n" << "\n";
        for (auto it = table.begin(); it != table.end(); ++it) {
            const std::string method = it.key();
            auto print_row = [&](const std::string& task, const json& s) {
                out << std::left << std::setw(18) << method << std::setw(10) << task << std::right << std::fixed
                    << std::setprecision(3) << std::setw(12) << s.at("mean_score").get<double>() << std::setw(12)
                    << s.at("delta_expert").get<double>() << std::setw(12) << s.at("delta_aux").get<double>()
                    << std::setw(12) << s.at("gap_closed").get<double>() << std::setw(6) << s.at("n").get<int>()
                    << "\n";
            };
            if (it.value().contains("mean_score")) {
                print_row("macro", it.value());
            } else {
                for (auto jt = it.value().begin(); jt != it.value().end(); ++jt) {
                    print_row(jt.key(), jt.value());
                }
            }
        }
        out << "\n";
    };
    print_table(macro, "macro-averages");
    print_table(per_task, "per-task");

    // Plot-ready flat CSVs.
    {
        std::ofstream csv(root / "macro.csv", std::ios::binary | std::ios::trunc);
        csv << "method,mean_score,delta_expert,delta_aux,gap_closed,n\n";
        for (auto it = macro.begin(); it != macro.end(); ++it) {
            const auto& s = it.value();
            csv << it.key() << "," << s.at("mean_score").get<double>() << "," << s.at("delta_expert").get<double>()
                << "," << s.at("delta_aux").get<double>() << "," << s.at("gap_closed").get<double>() << ","
                << s.at("n").get<int>() << "\n";
        }
    }
    {
        std::ofstream csv(root / "per_task.csv", std::ios::binary | std::ios::trunc);
        csv << "method,task,mean_score,delta_expert,delta_aux,gap_closed,n\n";
        for (auto it = per_task.begin(); it != per_task.end(); ++it) {
            for (auto jt = it.value().begin(); jt != it.value().end(); ++jt) {
                const auto& s = jt.value();
                csv << it.key() << "," << jt.key() << "," << s.at("mean_score").get<double>() << ","
                    << s.at("delta_expert").get<double>() << "," << s.at("delta_aux").get<double>() << ","
                    << s.at("gap_closed").get<double>() << "," << s.at("n").get<int>() << "\n";
            }
        }
    }

    std::ofstream txt(root / "report.txt", std::ios::binary | std::ios::trunc);
    txt << out.str();
    return out.str();
}

} // namespace simmerge
