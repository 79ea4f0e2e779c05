#include "simmerge/merge.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

namespace simmerge {

using nlohmann::json;

std::string operator_name(OperatorKind kind) {
    switch (kind) {
    case OperatorKind::Linear: return "linear";
    case OperatorKind::Slerp: return "slerp";
    case OperatorKind::Ties: return "ties";
    }
    fail("operator_name: bad kind");
}

OperatorKind operator_from_name(const std::string& name) {
    if (name == "linear") {
        return OperatorKind::Linear;
    }
    if (name == "slerp") {
        return OperatorKind::Slerp;
    }
    if (name == "ties") {
        return OperatorKind::Ties;
    }
    fail("unknown operator '" + name + "'");
}

OperatorKind operator_from_index(int index) {
    require(index >= 0 && index < kOperatorCount, "operator index out of range");
    return static_cast<OperatorKind>(index);
}

int operator_index(OperatorKind kind) { return static_cast<int>(kind); }

void MergeOperator::validate() const {
    require(alpha >= 0.0 && alpha <= 1.0, "merge operator: alpha out of [0,1]");
    if (kind == OperatorKind::Ties) {
        require(tau.has_value(), "merge operator: ties requires tau");
        require(*tau >= 0.0, "merge operator: negative tau");
    } else {
        require(!tau.has_value(), "merge operator: tau only valid for ties");
    }
}

MergeOperator MergeOperator::make(OperatorKind kind, double alpha, double tau) {
    if (kind == OperatorKind::Ties) {
        return ties(alpha, tau);
    }
    return {kind, alpha, std::nullopt};
}

void MergePlan::validate() const {
    require(model_ids.size() >= 2, "merge plan: need at least 2 models");
    require(operators.size() == model_ids.size() - 1, "merge plan: operator count must be model count - 1");
    std::set<std::string> seen(model_ids.begin(), model_ids.end());
    require(seen.size() == model_ids.size(), "merge plan: duplicate model ids");
    for (const auto& op : operators) {
        op.validate();
    }
}

std::string MergePlan::to_json_string() const {
    json j;
    j["task_id"] = task_id;
    j["model_ids"] = model_ids;
    json ops = json::array();
    for (const auto& op : operators) {
        json o{{"kind", operator_name(op.kind)}, {"alpha", op.alpha}};
        if (op.tau.has_value()) {
            o["tau"] = *op.tau;
        }
        ops.push_back(std::move(o));
    }
    j["operators"] = ops;
    return j.dump(2);
}

MergePlan MergePlan::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail("merge plan: bad JSON: " + std::string(e.what()));
    }
    MergePlan plan;
    plan.task_id = j.at("task_id").get<std::string>();
    plan.model_ids = j.at("model_ids").get<std::vector<std::string>>();
    for (const auto& o : j.at("operators")) {
        MergeOperator op;
        op.kind = operator_from_name(o.at("kind").get<std::string>());
        op.alpha = o.at("alpha").get<double>();
        if (o.contains("tau")) {
            op.tau = o.at("tau").get<double>();
        }
        op.validate();
        plan.operators.push_back(op);
    }
    plan.validate();
    return plan;
}

namespace {

void check_mergeable(const Checkpoint& a, const Checkpoint& b) {
    require(a.same_arch(b), "merge: arch mismatch between '" + a.id() + "' and '" + b.id() + "'");
}

std::string merged_id(const Checkpoint& a, const Checkpoint& b, const std::string& op) {
    return op + "(" + a.id() + "," + b.id() + ")";
}

} // namespace

Checkpoint merge_linear(const Checkpoint& a, const Checkpoint& b, double alpha) {
    check_mergeable(a, b);
    require(alpha >= 0.0 && alpha <= 1.0, "merge_linear: alpha out of [0,1]");
    const double wa = 1.0 - alpha;
    std::vector<float> out(a.flat().size());
    const auto fa = a.flat();
    const auto fb = b.flat();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(wa * static_cast<double>(fa[i]) + alpha * static_cast<double>(fb[i]));
    }
    return Checkpoint(a.arch(), merged_id(a, b, "linear"), std::move(out));
}

Checkpoint merge_slerp(const Checkpoint& a, const Checkpoint& b, double alpha) {
    check_mergeable(a, b);
    require(alpha >= 0.0 && alpha <= 1.0, "merge_slerp: alpha out of [0,1]");

    Checkpoint out(a.arch(), merged_id(a, b, "slerp"));
    for (std::size_t ti = 0; ti < a.layout().size(); ++ti) {
        const auto ta = a.tensor_at(ti);
        const auto tb = b.tensor_at(ti);
        auto to = out.tensor_at_mut(ti);
        const std::size_t n = ta.size();

        double na = 0.0, nb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            na += static_cast<double>(ta[i]) * ta[i];
            nb += static_cast<double>(tb[i]) * tb[i];
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        require(na > 0.0 && nb > 0.0,
                "merge_slerp: zero-norm layer tensor '" + a.layout()[ti].name + "'");
        const double target = 0.5 * (na + nb);

        double dot_ab = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dot_ab += (static_cast<double>(ta[i]) / na) * (static_cast<double>(tb[i]) / nb);
        }
        const double cos_phi = std::clamp(dot_ab, -1.0, 1.0);
        const double phi = std::acos(cos_phi);
        const double sin_phi = std::sin(phi);

        std::vector<double> unit(n);
        if (sin_phi < 1e-6) {
            // Near-parallel (or antipodal): the closed form is singular, fall
            // back to linear interpolation of the normalized tensors.
            for (std::size_t i = 0; i < n; ++i) {
                unit[i] = (1.0 - alpha) * (static_cast<double>(ta[i]) / na) +
                          alpha * (static_cast<double>(tb[i]) / nb);
            }
        } else {
            const double ca = std::sin((1.0 - alpha) * phi) / sin_phi;
            const double cb = std::sin(alpha * phi) / sin_phi;
            for (std::size_t i = 0; i < n; ++i) {
                unit[i] = ca * (static_cast<double>(ta[i]) / na) + cb * (static_cast<double>(tb[i]) / nb);
            }
        }

        double un = 0.0;
        for (double x : unit) {
            un += x * x;
        }
        un = std::sqrt(un);
        require(un > 0.0, "merge_slerp: degenerate antipodal midpoint in tensor '" + a.layout()[ti].name + "'");
        const double scale = target / un;
        for (std::size_t i = 0; i < n; ++i) {
            to[i] = static_cast<float>(unit[i] * scale);
        }
    }
    return out;
}

Checkpoint merge_ties(const Checkpoint& a, const Checkpoint& b, double alpha, double tau) {
    check_mergeable(a, b);
    require(alpha >= 0.0 && alpha <= 1.0, "merge_ties: alpha out of [0,1]");
    require(tau >= 0.0, "merge_ties: negative tau");

    std::vector<float> out(a.flat().size());
    const auto fa = a.flat();
    const auto fb = b.flat();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = fa[i];
        const double y = fb[i];
        const double ax = std::fabs(x);
        const double ay = std::fabs(y);
        double r = 0.0;
        if (x * y > 0.0 && std::max(ax, ay) >= tau) {
            r = alpha * x + (1.0 - alpha) * y;
        } else if (x * y <= 0.0 && ax >= ay && ax >= tau) {
            r = x;
        } else if (x * y <= 0.0 && ay > ax && ay >= tau) {
            r = y;
        }
        out[i] = static_cast<float>(r);
    }
    return Checkpoint(a.arch(), merged_id(a, b, "ties"), std::move(out));
}

Checkpoint apply_operator(const MergeOperator& op, const Checkpoint& a, const Checkpoint& b) {
    op.validate();
    switch (op.kind) {
    case OperatorKind::Linear: return merge_linear(a, b, op.alpha);
    case OperatorKind::Slerp: return merge_slerp(a, b, op.alpha);
    case OperatorKind::Ties: return merge_ties(a, b, op.alpha, *op.tau);
    }
    fail("apply_operator: bad kind");
}

Checkpoint execute_plan(const MergePlan& plan, const Catalog& catalog) {
    plan.validate();
    std::set<std::string> tasks_used;
    for (const auto& id : plan.model_ids) {
        require(catalog.has_id(id), "execute_plan: unknown id '" + id + "'");
        const std::string task = catalog.task_of(id);
        if (!task.empty()) {
            require(tasks_used.insert(task).second,
                    "execute_plan: more than one checkpoint from task '" + task + "'");
        }
    }

    Checkpoint merged = catalog.by_id(plan.model_ids[0]);
    for (std::size_t j = 1; j < plan.model_ids.size(); ++j) {
        merged = apply_operator(plan.operators[j - 1], merged, catalog.by_id(plan.model_ids[j]));
    }
    merged.set_id("plan:" + plan.task_id + ":" + std::to_string(plan.model_ids.size()) + "way");
    return merged;
}

} // namespace simmerge
