#include <doctest.h>

#include <cmath>

#include "simmerge/features.hpp"
#include "test_util.hpp"

using namespace simmerge;
using simmerge::test::TempDir;
using simmerge::test::random_checkpoint;

namespace {

std::vector<ForwardTrace> traces_for(const Checkpoint& ckpt, const ProbeSet& probes) {
    std::vector<ForwardTrace> out;
    for (std::size_t i = 0; i < probes.prompts.size(); ++i) {
        out.push_back(forward(ckpt, probes.prompts[i], probes.task_id + "#" + std::to_string(i)));
    }
    return out;
}

// Hand-built single-position traces with explicit logits.
ForwardTrace logits_trace(std::vector<float> logits, int vocab, const std::string& prompt_id) {
    ForwardTrace t;
    t.prompt_id = prompt_id;
    t.t_len = static_cast<int>(logits.size()) / vocab;
    t.vocab = vocab;
    t.logits = std::move(logits);
    return t;
}

} // namespace

TEST_CASE("feature layout: 19 named entries, fixed order") {
    const auto& names = feature_names();
    CHECK(names.size() == kFeatureDim);
    CHECK(names[0] == "kl_mean");
    CHECK(names[4] == "kl_q90");
    CHECK(names[5] == "act_cos_mean");
    CHECK(names[10] == "attn_cos_mean");
    CHECK(names[15] == "weight_cos");
    CHECK(names[16] == "weight_l2");
    CHECK(names[17] == "norm_a");
    CHECK(names[18] == "norm_b");
}

TEST_CASE("kl_features: identical traces give all-zero summaries") {
    const Catalog c = generate_catalog(ArchConfig{}, 2, 1, 4, 8, 3);
    const auto traces = traces_for(c.by_id("ckpt_t0_0"), c.probes("t0"));
    const FiveSummary s = kl_features(traces, traces);
    CHECK(s.mean == 0.0);
    CHECK(s.median == 0.0);
    CHECK(s.q90 == 0.0);
}

TEST_CASE("kl_features: closed form for a two-token distribution") {
    // p_a ~ (1, 0) in the limit, p_b = (0.5, 0.5): KL -> ln 2. Logits
    // (20, -20) give p_a within 1e-17 of the limit.
    const std::vector<ForwardTrace> a = {logits_trace({20.0f, -20.0f}, 2, "p")};
    const std::vector<ForwardTrace> b = {logits_trace({0.0f, 0.0f}, 2, "p")};
    const FiveSummary s = kl_features(a, b);
    CHECK(s.mean == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    CHECK(s.mean == doctest::Approx(0.6931).epsilon(1e-4));
}

TEST_CASE("kl is asymmetric on a seeded catalog") {
    const Catalog c = generate_catalog(ArchConfig{}, 2, 2, 6, 8, 17);
    const auto ta = traces_for(c.by_id("ckpt_t0_0"), c.probes("t0"));
    const auto tb = traces_for(c.by_id("ckpt_t1_0"), c.probes("t0"));
    const FiveSummary ab = kl_features(ta, tb);
    const FiveSummary ba = kl_features(tb, ta);
    CHECK(std::fabs(ab.mean - ba.mean) > 1e-6);
    CHECK(ab.mean >= 0.0);
    CHECK(ba.mean >= 0.0);
}

TEST_CASE("kl_features rejects mismatched prompt sets") {
    const Catalog c = generate_catalog(ArchConfig{}, 2, 1, 4, 8, 5);
    const auto ta = traces_for(c.by_id("ckpt_t0_0"), c.probes("t0"));
    auto tb = traces_for(c.by_id("ckpt_t1_0"), c.probes("t0"));
    tb.pop_back();
    CHECK_THROWS_AS(kl_features(ta, tb), SimmergeError);
}

TEST_CASE("activation cosine: identical, antipodal, bounded") {
    const Catalog c = generate_catalog(ArchConfig{}, 2, 1, 4, 8, 7);
    auto ta = traces_for(c.by_id("ckpt_t0_0"), c.probes("t0"));
    const FiveSummary same = activation_cosine_features(ta, ta);
    CHECK(same.mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(same.q25 == doctest::Approx(1.0).epsilon(1e-12));

    auto negated = ta;
    for (auto& tr : negated) {
        for (auto& layer : tr.hidden) {
            for (auto& v : layer) {
                v = -v;
            }
        }
    }
    const FiveSummary anti = activation_cosine_features(ta, negated);
    CHECK(anti.mean == doctest::Approx(-1.0).epsilon(1e-12));

    const auto tb = traces_for(c.by_id("ckpt_t1_0"), c.probes("t0"));
    const FiveSummary cross = activation_cosine_features(ta, tb);
    for (double v : {cross.mean, cross.median, cross.q25, cross.q75, cross.q90}) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("attention cosine: identity, nonnegativity, quantile ordering") {
    const Catalog c = generate_catalog(ArchConfig{}, 2, 2, 6, 8, 9);
    const auto ta = traces_for(c.by_id("ckpt_t0_0"), c.probes("t0"));
    const auto tb = traces_for(c.by_id("ckpt_t1_1"), c.probes("t0"));

    const FiveSummary same = attention_cosine_features(ta, ta);
    CHECK(same.mean == doctest::Approx(1.0).epsilon(1e-12));

    const FiveSummary cross = attention_cosine_features(ta, tb);
    // attention rows are nonnegative, so cosines are nonnegative
    CHECK(cross.q25 >= 0.0);
    CHECK(cross.mean >= 0.0);
    CHECK(cross.mean <= 1.0);
    CHECK(cross.q25 <= cross.median);
    CHECK(cross.median <= cross.q75);
    CHECK(cross.q75 <= cross.q90);
}

TEST_CASE("weight metrics: closed forms") {
    const ArchConfig arch;
    const Checkpoint a = random_checkpoint(arch, 11, "a");

    const WeightMetrics same = weight_metrics(a, a);
    CHECK(same.weight_cos == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(same.weight_l2 == 0.0);
    CHECK(same.norm_a == same.norm_b);

    Checkpoint scaled = a;
    for (auto& v : scaled.flat_mut()) {
        v *= 2.0f;
    }
    const WeightMetrics sc = weight_metrics(a, scaled);
    CHECK(sc.weight_cos == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(sc.norm_b == doctest::Approx(2.0 * sc.norm_a).epsilon(1e-6));
    CHECK(sc.weight_l2 == doctest::Approx(sc.norm_a).epsilon(1e-6));
}

TEST_CASE("build_feature_vector: layout, encoding, missing fields") {
    std::map<std::string, double> raw;
    for (const auto& name : feature_names()) {
        raw[name] = 0.5;
    }
    const auto x = build_feature_vector(raw, std::nullopt);
    CHECK(x.size() == 19);

    const TaskEncoding enc = make_task_encoding({"t0", "t1", "t2", "t3"}, "t2");
    const auto xt = build_feature_vector(raw, enc);
    CHECK(xt.size() == 23);
    CHECK(xt[19 + 2] == 1.0);
    CHECK(xt[19 + 0] == 0.0);

    raw.erase("kl_q75");
    CHECK_THROWS_WITH_AS(build_feature_vector(raw, std::nullopt), doctest::Contains("missing field"),
                         SimmergeError);

    std::map<std::string, double> raw2;
    for (const auto& name : feature_names()) {
        raw2[name] = 0.25;
    }
    const auto x1 = build_feature_vector(raw2, enc);
    const auto x2 = build_feature_vector(raw2, enc);
    CHECK(x1 == x2);
}

TEST_CASE("similarity table: counts, diagonal identities, determinism") {
    // 5 checkpoints across 2 tasks (3 + 2), 2 tasks -> 10 cached trace sets
    // and 5*4*2 = 40 ordered-pair entries.
    ArchConfig arch;
    Catalog c = generate_catalog(arch, 2, 3, 4, 8, 21);
    c.checkpoints.pop_back(); // drop one checkpoint of t1 -> 5 total
    c.tasks[1].checkpoint_ids.pop_back();

    const SimilarityTable table = build_similarity_table(c);
    CHECK(table.stats.trace_sets_computed == 10);
    CHECK(table.stats.pair_entries == 40);
    CHECK(table.entries.size() == 40);

    // Diagonal behavior comes from the feature functions directly.
    const auto traces = table.traces("ckpt_t0_0", "t0");
    const PairFeatures diag =
        compute_pair_features(traces, traces, c.by_id("ckpt_t0_0"), c.by_id("ckpt_t0_0"), "t0");
    CHECK(diag.raw.at("kl_mean") == 0.0);
    CHECK(diag.raw.at("act_cos_mean") == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(diag.raw.at("attn_cos_mean") == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(diag.raw.at("weight_l2") == 0.0);
    CHECK(diag.raw.at("weight_cos") == doctest::Approx(1.0).epsilon(1e-12));

    const SimilarityTable again = build_similarity_table(c);
    for (const auto& [key, pf] : table.entries) {
        CHECK(again.entries.at(key).x == pf.x);
    }
}

TEST_CASE("cache-vs-fresh bit equality") {
    const Catalog c = generate_catalog(ArchConfig{}, 2, 2, 4, 8, 23);
    const SimilarityTable table = build_similarity_table(c);
    for (const auto& a : {"ckpt_t0_0", "ckpt_t1_1"}) {
        for (const auto& b : {"ckpt_t1_0", "ckpt_t0_1"}) {
            for (const auto& task : {"t0", "t1"}) {
                const auto fresh_a = traces_for(c.by_id(a), c.probes(task));
                const auto fresh_b = traces_for(c.by_id(b), c.probes(task));
                const PairFeatures fresh = compute_pair_features(fresh_a, fresh_b, c.by_id(a), c.by_id(b), task);
                const PairFeatures& cached = table.pair(a, b, task);
                CHECK(fresh.x == cached.x); // bit-for-bit
            }
        }
    }
}

TEST_CASE("pair-swap symmetry for cosine/l2 channels") {
    const Catalog c = generate_catalog(ArchConfig{}, 2, 2, 4, 8, 25);
    const SimilarityTable table = build_similarity_table(c);
    const auto& ab = table.pair("ckpt_t0_0", "ckpt_t1_0", "t0");
    const auto& ba = table.pair("ckpt_t1_0", "ckpt_t0_0", "t0");
    CHECK(ab.raw.at("weight_cos") == ba.raw.at("weight_cos"));
    CHECK(ab.raw.at("weight_l2") == ba.raw.at("weight_l2"));
    CHECK(ab.raw.at("norm_a") == ba.raw.at("norm_b"));
    CHECK(ab.raw.at("act_cos_mean") == ba.raw.at("act_cos_mean"));
    CHECK(ab.raw.at("attn_cos_mean") == ba.raw.at("attn_cos_mean"));
}

TEST_CASE("scale sensitivity: unembedding rescale moves KL but not attention cosines") {
    Catalog c = generate_catalog(ArchConfig{}, 2, 2, 4, 8, 27);
    Checkpoint scaled = c.by_id("ckpt_t0_0");
    scaled.set_id("scaled");
    for (auto& v : scaled.tensor_mut("unembed")) {
        v *= 3.0f;
    }
    const auto ta = traces_for(c.by_id("ckpt_t0_0"), c.probes("t0"));
    const auto tb = traces_for(scaled, c.probes("t0"));
    const FiveSummary kl = kl_features(ta, tb);
    CHECK(kl.mean > 1e-4);
    const FiveSummary attn = attention_cosine_features(ta, tb);
    CHECK(attn.mean == doctest::Approx(1.0).epsilon(1e-12));
    const FiveSummary act = activation_cosine_features(ta, tb);
    CHECK(act.mean == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("CSV export/import round trip") {
    TempDir tmp;
    const Catalog c = generate_catalog(ArchConfig{}, 2, 2, 4, 8, 29);
    const SimilarityTable table = build_similarity_table(c);
    const std::string path = tmp.file("features.csv");
    export_similarity_csv(table, path);

    const SimilarityTable back = import_similarity_csv(path);
    CHECK(back.task_ids == table.task_ids);
    CHECK(back.entries.size() == table.entries.size());
    for (const auto& [key, pf] : table.entries) {
        const auto& other = back.entries.at(key);
        for (std::size_t i = 0; i < pf.x.size(); ++i) {
            CHECK(other.x[i] == doctest::Approx(pf.x[i]).epsilon(1e-14));
        }
    }
}
