#include <doctest.h>

#include <cmath>

#include "simmerge/merge.hpp"
#include "simmerge/propagation.hpp"
#include "test_util.hpp"

using namespace simmerge;
using simmerge::test::random_checkpoint;

namespace {

// Exact KL between two explicit distributions (independent of the library's
// stabilized path).
double exact_kl(const std::vector<double>& p, const std::vector<double>& q) {
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

std::vector<double> random_distribution(Rng& rng, int n) {
    std::vector<double> p(static_cast<std::size_t>(n));
    double sum = 0.0;
    for (auto& v : p) {
        v = 0.05 + rng.uniform(); // bounded away from zero
        sum += v;
    }
    for (auto& v : p) {
        v /= sum;
    }
    return p;
}

} // namespace

TEST_CASE("mixture validation and fold weights") {
    const MixtureProxy s = singleton_mixture("a");
    CHECK_NOTHROW(validate_mixture(s));

    // (a,b) then c at alpha = 1/2 -> weights (1/4, 1/4, 1/2).
    MixtureProxy mix = fold_mixture(singleton_mixture("a"), "b", 0.5);
    mix = fold_mixture(mix, "c", 0.5);
    REQUIRE(mix.size() == 3);
    CHECK(mix[0].weight == doctest::Approx(0.25));
    CHECK(mix[1].weight == doctest::Approx(0.25));
    CHECK(mix[2].weight == doctest::Approx(0.5));
    double sum = 0.0;
    for (const auto& c : mix) {
        sum += c.weight;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

    MixtureProxy bad = {{"a", 0.5}, {"b", 0.4}};
    CHECK_THROWS_AS(validate_mixture(bad), SimmergeError);
}

TEST_CASE("fold-induced weights stay dyadic and normalized at every step") {
    MixtureProxy mix = singleton_mixture("m0");
    for (int step = 1; step <= 6; ++step) {
        mix = fold_mixture(mix, "m" + std::to_string(step), 0.5);
        double sum = 0.0;
        for (const auto& c : mix) {
            CHECK(c.weight > 0.0);
            // dyadic: weight * 2^step is an integer
            const double scaled = c.weight * std::pow(2.0, step);
            CHECK(scaled == doctest::Approx(std::round(scaled)).epsilon(1e-12));
            sum += c.weight;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("double mixture blend: closed-form KL example") {
    // P_a=(1,0), P_b=(0,1), P_c=(0.5,0.5): proxy = ln 2, true mixture KL = 0.
    const double kl_ac = std::log(2.0); // KL((1,0) || (.5,.5))
    const double kl_bc = std::log(2.0);
    const double proxy = double_mixture_blend({0.5, 0.5}, {1.0}, {{kl_ac}, {kl_bc}});
    CHECK(proxy == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // true KL(0.5 P_a + 0.5 P_b || P_c) = KL((.5,.5)||(.5,.5)) = 0 < proxy.
    CHECK(proxy > 0.0);
}

TEST_CASE("KL convexity bound holds on 1000 random mixtures with zero violations") {
    Rng rng(101);
    for (int trial = 0; trial < 1000; ++trial) {
        const int vocab = 4 + static_cast<int>(rng.uniform_int(8));
        const int nl = 2 + static_cast<int>(rng.uniform_int(2));
        const int nr = 2 + static_cast<int>(rng.uniform_int(2));

        std::vector<std::vector<double>> left_dists, right_dists;
        for (int i = 0; i < nl; ++i) {
            left_dists.push_back(random_distribution(rng, vocab));
        }
        for (int j = 0; j < nr; ++j) {
            right_dists.push_back(random_distribution(rng, vocab));
        }
        std::vector<double> lw(static_cast<std::size_t>(nl)), rw(static_cast<std::size_t>(nr));
        double ls = 0.0, rs = 0.0;
        for (auto& w : lw) {
            w = 0.1 + rng.uniform();
            ls += w;
        }
        for (auto& w : rw) {
            w = 0.1 + rng.uniform();
            rs += w;
        }
        for (auto& w : lw) {
            w /= ls;
        }
        for (auto& w : rw) {
            w /= rs;
        }

        std::vector<double> gl(static_cast<std::size_t>(vocab), 0.0), gr(static_cast<std::size_t>(vocab), 0.0);
        for (int i = 0; i < nl; ++i) {
            for (int v = 0; v < vocab; ++v) {
                gl[static_cast<std::size_t>(v)] += lw[static_cast<std::size_t>(i)] * left_dists[static_cast<std::size_t>(i)][static_cast<std::size_t>(v)];
            }
        }
        for (int j = 0; j < nr; ++j) {
            for (int v = 0; v < vocab; ++v) {
                gr[static_cast<std::size_t>(v)] += rw[static_cast<std::size_t>(j)] * right_dists[static_cast<std::size_t>(j)][static_cast<std::size_t>(v)];
            }
        }

        std::vector<std::vector<double>> pairwise(static_cast<std::size_t>(nl),
                                                  std::vector<double>(static_cast<std::size_t>(nr)));
        for (int i = 0; i < nl; ++i) {
            for (int j = 0; j < nr; ++j) {
                pairwise[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                    exact_kl(left_dists[static_cast<std::size_t>(i)], right_dists[static_cast<std::size_t>(j)]);
            }
        }
        const double bound = double_mixture_blend(lw, rw, pairwise);
        const double truth = exact_kl(gl, gr);
        CHECK(bound >= truth);
    }
}

TEST_CASE("l2 triangle bound holds on 1000 random materialized mixtures with zero violations") {
    Rng rng(103);
    for (int trial = 0; trial < 1000; ++trial) {
        const int dim = 3 + static_cast<int>(rng.uniform_int(13));
        const int nl = 2 + static_cast<int>(rng.uniform_int(2));
        const int nr = 2 + static_cast<int>(rng.uniform_int(2));

        std::vector<std::vector<double>> lv, rv;
        for (int i = 0; i < nl; ++i) {
            std::vector<double> v(static_cast<std::size_t>(dim));
            for (auto& x : v) {
                x = rng.normal();
            }
            lv.push_back(std::move(v));
        }
        for (int j = 0; j < nr; ++j) {
            std::vector<double> v(static_cast<std::size_t>(dim));
            for (auto& x : v) {
                x = rng.normal();
            }
            rv.push_back(std::move(v));
        }
        std::vector<double> lw(static_cast<std::size_t>(nl), 1.0 / nl), rw(static_cast<std::size_t>(nr), 1.0 / nr);

        std::vector<double> gl(static_cast<std::size_t>(dim), 0.0), gr(static_cast<std::size_t>(dim), 0.0);
        for (int i = 0; i < nl; ++i) {
            for (int d = 0; d < dim; ++d) {
                gl[static_cast<std::size_t>(d)] += lw[static_cast<std::size_t>(i)] * lv[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
            }
        }
        for (int j = 0; j < nr; ++j) {
            for (int d = 0; d < dim; ++d) {
                gr[static_cast<std::size_t>(d)] += rw[static_cast<std::size_t>(j)] * rv[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)];
            }
        }

        std::vector<std::vector<double>> pairwise(static_cast<std::size_t>(nl),
                                                  std::vector<double>(static_cast<std::size_t>(nr)));
        for (int i = 0; i < nl; ++i) {
            for (int j = 0; j < nr; ++j) {
                double dd = 0.0;
                for (int d = 0; d < dim; ++d) {
                    const double diff = lv[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)] -
                                        rv[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)];
                    dd += diff * diff;
                }
                pairwise[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = std::sqrt(dd);
            }
        }
        const double bound = double_mixture_blend(lw, rw, pairwise);
        double dd = 0.0;
        for (int d = 0; d < dim; ++d) {
            const double diff = gl[static_cast<std::size_t>(d)] - gr[static_cast<std::size_t>(d)];
            dd += diff * diff;
        }
        CHECK(bound >= std::sqrt(dd));
    }
}

TEST_CASE("table-backed propagators: degenerate exactness and closed forms") {
    const Catalog c = generate_catalog(ArchConfig{}, 3, 2, 4, 8, 201);
    const SimilarityTable table = build_similarity_table(c);

    const MixtureProxy a = singleton_mixture("ckpt_t0_0");
    const MixtureProxy b = singleton_mixture("ckpt_t1_0");
    const auto& pf = table.pair("ckpt_t0_0", "ckpt_t1_0", "t0");

    CHECK(propagate_kl(a, b, table, "t0") == pf.raw.at("kl_mean"));
    CHECK(propagate_l2(a, b, table) == pf.raw.at("weight_l2"));
    CHECK(propagate_cosine(a, b, table, "t0", CosineChannel::Weight) == pf.raw.at("weight_cos"));
    CHECK(propagate_cosine(a, b, table, "t0", CosineChannel::Attention) == pf.raw.at("attn_cos_mean"));
    CHECK(propagate_cosine(a, b, table, "t0", CosineChannel::Activation) == pf.raw.at("act_cos_mean"));

    // All components identical -> KL proxy 0, cosine proxy 1.
    CHECK(propagate_kl(a, a, table, "t0") == 0.0);
    CHECK(propagate_cosine(a, a, table, "t0", CosineChannel::Weight) == 1.0);

    // Two-component closed form: cos(a,c)=0.8, cos(b,c)=0.4, weights 1/2 -> 0.6.
    const double blended = double_mixture_blend({0.5, 0.5}, {1.0}, {{0.8}, {0.4}});
    CHECK(blended == doctest::Approx(0.6).epsilon(1e-12));

    // Missing entry propagates as an error.
    const MixtureProxy ghost = singleton_mixture("nonexistent");
    CHECK_THROWS_AS(propagate_kl(a, ghost, table, "t0"), SimmergeError);
}

TEST_CASE("propagate_l2 upper-bounds the true distance of materialized linear intermediates") {
    const Catalog c = generate_catalog(ArchConfig{}, 3, 3, 4, 8, 203);
    const SimilarityTable table = build_similarity_table(c);
    Rng rng(205);

    std::vector<std::string> ids;
    for (const auto& ck : c.checkpoints) {
        ids.push_back(ck.id());
    }

    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> pick = ids;
        rng.shuffle(pick);
        const MixtureProxy left = fold_mixture(singleton_mixture(pick[0]), pick[1], 0.5);
        const MixtureProxy right = singleton_mixture(pick[2]);

        const Checkpoint mat = merge_linear(c.by_id(pick[0]), c.by_id(pick[1]), 0.5);
        const WeightMetrics wm = weight_metrics(mat, c.by_id(pick[2]));
        const double bound = propagate_l2(left, right, table);
        CHECK(bound >= wm.weight_l2);
    }
}

TEST_CASE("propagate_cosine tracks the true cosine of materialized intermediates") {
    // Heuristic proxy quality on catalog checkpoints; threshold frozen from
    // a one-time calibration run.
    const Catalog c = generate_catalog(ArchConfig{}, 3, 3, 4, 8, 207);
    const SimilarityTable table = build_similarity_table(c);
    Rng rng(209);

    std::vector<std::string> ids;
    for (const auto& ck : c.checkpoints) {
        ids.push_back(ck.id());
    }

    double abs_err = 0.0;
    int n = 0;
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<std::string> pick = ids;
        rng.shuffle(pick);
        const MixtureProxy left = fold_mixture(singleton_mixture(pick[0]), pick[1], 0.5);
        const MixtureProxy right = singleton_mixture(pick[2]);

        const Checkpoint mat = merge_linear(c.by_id(pick[0]), c.by_id(pick[1]), 0.5);
        const WeightMetrics wm = weight_metrics(mat, c.by_id(pick[2]));
        abs_err += std::fabs(propagate_cosine(left, right, table, "t0", CosineChannel::Weight) - wm.weight_cos);
        n += 1;
    }
    CHECK(abs_err / n < 0.15);
}

TEST_CASE("intermediate_features: singleton prefix reproduces exact pair features") {
    const Catalog c = generate_catalog(ArchConfig{}, 3, 2, 4, 8, 211);
    const SimilarityTable table = build_similarity_table(c);

    const auto via_proxy = intermediate_features(singleton_mixture("ckpt_t0_0"), "ckpt_t1_0", table, "t0");
    const auto exact = table.features_with_encoding("ckpt_t0_0", "ckpt_t1_0", "t0");
    REQUIRE(via_proxy.size() == exact.size());
    for (std::size_t i = 0; i < exact.size(); ++i) {
        CHECK(via_proxy[i] == doctest::Approx(exact[i]).epsilon(1e-12));
    }
    CHECK(via_proxy.size() == kFeatureDim + 3);
}

TEST_CASE("intermediate_features: dimension is m + d_c for real mixtures") {
    const Catalog c = generate_catalog(ArchConfig{}, 4, 2, 4, 8, 213);
    const SimilarityTable table = build_similarity_table(c);
    MixtureProxy prefix = fold_mixture(singleton_mixture("ckpt_t0_0"), "ckpt_t1_0", 0.5);
    const auto x = intermediate_features(prefix, "ckpt_t2_0", table, "t0");
    CHECK(x.size() == kFeatureDim + 4);
    // cosine channels stay clipped, kl/l2 stay nonnegative
    CHECK(x[5] <= 1.0);  // act_cos_mean
    CHECK(x[5] >= -1.0);
    CHECK(x[0] >= 0.0);  // kl_mean
    CHECK(x[16] >= 0.0); // weight_l2
}
