#include <doctest.h>

#include <cmath>

#include "simmerge/metrics.hpp"

using namespace simmerge;

TEST_CASE("delta and gap-closed anchors") {
    CHECK(delta_expert(0.7, 0.7) == 0.0);
    CHECK(delta_expert(0.35, 0.7) == doctest::Approx(-50.0).epsilon(1e-12));
    CHECK(delta_aux(0.4, 0.4) == 0.0);
    CHECK(delta_aux(0.6, 0.4) == doctest::Approx(50.0).epsilon(1e-12));

    CHECK(gap_closed(0.4, 0.8, 0.4) == 0.0);
    CHECK(gap_closed(0.8, 0.8, 0.4) == 100.0);
    CHECK(gap_closed(0.9, 0.8, 0.4) > 100.0);
    CHECK(gap_closed(0.3, 0.8, 0.4) < 0.0);

    CHECK_THROWS_AS(delta_expert(0.5, 0.0), SimmergeError);
    CHECK_THROWS_AS(delta_aux(0.5, 0.0), SimmergeError);
    CHECK_THROWS_AS(gap_closed(0.5, 0.4, 0.4), SimmergeError);
}

TEST_CASE("pearson and spearman: exact trivial cases") {
    const std::vector<double> x = {1.0, 2.0, 3.0};
    const std::vector<double> y = {2.0, 4.0, 6.0};
    CHECK(*pearson(x, y) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*spearman(x, y) == doctest::Approx(1.0).epsilon(1e-12));

    // monotone nonlinear: spearman 1, pearson < 1
    const std::vector<double> xs = {-2.0, -1.0, 0.0, 1.0, 2.0};
    std::vector<double> cubes;
    for (double v : xs) {
        cubes.push_back(v * v * v);
    }
    CHECK(*spearman(xs, cubes) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*pearson(xs, cubes) < 1.0);

    // perfectly anti-monotone
    const std::vector<double> yr = {6.0, 4.0, 2.0};
    CHECK(*pearson(x, yr) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(*spearman(x, yr) == doctest::Approx(-1.0).epsilon(1e-12));

    // constant series -> missing
    const std::vector<double> c = {5.0, 5.0, 5.0};
    CHECK(!pearson(c, y).has_value());
    CHECK(!spearman(c, y).has_value());
}

TEST_CASE("spearman is invariant under strictly monotone transforms") {
    Rng rng(81);
    std::vector<double> x, y;
    for (int i = 0; i < 64; ++i) {
        x.push_back(rng.normal());
        y.push_back(rng.normal());
    }
    const double base = *spearman(x, y);
    std::vector<double> tx;
    for (double v : x) {
        tx.push_back(std::exp(0.7 * v) + 3.0);
    }
    CHECK(*spearman(tx, y) == doctest::Approx(base).epsilon(1e-12));
    CHECK(std::fabs(base) <= 1.0);
}

TEST_CASE("average ranks handle ties") {
    const std::vector<double> v = {3.0, 1.0, 3.0, 2.0};
    const auto r = average_ranks(v);
    CHECK(r[1] == 1.0);
    CHECK(r[3] == 2.0);
    CHECK(r[0] == doctest::Approx(3.5));
    CHECK(r[2] == doctest::Approx(3.5));
}

namespace {

// n cases with the given winner flags for one operator; feature values are
// the case index, so the rank order is the construction order.
std::vector<OperatorCase> cases_with_wins(const std::vector<bool>& op0_wins) {
    std::vector<OperatorCase> cases;
    for (std::size_t i = 0; i < op0_wins.size(); ++i) {
        OperatorCase c;
        c.case_id = "c" + std::to_string(i);
        c.feature_value = static_cast<double>(i);
        c.scores = op0_wins[i] ? std::array<double, 3>{1.0, 0.0, 0.0} : std::array<double, 3>{0.0, 1.0, 0.0};
        cases.push_back(std::move(c));
    }
    return cases;
}

} // namespace

TEST_CASE("tail effect: +1 / -1 / 0 anchors") {
    // 10 cases; operator wins exactly the top feature quintile -> +1.
    std::vector<bool> wins(10, false);
    wins[8] = wins[9] = true;
    CHECK(tail_effect(cases_with_wins(wins), OperatorKind::Linear) == doctest::Approx(1.0));

    // wins exactly the bottom quintile -> -1
    std::vector<bool> bottom(10, false);
    bottom[0] = bottom[1] = true;
    CHECK(tail_effect(cases_with_wins(bottom), OperatorKind::Linear) == doctest::Approx(-1.0));

    // symmetric placement -> 0
    std::vector<bool> sym(10, false);
    sym[0] = sym[9] = true;
    CHECK(tail_effect(cases_with_wins(sym), OperatorKind::Linear) == doctest::Approx(0.0));

    CHECK_THROWS_AS(tail_effect(cases_with_wins({true, false}), OperatorKind::Linear), SimmergeError);
}

TEST_CASE("case winner: exact ties split by fixed operator order") {
    OperatorCase c;
    c.scores = {0.5, 0.5, 0.1};
    CHECK(case_winner(c) == 0);
    c.scores = {0.1, 0.5, 0.5};
    CHECK(case_winner(c) == 1);
}

TEST_CASE("percentile bins: equal mass, frequencies sum to 1, planted step") {
    // Operator 0 wins iff feature above the median: the win curve steps from
    // 0 to 1 at the middle bin.
    std::vector<OperatorCase> cases;
    for (int i = 0; i < 40; ++i) {
        OperatorCase c;
        c.case_id = "c" + std::to_string(i);
        c.feature_value = static_cast<double>(i);
        c.scores = i >= 20 ? std::array<double, 3>{1.0, 0.0, 0.0} : std::array<double, 3>{0.0, 1.0, 0.0};
        cases.push_back(std::move(c));
    }
    const auto trends = percentile_bin_trends(cases, 4);
    REQUIRE(trends.size() == 4);
    for (const auto& bin : trends) {
        CHECK(bin[0] + bin[1] + bin[2] == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(trends[0][0] == doctest::Approx(0.0));
    CHECK(trends[1][0] == doctest::Approx(0.0));
    CHECK(trends[2][0] == doctest::Approx(1.0));
    CHECK(trends[3][0] == doctest::Approx(1.0));

    // equal counts within +-1: 41 cases over 4 bins -> sizes 11,10,10,10
    cases.push_back(cases.back());
    cases.back().case_id = "extra";
    CHECK_NOTHROW(percentile_bin_trends(cases, 4));
    CHECK_THROWS_AS(percentile_bin_trends(cases, 20), SimmergeError);
}

TEST_CASE("correlations over operator cases") {
    std::vector<OperatorCase> cases;
    for (int i = 0; i < 10; ++i) {
        OperatorCase c;
        c.case_id = "c" + std::to_string(i);
        c.feature_value = static_cast<double>(i);
        c.scores = {static_cast<double>(2 * i), -static_cast<double>(i), 1.0};
        cases.push_back(std::move(c));
    }
    const auto cells = correlations(cases, "kl_mean");
    REQUIRE(cells.size() == 3);
    CHECK(*cells[0].pearson == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*cells[1].pearson == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(!cells[2].pearson.has_value()); // constant scores -> missing
    CHECK(cells[0].feature == "kl_mean");
    CHECK(cells[0].n == 10);
}
