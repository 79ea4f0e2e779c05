#include "simmerge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace simmerge {

double delta_expert(double score, double s_expert) {
    require(s_expert != 0.0, "delta_expert: zero baseline");
    return 100.0 * (score - s_expert) / s_expert;
}

double delta_aux(double score, double s_aux) {
    require(s_aux != 0.0, "delta_aux: zero baseline");
    return 100.0 * (score - s_aux) / s_aux;
}

double gap_closed(double score, double s_expert, double s_aux) {
    require(s_expert != s_aux, "gap_closed: degenerate gap");
    return 100.0 * (score - s_aux) / (s_expert - s_aux);
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 2, "pearson: need >= 2 paired values");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        return std::nullopt; // constant series
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) {
            ++j;
        }
        const double avg_rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[idx[k]] = avg_rank;
        }
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 2, "spearman: need >= 2 paired values");
    return pearson(average_ranks(x), average_ranks(y));
}

int case_winner(const OperatorCase& c) {
    int best = 0;
    for (int o = 1; o < kOperatorCount; ++o) {
        if (c.scores[static_cast<std::size_t>(o)] > c.scores[static_cast<std::size_t>(best)]) {
            best = o;
        }
    }
    return best;
}

namespace {

// Case indices sorted by feature value, ties broken by case id.
std::vector<std::size_t> feature_rank_order(const std::vector<OperatorCase>& cases) {
    std::vector<std::size_t> idx(cases.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (cases[a].feature_value != cases[b].feature_value) {
            return cases[a].feature_value < cases[b].feature_value;
        }
        return cases[a].case_id < cases[b].case_id;
    });
    return idx;
}

} // namespace

double tail_effect(const std::vector<OperatorCase>& cases, OperatorKind op) {
    require(cases.size() >= 5, "tail_effect: too few cases");
    const auto order = feature_rank_order(cases);
    const std::size_t quintile = cases.size() / 5;
    require(quintile >= 1, "tail_effect: too few cases");
    const int target = operator_index(op);

    auto win_fraction = [&](std::size_t begin, std::size_t end) {
        int wins = 0;
        for (std::size_t i = begin; i < end; ++i) {
            if (case_winner(cases[order[i]]) == target) {
                ++wins;
            }
        }
        return static_cast<double>(wins) / static_cast<double>(end - begin);
    };

    const double p_bottom = win_fraction(0, quintile);
    const double p_top = win_fraction(cases.size() - quintile, cases.size());
    return p_top - p_bottom;
}

std::vector<std::array<double, kOperatorCount>> percentile_bin_trends(const std::vector<OperatorCase>& cases,
                                                                      int bins) {
    require(bins >= 1, "percentile_bin_trends: bins must be positive");
    require(static_cast<int>(cases.size()) >= bins * 3, "percentile_bin_trends: insufficient data");
    const auto order = feature_rank_order(cases);

    // Equal-mass bins: sizes differ by at most one.
    const std::size_t base = cases.size() / static_cast<std::size_t>(bins);
    const std::size_t remainder = cases.size() % static_cast<std::size_t>(bins);

    std::vector<std::array<double, kOperatorCount>> trends;
    std::size_t pos = 0;
    for (int b = 0; b < bins; ++b) {
        const std::size_t size = base + (static_cast<std::size_t>(b) < remainder ? 1 : 0);
        std::array<double, kOperatorCount> freq{};
        for (std::size_t i = pos; i < pos + size; ++i) {
            freq[static_cast<std::size_t>(case_winner(cases[order[i]]))] += 1.0;
        }
        for (auto& f : freq) {
            f /= static_cast<double>(size);
        }
        trends.push_back(freq);
        pos += size;
    }
    return trends;
}

std::vector<CorrelationCell> correlations(const std::vector<OperatorCase>& cases, const std::string& feature) {
    require(cases.size() >= 3, "correlations: need >= 3 cases");
    std::vector<double> x;
    x.reserve(cases.size());
    for (const auto& c : cases) {
        x.push_back(c.feature_value);
    }

    std::vector<CorrelationCell> cells;
    for (int o = 0; o < kOperatorCount; ++o) {
        std::vector<double> y;
        y.reserve(cases.size());
        for (const auto& c : cases) {
            y.push_back(c.scores[static_cast<std::size_t>(o)]);
        }
        CorrelationCell cell;
        cell.feature = feature;
        cell.op = operator_from_index(o);
        cell.pearson = pearson(x, y);
        cell.spearman = spearman(x, y);
        cell.n = static_cast<int>(cases.size());
        cells.push_back(std::move(cell));
    }
    return cells;
}

} // namespace simmerge
