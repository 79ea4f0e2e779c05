#include "simmerge/common.hpp"

#include <algorithm>

namespace simmerge {

double quantile_sorted(std::span<const double> sorted, double q) {
    require(!sorted.empty(), "quantile: empty value set");
    require(q >= 0.0 && q <= 1.0, "quantile: q out of [0,1]");
    if (sorted.size() == 1) {
        return sorted[0];
    }
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= sorted.size()) {
        return sorted.back();
    }
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

FiveSummary summarize(std::vector<double> values) {
    require(!values.empty(), "summarize: empty value set");
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    std::sort(values.begin(), values.end());
    FiveSummary s;
    s.mean = sum / static_cast<double>(values.size());
    s.median = quantile_sorted(values, 0.50);
    s.q25 = quantile_sorted(values, 0.25);
    s.q75 = quantile_sorted(values, 0.75);
    s.q90 = quantile_sorted(values, 0.90);
    return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "dot: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = norm2(a);
    const double nb = norm2(b);
    require(na > 0.0 && nb > 0.0, "cosine: zero-norm vector");
    const double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

} // namespace simmerge
