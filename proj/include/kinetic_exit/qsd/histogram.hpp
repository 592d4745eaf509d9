#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "kinetic_exit/core.hpp"
#include "kinetic_exit/dynamics/rng.hpp"

namespace kinetic_exit::qsd {

/// Fixed binning of (0,1) x [-p_max, p_max]; velocities outside the range are
/// counted in `overflow` only.
struct Binning {
    int nq = 50;
    int np = 50;
    double p_max = 4.0;

    void validate() const {
        if (nq < 1 || np < 1) throw ConfigError("binning: bin counts must be >= 1");
        if (!(p_max > 0.0)) throw ConfigError("binning: p_max must be > 0");
    }
    std::size_t size() const { return static_cast<std::size_t>(nq) * static_cast<std::size_t>(np); }
    double dq() const { return 1.0 / nq; }
    double dp() const { return 2.0 * p_max / np; }
    double q_centre(int i) const { return (i + 0.5) * dq(); }
    double p_centre(int j) const { return -p_max + (j + 0.5) * dp(); }

    /// Flat index, or -1 when the state is outside the binned region.
    long index(const PhaseState& s) const {
        if (!(s.q > 0.0 && s.q < 1.0) || !(std::abs(s.p) < p_max)) return -1;
        const int i = std::min(nq - 1, static_cast<int>(s.q * nq));
        const int j = std::min(np - 1, static_cast<int>((s.p + p_max) / dp()));
        return static_cast<long>(i) * np + j;
    }

    /// Index of the mirror bin under (q,p) -> (1-q,-p).
    std::size_t mirror(std::size_t k) const {
        const std::size_t i = k / np, j = k % np;
        return (nq - 1 - i) * np + (np - 1 - j);
    }

    friend bool operator==(const Binning&, const Binning&) = default;
};

struct Histogram2D {
    Binning binning;
    std::vector<std::uint64_t> counts;
    std::uint64_t overflow = 0;

    Histogram2D() = default;
    explicit Histogram2D(const Binning& b) : binning(b), counts(b.size(), 0) { b.validate(); }

    void add(const PhaseState& s) {
        const long k = binning.index(s);
        if (k < 0)
            ++overflow;
        else
            ++counts[static_cast<std::size_t>(k)];
    }

    void merge(const Histogram2D& o) {
        if (counts.empty()) {
            *this = o;
            return;
        }
        for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += o.counts[k];
        overflow += o.overflow;
    }

    std::uint64_t total() const {
        std::uint64_t t = overflow;
        for (auto c : counts) t += c;
        return t;
    }
};

/// Binned total variation between two empirical laws (the overflow cell is a
/// bin of its own).
inline double binned_tv(const Histogram2D& a, const Histogram2D& b) {
    const double na = static_cast<double>(a.total()), nb = static_cast<double>(b.total());
    if (na == 0.0 || nb == 0.0) throw EstimationError("binned_tv: empty histogram");
    double s = std::abs(a.overflow / na - b.overflow / nb);
    for (std::size_t k = 0; k < a.counts.size(); ++k) s += std::abs(a.counts[k] / na - b.counts[k] / nb);
    return 0.5 * s;
}

/// Draw a multinomial histogram of `n` samples from the law proportional to
/// `weights` (overflow weight last), by inverse-CDF sampling.
inline Histogram2D multinomial_histogram(const Binning& binning, const std::vector<double>& weights,
                                         std::uint64_t n, dynamics::Rng& rng) {
    std::vector<double> cdf(weights.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) cdf[k] = (acc += weights[k]);
    Histogram2D h(binning);
    for (std::uint64_t i = 0; i < n; ++i) {
        const double u = rng.uniform() * acc;
        auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        auto k = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), cdf.size() - 1));
        if (k == h.counts.size())
            ++h.overflow;
        else
            ++h.counts[k];
    }
    return h;
}

}  // namespace kinetic_exit::qsd
