#include "downbeat/sync.h"

#include <algorithm>
#include <cmath>

#include "downbeat/error.h"

namespace downbeat {

std::size_t reflect_index(long long i, std::size_t count) {
    const long long n = static_cast<long long>(count);
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return static_cast<std::size_t>(i);
}

SyncFeature quantize_to_grid(const FeatureMatrix& feat, const TatumGrid& grid) {
    const std::size_t tatums = grid.tatum_times.size();
    if (tatums < 2) throw usage_error("grid needs at least 2 tatums");
    if (feat.frames() == 0) throw usage_error("empty feature");
    if (grid.tatum_times.front() > feat.frame_times.back() ||
        grid.tatum_times.back() < feat.frame_times.front()) {
        throw pipeline_error("tatum grid does not overlap the feature timeline");
    }

    SyncFeature out;
    out.kind = feat.kind;
    out.tatum_count = tatums;
    out.values = Mat(5 * tatums, feat.bins());

    const std::vector<double>& ft = feat.frame_times;
    std::size_t hint = 0;
    for (std::size_t i = 0; i < tatums; ++i) {
        const double t0 = grid.tatum_times[i];
        const double step = (i + 1 < tatums)
                                ? (grid.tatum_times[i + 1] - t0) / 5.0
                                : (t0 - grid.tatum_times[i - 1]) / 5.0;
        for (std::size_t k = 0; k < 5; ++k) {
            const double s = t0 + static_cast<double>(k) * step;
            // Frames are in increasing time; advance a cursor instead of
            // binary searching from scratch.
            while (hint + 1 < ft.size() && ft[hint + 1] <= s) ++hint;
            while (hint > 0 && ft[hint] > s) --hint;
            double* row = out.values.row_ptr(5 * i + k);
            if (s <= ft.front()) {
                const double* src = feat.values.row_ptr(0);
                std::copy(src, src + feat.bins(), row);
            } else if (s >= ft.back()) {
                const double* src = feat.values.row_ptr(feat.frames() - 1);
                std::copy(src, src + feat.bins(), row);
            } else {
                const double frac = (s - ft[hint]) / (ft[hint + 1] - ft[hint]);
                const double* a = feat.values.row_ptr(hint);
                const double* b = feat.values.row_ptr(hint + 1);
                for (std::size_t c = 0; c < feat.bins(); ++c) {
                    row[c] = a[c] + frac * (b[c] - a[c]);
                }
            }
        }
    }
    return out;
}

std::vector<NetworkInput> make_inputs(const SyncFeature& sf, std::size_t window_tatums) {
    if (window_tatums != 9 && window_tatums != 17) {
        throw usage_error("window length must be 9 or 17 tatums");
    }
    if (sf.tatum_count < 2) throw usage_error("need at least 2 tatums to cut windows");

    const std::size_t half = (window_tatums - 1) / 2;
    const std::size_t bins = sf.values.cols;

    std::vector<NetworkInput> out;
    out.reserve(sf.tatum_count);
    for (std::size_t c = 0; c < sf.tatum_count; ++c) {
        NetworkInput in;
        in.window_tatums = window_tatums;
        in.center_tatum = c;
        in.start_tatum = static_cast<long long>(c) - static_cast<long long>(half);
        in.window = Mat(5 * window_tatums, bins);
        for (std::size_t j = 0; j < window_tatums; ++j) {
            const std::size_t src_tatum = reflect_index(in.start_tatum + static_cast<long long>(j),
                                                        sf.tatum_count);
            for (std::size_t k = 0; k < 5; ++k) {
                const double* src = sf.values.row_ptr(5 * src_tatum + k);
                double* dst = in.window.row_ptr(5 * j + k);
                std::copy(src, src + bins, dst);
            }
        }
        const auto [lo_it, hi_it] = std::minmax_element(in.window.data.begin(), in.window.data.end());
        const double lo = *lo_it, hi = *hi_it;
        if (hi > lo) {
            const double inv = 1.0 / (hi - lo);
            for (double& v : in.window.data) v = (v - lo) * inv;
        } else {
            std::fill(in.window.data.begin(), in.window.data.end(), 0.0);
        }
        out.push_back(std::move(in));
    }
    return out;
}

void label_windows(std::vector<NetworkInput>& inputs, const std::vector<char>& downbeat_tatums,
                   bool multi_label) {
    for (NetworkInput& in : inputs) {
        if (multi_label) {
            in.label.assign(in.window_tatums, 0.0);
            for (std::size_t j = 0; j < in.window_tatums; ++j) {
                const std::size_t t = reflect_index(in.start_tatum + static_cast<long long>(j),
                                                    downbeat_tatums.size());
                in.label[j] = downbeat_tatums[t] ? 1.0 : 0.0;
            }
        } else {
            in.label.assign(1, downbeat_tatums[in.center_tatum] ? 1.0 : 0.0);
        }
    }
}

} // namespace downbeat
