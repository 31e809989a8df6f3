#include "downbeat/tatum.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "downbeat/error.h"
#include "fft.h"

namespace downbeat {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kPeakFloor = 0.1; // relative to the global PLP maximum

double path_weight(long long delta) {
    switch (std::llabs(delta)) {
        case 0: return 1.0;
        case 1: return 0.7;
        case 2: return 0.5;
        default: return -1.0;
    }
}

// Symmetric Hann window, w[m] == w[len-1-m].
std::vector<double> hann_symmetric(std::size_t len) {
    std::vector<double> w(len);
    if (len == 1) {
        w[0] = 1.0;
        return w;
    }
    for (std::size_t m = 0; m < len; ++m) {
        w[m] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(m) / (len - 1)));
    }
    return w;
}

} // namespace

Tempogram compute_tempogram(const FeatureMatrix& odf, const TempogramParams& params) {
    if (odf.kind != FeatureKind::Odf) throw usage_error("tempogram expects an ODF feature");
    const std::size_t n = odf.frames();
    if (n < 2) throw pipeline_error("clip too short for one tempogram window");
    const double dt = odf.frame_times[1] - odf.frame_times[0];

    std::size_t win = static_cast<std::size_t>(std::llround(params.window_seconds / dt));
    if (win % 2 == 0) ++win;
    if (n < win) throw pipeline_error("clip too short for one tempogram window");
    const std::size_t center = (win - 1) / 2;

    std::vector<double> novelty(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        const double* row = odf.values.row_ptr(t);
        for (std::size_t b = 0; b < odf.bins(); ++b) novelty[t] += row[b];
    }

    Tempogram tg;
    for (double tempo = params.tempo_min; tempo <= params.tempo_max + 1e-9;
         tempo += params.tempo_step) {
        tg.tempo_axis.push_back(tempo);
    }
    const std::size_t n_bins = tg.tempo_axis.size();
    tg.frame_times = odf.frame_times;
    tg.frame_dt = dt;
    tg.window_len = win;
    tg.magnitudes = Mat(n, n_bins);
    tg.phases = Mat(n, n_bins);

    const std::vector<double> window = hann_symmetric(win);
    const std::size_t pad = detail::next_pow2(n + win);
    detail::ComplexFft fft(pad);

    std::vector<std::complex<double>> kernel(pad, 0.0);
    for (std::size_t m = 0; m < win; ++m) kernel[m] = window[m];
    std::vector<std::complex<double>> kernel_f(pad);
    fft.forward(kernel.data(), kernel_f.data());

    std::vector<std::complex<double>> modulated(pad);
    std::vector<std::complex<double>> spec(pad);
    std::vector<std::complex<double>> conv(pad);

    for (std::size_t bi = 0; bi < n_bins; ++bi) {
        const double freq = tg.tempo_axis[bi] / 60.0;
        std::fill(modulated.begin(), modulated.end(), std::complex<double>(0.0, 0.0));
        for (std::size_t t = 0; t < n; ++t) {
            modulated[t] = novelty[t] * std::polar(1.0, -2.0 * kPi * freq * t * dt);
        }
        fft.forward(modulated.data(), spec.data());
        for (std::size_t i = 0; i < pad; ++i) spec[i] *= kernel_f[i];
        fft.inverse(spec.data(), conv.data());

        // Windowed correlation at frame t sits at convolution index t + center
        // (symmetric window).
        const double scale = 1.0 / static_cast<double>(pad);
        for (std::size_t t = 0; t < n; ++t) {
            const std::complex<double> v = conv[t + center] * scale;
            tg.magnitudes(t, bi) = std::abs(v);
            tg.phases(t, bi) = -std::arg(v);
        }
    }
    return tg;
}

PeriodicityPath best_path_dp(const Tempogram& tg) {
    const std::size_t frames = tg.frames();
    const std::size_t bins = tg.bins();
    if (frames == 0 || bins == 0) throw usage_error("empty tempogram");

    // Backward value: best achievable continuation score from (t, b).
    Mat value(frames, bins);
    for (std::size_t t = frames - 1; t-- > 0;) {
        for (std::size_t b = 0; b < bins; ++b) {
            double best = -1.0;
            for (long long d = -2; d <= 2; ++d) {
                const long long nb = static_cast<long long>(b) + d;
                if (nb < 0 || nb >= static_cast<long long>(bins)) continue;
                const double s = path_weight(d) * tg.magnitudes(t + 1, static_cast<std::size_t>(nb)) +
                                 value(t + 1, static_cast<std::size_t>(nb));
                if (s > best) best = s;
            }
            value(t, b) = best;
        }
    }

    PeriodicityPath path;
    path.bin_index.resize(frames);
    path.tempo.resize(frames);

    // Reconstruct forward, preferring the smallest bin on exact ties; this
    // yields the lexicographically smallest optimal path.
    std::size_t cur = 0;
    double best = -1.0;
    for (std::size_t b = 0; b < bins; ++b) {
        const double s = tg.magnitudes(0, b) + value(0, b);
        if (s > best) {
            best = s;
            cur = b;
        }
    }
    path.bin_index[0] = cur;
    for (std::size_t t = 1; t < frames; ++t) {
        std::size_t next = cur;
        double best_step = -2.0;
        for (long long d = -2; d <= 2; ++d) {
            const long long nb = static_cast<long long>(cur) + d;
            if (nb < 0 || nb >= static_cast<long long>(bins)) continue;
            const double s = path_weight(d) * tg.magnitudes(t, static_cast<std::size_t>(nb)) +
                             value(t, static_cast<std::size_t>(nb));
            if (s > best_step || (s == best_step && static_cast<std::size_t>(nb) < next)) {
                best_step = s;
                next = static_cast<std::size_t>(nb);
            }
        }
        path.bin_index[t] = next;
        cur = next;
    }
    for (std::size_t t = 0; t < frames; ++t) path.tempo[t] = tg.tempo_axis[path.bin_index[t]];
    return path;
}

std::vector<double> build_plp(const Tempogram& tg, const PeriodicityPath& path) {
    if (path.bin_index.size() != tg.frames()) throw usage_error("path does not match tempogram");
    const std::size_t n = tg.frames();
    const std::size_t win = tg.window_len;
    const std::size_t center = (win - 1) / 2;
    const double dt = tg.frame_dt;
    const std::vector<double> window = hann_symmetric(win);

    std::vector<double> plp(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        const double freq = path.tempo[t] / 60.0;
        const double phase = tg.phases(t, path.bin_index[t]);
        for (std::size_t m = 0; m < win; ++m) {
            const long long idx = static_cast<long long>(t) - static_cast<long long>(center) +
                                  static_cast<long long>(m);
            if (idx < 0 || idx >= static_cast<long long>(n)) continue;
            plp[static_cast<std::size_t>(idx)] +=
                window[m] * std::cos(2.0 * kPi * freq * static_cast<double>(idx) * dt - phase);
        }
    }
    for (double& v : plp) v = std::max(0.0, v);
    return plp;
}

TatumGrid pick_tatums(const std::vector<double>& plp, const std::vector<double>& plp_times) {
    if (plp.size() != plp_times.size() || plp.size() < 3) {
        throw usage_error("pulse curve and times must match and hold at least 3 samples");
    }
    const double peak = *std::max_element(plp.begin(), plp.end());
    if (peak <= 0.0) throw pipeline_error("segmentation failure: pulse curve has no peaks");
    const double floor = kPeakFloor * peak;
    const double dt = plp_times[1] - plp_times[0];

    struct Peak {
        double time;
        double height;
    };
    std::vector<Peak> peaks;
    for (std::size_t i = 1; i + 1 < plp.size(); ++i) {
        if (plp[i] < floor) continue;
        if (plp[i] > plp[i - 1] && plp[i] >= plp[i + 1]) {
            const double denom = plp[i - 1] - 2.0 * plp[i] + plp[i + 1];
            double offset = 0.0;
            if (std::abs(denom) > 1e-12) {
                offset = std::clamp(0.5 * (plp[i - 1] - plp[i + 1]) / denom, -0.5, 0.5);
            }
            peaks.push_back({plp_times[i] + offset * dt, plp[i]});
        }
    }
    if (peaks.empty()) throw pipeline_error("segmentation failure: pulse curve has no peaks");

    // Merge peaks closer than the fastest representable period.
    const double min_gap = 60.0 / 500.0;
    std::vector<Peak> merged;
    for (const Peak& p : peaks) {
        if (!merged.empty() && p.time - merged.back().time < min_gap) {
            if (p.height > merged.back().height) merged.back() = p;
        } else {
            merged.push_back(p);
        }
    }

    TatumGrid grid;
    for (const Peak& p : merged) {
        if (grid.tatum_times.empty() || p.time > grid.tatum_times.back()) {
            grid.tatum_times.push_back(p.time);
        }
    }
    grid.plp = plp;
    grid.plp_times = plp_times;
    return grid;
}

TatumGrid substitute_annotated_grid(const TatumGrid& grid,
                                    const std::vector<double>& annotated_beats, int factor) {
    if (factor < 1) throw usage_error("subdivision factor must be >= 1");
    if (annotated_beats.size() < 2) throw usage_error("need at least 2 annotated beats");
    for (std::size_t i = 1; i < annotated_beats.size(); ++i) {
        if (annotated_beats[i] <= annotated_beats[i - 1]) {
            throw usage_error("annotated beats must be strictly increasing");
        }
    }
    TatumGrid out;
    out.plp = grid.plp;
    out.plp_times = grid.plp_times;
    for (std::size_t i = 0; i + 1 < annotated_beats.size(); ++i) {
        const double a = annotated_beats[i];
        const double step = (annotated_beats[i + 1] - a) / factor;
        for (int k = 0; k < factor; ++k) out.tatum_times.push_back(a + k * step);
    }
    out.tatum_times.push_back(annotated_beats.back());
    return out;
}

TatumGrid snap_downbeats(const TatumGrid& grid, const std::vector<double>& annotated_downbeats) {
    if (grid.tatum_times.empty()) throw usage_error("cannot snap an empty grid");
    std::vector<double> times = grid.tatum_times;
    std::vector<char> snapped(times.size(), 0);

    long long last = -1;
    for (double d : annotated_downbeats) {
        auto it = std::lower_bound(times.begin(), times.end(), d);
        long long idx = it - times.begin();
        if (idx > 0 &&
            (idx == static_cast<long long>(times.size()) || d - times[idx - 1] <= times[idx] - d)) {
            --idx;
        }
        if (idx <= last) idx = last + 1;
        if (idx >= static_cast<long long>(times.size())) break;
        times[idx] = d;
        snapped[idx] = 1;
        last = idx;
    }

    TatumGrid out;
    out.plp = grid.plp;
    out.plp_times = grid.plp_times;
    std::vector<char> kept_snapped;
    for (std::size_t i = 0; i < times.size(); ++i) {
        bool drop = false;
        while (!out.tatum_times.empty() && times[i] <= out.tatum_times.back()) {
            if (kept_snapped.back() && !snapped[i]) {
                drop = true;
                break;
            }
            out.tatum_times.pop_back();
            kept_snapped.pop_back();
        }
        if (!drop) {
            out.tatum_times.push_back(times[i]);
            kept_snapped.push_back(snapped[i]);
        }
    }
    return out;
}

TatumGrid make_uniform_grid(double duration, double period) {
    if (duration <= 0 || period <= 0) throw usage_error("invalid uniform grid request");
    TatumGrid grid;
    for (double t = period / 2.0; t < duration; t += period) grid.tatum_times.push_back(t);
    if (grid.tatum_times.size() < 2) throw pipeline_error("clip too short for a fallback grid");
    return grid;
}

} // namespace downbeat
