#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "downbeat/error.h"
#include "downbeat/pipeline.h"
#include "downbeat/rng.h"
#include "downbeat/synth.h"
#include "downbeat/tatum.h"
#include "test_util.h"

using namespace downbeat;
using namespace testutil;

namespace {

FeatureMatrix odf_of(const AudioClip& clip) { return feature_for_clip(clip, FeatureKind::Odf); }

// Exhaustive best-path search, lexicographically smallest optimum first.
struct BrutePath {
    std::vector<std::size_t> bins;
    double score = -1e300;
};

void brute_recurse(const Tempogram& tg, std::size_t t, double acc, std::vector<std::size_t>& cur,
                   BrutePath& best) {
    if (t == tg.frames()) {
        if (acc > best.score) {
            best.score = acc;
            best.bins = cur;
        }
        return;
    }
    for (std::size_t b = 0; b < tg.bins(); ++b) {
        if (t > 0) {
            const long long d = static_cast<long long>(b) - static_cast<long long>(cur[t - 1]);
            if (std::llabs(d) > 2) continue;
            const double w = std::llabs(d) == 0 ? 1.0 : (std::llabs(d) == 1 ? 0.7 : 0.5);
            cur[t] = b;
            brute_recurse(tg, t + 1, acc + w * tg.magnitudes(t, b), cur, best);
        } else {
            cur[t] = b;
            brute_recurse(tg, t + 1, acc + tg.magnitudes(t, b), cur, best);
        }
    }
}

BrutePath brute_best_path(const Tempogram& tg) {
    BrutePath best;
    std::vector<std::size_t> cur(tg.frames());
    brute_recurse(tg, 0, 0.0, cur, best);
    return best;
}

Tempogram make_tempogram(std::size_t frames, std::size_t bins) {
    Tempogram tg;
    tg.magnitudes = Mat(frames, bins);
    tg.phases = Mat(frames, bins);
    for (std::size_t b = 0; b < bins; ++b) tg.tempo_axis.push_back(60.0 + b);
    tg.frame_times.resize(frames);
    for (std::size_t t = 0; t < frames; ++t) tg.frame_times[t] = 0.0116 * t;
    tg.frame_dt = 0.0116;
    tg.window_len = 11;
    return tg;
}

} // namespace

TEST_CASE("tempogram of a 120 BPM click track peaks at a 120 multiple") {
    const auto clicks = periodic_times(0.5, 0.5, 19.0);
    const AudioClip clip = make_click_track(clicks, 20.0, 44100.0);
    const Tempogram tg = compute_tempogram(odf_of(clip));
    REQUIRE(tg.bins() == 441);
    CHECK(tg.tempo_axis.front() == 60.0);
    CHECK(tg.tempo_axis.back() == 500.0);
    std::size_t checked = 0;
    for (std::size_t t = 0; t < tg.frames(); ++t) {
        if (tg.frame_times[t] < 4.0 || tg.frame_times[t] > 16.0) continue;
        const double* row = tg.magnitudes.row_ptr(t);
        const std::size_t argmax =
            static_cast<std::size_t>(std::max_element(row, row + tg.bins()) - row);
        const double tempo = tg.tempo_axis[argmax];
        const double mult = tempo / 120.0;
        CHECK(std::abs(mult - std::round(mult)) <= 1.5 / 120.0);
        ++checked;
    }
    CHECK(checked > 100);
}

TEST_CASE("tempogram of silence is zero") {
    const Tempogram tg = compute_tempogram(odf_of(make_silence(10.0, 44100.0)));
    for (double v : tg.magnitudes.data) CHECK(v == 0.0);
}

TEST_CASE("sub-60 clicks appear through their harmonics") {
    const auto clicks = periodic_times(1.0, 0.5, 19.0); // 60 BPM
    const AudioClip clip = make_click_track(clicks, 20.0, 44100.0);
    const Tempogram tg = compute_tempogram(odf_of(clip));
    const std::size_t mid = tg.frames() / 2;
    const double* row = tg.magnitudes.row_ptr(mid);
    const double peak = *std::max_element(row, row + tg.bins());
    REQUIRE(peak > 0.0);
    double at_120 = 0.0, at_240 = 0.0;
    for (std::size_t b = 0; b < tg.bins(); ++b) {
        if (std::abs(tg.tempo_axis[b] - 120.0) <= 1.0) at_120 = std::max(at_120, row[b]);
        if (std::abs(tg.tempo_axis[b] - 240.0) <= 1.0) at_240 = std::max(at_240, row[b]);
    }
    CHECK(std::max(at_120, at_240) > 0.5 * peak);
}

TEST_CASE("short clips are rejected by the tempogram") {
    CHECK_THROWS_AS(compute_tempogram(odf_of(make_silence(3.0, 44100.0))), Error);
}

TEST_CASE("constant ridge gives a constant path") {
    Tempogram tg = make_tempogram(20, 8);
    for (std::size_t t = 0; t < 20; ++t) tg.magnitudes(t, 5) = 1.0;
    const PeriodicityPath path = best_path_dp(tg);
    for (std::size_t b : path.bin_index) CHECK(b == 5);
}

TEST_CASE("equal ridges resolve to the lower bin") {
    Tempogram tg = make_tempogram(10, 6);
    for (std::size_t t = 0; t < 10; ++t) {
        tg.magnitudes(t, 1) = 1.0;
        tg.magnitudes(t, 3) = 1.0;
    }
    const PeriodicityPath path = best_path_dp(tg);
    for (std::size_t b : path.bin_index) CHECK(b == 1);
}

TEST_CASE("dp path matches exhaustive enumeration") {
    Rng rng(17);
    for (int trial = 0; trial < 8; ++trial) {
        Tempogram tg = make_tempogram(8, 5);
        for (double& v : tg.magnitudes.data) v = rng.uniform();
        const PeriodicityPath path = best_path_dp(tg);
        const BrutePath brute = brute_best_path(tg);
        CHECK(path.bin_index == brute.bins);
    }
}

TEST_CASE("plp synthesizes the stored phase convention") {
    // Constant tempo and phase: the rectified overlap-add must vanish
    // exactly where cos(2*pi*f*t - phi) is negative.
    Tempogram tg = make_tempogram(101, 3);
    const double phi = 1.1;
    const double freq = (60.0 + 1) / 60.0;
    for (std::size_t t = 0; t < tg.frames(); ++t) {
        tg.magnitudes(t, 1) = 1.0;
        for (std::size_t b = 0; b < 3; ++b) tg.phases(t, b) = phi;
    }
    PeriodicityPath path;
    path.bin_index.assign(101, 1);
    path.tempo.assign(101, 61.0);
    const std::vector<double> plp = build_plp(tg, path);
    for (std::size_t n = 0; n < plp.size(); ++n) {
        const double c = std::cos(2.0 * kPi * freq * n * tg.frame_dt - phi);
        if (c < -1e-9) CHECK(plp[n] == 0.0);
        if (c > 0.5) CHECK(plp[n] > 0.0);
    }

    // Single-frame, unit-window case: one term of the overlap-add.
    Tempogram single = make_tempogram(1, 3);
    single.window_len = 1;
    single.phases(0, 1) = phi;
    single.magnitudes(0, 1) = 1.0;
    PeriodicityPath sp;
    sp.bin_index.assign(1, 1);
    sp.tempo.assign(1, 61.0);
    const std::vector<double> one = build_plp(single, sp);
    CHECK(one[0] == doctest::Approx(std::max(0.0, std::cos(-phi))));
}

TEST_CASE("plp of silence is zero") {
    const Tempogram tg = compute_tempogram(odf_of(make_silence(10.0, 44100.0)));
    const PeriodicityPath path = best_path_dp(tg);
    const std::vector<double> plp = build_plp(tg, path);
    for (double v : plp) CHECK(v == 0.0);
}

TEST_CASE("plp peaks align with 120 BPM clicks") {
    const auto clicks = periodic_times(0.5, 0.5, 19.0);
    const AudioClip clip = make_click_track(clicks, 20.0, 44100.0);
    const Tempogram tg = compute_tempogram(odf_of(clip));
    const PeriodicityPath path = best_path_dp(tg);
    const std::vector<double> plp = build_plp(tg, path);
    const TatumGrid grid = pick_tatums(plp, tg.frame_times);

    std::size_t hit = 0, total = 0;
    for (double c : clicks) {
        if (c < 3.0 || c > 17.0) continue;
        ++total;
        double best = 1e9;
        for (double t : grid.tatum_times) best = std::min(best, std::abs(t - c));
        if (best <= 0.035) ++hit;
    }
    REQUIRE(total >= 20);
    CHECK(static_cast<double>(hit) >= 0.95 * static_cast<double>(total));
}

TEST_CASE("peak picking returns curve maxima") {
    std::vector<double> plp(301, 0.0);
    std::vector<double> times(301);
    for (std::size_t i = 0; i <= 300; ++i) times[i] = 0.01 * static_cast<double>(i);
    for (double center : {0.5, 1.0, 1.5}) {
        const auto c = static_cast<std::size_t>(center * 100);
        for (long long k = -10; k <= 10; ++k) {
            plp[c + k] += 0.5 * (1.0 + std::cos(kPi * static_cast<double>(k) / 10.0));
        }
    }
    const TatumGrid grid = pick_tatums(plp, times);
    REQUIRE(grid.tatum_times.size() == 3);
    CHECK(grid.tatum_times[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(grid.tatum_times[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(grid.tatum_times[2] == doctest::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("an all-zero curve is a segmentation failure") {
    std::vector<double> plp(100, 0.0), times(100);
    for (std::size_t i = 0; i < 100; ++i) times[i] = 0.01 * static_cast<double>(i);
    CHECK_THROWS_AS(pick_tatums(plp, times), Error);
}

TEST_CASE("synthetic 100 BPM song yields half-beat tatums") {
    SongRecipe recipe;
    recipe.tempo_bpm = 100.0;
    recipe.meter = 4;
    recipe.duration = 24.0;
    recipe.seed = 5;
    const SynthSong song = generate_song(recipe);
    const TatumGrid grid = analyze_tatums(song.audio);
    REQUIRE(grid.tatum_times.size() > 10);
    std::vector<double> intervals;
    for (std::size_t i = 1; i < grid.tatum_times.size(); ++i) {
        intervals.push_back(grid.tatum_times[i] - grid.tatum_times[i - 1]);
    }
    std::sort(intervals.begin(), intervals.end());
    const double median = intervals[intervals.size() / 2];
    CHECK(median == doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("annotated beats substitute the grid with subdivisions") {
    TatumGrid grid;
    grid.tatum_times = {0.1, 0.9, 2.2};

    const TatumGrid two = substitute_annotated_grid(grid, {1.0, 2.0}, 2);
    CHECK(two.tatum_times == std::vector<double>{1.0, 1.5, 2.0});

    const TatumGrid one = substitute_annotated_grid(grid, {1.0, 2.0, 3.0}, 1);
    CHECK(one.tatum_times == std::vector<double>{1.0, 2.0, 3.0});

    const TatumGrid three = substitute_annotated_grid(grid, {0.0, 0.6, 1.2}, 3);
    REQUIRE(three.tatum_times.size() == 7);
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(three.tatum_times[i] == doctest::Approx(0.2 * static_cast<double>(i)).epsilon(1e-12));
    }
}

TEST_CASE("snapping moves the nearest tatum onto each downbeat") {
    TatumGrid grid;
    grid.tatum_times = {1.0, 1.5, 2.0, 2.5};

    const TatumGrid same = snap_downbeats(grid, {1.5});
    CHECK(same.tatum_times == grid.tatum_times);

    const TatumGrid moved = snap_downbeats(grid, {2.03});
    CHECK(moved.tatum_times == std::vector<double>{1.0, 1.5, 2.03, 2.5});

    // Snapped grids recall every downbeat by construction.
    const std::vector<double> dbs = {1.02, 2.03};
    const TatumGrid snapped = snap_downbeats(grid, dbs);
    for (double d : dbs) {
        bool found = false;
        for (double t : snapped.tatum_times) {
            if (t == d) found = true;
        }
        CHECK(found);
    }
    for (std::size_t i = 1; i < snapped.tatum_times.size(); ++i) {
        CHECK(snapped.tatum_times[i] > snapped.tatum_times[i - 1]);
    }
}

TEST_CASE("tatum rate is a 2x or 4x multiple of the click rate") {
    Rng rng(23);
    std::size_t ok = 0;
    const int n_cases = 10;
    for (int trial = 0; trial < n_cases; ++trial) {
        SongRecipe recipe;
        recipe.tempo_bpm = rng.uniform(80.0, 160.0);
        recipe.meter = trial % 2 == 0 ? 4 : 3;
        recipe.duration = 22.0;
        recipe.seed = 100 + static_cast<std::uint64_t>(trial);
        const SynthSong song = generate_song(recipe);
        const TatumGrid grid = analyze_tatums(song.audio);
        std::vector<double> intervals;
        for (std::size_t i = 1; i < grid.tatum_times.size(); ++i) {
            intervals.push_back(grid.tatum_times[i] - grid.tatum_times[i - 1]);
        }
        REQUIRE(!intervals.empty());
        std::sort(intervals.begin(), intervals.end());
        const double median = intervals[intervals.size() / 2];
        const double beat = 60.0 / recipe.tempo_bpm;
        const double ratio = beat / median;
        if (std::abs(ratio - 2.0) < 0.15 || std::abs(ratio - 4.0) < 0.3) ++ok;
    }
    CHECK(ok >= 9); // at least 90%
}
