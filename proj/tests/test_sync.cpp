#include <doctest.h>

#include <cmath>

#include "downbeat/error.h"
#include "downbeat/rng.h"
#include "downbeat/sync.h"
#include "test_util.h"

using namespace downbeat;

namespace {

FeatureMatrix ramp_feature(std::size_t frames, std::size_t bins, double dt) {
    FeatureMatrix f;
    f.kind = FeatureKind::Lfs;
    f.values = Mat(frames, bins);
    f.frame_times.resize(frames);
    for (std::size_t t = 0; t < frames; ++t) {
        f.frame_times[t] = dt * static_cast<double>(t);
        for (std::size_t b = 0; b < bins; ++b) {
            f.values(t, b) = static_cast<double>(t) + 10.0 * static_cast<double>(b);
        }
    }
    return f;
}

TatumGrid grid_with(std::vector<double> times) {
    TatumGrid g;
    g.tatum_times = std::move(times);
    return g;
}

} // namespace

TEST_CASE("constant features quantize to constant grids") {
    FeatureMatrix f;
    f.kind = FeatureKind::Odf;
    f.values = Mat(50, 3, 4.2);
    f.frame_times.resize(50);
    for (std::size_t t = 0; t < 50; ++t) f.frame_times[t] = 0.1 * static_cast<double>(t);
    const SyncFeature sf = quantize_to_grid(f, grid_with({0.5, 1.0, 1.5, 2.0}));
    CHECK(sf.values.rows == 20); // 5 per tatum
    CHECK(sf.tatum_count == 4);
    for (double v : sf.values.data) CHECK(v == 4.2);
}

TEST_CASE("linear ramps are interpolated exactly") {
    const FeatureMatrix f = ramp_feature(100, 2, 0.1);
    const TatumGrid grid = grid_with({1.0, 2.0, 3.0});
    const SyncFeature sf = quantize_to_grid(f, grid);
    for (std::size_t i = 0; i < sf.values.rows; ++i) {
        const std::size_t tatum = i / 5;
        const std::size_t sub = i % 5;
        const double t = grid.tatum_times[tatum] + 0.2 * static_cast<double>(sub);
        // Ramp value at time t is t / dt.
        CHECK(sf.values(i, 0) == doctest::Approx(t / 0.1).epsilon(1e-12));
        CHECK(sf.values(i, 1) == doctest::Approx(t / 0.1 + 10.0).epsilon(1e-12));
    }
}

TEST_CASE("temporal length is five per tatum") {
    const FeatureMatrix f = ramp_feature(100, 3, 0.1);
    for (std::size_t tatums : {2u, 7u, 23u}) {
        std::vector<double> times;
        for (std::size_t i = 0; i < tatums; ++i) times.push_back(0.3 * static_cast<double>(i) + 1.0);
        const SyncFeature sf = quantize_to_grid(f, grid_with(times));
        CHECK(sf.values.rows == 5 * tatums);
    }
}

TEST_CASE("quantization rejects grids without overlap") {
    const FeatureMatrix f = ramp_feature(10, 1, 0.1); // covers [0, 0.9]
    CHECK_THROWS_AS(quantize_to_grid(f, grid_with({5.0, 6.0})), Error);
    CHECK_THROWS_AS(quantize_to_grid(f, grid_with({0.5})), Error);
}

TEST_CASE("quantization commutes with a time shift") {
    const FeatureMatrix f = ramp_feature(120, 4, 0.07);
    std::vector<double> times = {0.7, 1.1, 1.6, 2.3, 2.9};
    const SyncFeature base = quantize_to_grid(f, grid_with(times));

    const double delta = 1.375;
    FeatureMatrix shifted = f;
    for (double& t : shifted.frame_times) t += delta;
    std::vector<double> shifted_times = times;
    for (double& t : shifted_times) t += delta;
    const SyncFeature moved = quantize_to_grid(shifted, grid_with(shifted_times));

    REQUIRE(moved.values.data.size() == base.values.data.size());
    for (std::size_t i = 0; i < base.values.data.size(); ++i) {
        CHECK(moved.values.data[i] == doctest::Approx(base.values.data[i]).epsilon(1e-9));
    }
}

TEST_CASE("one window per tatum with reflected edges") {
    FeatureMatrix f = ramp_feature(600, 2, 0.05);
    std::vector<double> times;
    for (std::size_t i = 0; i < 100; ++i) times.push_back(0.25 * static_cast<double>(i) + 0.5);
    const SyncFeature sf = quantize_to_grid(f, grid_with(times));

    const std::vector<NetworkInput> w17 = make_inputs(sf, 17);
    CHECK(w17.size() == 100);
    for (std::size_t i = 0; i < w17.size(); ++i) {
        CHECK(w17[i].window.rows == 85);
        CHECK(w17[i].window.cols == 2);
        CHECK(w17[i].center_tatum == i);
        CHECK(w17[i].start_tatum == static_cast<long long>(i) - 8);
    }
    const std::vector<NetworkInput> w9 = make_inputs(sf, 9);
    CHECK(w9.size() == 100);
    CHECK(w9[0].window.rows == 45);
    CHECK(w9[0].center_tatum - w9[0].start_tatum == 4);
}

TEST_CASE("reflection bounces indices at both ends") {
    CHECK(reflect_index(0, 5) == 0);
    CHECK(reflect_index(-1, 5) == 1);
    CHECK(reflect_index(-4, 5) == 4);
    CHECK(reflect_index(5, 5) == 3);
    CHECK(reflect_index(7, 5) == 1);
}

TEST_CASE("constant windows scale to all zeros") {
    SyncFeature sf;
    sf.kind = FeatureKind::Odf;
    sf.tatum_count = 20;
    sf.values = Mat(100, 3, 7.0);
    const std::vector<NetworkInput> windows = make_inputs(sf, 17);
    for (const NetworkInput& w : windows) {
        for (double v : w.window.data) CHECK(v == 0.0);
    }
}

TEST_CASE("min-max scaling maps a time ramp onto [0, 1]") {
    SyncFeature sf;
    sf.kind = FeatureKind::Odf;
    sf.tatum_count = 17;
    sf.values = Mat(85, 1);
    for (std::size_t i = 0; i < 85; ++i) sf.values(i, 0) = static_cast<double>(i);
    const std::vector<NetworkInput> windows = make_inputs(sf, 17);
    const NetworkInput& center = windows[8]; // no reflection: start_tatum == 0
    REQUIRE(center.start_tatum == 0);
    for (std::size_t i = 0; i < 85; ++i) {
        CHECK(center.window(i, 0) ==
              doctest::Approx(static_cast<double>(i) / 84.0).epsilon(1e-12));
    }
}

TEST_CASE("scaled windows stay inside the unit interval") {
    Rng rng(31);
    SyncFeature sf;
    sf.kind = FeatureKind::Mcqt;
    sf.tatum_count = 12;
    sf.values = Mat(60, 6);
    for (double& v : sf.values.data) v = rng.uniform(-5.0, 5.0);
    for (const NetworkInput& w : make_inputs(sf, 9)) {
        for (double v : w.window.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("multi-label vectors mark covered downbeats") {
    SyncFeature sf;
    sf.kind = FeatureKind::Odf;
    sf.tatum_count = 40;
    sf.values = Mat(200, 3, 1.0);
    std::vector<NetworkInput> windows = make_inputs(sf, 17);

    std::vector<char> downbeats(40, 0);
    downbeats[20] = 1; // covered offset 0 for the window starting at 20
    downbeats[28] = 1;
    label_windows(windows, downbeats, true);

    const NetworkInput& w = windows[28]; // start_tatum == 20
    REQUIRE(w.start_tatum == 20);
    std::vector<double> expected(17, 0.0);
    expected[0] = 1.0;
    expected[8] = 1.0;
    CHECK(w.label == expected);

    // Window with no covered downbeat.
    std::vector<char> none(40, 0);
    label_windows(windows, none, true);
    CHECK(windows[10].label == std::vector<double>(17, 0.0));
}

TEST_CASE("scalar labels mark the center tatum") {
    SyncFeature sf;
    sf.kind = FeatureKind::Chroma;
    sf.tatum_count = 30;
    sf.values = Mat(150, 12, 1.0);
    std::vector<NetworkInput> windows = make_inputs(sf, 9);
    std::vector<char> downbeats(30, 0);
    downbeats[7] = 1;
    label_windows(windows, downbeats, false);
    for (const NetworkInput& w : windows) {
        CHECK(w.label.size() == 1);
        CHECK(w.label[0] == (w.center_tatum == 7 ? 1.0 : 0.0));
    }
}

TEST_CASE("every tatum is covered by its own window downstream") {
    SyncFeature sf;
    sf.kind = FeatureKind::Lfs;
    sf.tatum_count = 5; // shorter than one 17-tatum window: all reflected
    sf.values = Mat(25, 10);
    Rng rng(3);
    for (double& v : sf.values.data) v = rng.uniform();
    const std::vector<NetworkInput> windows = make_inputs(sf, 17);
    CHECK(windows.size() == 5);
    std::vector<int> covered(5, 0);
    for (const NetworkInput& w : windows) {
        for (std::size_t j = 0; j < 17; ++j) {
            const long long t = w.start_tatum + static_cast<long long>(j);
            if (t >= 0 && t < 5) covered[static_cast<std::size_t>(t)] += 1;
        }
    }
    for (int c : covered) CHECK(c > 0);
}

TEST_CASE("window cutting needs at least two tatums") {
    SyncFeature sf;
    sf.kind = FeatureKind::Lfs;
    sf.tatum_count = 1;
    sf.values = Mat(5, 10, 1.0);
    CHECK_THROWS_AS(make_inputs(sf, 9), Error);
}
