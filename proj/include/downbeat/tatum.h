#pragma once

#include <cstddef>
#include <vector>

#include "downbeat/features.h"
#include "downbeat/mat.h"

namespace downbeat {

struct TempogramParams {
    double window_seconds = 6.0;
    double tempo_min = 60.0;  // repetitions per minute
    double tempo_max = 500.0; // inclusive
    double tempo_step = 1.0;
};

// Time-tempo periodicity analysis of the summed onset novelty curve.
struct Tempogram {
    Mat magnitudes;                  // frames x tempo bins
    Mat phases;                      // frames x tempo bins, radians
    std::vector<double> tempo_axis;  // repetitions per minute, increasing
    std::vector<double> frame_times; // seconds (novelty frame times)
    double frame_dt = 0.0;           // seconds between novelty frames
    std::size_t window_len = 0;      // analysis window, frames (odd)

    std::size_t frames() const { return magnitudes.rows; }
    std::size_t bins() const { return magnitudes.cols; }
};

struct PeriodicityPath {
    std::vector<std::size_t> bin_index; // one entry per tempogram frame
    std::vector<double> tempo;          // repetitions per minute
};

struct TatumGrid {
    std::vector<double> tatum_times;  // seconds, strictly increasing
    std::vector<double> plp;          // pulse curve at novelty frame times
    std::vector<double> plp_times;    // seconds
};

// Complex short-term analysis of the novelty curve at each tempo on the
// axis; tempi below tempo_min are not represented. Requires the clip to
// cover at least one analysis window.
Tempogram compute_tempogram(const FeatureMatrix& odf, const TempogramParams& params = {});

// Best periodicity path under the neighborhood weights {0: 1, +-1: 0.7,
// +-2: 0.5}; maximizes the weighted magnitude sum, ties resolved toward
// the smaller bin index (lexicographically over the path).
PeriodicityPath best_path_dp(const Tempogram& tg);

// Overlap-added windowed cosines from the decoded path's instantaneous
// tempo and phase, half-wave rectified.
std::vector<double> build_plp(const Tempogram& tg, const PeriodicityPath& path);

// Peak-picks the pulse curve into tatum times. Peaks below 0.1 x the global
// maximum are ignored; peaks closer than the highest-tempo period are
// merged keeping the larger. Throws if no peak survives.
TatumGrid pick_tatums(const std::vector<double>& plp, const std::vector<double>& plp_times);

// Replaces the grid with annotated beats subdivided `factor` times
// (factor - 1 equally spaced insertions per interval).
TatumGrid substitute_annotated_grid(const TatumGrid& grid,
                                    const std::vector<double>& annotated_beats, int factor);

// Moves, for each annotated downbeat, the nearest tatum onto it; drops any
// resulting inversion (snapped entries win over their neighbors).
TatumGrid snap_downbeats(const TatumGrid& grid, const std::vector<double>& annotated_downbeats);

// Fixed-period fallback grid used when segmentation fails.
TatumGrid make_uniform_grid(double duration, double period = 0.25);

} // namespace downbeat
