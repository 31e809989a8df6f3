#pragma once

#include <cstddef>
#include <vector>

#include "downbeat/features.h"
#include "downbeat/mat.h"
#include "downbeat/tatum.h"

namespace downbeat {

// A feature resampled onto five subdivisions per tatum: 5*T rows for T
// tatums, tempo independent.
struct SyncFeature {
    FeatureKind kind = FeatureKind::Chroma;
    Mat values; // (5*T) x bins
    std::size_t tatum_count = 0;
};

// One fixed-length network window. Labels are filled by label_windows: a
// single 0/1 entry for scalar heads, one entry per covered tatum for
// multi-label heads.
struct NetworkInput {
    Mat window;                  // (5*window_tatums) x bins, scaled to [0, 1]
    std::size_t window_tatums = 0;
    long long start_tatum = 0;   // may be negative at the clip edges
    std::size_t center_tatum = 0;
    std::vector<double> label;
};

// Reflected index into [0, count), bouncing at both ends.
std::size_t reflect_index(long long i, std::size_t count);

// Linear interpolation of every feature bin at the five subdivision instants
// of each tatum interval (the last interval reuses the previous spacing).
SyncFeature quantize_to_grid(const FeatureMatrix& feat, const TatumGrid& grid);

// Cuts one window per tatum (the window's middle tatum), reflecting at the
// edges, and min-max scales each window to [0, 1]; constant windows become
// all zeros. window_tatums is 9 or 17.
std::vector<NetworkInput> make_inputs(const SyncFeature& sf, std::size_t window_tatums);

// Fills labels. downbeat_tatums flags each tatum of the song; multi_label
// selects the per-covered-tatum vector form, otherwise a scalar for the
// center tatum.
void label_windows(std::vector<NetworkInput>& inputs, const std::vector<char>& downbeat_tatums,
                   bool multi_label);

} // namespace downbeat
