#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "downbeat/audio.h"
#include "downbeat/eval.h"

namespace downbeat {

// Parameters of one synthetic song. The audio layers are a kick-like burst
// on every downbeat, accented noise bursts per tatum, a sustained triad
// changing at chord boundaries, and a per-beat melody line.
struct SongRecipe {
    double tempo_bpm = 120.0; // [60, 200]
    int meter = 4;            // beats per bar, one of {2, 3, 4}
    int tatums_per_beat = 2;
    double duration = 30.0;   // seconds, >= 20
    int chord_change_bars = 1;
    std::vector<double> accent_pattern; // per-tatum noise gain; empty = default
    std::uint64_t seed = 0;
    double timing_jitter = 0.0; // fractional beat jitter, e.g. 0.01 for +-1%
};

struct SynthSong {
    AudioClip audio;
    AnnotationSet annotations; // beats with in-bar indices; downbeats at index 1
};

SynthSong generate_song(const SongRecipe& recipe);

struct CorpusParams {
    std::size_t n_songs = 10;
    double duple_fraction = 0.7; // probability of 4 beats per bar (else 3)
    double tempo_min = 80.0;
    double tempo_max = 160.0;
    double duration = 30.0;
    std::uint64_t seed = 0;
    std::string prefix = "synth";
};

// Writes <stem>.wav / <stem>.beats pairs plus manifest.json into `dir`
// (created if needed) and returns the stems.
std::vector<std::string> generate_corpus(const std::string& dir, const CorpusParams& params);

} // namespace downbeat
