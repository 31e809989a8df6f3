#pragma once

#include <string>
#include <vector>

#include "downbeat/tatum.h"

namespace downbeat {

struct AnnotationSet {
    std::vector<double> downbeat_times; // seconds, strictly increasing
    std::vector<double> beat_times;     // seconds; empty for one-column files
    std::string source;                 // dataset name
};

// Percentages in [0, 100].
struct FMeasure {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

struct SongScore {
    std::string stem;
    FMeasure score;
};

struct ScoreReport {
    std::vector<SongScore> songs;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    double mean_f = 0.0;
    double f_stddev = 0.0; // per-song F standard deviation
};

// Matching tolerance and the excluded lead-in/lead-out of every metric.
constexpr double kMatchToleranceSeconds = 0.07;
constexpr double kEdgeHeadSeconds = 5.0;
constexpr double kEdgeTailSeconds = 3.0;

// Text annotations: either one column ("time", every line a downbeat) or two
// columns ("time index", index 1 marking downbeats; all lines are beats).
// Throws on unparseable lines or non-monotone times, naming the line number.
AnnotationSet parse_annotations(const std::string& path);

// F-measure with a +-70 ms window after excluding the first 5 s and last 3 s
// from both lists; greedy earliest-first one-to-one matching in time order.
// Empty-vs-empty after exclusion scores 100, empty-vs-nonempty scores 0.
FMeasure f_measure(const std::vector<double>& estimated, const std::vector<double>& annotated,
                   double clip_duration);

// Fraction of (edge-excluded) annotated downbeats that have a tatum within
// +-70 ms, in percent.
double tatum_recall(const TatumGrid& grid, const std::vector<double>& annotated_downbeats,
                    double clip_duration);

// Best F over the estimate itself, the estimate with every other event
// dropped, and the estimate with midpoints inserted.
FMeasure f_measure_metrical_variants(const std::vector<double>& estimated,
                                     const std::vector<double>& annotated, double clip_duration);

// Means and per-song F standard deviation over a set of song scores.
ScoreReport summarize_scores(std::vector<SongScore> songs);

} // namespace downbeat
