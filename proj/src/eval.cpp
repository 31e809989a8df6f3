#include "downbeat/eval.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "downbeat/error.h"

namespace downbeat {

namespace {

std::vector<double> trim_edges(const std::vector<double>& events, double duration) {
    std::vector<double> kept;
    for (double t : events) {
        if (t >= kEdgeHeadSeconds && t <= duration - kEdgeTailSeconds) kept.push_back(t);
    }
    return kept;
}

std::size_t greedy_matches(const std::vector<double>& est, const std::vector<double>& ann) {
    std::size_t i = 0, j = 0, matches = 0;
    while (i < est.size() && j < ann.size()) {
        const double d = est[i] - ann[j];
        if (std::abs(d) <= kMatchToleranceSeconds) {
            ++matches;
            ++i;
            ++j;
        } else if (d < 0) {
            ++i;
        } else {
            ++j;
        }
    }
    return matches;
}

} // namespace

AnnotationSet parse_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw missing_error("cannot open annotation file: " + path);

    AnnotationSet ann;
    std::string line;
    std::size_t line_no = 0;
    int columns = 0; // set by the first data line
    double prev_time = -1.0;

    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        double time = 0.0;
        if (!(ss >> time)) {
            std::string probe;
            std::istringstream blank_check(line);
            if (!(blank_check >> probe)) continue; // blank line
            throw pipeline_error(path + ":" + std::to_string(line_no) + ": unparseable line");
        }
        long long index = 0;
        const bool has_index = static_cast<bool>(ss >> index);
        std::string extra;
        if (ss >> extra) {
            throw pipeline_error(path + ":" + std::to_string(line_no) + ": too many columns");
        }
        const int cols = has_index ? 2 : 1;
        if (columns == 0) columns = cols;
        if (cols != columns) {
            throw pipeline_error(path + ":" + std::to_string(line_no) + ": inconsistent column count");
        }
        if (time < 0.0) {
            throw pipeline_error(path + ":" + std::to_string(line_no) + ": negative time");
        }
        if (time <= prev_time) {
            throw pipeline_error(path + ":" + std::to_string(line_no) + ": non-monotone time");
        }
        prev_time = time;

        if (columns == 1) {
            ann.downbeat_times.push_back(time);
        } else {
            ann.beat_times.push_back(time);
            if (index == 1) ann.downbeat_times.push_back(time);
        }
    }
    return ann;
}

FMeasure f_measure(const std::vector<double>& estimated, const std::vector<double>& annotated,
                   double clip_duration) {
    const std::vector<double> est = trim_edges(estimated, clip_duration);
    const std::vector<double> ann = trim_edges(annotated, clip_duration);

    FMeasure out;
    if (est.empty() && ann.empty()) {
        out.precision = out.recall = out.f = 100.0;
        return out;
    }
    if (est.empty() || ann.empty()) return out;

    const double matches = static_cast<double>(greedy_matches(est, ann));
    out.precision = 100.0 * matches / static_cast<double>(est.size());
    out.recall = 100.0 * matches / static_cast<double>(ann.size());
    if (out.precision + out.recall > 0.0) {
        out.f = 2.0 * out.precision * out.recall / (out.precision + out.recall);
    }
    return out;
}

double tatum_recall(const TatumGrid& grid, const std::vector<double>& annotated_downbeats,
                    double clip_duration) {
    const std::vector<double> ann = trim_edges(annotated_downbeats, clip_duration);
    if (ann.empty()) return 100.0;
    std::size_t hit = 0;
    for (double d : ann) {
        auto it = std::lower_bound(grid.tatum_times.begin(), grid.tatum_times.end(), d);
        double best = std::numeric_limits<double>::infinity();
        if (it != grid.tatum_times.end()) best = std::min(best, std::abs(*it - d));
        if (it != grid.tatum_times.begin()) best = std::min(best, std::abs(*(it - 1) - d));
        if (best <= kMatchToleranceSeconds) ++hit;
    }
    return 100.0 * static_cast<double>(hit) / static_cast<double>(ann.size());
}

FMeasure f_measure_metrical_variants(const std::vector<double>& estimated,
                                     const std::vector<double>& annotated, double clip_duration) {
    FMeasure best = f_measure(estimated, annotated, clip_duration);

    std::vector<double> halved;
    for (std::size_t i = 0; i < estimated.size(); i += 2) halved.push_back(estimated[i]);
    const FMeasure half = f_measure(halved, annotated, clip_duration);
    if (half.f > best.f) best = half;

    std::vector<double> doubled;
    for (std::size_t i = 0; i < estimated.size(); ++i) {
        doubled.push_back(estimated[i]);
        if (i + 1 < estimated.size()) doubled.push_back(0.5 * (estimated[i] + estimated[i + 1]));
    }
    const FMeasure twice = f_measure(doubled, annotated, clip_duration);
    if (twice.f > best.f) best = twice;
    return best;
}

ScoreReport summarize_scores(std::vector<SongScore> songs) {
    ScoreReport report;
    report.songs = std::move(songs);
    const std::size_t n = report.songs.size();
    if (n == 0) return report;
    for (const SongScore& s : report.songs) {
        report.mean_precision += s.score.precision;
        report.mean_recall += s.score.recall;
        report.mean_f += s.score.f;
    }
    report.mean_precision /= static_cast<double>(n);
    report.mean_recall /= static_cast<double>(n);
    report.mean_f /= static_cast<double>(n);
    if (n > 1) {
        double acc = 0.0;
        for (const SongScore& s : report.songs) {
            const double d = s.score.f - report.mean_f;
            acc += d * d;
        }
        report.f_stddev = std::sqrt(acc / static_cast<double>(n - 1));
    }
    return report;
}

} // namespace downbeat
