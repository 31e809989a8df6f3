#include "downbeat/hmm.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "downbeat/error.h"

namespace downbeat {

namespace {

constexpr double kLogFloor = 1e-300;
constexpr double kPriorAdvance = 0.9;
constexpr double kPriorDownbeat = 0.09;
// Uniform remainder for unobserved rows; 0.03 keeps every renormalized
// entry above floor/|states|.
constexpr double kPriorUniform = 0.03;

double safe_log(double x) { return std::log(std::max(x, kLogFloor)); }

double path_score(const BarStateSpace& space, const TransitionMatrix& a, const Mat& emissions,
                  const std::vector<std::size_t>& states) {
    const double log_pi = -std::log(static_cast<double>(space.size()));
    double score = log_pi + safe_log(emissions(0, states[0]));
    for (std::size_t k = 1; k < states.size(); ++k) {
        score += safe_log(a.a(states[k - 1], states[k])) + safe_log(emissions(k, states[k]));
    }
    return score;
}

void fill_downbeats(const BarStateSpace& space, DecodedPath& path) {
    path.downbeat_tatums.clear();
    for (std::size_t k = 0; k < path.states.size(); ++k) {
        if (space.is_h1[path.states[k]]) path.downbeat_tatums.push_back(k);
    }
}

} // namespace

std::size_t BarStateSpace::index_of(int bar_length, int position) const {
    std::size_t base = 0;
    for (int len : lengths) {
        if (len == bar_length) {
            if (position < 1 || position > bar_length) throw usage_error("bar position out of range");
            return base + static_cast<std::size_t>(position - 1);
        }
        base += static_cast<std::size_t>(len);
    }
    throw usage_error("bar length not in state space: " + std::to_string(bar_length));
}

const std::vector<int>& default_bar_lengths() {
    static const std::vector<int> lengths = {3, 4, 5, 6, 7, 8, 9, 10, 12, 16};
    return lengths;
}

BarStateSpace build_state_space(const std::vector<int>& lengths) {
    if (lengths.empty()) throw usage_error("state space needs at least one bar length");
    BarStateSpace space;
    space.lengths = lengths;
    std::sort(space.lengths.begin(), space.lengths.end());
    for (std::size_t i = 1; i < space.lengths.size(); ++i) {
        if (space.lengths[i] == space.lengths[i - 1]) throw usage_error("duplicate bar length");
    }
    for (int len : space.lengths) {
        if (len < 2) throw usage_error("bar lengths must be at least 2 tatums");
        for (int pos = 1; pos <= len; ++pos) {
            if (pos == 1) space.h1.push_back(space.states.size());
            space.states.push_back({len, pos});
        }
    }
    space.is_h1.assign(space.states.size(), 0);
    for (std::size_t i : space.h1) space.is_h1[i] = 1;
    return space;
}

int snap_bar_length(int span, const std::vector<int>& lengths) {
    if (lengths.empty()) throw usage_error("no allowed bar lengths");
    int best = lengths.front();
    int best_dist = std::abs(span - best);
    for (int len : lengths) {
        const int dist = std::abs(span - len);
        if (dist < best_dist || (dist == best_dist && len < best)) {
            best = len;
            best_dist = dist;
        }
    }
    return best;
}

std::vector<std::size_t> bars_to_state_sequence(const BarStateSpace& space,
                                                const std::vector<int>& spans) {
    std::vector<std::size_t> seq;
    for (int span : spans) {
        const int len = snap_bar_length(span, space.lengths);
        for (int pos = 1; pos <= len; ++pos) seq.push_back(space.index_of(len, pos));
    }
    return seq;
}

TransitionMatrix train_transitions(const BarStateSpace& space,
                                   const std::vector<std::vector<std::size_t>>& sequences,
                                   double floor, double end_bar_boost) {
    const std::size_t n = space.size();
    Mat counts(n, n);
    std::vector<double> row_total(n, 0.0);
    for (const auto& seq : sequences) {
        for (std::size_t k = 1; k < seq.size(); ++k) {
            if (seq[k - 1] >= n || seq[k] >= n) throw usage_error("state index out of range");
            counts(seq[k - 1], seq[k]) += 1.0;
            row_total[seq[k - 1]] += 1.0;
        }
    }

    TransitionMatrix tm;
    tm.a = Mat(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const BarStateSpace::State& st = space.states[i];
        const bool end_of_bar = (st.position == st.bar_length);
        const std::size_t advance =
            end_of_bar ? space.index_of(st.bar_length, 1) : space.index_of(st.bar_length, st.position + 1);

        double* row = tm.a.row_ptr(i);
        if (row_total[i] > 0.0) {
            for (std::size_t j = 0; j < n; ++j) {
                row[j] = std::max(counts(i, j) / row_total[i], floor);
            }
        } else {
            for (std::size_t j = 0; j < n; ++j) row[j] = kPriorUniform / static_cast<double>(n);
            row[advance] += kPriorAdvance;
            for (std::size_t h : space.h1) row[h] += kPriorDownbeat / static_cast<double>(space.h1.size());
        }
        if (end_of_bar) row[advance] *= end_bar_boost;

        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += row[j];
        for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
    }
    return tm;
}

Mat emissions_from_likelihood(const BarStateSpace& space, const std::vector<double>& likelihood) {
    if (likelihood.empty()) throw usage_error("empty likelihood series");
    Mat e(likelihood.size(), space.size());
    for (std::size_t k = 0; k < likelihood.size(); ++k) {
        const double d = likelihood[k];
        if (d < 0.0 || d > 1.0) throw usage_error("likelihood outside [0,1]");
        double* row = e.row_ptr(k);
        for (std::size_t i = 0; i < space.size(); ++i) row[i] = space.is_h1[i] ? d : 1.0 - d;
    }
    return e;
}

DecodedPath viterbi(const BarStateSpace& space, const TransitionMatrix& a, const Mat& emissions) {
    const std::size_t n = space.size();
    const std::size_t frames = emissions.rows;
    if (frames == 0) throw usage_error("empty emission sequence");
    if (emissions.cols != n || a.a.rows != n || a.a.cols != n) {
        throw usage_error("emission/transition dimensions do not match the state space");
    }

    Mat log_a(n, n);
    for (std::size_t i = 0; i < n * n; ++i) log_a.data[i] = safe_log(a.a.data[i]);

    // Suffix value: best achievable log score from tatum k onward given the
    // state at k, including its own emission. Reconstructing forward and
    // preferring the lowest index on ties yields the lexicographically
    // smallest optimal path.
    Mat value(frames, n);
    for (std::size_t i = 0; i < n; ++i) value(frames - 1, i) = safe_log(emissions(frames - 1, i));
    for (std::size_t k = frames - 1; k-- > 0;) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = -std::numeric_limits<double>::infinity();
            const double* la = log_a.row_ptr(i);
            const double* next = value.row_ptr(k + 1);
            for (std::size_t j = 0; j < n; ++j) {
                const double s = la[j] + next[j];
                if (s > best) best = s;
            }
            value(k, i) = safe_log(emissions(k, i)) + best;
        }
    }

    DecodedPath path;
    path.states.resize(frames);
    const double log_pi = -std::log(static_cast<double>(n));

    std::size_t cur = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const double s = log_pi + value(0, i);
        if (s > best) {
            best = s;
            cur = i;
        }
    }
    path.states[0] = cur;
    for (std::size_t k = 1; k < frames; ++k) {
        const double* la = log_a.row_ptr(cur);
        const double* val = value.row_ptr(k);
        std::size_t next = 0;
        double best_step = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            const double s = la[j] + val[j];
            if (s > best_step) {
                best_step = s;
                next = j;
            }
        }
        if (!(a.a(cur, next) > 0.0)) throw pipeline_error("decoded transition has zero probability");
        path.states[k] = next;
        cur = next;
    }
    path.log_prob = path_score(space, a, emissions, path.states);
    fill_downbeats(space, path);
    return path;
}

DecodedPath brute_force_decode(const BarStateSpace& space, const TransitionMatrix& a,
                               const Mat& emissions) {
    const std::size_t n = space.size();
    const std::size_t frames = emissions.rows;
    if (frames == 0) throw usage_error("empty emission sequence");

    double total = 1.0;
    for (std::size_t k = 0; k < frames; ++k) {
        total *= static_cast<double>(n);
        if (total > 1e7) throw usage_error("instance too large for exhaustive decoding");
    }

    Mat log_a(n, n);
    for (std::size_t i = 0; i < n * n; ++i) log_a.data[i] = safe_log(a.a.data[i]);
    const double log_pi = -std::log(static_cast<double>(n));

    std::vector<std::size_t> current(frames, 0), best_path;
    double best = -std::numeric_limits<double>::infinity();

    // Depth-first over state indices in increasing order; keeping only
    // strictly better scores makes the first optimum the lexicographically
    // smallest one.
    std::vector<double> prefix(frames, 0.0);
    std::size_t depth = 0;
    std::vector<std::size_t> next_state(frames, 0);
    while (true) {
        if (next_state[depth] == n) {
            if (depth == 0) break;
            next_state[depth] = 0;
            --depth;
            ++next_state[depth];
            continue;
        }
        const std::size_t s = next_state[depth];
        current[depth] = s;
        const double step = (depth == 0 ? log_pi : log_a(current[depth - 1], s)) +
                            safe_log(emissions(depth, s));
        prefix[depth] = (depth == 0 ? 0.0 : prefix[depth - 1]) + step;
        if (depth + 1 == frames) {
            if (prefix[depth] > best) {
                best = prefix[depth];
                best_path = current;
            }
            ++next_state[depth];
        } else {
            ++depth;
            next_state[depth] = 0;
        }
    }

    DecodedPath path;
    path.states = best_path;
    path.log_prob = best;
    fill_downbeats(space, path);
    return path;
}

std::vector<double> states_to_downbeats(const DecodedPath& path, const TatumGrid& grid) {
    if (path.states.size() != grid.tatum_times.size()) {
        throw usage_error("decoded path length does not match the tatum grid");
    }
    std::vector<double> times;
    times.reserve(path.downbeat_tatums.size());
    for (std::size_t k : path.downbeat_tatums) times.push_back(grid.tatum_times[k]);
    return times;
}

std::vector<std::size_t> threshold_baseline(const std::vector<double>& likelihood,
                                            double threshold) {
    if (threshold < 0.0 || threshold > 1.0) throw usage_error("threshold must be in [0,1]");
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < likelihood.size(); ++k) {
        if (likelihood[k] > threshold) out.push_back(k);
    }
    return out;
}

} // namespace downbeat
