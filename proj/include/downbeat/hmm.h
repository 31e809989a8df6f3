#pragma once

#include <cstddef>
#include <vector>

#include "downbeat/mat.h"
#include "downbeat/tatum.h"

namespace downbeat {

// Bar-position state space: one state per (bar length, position-in-bar)
// pair, enumerated length-major then position-minor. Position-1 states
// (set H1) emit the downbeat likelihood.
struct BarStateSpace {
    struct State {
        int bar_length = 0;
        int position = 0; // 1-based
    };
    std::vector<int> lengths; // ascending, distinct
    std::vector<State> states;
    std::vector<std::size_t> h1;
    std::vector<char> is_h1;

    std::size_t size() const { return states.size(); }
    std::size_t index_of(int bar_length, int position) const;
};

struct TransitionMatrix {
    Mat a; // |states| x |states|, row-stochastic
};

struct DecodedPath {
    std::vector<std::size_t> states;         // one per tatum
    std::vector<std::size_t> downbeat_tatums; // positions decoded into H1
    double log_prob = 0.0;
};

// Bar lengths allowed by default: {3,4,5,6,7,8,9,10,12,16} tatums, 80 states.
const std::vector<int>& default_bar_lengths();

BarStateSpace build_state_space(const std::vector<int>& lengths);

// Nearest allowed bar length for an observed tatum span; ties prefer the
// shorter length.
int snap_bar_length(int span, const std::vector<int>& lengths);

// State index sequence for consecutive bars of the given (raw) tatum spans.
std::vector<std::size_t> bars_to_state_sequence(const BarStateSpace& space,
                                                const std::vector<int>& spans);

// Counted transitions with a minimum value: a_ij = max(n_ij / N_i, floor)
// for observed rows, then row renormalization. Rows never observed fall
// back to a prior of 0.9 on the within-bar advance, 0.09 spread over H1,
// and a small uniform remainder. end_bar_boost scales the end-of-bar ->
// same-length-H1 entry before renormalization.
TransitionMatrix train_transitions(const BarStateSpace& space,
                                   const std::vector<std::vector<std::size_t>>& sequences,
                                   double floor = 0.02, double end_bar_boost = 1.0);

// e_i(k) = d(k) for position-1 states, 1 - d(k) otherwise; one row per tatum.
Mat emissions_from_likelihood(const BarStateSpace& space, const std::vector<double>& likelihood);

// Maximum-probability state path (log domain, uniform initial distribution,
// ties toward the lowest state index, lexicographically over the path).
DecodedPath viterbi(const BarStateSpace& space, const TransitionMatrix& a, const Mat& emissions);

// Exact decode by enumeration; same tie rule as viterbi. Refuses instances
// with more than 1e7 candidate paths.
DecodedPath brute_force_decode(const BarStateSpace& space, const TransitionMatrix& a,
                               const Mat& emissions);

// Tatum times of the decoded downbeat states.
std::vector<double> states_to_downbeats(const DecodedPath& path, const TatumGrid& grid);

// Tatum indices whose likelihood exceeds the threshold.
std::vector<std::size_t> threshold_baseline(const std::vector<double>& likelihood, double threshold);

} // namespace downbeat
