#pragma once

#include <map>
#include <string>
#include <vector>

#include "downbeat/features.h"
#include "downbeat/hmm.h"
#include "downbeat/nn.h"
#include "downbeat/sync.h"

namespace downbeat {

// Architecture for the network that consumes a given feature. Chroma and
// melodic networks end in a 2-way softmax classifying the window's center
// tatum; onset and low-frequency networks end in a 17-way sigmoid scoring
// every covered tatum. `reduced` divides the hidden filter counts by 10
// for desk-scale training.
NetworkSpec default_spec(FeatureKind kind, bool reduced = false);

// 9 tatums for chroma, 17 for the others.
std::size_t window_tatums_for(FeatureKind kind);

// True for the 17-way sigmoid heads (per-covered-tatum labels).
bool multi_label_for(FeatureKind kind);

// Loss target for a labeled window under the given head: a one-hot pair for
// scalar labels, the label vector itself for multi-label ones.
std::vector<double> target_for(const NetworkSpec& spec, const std::vector<double>& label);

Tensor3 window_to_tensor(const Mat& window);

// 12 circular pitch-class shifts of every chroma window; labels unchanged.
std::vector<NetworkInput> augment_chroma_shifts(const std::vector<NetworkInput>& inputs);

// Subsamples the majority class (scalar labels) to the minority count,
// without replacement; keeps the original order.
std::vector<NetworkInput> balance_classes(const std::vector<NetworkInput>& inputs, Rng& rng);
// Index form of the same selection, for callers that build windows lazily.
std::vector<std::size_t> balanced_label_indices(const std::vector<char>& labels, Rng& rng);

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    std::size_t batch = 64;
    std::size_t epochs = 30;
    std::uint64_t seed = 0;
};

struct TrainResult {
    Parameters params;
    std::vector<double> epoch_loss; // mean training loss per epoch
    bool diverged = false;
};

// Mini-batch SGD with momentum; deterministic given the seed. On a
// non-finite batch loss the run stops and reports the last finite state.
TrainResult train_network(const NetworkSpec& spec, const std::vector<NetworkInput>& data,
                          const TrainConfig& config);

struct LikelihoodSeries {
    std::vector<double> values; // one per tatum, in [0, 1]
    std::string source;         // feature kind name or "fused"
};

// Per-tatum downbeat likelihood: scalar heads report the downbeat-class
// probability at each window's center tatum; multi-label heads average the
// per-tatum outputs of all overlapping windows.
LikelihoodSeries infer_likelihood(const Network& net, const std::vector<NetworkInput>& windows,
                                  FeatureKind source);

// Elementwise mean of series with distinct sources.
LikelihoodSeries fuse_average(const std::vector<LikelihoodSeries>& series);

// The trained four-network model plus its temporal statistics.
struct EnsembleModel {
    std::map<FeatureKind, Network> networks;
    BarStateSpace space;
    TransitionMatrix transitions;
    std::vector<std::vector<int>> bar_spans; // raw tatum spans per training song
    std::map<std::string, std::string> meta; // training config, seeds, fingerprints
};

// Bundle directory: one manifest/blob pair per network, a transitions
// manifest/blob, and ensemble.json tying them together.
void save_bundle(const std::string& dir, const EnsembleModel& model);
EnsembleModel load_bundle(const std::string& dir);

} // namespace downbeat
