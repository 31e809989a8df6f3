#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "downbeat/rng.h"

namespace downbeat {

// Dense rank-3 tensor in [time][spectral][map] order.
struct Tensor3 {
    std::size_t n = 0, m = 0, l = 0;
    std::vector<double> values;

    Tensor3() = default;
    Tensor3(std::size_t n_, std::size_t m_, std::size_t l_, double fill = 0.0)
        : n(n_), m(m_), l(l_), values(n_ * m_ * l_, fill) {}

    double& at(std::size_t t, std::size_t v, std::size_t ch) {
        return values[(t * m + v) * l + ch];
    }
    double at(std::size_t t, std::size_t v, std::size_t ch) const {
        return values[(t * m + v) * l + ch];
    }
    std::size_t size() const { return values.size(); }
};

enum class PostOp { Relu, Sigmoid, MaxPool, Softmax, Dropout };

struct PostOpSpec {
    PostOp op = PostOp::Relu;
    std::size_t pool_t = 1, pool_v = 1; // MaxPool only
    double rate = 0.0;                  // Dropout only

    static PostOpSpec relu() { return {PostOp::Relu}; }
    static PostOpSpec sigmoid() { return {PostOp::Sigmoid}; }
    static PostOpSpec maxpool(std::size_t t, std::size_t v) { return {PostOp::MaxPool, t, v}; }
    static PostOpSpec softmax() { return {PostOp::Softmax}; }
    static PostOpSpec dropout(double rate) { return {PostOp::Dropout, 1, 1, rate}; }
};

// One layer: a valid-mode convolution followed by a chain of nonlinearities.
struct LayerSpec {
    std::size_t filter_t = 1, filter_v = 1, in_maps = 1, n_filters = 1;
    std::vector<PostOpSpec> ops;
};

enum class LossKind { Log, Euclidean };

struct Shape3 {
    std::size_t n = 0, m = 0, l = 0;
    bool operator==(const Shape3&) const = default;
};

struct NetworkSpec {
    std::size_t input_n = 0, input_m = 0, input_l = 1;
    std::vector<LayerSpec> layers;
    LossKind loss = LossKind::Log;

    // Shape after each layer (post ops applied); index 0 is the input.
    std::vector<Shape3> shape_chain() const;
    Shape3 output_shape() const { return shape_chain().back(); }
    // Throws Error if the layers do not chain or any dimension collapses.
    void validate() const;
};

struct LayerParams {
    std::vector<double> weights; // [t][v][l][l'] order, filter_t*filter_v*in_maps*n_filters
    std::vector<double> bias;    // n_filters
};

struct Parameters {
    std::vector<LayerParams> layers;
};

// Gradients share the Parameters layout.
using Gradients = Parameters;

// Glorot-uniform weights, zero biases; draws come from `rng` in layer order.
Parameters init_parameters(const NetworkSpec& spec, Rng& rng);
Gradients zero_gradients(const NetworkSpec& spec);

// Valid cross-correlation with bias:
//   out[t'][v'][l'] = b[l'] + sum_{t,v,l} W[t,v,l,l'] * x[t'+t-1][v'+v-1][l]
Tensor3 conv_forward(const Tensor3& x, const LayerParams& p, const LayerSpec& spec);

// Per-map block maximum; dimensions that the factors do not divide are
// padded with the lowest representable value, so output dims are
// ceil(n/pool_t) x ceil(m/pool_v).
Tensor3 maxpool(const Tensor3& x, std::size_t pool_t, std::size_t pool_v);

Tensor3 relu(const Tensor3& x);
Tensor3 sigmoid(const Tensor3& x);
// Softmax over the map dimension; requires a 1 x 1 x J tensor.
Tensor3 softmax(const Tensor3& x);
// Training mode zeroes units with probability `rate` (drawing from `rng`)
// and scales survivors by 1/(1-rate); inference mode is the identity.
Tensor3 dropout(const Tensor3& x, double rate, Rng& rng, bool training);

// -ln(pred[label]) with an epsilon floor of 1e-12.
double log_loss(const std::vector<double>& pred, std::size_t label);
// Squared Euclidean distance.
double euclidean_loss(const std::vector<double>& pred, const std::vector<double>& target);

class Network {
public:
    Network(NetworkSpec spec, Parameters params);

    const NetworkSpec& spec() const { return spec_; }
    const Parameters& params() const { return params_; }
    Parameters& params() { return params_; }

    // Inference-mode forward pass (dropout off); returns the flattened
    // 1 x 1 x J output.
    std::vector<double> infer(const Tensor3& input) const;

    // Training-mode forward + reverse pass; accumulates exact loss gradients
    // for every weight and bias into `grads` and returns the sample loss.
    // For the log loss, `target` is a one-hot vector over the output classes.
    double accumulate_gradients(const Tensor3& input, const std::vector<double>& target,
                                Gradients& grads, Rng& rng) const;

    // Loss of a single sample; dropout uses `rng` when training is true.
    double sample_loss(const Tensor3& input, const std::vector<double>& target, Rng& rng,
                       bool training) const;

private:
    NetworkSpec spec_;
    Parameters params_;
};

// Momentum update: velocity <- momentum * velocity - lr * grad;
// params <- params + velocity. `velocity` must share the Parameters layout
// (zero-initialized on first use).
void sgd_step(Parameters& params, Parameters& velocity, const Gradients& grads, double lr,
              double momentum);

// Text manifest + little-endian float64 blob. The blob path is the manifest
// path with its extension replaced by ".bin". `meta` entries are free-form
// key/value strings stored in the manifest.
void save_network(const std::string& manifest_path, const NetworkSpec& spec,
                  const Parameters& params,
                  const std::map<std::string, std::string>& meta = {});

struct LoadedNetwork {
    NetworkSpec spec;
    Parameters params;
    std::map<std::string, std::string> meta;
};
LoadedNetwork load_network(const std::string& manifest_path);

} // namespace downbeat
