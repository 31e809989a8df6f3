#include "downbeat/nn.h"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "downbeat/error.h"

namespace downbeat {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;

constexpr std::size_t kColBlockBytes = std::size_t{8} << 20;
constexpr double kLossFloor = 1e-12;

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

Shape3 conv_out_shape(const Shape3& in, const LayerSpec& s) {
    if (in.l != s.in_maps) throw usage_error("layer input depth does not match filter depth");
    if (in.n < s.filter_t || in.m < s.filter_v) {
        throw usage_error("input smaller than convolution filter");
    }
    return {in.n - s.filter_t + 1, in.m - s.filter_v + 1, s.n_filters};
}

// Copies the receptive fields of output positions [row0, row0+rows) into a
// rows x K patch matrix, K = filter_t * filter_v * in_maps.
void fill_col_block(const Tensor3& x, const LayerSpec& s, std::size_t m_out, std::size_t row0,
                    std::size_t rows, double* col) {
    const std::size_t seg = s.filter_v * s.in_maps;
    const std::size_t K = s.filter_t * seg;
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t pos = row0 + r;
        const std::size_t t0 = pos / m_out;
        const std::size_t v0 = pos % m_out;
        double* dst = col + r * K;
        for (std::size_t ft = 0; ft < s.filter_t; ++ft) {
            const double* src = &x.values[((t0 + ft) * x.m + v0) * x.l];
            std::memcpy(dst, src, seg * sizeof(double));
            dst += seg;
        }
    }
}

// Scatter-add of a rows x K patch-gradient block back onto the input grid;
// the adjoint of fill_col_block.
void add_col_block(Tensor3& gx, const LayerSpec& s, std::size_t m_out, std::size_t row0,
                   std::size_t rows, const double* col) {
    const std::size_t seg = s.filter_v * s.in_maps;
    const std::size_t K = s.filter_t * seg;
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t pos = row0 + r;
        const std::size_t t0 = pos / m_out;
        const std::size_t v0 = pos % m_out;
        const double* src = col + r * K;
        for (std::size_t ft = 0; ft < s.filter_t; ++ft) {
            double* dst = &gx.values[((t0 + ft) * gx.m + v0) * gx.l];
            for (std::size_t i = 0; i < seg; ++i) dst[i] += src[i];
            src += seg;
        }
    }
}

struct PoolResult {
    Tensor3 output;
    std::vector<std::size_t> argmax; // flat input index per output element
};

PoolResult maxpool_with_argmax(const Tensor3& x, std::size_t pool_t, std::size_t pool_v) {
    if (pool_t == 0 || pool_v == 0) throw usage_error("pooling factors must be positive");
    const std::size_t no = ceil_div(x.n, pool_t);
    const std::size_t mo = ceil_div(x.m, pool_v);
    PoolResult res;
    res.output = Tensor3(no, mo, x.l);
    res.argmax.resize(res.output.size());
    for (std::size_t ot = 0; ot < no; ++ot) {
        for (std::size_t ov = 0; ov < mo; ++ov) {
            const std::size_t t1 = std::min(x.n, (ot + 1) * pool_t);
            const std::size_t v1 = std::min(x.m, (ov + 1) * pool_v);
            for (std::size_t ch = 0; ch < x.l; ++ch) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_idx = 0;
                for (std::size_t t = ot * pool_t; t < t1; ++t) {
                    for (std::size_t v = ov * pool_v; v < v1; ++v) {
                        const std::size_t idx = (t * x.m + v) * x.l + ch;
                        if (x.values[idx] > best) {
                            best = x.values[idx];
                            best_idx = idx;
                        }
                    }
                }
                const std::size_t out_idx = (ot * mo + ov) * x.l + ch;
                res.output.values[out_idx] = best;
                res.argmax[out_idx] = best_idx;
            }
        }
    }
    return res;
}

struct OpRecord {
    PostOpSpec spec;
    Shape3 in_shape;
    Tensor3 output;
    std::vector<std::size_t> argmax; // MaxPool
    std::vector<double> mask;        // Dropout
};

struct LayerRecord {
    Tensor3 input;
    std::vector<OpRecord> ops; // ops[0].output follows the convolution
    Tensor3 conv_out;
};

Tensor3 run_post_op(const PostOpSpec& op, Tensor3 x, Rng* rng, bool training, OpRecord* rec) {
    if (rec) rec->in_shape = {x.n, x.m, x.l};
    switch (op.op) {
        case PostOp::Relu:
            for (double& v : x.values) v = std::max(0.0, v);
            break;
        case PostOp::Sigmoid:
            for (double& v : x.values) v = 1.0 / (1.0 + std::exp(-v));
            break;
        case PostOp::Softmax: {
            if (x.n != 1 || x.m != 1) throw usage_error("softmax requires a 1x1xJ tensor");
            const double peak = *std::max_element(x.values.begin(), x.values.end());
            double sum = 0.0;
            for (double& v : x.values) {
                v = std::exp(v - peak);
                sum += v;
            }
            for (double& v : x.values) v /= sum;
            break;
        }
        case PostOp::MaxPool: {
            PoolResult pr = maxpool_with_argmax(x, op.pool_t, op.pool_v);
            if (rec) rec->argmax = std::move(pr.argmax);
            x = std::move(pr.output);
            break;
        }
        case PostOp::Dropout: {
            if (op.rate < 0.0 || op.rate >= 1.0) throw usage_error("dropout rate must be in [0,1)");
            if (training && op.rate > 0.0) {
                if (!rng) throw usage_error("training-mode dropout needs a generator");
                const double keep_scale = 1.0 / (1.0 - op.rate);
                std::vector<double> mask(x.size());
                for (std::size_t i = 0; i < x.size(); ++i) {
                    mask[i] = (rng->uniform() < op.rate) ? 0.0 : keep_scale;
                    x.values[i] *= mask[i];
                }
                if (rec) rec->mask = std::move(mask);
            } else if (rec) {
                rec->mask.assign(x.size(), 1.0);
            }
            break;
        }
    }
    if (rec) {
        rec->spec = op;
        rec->output = x;
    }
    return x;
}

Tensor3 forward_network(const NetworkSpec& spec, const Parameters& params, const Tensor3& input,
                        Rng* rng, bool training, std::vector<LayerRecord>* records) {
    if (params.layers.size() != spec.layers.size()) throw usage_error("parameter/spec mismatch");
    Tensor3 x = input;
    for (std::size_t k = 0; k < spec.layers.size(); ++k) {
        LayerRecord rec;
        if (records) rec.input = x;
        Tensor3 c = conv_forward(x, params.layers[k], spec.layers[k]);
        if (records) rec.conv_out = c;
        x = std::move(c);
        for (const PostOpSpec& op : spec.layers[k].ops) {
            OpRecord op_rec;
            x = run_post_op(op, std::move(x), rng, training, records ? &op_rec : nullptr);
            if (records) rec.ops.push_back(std::move(op_rec));
        }
        if (records) records->push_back(std::move(rec));
    }
    return x;
}

void conv_backward(const Tensor3& input, const LayerSpec& s, const LayerParams& p,
                   const Tensor3& grad_out, LayerParams& grad_accum, Tensor3* grad_input) {
    const std::size_t m_out = input.m - s.filter_v + 1;
    const std::size_t n_out = input.n - s.filter_t + 1;
    const std::size_t rows_total = n_out * m_out;
    const std::size_t K = s.filter_t * s.filter_v * s.in_maps;
    const std::size_t n1 = s.n_filters;

    CMapRM gout(grad_out.values.data(), rows_total, n1);
    MapRM gw(grad_accum.weights.data(), K, n1);
    Eigen::Map<Eigen::VectorXd> gb(grad_accum.bias.data(), n1);
    gb += gout.colwise().sum().transpose();

    CMapRM w(p.weights.data(), K, n1);
    if (grad_input) *grad_input = Tensor3(input.n, input.m, input.l);

    const std::size_t block = std::max<std::size_t>(1, kColBlockBytes / (K * sizeof(double)));
    std::vector<double> col(std::min(block, rows_total) * K);
    std::vector<double> gcol(grad_input ? std::min(block, rows_total) * K : 0);

    for (std::size_t row0 = 0; row0 < rows_total; row0 += block) {
        const std::size_t rows = std::min(block, rows_total - row0);
        fill_col_block(input, s, m_out, row0, rows, col.data());
        CMapRM col_map(col.data(), rows, K);
        CMapRM gout_block(grad_out.values.data() + row0 * n1, rows, n1);
        gw.noalias() += col_map.transpose() * gout_block;
        if (grad_input) {
            MapRM gcol_map(gcol.data(), rows, K);
            gcol_map.noalias() = gout_block * w.transpose();
            add_col_block(*grad_input, s, m_out, row0, rows, gcol.data());
        }
    }
}

std::vector<double> loss_gradient(LossKind loss, const std::vector<double>& pred,
                                  const std::vector<double>& target) {
    if (pred.size() != target.size()) throw usage_error("output/target length mismatch");
    std::vector<double> g(pred.size(), 0.0);
    if (loss == LossKind::Log) {
        const std::size_t label =
            std::max_element(target.begin(), target.end()) - target.begin();
        g[label] = -1.0 / std::max(pred[label], kLossFloor);
    } else {
        for (std::size_t i = 0; i < pred.size(); ++i) g[i] = 2.0 * (pred[i] - target[i]);
    }
    return g;
}

double loss_value(LossKind loss, const std::vector<double>& pred,
                  const std::vector<double>& target) {
    if (loss == LossKind::Log) {
        const std::size_t label =
            std::max_element(target.begin(), target.end()) - target.begin();
        return log_loss(pred, label);
    }
    return euclidean_loss(pred, target);
}

void write_doubles(std::ofstream& out, const std::vector<double>& values) {
    static_assert(sizeof(double) == 8);
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * 8));
    } else {
        for (double d : values) {
            char b[8];
            std::memcpy(b, &d, 8);
            std::reverse(b, b + 8);
            out.write(b, 8);
        }
    }
}

void read_doubles(std::ifstream& in, std::vector<double>& values) {
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * 8));
    } else {
        for (double& d : values) {
            char b[8];
            in.read(b, 8);
            std::reverse(b, b + 8);
            std::memcpy(&d, b, 8);
        }
    }
}

} // namespace

std::vector<Shape3> NetworkSpec::shape_chain() const {
    std::vector<Shape3> chain;
    chain.push_back({input_n, input_m, input_l});
    Shape3 cur = chain.back();
    for (const LayerSpec& layer : layers) {
        cur = conv_out_shape(cur, layer);
        for (const PostOpSpec& op : layer.ops) {
            if (op.op == PostOp::MaxPool) {
                cur = {ceil_div(cur.n, op.pool_t), ceil_div(cur.m, op.pool_v), cur.l};
            }
        }
        chain.push_back(cur);
    }
    return chain;
}

void NetworkSpec::validate() const {
    if (layers.empty()) throw usage_error("network has no layers");
    const auto chain = shape_chain(); // throws on dimension problems
    for (std::size_t k = 0; k < layers.size(); ++k) {
        if (chain[k].l != layers[k].in_maps) throw usage_error("layer depths do not chain");
    }
    const Shape3 out = chain.back();
    if (out.n != 1 || out.m != 1) throw usage_error("network must end in a 1x1xJ output");
}

Parameters init_parameters(const NetworkSpec& spec, Rng& rng) {
    Parameters params;
    for (const LayerSpec& layer : spec.layers) {
        LayerParams p;
        const std::size_t fan_in = layer.filter_t * layer.filter_v * layer.in_maps;
        const std::size_t fan_out = layer.filter_t * layer.filter_v * layer.n_filters;
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        p.weights.resize(fan_in * layer.n_filters);
        for (double& w : p.weights) w = rng.uniform(-bound, bound);
        p.bias.assign(layer.n_filters, 0.0);
        params.layers.push_back(std::move(p));
    }
    return params;
}

Gradients zero_gradients(const NetworkSpec& spec) {
    Gradients g;
    for (const LayerSpec& layer : spec.layers) {
        LayerParams p;
        p.weights.assign(layer.filter_t * layer.filter_v * layer.in_maps * layer.n_filters, 0.0);
        p.bias.assign(layer.n_filters, 0.0);
        g.layers.push_back(std::move(p));
    }
    return g;
}

Tensor3 conv_forward(const Tensor3& x, const LayerParams& p, const LayerSpec& spec) {
    const Shape3 out_shape = conv_out_shape({x.n, x.m, x.l}, spec);
    const std::size_t K = spec.filter_t * spec.filter_v * spec.in_maps;
    const std::size_t n1 = spec.n_filters;
    if (p.weights.size() != K * n1 || p.bias.size() != n1) {
        throw usage_error("parameter sizes do not match layer spec");
    }

    Tensor3 out(out_shape.n, out_shape.m, out_shape.l);
    const std::size_t rows_total = out_shape.n * out_shape.m;
    const std::size_t m_out = out_shape.m;

    CMapRM w(p.weights.data(), K, n1);
    Eigen::Map<const Eigen::RowVectorXd> bias(p.bias.data(), n1);

    const std::size_t block = std::max<std::size_t>(1, kColBlockBytes / (K * sizeof(double)));
    std::vector<double> col(std::min(block, rows_total) * K);

    for (std::size_t row0 = 0; row0 < rows_total; row0 += block) {
        const std::size_t rows = std::min(block, rows_total - row0);
        fill_col_block(x, spec, m_out, row0, rows, col.data());
        CMapRM col_map(col.data(), rows, K);
        MapRM out_map(out.values.data() + row0 * n1, rows, n1);
        out_map.noalias() = col_map * w;
        out_map.rowwise() += bias;
    }
    return out;
}

Tensor3 maxpool(const Tensor3& x, std::size_t pool_t, std::size_t pool_v) {
    return maxpool_with_argmax(x, pool_t, pool_v).output;
}

Tensor3 relu(const Tensor3& x) {
    return run_post_op(PostOpSpec::relu(), x, nullptr, false, nullptr);
}

Tensor3 sigmoid(const Tensor3& x) {
    return run_post_op(PostOpSpec::sigmoid(), x, nullptr, false, nullptr);
}

Tensor3 softmax(const Tensor3& x) {
    return run_post_op(PostOpSpec::softmax(), x, nullptr, false, nullptr);
}

Tensor3 dropout(const Tensor3& x, double rate, Rng& rng, bool training) {
    PostOpSpec op = PostOpSpec::dropout(rate);
    return run_post_op(op, x, &rng, training, nullptr);
}

double log_loss(const std::vector<double>& pred, std::size_t label) {
    if (label >= pred.size()) throw usage_error("class index out of range");
    return -std::log(std::max(pred[label], kLossFloor));
}

double euclidean_loss(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size()) throw usage_error("vector length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc;
}

Network::Network(NetworkSpec spec, Parameters params)
    : spec_(std::move(spec)), params_(std::move(params)) {
    spec_.validate();
    if (params_.layers.size() != spec_.layers.size()) {
        throw usage_error("parameter count does not match layer count");
    }
}

std::vector<double> Network::infer(const Tensor3& input) const {
    Tensor3 out = forward_network(spec_, params_, input, nullptr, false, nullptr);
    return out.values;
}

double Network::sample_loss(const Tensor3& input, const std::vector<double>& target, Rng& rng,
                            bool training) const {
    Tensor3 out = forward_network(spec_, params_, input, &rng, training, nullptr);
    return loss_value(spec_.loss, out.values, target);
}

double Network::accumulate_gradients(const Tensor3& input, const std::vector<double>& target,
                                     Gradients& grads, Rng& rng) const {
    std::vector<LayerRecord> records;
    Tensor3 out = forward_network(spec_, params_, input, &rng, true, &records);
    const double loss = loss_value(spec_.loss, out.values, target);

    std::vector<double> g_flat = loss_gradient(spec_.loss, out.values, target);
    Tensor3 g(1, 1, g_flat.size());
    g.values = std::move(g_flat);

    for (std::size_t k = spec_.layers.size(); k-- > 0;) {
        const LayerRecord& rec = records[k];
        for (std::size_t oi = rec.ops.size(); oi-- > 0;) {
            const OpRecord& op = rec.ops[oi];
            switch (op.spec.op) {
                case PostOp::Relu:
                    for (std::size_t i = 0; i < g.values.size(); ++i) {
                        if (op.output.values[i] <= 0.0) g.values[i] = 0.0;
                    }
                    break;
                case PostOp::Sigmoid:
                    for (std::size_t i = 0; i < g.values.size(); ++i) {
                        const double s = op.output.values[i];
                        g.values[i] *= s * (1.0 - s);
                    }
                    break;
                case PostOp::Softmax: {
                    double dot = 0.0;
                    for (std::size_t i = 0; i < g.values.size(); ++i) {
                        dot += g.values[i] * op.output.values[i];
                    }
                    for (std::size_t i = 0; i < g.values.size(); ++i) {
                        g.values[i] = op.output.values[i] * (g.values[i] - dot);
                    }
                    break;
                }
                case PostOp::Dropout:
                    for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] *= op.mask[i];
                    break;
                case PostOp::MaxPool: {
                    Tensor3 gin(op.in_shape.n, op.in_shape.m, op.in_shape.l);
                    for (std::size_t i = 0; i < g.values.size(); ++i) {
                        gin.values[op.argmax[i]] += g.values[i];
                    }
                    g = std::move(gin);
                    break;
                }
            }
        }
        Tensor3 grad_input;
        conv_backward(rec.input, spec_.layers[k], params_.layers[k], g, grads.layers[k],
                      k > 0 ? &grad_input : nullptr);
        if (k > 0) g = std::move(grad_input);
    }
    return loss;
}

void sgd_step(Parameters& params, Parameters& velocity, const Gradients& grads, double lr,
              double momentum) {
    if (lr <= 0.0) throw usage_error("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw usage_error("momentum must be in [0,1)");
    if (velocity.layers.empty()) {
        velocity.layers.resize(params.layers.size());
        for (std::size_t k = 0; k < params.layers.size(); ++k) {
            velocity.layers[k].weights.assign(params.layers[k].weights.size(), 0.0);
            velocity.layers[k].bias.assign(params.layers[k].bias.size(), 0.0);
        }
    }
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        auto step = [&](std::vector<double>& p, std::vector<double>& v,
                        const std::vector<double>& grad) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                v[i] = momentum * v[i] - lr * grad[i];
                p[i] += v[i];
            }
        };
        step(params.layers[k].weights, velocity.layers[k].weights, grads.layers[k].weights);
        step(params.layers[k].bias, velocity.layers[k].bias, grads.layers[k].bias);
    }
}

void save_network(const std::string& manifest_path, const NetworkSpec& spec,
                  const Parameters& params, const std::map<std::string, std::string>& meta) {
    namespace fs = std::filesystem;
    fs::path mpath(manifest_path);
    fs::path bpath = mpath;
    bpath.replace_extension(".bin");

    std::ofstream manifest(mpath);
    if (!manifest) throw pipeline_error("cannot write manifest: " + manifest_path);
    manifest << "format_version 1\n";
    manifest << "loss " << (spec.loss == LossKind::Log ? "log" : "euclidean") << "\n";
    manifest << "input " << spec.input_n << " " << spec.input_m << " " << spec.input_l << "\n";
    manifest << "layers " << spec.layers.size() << "\n";
    for (const LayerSpec& layer : spec.layers) {
        manifest << "layer conv " << layer.filter_t << " " << layer.filter_v << " "
                 << layer.in_maps << " " << layer.n_filters;
        for (const PostOpSpec& op : layer.ops) {
            switch (op.op) {
                case PostOp::Relu: manifest << " relu"; break;
                case PostOp::Sigmoid: manifest << " sigmoid"; break;
                case PostOp::Softmax: manifest << " softmax"; break;
                case PostOp::MaxPool: manifest << " pool " << op.pool_t << " " << op.pool_v; break;
                case PostOp::Dropout: manifest << " dropout " << op.rate; break;
            }
        }
        manifest << "\n";
    }
    for (const auto& [key, value] : meta) manifest << "meta " << key << " " << value << "\n";
    manifest << "blob " << bpath.filename().string() << "\n";
    if (!manifest) throw pipeline_error("write failed: " + manifest_path);

    std::ofstream blob(bpath, std::ios::binary);
    if (!blob) throw pipeline_error("cannot write weights: " + bpath.string());
    for (const LayerParams& layer : params.layers) {
        write_doubles(blob, layer.weights);
        write_doubles(blob, layer.bias);
    }
    if (!blob) throw pipeline_error("write failed: " + bpath.string());
}

LoadedNetwork load_network(const std::string& manifest_path) {
    std::ifstream manifest(manifest_path);
    if (!manifest) throw missing_error("cannot open network manifest: " + manifest_path);

    LoadedNetwork net;
    std::string blob_name;
    std::string line;
    bool version_seen = false;
    std::size_t declared_layers = 0;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (!version_seen) {
            int version = 0;
            if (key != "format_version" || !(ss >> version)) {
                throw pipeline_error("manifest missing format_version: " + manifest_path);
            }
            if (version != 1) {
                throw pipeline_error("unsupported manifest version " + std::to_string(version));
            }
            version_seen = true;
            continue;
        }
        if (key == "loss") {
            std::string name;
            ss >> name;
            if (name == "log") net.spec.loss = LossKind::Log;
            else if (name == "euclidean") net.spec.loss = LossKind::Euclidean;
            else throw pipeline_error("unknown loss in manifest: " + name);
        } else if (key == "input") {
            ss >> net.spec.input_n >> net.spec.input_m >> net.spec.input_l;
        } else if (key == "layers") {
            ss >> declared_layers;
        } else if (key == "layer") {
            std::string tag;
            ss >> tag;
            if (tag != "conv") throw pipeline_error("unknown layer tag: " + tag);
            LayerSpec layer;
            ss >> layer.filter_t >> layer.filter_v >> layer.in_maps >> layer.n_filters;
            std::string op;
            while (ss >> op) {
                if (op == "relu") layer.ops.push_back(PostOpSpec::relu());
                else if (op == "sigmoid") layer.ops.push_back(PostOpSpec::sigmoid());
                else if (op == "softmax") layer.ops.push_back(PostOpSpec::softmax());
                else if (op == "pool") {
                    std::size_t t = 0, v = 0;
                    ss >> t >> v;
                    layer.ops.push_back(PostOpSpec::maxpool(t, v));
                } else if (op == "dropout") {
                    double rate = 0.0;
                    ss >> rate;
                    layer.ops.push_back(PostOpSpec::dropout(rate));
                } else {
                    throw pipeline_error("unknown post-op in manifest: " + op);
                }
            }
            net.spec.layers.push_back(std::move(layer));
        } else if (key == "meta") {
            std::string mkey;
            ss >> mkey;
            std::string rest;
            std::getline(ss, rest);
            if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
            net.meta[mkey] = rest;
        } else if (key == "blob") {
            ss >> blob_name;
        } else {
            throw pipeline_error("unknown manifest entry: " + key);
        }
    }
    if (!version_seen) throw pipeline_error("manifest missing format_version: " + manifest_path);
    if (declared_layers != net.spec.layers.size()) {
        throw pipeline_error("layer count mismatch in manifest: " + manifest_path);
    }
    net.spec.validate();

    namespace fs = std::filesystem;
    const fs::path bpath = fs::path(manifest_path).parent_path() / blob_name;
    std::ifstream blob(bpath, std::ios::binary);
    if (!blob) throw missing_error("cannot open weight blob: " + bpath.string());

    for (const LayerSpec& layer : net.spec.layers) {
        LayerParams p;
        p.weights.resize(layer.filter_t * layer.filter_v * layer.in_maps * layer.n_filters);
        p.bias.resize(layer.n_filters);
        read_doubles(blob, p.weights);
        read_doubles(blob, p.bias);
        if (!blob) throw pipeline_error("weight blob truncated: " + bpath.string());
        net.params.layers.push_back(std::move(p));
    }
    char extra;
    if (blob.read(&extra, 1)) throw pipeline_error("weight blob has trailing data: " + bpath.string());
    return net;
}

} // namespace downbeat
