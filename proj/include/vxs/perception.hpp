#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vxs/math.hpp"
#include "vxs/voxel.hpp"

namespace vxs {

// ======================================================
// Activations
// ======================================================
inline double softplus(double x) {
    // max(x,0) + log1p(exp(-|x|)) never overflows
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}
inline double mish(double x) { return x * std::tanh(softplus(x)); }

enum class Activation { kNone, kMish };

// ======================================================
// Dense tensors (float storage, double accumulation)
// ======================================================
struct Tensor3 {
    int c = 0, h = 0, w = 0;
    std::vector<float> data;

    Tensor3() = default;
    Tensor3(int c_, int h_, int w_)
        : c(c_), h(h_), w(w_), data(static_cast<size_t>(c_) * h_ * w_, 0.0f) {}

    float at(int ci, int y, int x) const {
        return data[(static_cast<size_t>(ci) * h + y) * w + x];
    }
    float& at(int ci, int y, int x) { return data[(static_cast<size_t>(ci) * h + y) * w + x]; }
};

struct Tensor4 {
    int c = 0, d = 0, h = 0, w = 0;
    std::vector<float> data;

    Tensor4() = default;
    Tensor4(int c_, int d_, int h_, int w_)
        : c(c_), d(d_), h(h_), w(w_), data(static_cast<size_t>(c_) * d_ * h_ * w_, 0.0f) {}

    float at(int ci, int z, int y, int x) const {
        return data[((static_cast<size_t>(ci) * d + z) * h + y) * w + x];
    }
    float& at(int ci, int z, int y, int x) {
        return data[((static_cast<size_t>(ci) * d + z) * h + y) * w + x];
    }
};

// z slices become channels: X[c= z][v= y][u= x]
inline Tensor3 grid_to_tensor(const VoxelGrid& grid) {
    Tensor3 t(grid.depth(), grid.height(), grid.width());
    for (size_t i = 0; i < grid.occupancy.size(); ++i)
        t.data[i] = static_cast<float>(grid.occupancy[i]);
    return t;
}

// the same grid as a single-channel volume for the 3D reference
inline Tensor4 grid_to_volume(const VoxelGrid& grid) {
    Tensor4 t(1, grid.depth(), grid.height(), grid.width());
    for (size_t i = 0; i < grid.occupancy.size(); ++i)
        t.data[i] = static_cast<float>(grid.occupancy[i]);
    return t;
}

// ======================================================
// Layers
// ======================================================
struct Conv2dLayer {
    int in_channels = 0, out_channels = 0;
    int kernel = 3, stride = 1, padding = 0;
    Activation activation = Activation::kNone;
    std::vector<float> weights;  // (o, c, ky, kx) row-major
    std::vector<float> bias;     // (o)

    static Conv2dLayer make(int in_c, int out_c, int k, int s, int p, Activation act) {
        if (k < 1 || k % 2 == 0) throw std::invalid_argument("kernel size must be odd");
        if (s < 1 || p < 0 || in_c < 1 || out_c < 1)
            throw std::invalid_argument("bad conv geometry");
        Conv2dLayer l;
        l.in_channels = in_c;
        l.out_channels = out_c;
        l.kernel = k;
        l.stride = s;
        l.padding = p;
        l.activation = act;
        l.weights.assign(static_cast<size_t>(out_c) * in_c * k * k, 0.0f);
        l.bias.assign(static_cast<size_t>(out_c), 0.0f);
        return l;
    }

    int out_dim(int in_dim) const { return (in_dim + 2 * padding - kernel) / stride + 1; }

    float weight(int o, int ci, int ky, int kx) const {
        return weights[((static_cast<size_t>(o) * in_channels + ci) * kernel + ky) * kernel + kx];
    }

    Tensor3 forward(const Tensor3& x) const {
        if (x.c != in_channels) throw std::invalid_argument("conv2d channel mismatch");
        const int oh = out_dim(x.h), ow = out_dim(x.w);
        if (oh < 1 || ow < 1) throw std::invalid_argument("conv2d output would be empty");
        Tensor3 y(out_channels, oh, ow);
        for (int o = 0; o < out_channels; ++o)
            for (int v = 0; v < oh; ++v)
                for (int u = 0; u < ow; ++u) {
                    double acc = bias[static_cast<size_t>(o)];
                    for (int ci = 0; ci < in_channels; ++ci)
                        for (int ky = 0; ky < kernel; ++ky) {
                            const int iy = v * stride - padding + ky;
                            if (iy < 0 || iy >= x.h) continue;
                            for (int kx = 0; kx < kernel; ++kx) {
                                const int ix = u * stride - padding + kx;
                                if (ix < 0 || ix >= x.w) continue;
                                acc += static_cast<double>(weight(o, ci, ky, kx)) * x.at(ci, iy, ix);
                            }
                        }
                    if (activation == Activation::kMish) acc = mish(acc);
                    y.at(o, v, u) = static_cast<float>(acc);
                }
        return y;
    }
};

struct Conv3dLayer {
    int in_channels = 0, out_channels = 0;
    int kernel = 3, stride = 1, padding = 0;
    Activation activation = Activation::kNone;
    std::vector<float> weights;  // (o, c, kz, ky, kx)
    std::vector<float> bias;

    static Conv3dLayer make(int in_c, int out_c, int k, int s, int p, Activation act) {
        if (k < 1 || k % 2 == 0) throw std::invalid_argument("kernel size must be odd");
        if (s < 1 || p < 0 || in_c < 1 || out_c < 1)
            throw std::invalid_argument("bad conv geometry");
        Conv3dLayer l;
        l.in_channels = in_c;
        l.out_channels = out_c;
        l.kernel = k;
        l.stride = s;
        l.padding = p;
        l.activation = act;
        l.weights.assign(static_cast<size_t>(out_c) * in_c * k * k * k, 0.0f);
        l.bias.assign(static_cast<size_t>(out_c), 0.0f);
        return l;
    }

    int out_dim(int in_dim) const { return (in_dim + 2 * padding - kernel) / stride + 1; }

    float weight(int o, int ci, int kz, int ky, int kx) const {
        return weights[(((static_cast<size_t>(o) * in_channels + ci) * kernel + kz) * kernel + ky) *
                           kernel +
                       kx];
    }

    Tensor4 forward(const Tensor4& x) const {
        if (x.c != in_channels) throw std::invalid_argument("conv3d channel mismatch");
        const int od = out_dim(x.d), oh = out_dim(x.h), ow = out_dim(x.w);
        if (od < 1 || oh < 1 || ow < 1) throw std::invalid_argument("conv3d output would be empty");
        Tensor4 y(out_channels, od, oh, ow);
        for (int o = 0; o < out_channels; ++o)
            for (int zo = 0; zo < od; ++zo)
                for (int v = 0; v < oh; ++v)
                    for (int u = 0; u < ow; ++u) {
                        double acc = bias[static_cast<size_t>(o)];
                        for (int ci = 0; ci < in_channels; ++ci)
                            for (int kz = 0; kz < kernel; ++kz) {
                                const int iz = zo * stride - padding + kz;
                                if (iz < 0 || iz >= x.d) continue;
                                for (int ky = 0; ky < kernel; ++ky) {
                                    const int iy = v * stride - padding + ky;
                                    if (iy < 0 || iy >= x.h) continue;
                                    for (int kx = 0; kx < kernel; ++kx) {
                                        const int ix = u * stride - padding + kx;
                                        if (ix < 0 || ix >= x.w) continue;
                                        acc += static_cast<double>(weight(o, ci, kz, ky, kx)) *
                                               x.at(ci, iz, iy, ix);
                                    }
                                }
                            }
                        if (activation == Activation::kMish) acc = mish(acc);
                        y.at(o, zo, v, u) = static_cast<float>(acc);
                    }
        return y;
    }
};

struct LayerNormParams {
    std::vector<float> gain;
    std::vector<float> offset;
    double epsilon = 1e-5;

    static LayerNormParams make(size_t dim) {
        LayerNormParams p;
        p.gain.assign(dim, 1.0f);
        p.offset.assign(dim, 0.0f);
        return p;
    }

    std::vector<double> apply(const std::vector<double>& x) const {
        if (x.size() != gain.size()) throw std::invalid_argument("layernorm size mismatch");
        const size_t n = x.size();
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : x) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + epsilon);
        std::vector<double> y(n);
        for (size_t i = 0; i < n; ++i) y[i] = (x[i] - mean) * inv * gain[i] + offset[i];
        return y;
    }
};

struct DenseLayer {
    int in_dim = 0, out_dim = 0;
    Activation activation = Activation::kNone;
    bool has_layer_norm = false;
    std::vector<float> weights;  // (out, in) row-major
    std::vector<float> bias;
    LayerNormParams ln;

    static DenseLayer make(int in, int out, Activation act, bool layer_norm = false) {
        if (in < 1 || out < 1) throw std::invalid_argument("bad dense shape");
        DenseLayer l;
        l.in_dim = in;
        l.out_dim = out;
        l.activation = act;
        l.has_layer_norm = layer_norm;
        l.weights.assign(static_cast<size_t>(out) * in, 0.0f);
        l.bias.assign(static_cast<size_t>(out), 0.0f);
        if (layer_norm) l.ln = LayerNormParams::make(static_cast<size_t>(out));
        return l;
    }

    std::vector<double> forward(const std::vector<double>& x) const {
        if (static_cast<int>(x.size()) != in_dim)
            throw std::invalid_argument("dense input size mismatch");
        std::vector<double> y(static_cast<size_t>(out_dim));
        for (int o = 0; o < out_dim; ++o) {
            double acc = bias[static_cast<size_t>(o)];
            const float* row = &weights[static_cast<size_t>(o) * in_dim];
            for (int i = 0; i < in_dim; ++i) acc += static_cast<double>(row[i]) * x[i];
            y[static_cast<size_t>(o)] = acc;
        }
        if (has_layer_norm) y = ln.apply(y);
        if (activation == Activation::kMish)
            for (double& v : y) v = mish(v);
        return y;
    }
};

// ======================================================
// Weight initialization: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
// ======================================================
inline void init_uniform(std::vector<float>& w, double fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(fan_in);
    for (float& v : w) v = static_cast<float>(rng.uniform(-bound, bound));
}
inline void init_layer(Conv2dLayer& l, Rng& rng) {
    const double fan_in = static_cast<double>(l.in_channels) * l.kernel * l.kernel;
    init_uniform(l.weights, fan_in, rng);
    init_uniform(l.bias, fan_in, rng);
}
inline void init_layer(Conv3dLayer& l, Rng& rng) {
    const double fan_in = static_cast<double>(l.in_channels) * l.kernel * l.kernel * l.kernel;
    init_uniform(l.weights, fan_in, rng);
    init_uniform(l.bias, fan_in, rng);
}
inline void init_layer(DenseLayer& l, Rng& rng) {
    init_uniform(l.weights, l.in_dim, rng);
    init_uniform(l.bias, l.in_dim, rng);
    // layer norm keeps its identity initialization
}

// ======================================================
// Policy network: mlp branch + z-as-channels cnn branch + fusion + head
// ======================================================
struct NetworkDims {
    static constexpr int kConvChannels = 8;
    static constexpr int kKernel = 3;
    static constexpr int kStride = 2;
    static constexpr int kPadding = 1;
    static constexpr int kCnnFeature = 64;
    static constexpr int kMlpHidden = 256;
    static constexpr int kMlpFeature = 256;
    static constexpr int kFusionFeature = 256;
    static constexpr int kActionDim = 29;
};

struct PolicyNetwork {
    int mlp_in = 0;
    int head_out = 0;
    int grid_c = 0, grid_h = 0, grid_w = 0;

    DenseLayer mlp1, mlp2;
    Conv2dLayer conv1, conv2, conv3;
    DenseLayer cnn_dense1, cnn_dense2;
    DenseLayer fusion;
    DenseLayer head;

    int flat_dim() const {
        int h = grid_h, w = grid_w;
        for (const Conv2dLayer* c : {&conv1, &conv2, &conv3}) {
            h = c->out_dim(h);
            w = c->out_dim(w);
        }
        return conv3.out_channels * h * w;
    }

    // conv feature maps for the voxel branch, z slices as channels
    std::vector<double> encode_voxel(const VoxelGrid& grid) const {
        if (grid.depth() != grid_c || grid.height() != grid_h || grid.width() != grid_w)
            throw std::invalid_argument("grid shape does not match the network");
        const Tensor3 z3 = conv3.forward(conv2.forward(conv1.forward(grid_to_tensor(grid))));
        std::vector<double> flat(z3.data.begin(), z3.data.end());
        return cnn_dense2.forward(cnn_dense1.forward(flat));
    }

    std::vector<double> forward(const std::vector<double>& scalar_obs,
                                const VoxelGrid& grid) const {
        const std::vector<double> h_mlp = mlp2.forward(mlp1.forward(scalar_obs));
        const std::vector<double> h_cnn = encode_voxel(grid);
        std::vector<double> f;
        f.reserve(h_mlp.size() + h_cnn.size());
        f.insert(f.end(), h_mlp.begin(), h_mlp.end());
        f.insert(f.end(), h_cnn.begin(), h_cnn.end());
        for (double& v : f) v = mish(v);  // activation precedes the fusion dense layer
        return head.forward(fusion.forward(f));
    }
};

// Canonical architecture over the default 40x32x32 grid. The construction
// checks the conv shape chain 40x32x32 -> 8x16x16 -> 8x8x8 -> 8x4x4 -> 128.
inline PolicyNetwork make_policy_network(int mlp_in, int head_out, uint64_t seed,
                                         int grid_c = 40, int grid_h = 32, int grid_w = 32) {
    using D = NetworkDims;
    PolicyNetwork net;
    net.mlp_in = mlp_in;
    net.head_out = head_out;
    net.grid_c = grid_c;
    net.grid_h = grid_h;
    net.grid_w = grid_w;

    net.mlp1 = DenseLayer::make(mlp_in, D::kMlpHidden, Activation::kMish, true);
    net.mlp2 = DenseLayer::make(D::kMlpHidden, D::kMlpFeature, Activation::kNone);

    net.conv1 = Conv2dLayer::make(grid_c, D::kConvChannels, D::kKernel, D::kStride, D::kPadding,
                                  Activation::kMish);
    net.conv2 = Conv2dLayer::make(D::kConvChannels, D::kConvChannels, D::kKernel, D::kStride,
                                  D::kPadding, Activation::kMish);
    net.conv3 = Conv2dLayer::make(D::kConvChannels, D::kConvChannels, D::kKernel, D::kStride,
                                  D::kPadding, Activation::kMish);

    const int flat = net.flat_dim();
    net.cnn_dense1 = DenseLayer::make(flat, D::kCnnFeature, Activation::kMish, true);
    net.cnn_dense2 = DenseLayer::make(D::kCnnFeature, D::kCnnFeature, Activation::kNone);

    net.fusion = DenseLayer::make(D::kMlpFeature + D::kCnnFeature, D::kFusionFeature,
                                  Activation::kMish);
    net.head = DenseLayer::make(D::kFusionFeature, head_out, Activation::kNone);

    Rng rng(seed);
    init_layer(net.mlp1, rng);
    init_layer(net.mlp2, rng);
    init_layer(net.conv1, rng);
    init_layer(net.conv2, rng);
    init_layer(net.conv3, rng);
    init_layer(net.cnn_dense1, rng);
    init_layer(net.cnn_dense2, rng);
    init_layer(net.fusion, rng);
    init_layer(net.head, rng);
    return net;
}

struct ActorCritic {
    PolicyNetwork actor;   // head 29
    PolicyNetwork critic;  // head 1, wider scalar input (privileged dims)
};

inline ActorCritic make_actor_critic(int actor_in, int critic_in, uint64_t seed) {
    ActorCritic ac;
    ac.actor = make_policy_network(actor_in, NetworkDims::kActionDim, seed);
    ac.critic = make_policy_network(critic_in, 1, seed + 1);
    return ac;
}

struct PolicyOutput {
    std::vector<double> action;  // length 29
    double value = 0.0;
};

inline PolicyOutput forward_policy(const std::vector<double>& actor_obs,
                                   const std::vector<double>& critic_obs, const VoxelGrid& grid,
                                   const ActorCritic& net) {
    PolicyOutput out;
    out.action = net.actor.forward(actor_obs, grid);
    out.value = net.critic.forward(critic_obs, grid)[0];
    return out;
}

// ======================================================
// 3D reference encoder for the ablation: same layer count and channel
// budget on a 1x40x32x32 volume.
// ======================================================
struct Cnn3dReference {
    Conv3dLayer conv1, conv2, conv3;
    DenseLayer dense1, dense2;
    int grid_c = 40, grid_h = 32, grid_w = 32;

    std::vector<double> encode(const VoxelGrid& grid) const {
        if (grid.depth() != grid_c || grid.height() != grid_h || grid.width() != grid_w)
            throw std::invalid_argument("grid shape does not match the network");
        const Tensor4 z3 = conv3.forward(conv2.forward(conv1.forward(grid_to_volume(grid))));
        std::vector<double> flat(z3.data.begin(), z3.data.end());
        return dense2.forward(dense1.forward(flat));
    }
};

inline Cnn3dReference make_cnn3d_reference(uint64_t seed, int grid_c = 40, int grid_h = 32,
                                           int grid_w = 32) {
    using D = NetworkDims;
    Cnn3dReference net;
    net.grid_c = grid_c;
    net.grid_h = grid_h;
    net.grid_w = grid_w;
    net.conv1 = Conv3dLayer::make(1, D::kConvChannels, D::kKernel, D::kStride, D::kPadding,
                                  Activation::kMish);
    net.conv2 = Conv3dLayer::make(D::kConvChannels, D::kConvChannels, D::kKernel, D::kStride,
                                  D::kPadding, Activation::kMish);
    net.conv3 = Conv3dLayer::make(D::kConvChannels, D::kConvChannels, D::kKernel, D::kStride,
                                  D::kPadding, Activation::kMish);
    int d = grid_c, h = grid_h, w = grid_w;
    for (const Conv3dLayer* c : {&net.conv1, &net.conv2, &net.conv3}) {
        d = c->out_dim(d);
        h = c->out_dim(h);
        w = c->out_dim(w);
    }
    const int flat = D::kConvChannels * d * h * w;
    net.dense1 = DenseLayer::make(flat, D::kCnnFeature, Activation::kMish, true);
    net.dense2 = DenseLayer::make(D::kCnnFeature, D::kCnnFeature, Activation::kNone);
    Rng rng(seed);
    init_layer(net.conv1, rng);
    init_layer(net.conv2, rng);
    init_layer(net.conv3, rng);
    init_layer(net.dense1, rng);
    init_layer(net.dense2, rng);
    return net;
}

// ======================================================
// Multiply-accumulate accounting
// ======================================================
// density scales the count for the sparse-occupancy argument; 1.0 is dense.
inline uint64_t conv2d_site_macs(int in_channels, int kernel) {
    return static_cast<uint64_t>(in_channels) * kernel * kernel;
}
inline uint64_t conv3d_site_macs(int in_channels, int kernel) {
    return static_cast<uint64_t>(in_channels) * kernel * kernel * kernel;
}
inline uint64_t conv2d_macs(const Conv2dLayer& l, int in_h, int in_w, double density = 1.0) {
    const uint64_t sites =
        static_cast<uint64_t>(l.out_channels) * l.out_dim(in_h) * l.out_dim(in_w);
    const double total = static_cast<double>(sites * conv2d_site_macs(l.in_channels, l.kernel));
    return static_cast<uint64_t>(std::llround(total * density));
}
inline uint64_t conv3d_macs(const Conv3dLayer& l, int in_d, int in_h, int in_w,
                            double density = 1.0) {
    const uint64_t sites = static_cast<uint64_t>(l.out_channels) * l.out_dim(in_d) *
                           l.out_dim(in_h) * l.out_dim(in_w);
    const double total = static_cast<double>(sites * conv3d_site_macs(l.in_channels, l.kernel));
    return static_cast<uint64_t>(std::llround(total * density));
}
inline uint64_t dense_macs(const DenseLayer& l) {
    return static_cast<uint64_t>(l.out_dim) * l.in_dim;
}

// voxel-branch totals (convs + the two dense layers after flatten)
inline uint64_t encoder_macs(const PolicyNetwork& net, double density = 1.0) {
    uint64_t total = 0;
    int h = net.grid_h, w = net.grid_w;
    for (const Conv2dLayer* c : {&net.conv1, &net.conv2, &net.conv3}) {
        total += conv2d_macs(*c, h, w, density);
        h = c->out_dim(h);
        w = c->out_dim(w);
    }
    return total + dense_macs(net.cnn_dense1) + dense_macs(net.cnn_dense2);
}
inline uint64_t encoder_macs(const Cnn3dReference& net, double density = 1.0) {
    uint64_t total = 0;
    int d = net.grid_c, h = net.grid_h, w = net.grid_w;
    for (const Conv3dLayer* c : {&net.conv1, &net.conv2, &net.conv3}) {
        total += conv3d_macs(*c, d, h, w, density);
        d = c->out_dim(d);
        h = c->out_dim(h);
        w = c->out_dim(w);
    }
    return total + dense_macs(net.dense1) + dense_macs(net.dense2);
}

// ======================================================
// Running observation normalizer (Welford)
// ======================================================
class RunningNormalizer {
public:
    explicit RunningNormalizer(size_t dim, double epsilon = 1e-8)
        : epsilon_(epsilon), mean_(dim, 0.0), m2_(dim, 0.0) {}

    size_t dim() const { return mean_.size(); }
    double count() const { return count_; }
    const std::vector<double>& mean() const { return mean_; }

    std::vector<double> variance() const {
        std::vector<double> v(m2_.size(), 0.0);
        if (count_ > 0)
            for (size_t i = 0; i < v.size(); ++i) v[i] = m2_[i] / count_;
        return v;
    }

    void update(const std::vector<double>& x) {
        if (x.size() != mean_.size()) throw std::invalid_argument("normalizer size mismatch");
        count_ += 1.0;
        for (size_t i = 0; i < x.size(); ++i) {
            const double delta = x[i] - mean_[i];
            mean_[i] += delta / count_;
            m2_[i] += delta * (x[i] - mean_[i]);
        }
    }
    void update_batch(const std::vector<std::vector<double>>& batch) {
        for (const auto& x : batch) update(x);
    }

    std::vector<double> apply(const std::vector<double>& x) const {
        if (x.size() != mean_.size()) throw std::invalid_argument("normalizer size mismatch");
        const std::vector<double> var = variance();
        std::vector<double> y(x.size());
        for (size_t i = 0; i < x.size(); ++i)
            y[i] = (x[i] - mean_[i]) / std::sqrt(var[i] + epsilon_);
        return y;
    }

    std::vector<double> invert(const std::vector<double>& y) const {
        if (y.size() != mean_.size()) throw std::invalid_argument("normalizer size mismatch");
        const std::vector<double> var = variance();
        std::vector<double> x(y.size());
        for (size_t i = 0; i < y.size(); ++i)
            x[i] = y[i] * std::sqrt(var[i] + epsilon_) + mean_[i];
        return x;
    }

private:
    double epsilon_;
    double count_ = 0.0;
    std::vector<double> mean_;
    std::vector<double> m2_;
};

// ======================================================
// Weight file: "VXNET1", record manifest, then f32 payloads
// ======================================================
// Record tags; each record is (tag, ndim, dims...). Payloads follow the
// whole manifest in manifest order.
enum class TensorTag : uint32_t {
    kDenseW = 1,
    kDenseB = 2,
    kLnGain = 3,
    kLnOffset = 4,
    kConv2dW = 5,
    kConv2dB = 6,
    kConv3dW = 7,
    kConv3dB = 8,
};

struct TensorRecord {
    TensorTag tag;
    std::vector<uint32_t> dims;
    std::vector<float>* data;  // borrowed from the network being serialized
};

namespace detail {

inline void collect(DenseLayer& l, std::vector<TensorRecord>& out) {
    out.push_back({TensorTag::kDenseW,
                   {static_cast<uint32_t>(l.out_dim), static_cast<uint32_t>(l.in_dim)},
                   &l.weights});
    out.push_back({TensorTag::kDenseB, {static_cast<uint32_t>(l.out_dim)}, &l.bias});
    if (l.has_layer_norm) {
        out.push_back(
            {TensorTag::kLnGain, {static_cast<uint32_t>(l.ln.gain.size())}, &l.ln.gain});
        out.push_back(
            {TensorTag::kLnOffset, {static_cast<uint32_t>(l.ln.offset.size())}, &l.ln.offset});
    }
}
inline void collect(Conv2dLayer& l, std::vector<TensorRecord>& out) {
    out.push_back({TensorTag::kConv2dW,
                   {static_cast<uint32_t>(l.out_channels), static_cast<uint32_t>(l.in_channels),
                    static_cast<uint32_t>(l.kernel), static_cast<uint32_t>(l.kernel)},
                   &l.weights});
    out.push_back({TensorTag::kConv2dB, {static_cast<uint32_t>(l.out_channels)}, &l.bias});
}
inline void collect(Conv3dLayer& l, std::vector<TensorRecord>& out) {
    out.push_back({TensorTag::kConv3dW,
                   {static_cast<uint32_t>(l.out_channels), static_cast<uint32_t>(l.in_channels),
                    static_cast<uint32_t>(l.kernel), static_cast<uint32_t>(l.kernel),
                    static_cast<uint32_t>(l.kernel)},
                   &l.weights});
    out.push_back({TensorTag::kConv3dB, {static_cast<uint32_t>(l.out_channels)}, &l.bias});
}

inline std::vector<TensorRecord> collect_records(PolicyNetwork& net) {
    std::vector<TensorRecord> r;
    collect(net.mlp1, r);
    collect(net.mlp2, r);
    collect(net.conv1, r);
    collect(net.conv2, r);
    collect(net.conv3, r);
    collect(net.cnn_dense1, r);
    collect(net.cnn_dense2, r);
    collect(net.fusion, r);
    collect(net.head, r);
    return r;
}
inline std::vector<TensorRecord> collect_records(ActorCritic& net) {
    std::vector<TensorRecord> r = collect_records(net.actor);
    const std::vector<TensorRecord> c = collect_records(net.critic);
    r.insert(r.end(), c.begin(), c.end());
    return r;
}
inline std::vector<TensorRecord> collect_records(Cnn3dReference& net) {
    std::vector<TensorRecord> r;
    collect(net.conv1, r);
    collect(net.conv2, r);
    collect(net.conv3, r);
    collect(net.dense1, r);
    collect(net.dense2, r);
    return r;
}

}  // namespace detail

// Sets every parameter tensor (layer-norm gains included) to zero.
template <typename Network>
inline void zero_parameters(Network& net) {
    for (auto& r : detail::collect_records(net))
        std::fill(r.data->begin(), r.data->end(), 0.0f);
}

inline constexpr char kNetMagic[] = "VXNET1";  // 6 bytes on disk

template <typename Network>
inline void save_network(Network& net, std::ostream& out) {
    const std::vector<TensorRecord> records = detail::collect_records(net);
    out.write(kNetMagic, 6);
    const uint32_t count = static_cast<uint32_t>(records.size());
    out.write(reinterpret_cast<const char*>(&count), 4);
    for (const auto& r : records) {
        const uint32_t tag = static_cast<uint32_t>(r.tag);
        const uint32_t ndim = static_cast<uint32_t>(r.dims.size());
        out.write(reinterpret_cast<const char*>(&tag), 4);
        out.write(reinterpret_cast<const char*>(&ndim), 4);
        out.write(reinterpret_cast<const char*>(r.dims.data()),
                  static_cast<std::streamsize>(4 * r.dims.size()));
    }
    for (const auto& r : records)
        out.write(reinterpret_cast<const char*>(r.data->data()),
                  static_cast<std::streamsize>(4 * r.data->size()));
}

template <typename Network>
inline void save_network(Network& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    save_network(net, out);
}

// Fills an already-constructed network, verifying the manifest matches its
// architecture record for record.
template <typename Network>
inline void load_network(Network& net, std::istream& in) {
    char magic[6];
    in.read(magic, 6);
    if (!in || std::memcmp(magic, kNetMagic, 6) != 0)
        throw std::runtime_error("bad network magic");
    uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), 4);

    std::vector<TensorRecord> records = detail::collect_records(net);
    if (count != records.size()) throw std::runtime_error("network manifest length mismatch");
    for (const auto& r : records) {
        uint32_t tag = 0, ndim = 0;
        in.read(reinterpret_cast<char*>(&tag), 4);
        in.read(reinterpret_cast<char*>(&ndim), 4);
        if (!in || tag != static_cast<uint32_t>(r.tag) || ndim != r.dims.size())
            throw std::runtime_error("network manifest record mismatch");
        std::vector<uint32_t> dims(ndim);
        in.read(reinterpret_cast<char*>(dims.data()), static_cast<std::streamsize>(4 * ndim));
        if (dims != r.dims) throw std::runtime_error("network tensor shape mismatch");
    }
    for (auto& r : records)
        in.read(reinterpret_cast<char*>(r.data->data()),
                static_cast<std::streamsize>(4 * r.data->size()));
    if (!in) throw std::runtime_error("truncated network file");
}

template <typename Network>
inline void load_network(Network& net, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    load_network(net, in);
}

}  // namespace vxs
