#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

#include "vxs/perception.hpp"

using namespace vxs;

namespace {

// independent direct convolution over an explicitly zero-padded buffer
Tensor3 conv2d_oracle(const Tensor3& x, const Conv2dLayer& l) {
    const int p = l.padding, s = l.stride, k = l.kernel;
    Tensor3 padded(x.c, x.h + 2 * p, x.w + 2 * p);
    for (int c = 0; c < x.c; ++c)
        for (int y = 0; y < x.h; ++y)
            for (int xcol = 0; xcol < x.w; ++xcol) padded.at(c, y + p, xcol + p) = x.at(c, y, xcol);
    Tensor3 out(l.out_channels, l.out_dim(x.h), l.out_dim(x.w));
    for (int o = 0; o < out.c; ++o)
        for (int oy = 0; oy < out.h; ++oy)
            for (int ox = 0; ox < out.w; ++ox) {
                double acc = l.bias[static_cast<size_t>(o)];
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx)
                        for (int c = 0; c < x.c; ++c)
                            acc += static_cast<double>(l.weight(o, c, ky, kx)) *
                                   padded.at(c, oy * s + ky, ox * s + kx);
                if (l.activation == Activation::kMish) acc = mish(acc);
                out.at(o, oy, ox) = static_cast<float>(acc);
            }
    return out;
}

Tensor4 conv3d_oracle(const Tensor4& x, const Conv3dLayer& l) {
    const int p = l.padding, s = l.stride, k = l.kernel;
    Tensor4 padded(x.c, x.d + 2 * p, x.h + 2 * p, x.w + 2 * p);
    for (int c = 0; c < x.c; ++c)
        for (int z = 0; z < x.d; ++z)
            for (int y = 0; y < x.h; ++y)
                for (int xcol = 0; xcol < x.w; ++xcol)
                    padded.at(c, z + p, y + p, xcol + p) = x.at(c, z, y, xcol);
    Tensor4 out(l.out_channels, l.out_dim(x.d), l.out_dim(x.h), l.out_dim(x.w));
    for (int o = 0; o < out.c; ++o)
        for (int oz = 0; oz < out.d; ++oz)
            for (int oy = 0; oy < out.h; ++oy)
                for (int ox = 0; ox < out.w; ++ox) {
                    double acc = l.bias[static_cast<size_t>(o)];
                    for (int kz = 0; kz < k; ++kz)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx)
                                for (int c = 0; c < x.c; ++c)
                                    acc += static_cast<double>(l.weight(o, c, kz, ky, kx)) *
                                           padded.at(c, oz * s + kz, oy * s + ky, ox * s + kx);
                    if (l.activation == Activation::kMish) acc = mish(acc);
                    out.at(o, oz, oy, ox) = static_cast<float>(acc);
                }
    return out;
}

Tensor3 random_tensor(Rng& rng, int c, int h, int w) {
    Tensor3 t(c, h, w);
    for (float& v : t.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

Tensor4 random_volume(Rng& rng, int c, int d, int h, int w) {
    Tensor4 t(c, d, h, w);
    for (float& v : t.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

Tensor3 flip_rows(const Tensor3& x) {
    Tensor3 out(x.c, x.h, x.w);
    for (int c = 0; c < x.c; ++c)
        for (int y = 0; y < x.h; ++y)
            for (int u = 0; u < x.w; ++u) out.at(c, x.h - 1 - y, u) = x.at(c, y, u);
    return out;
}

VoxelGrid random_grid(Rng& rng, double fill = 0.1) {
    VoxelGrid g((GridBounds()));
    for (uint8_t& cell : g.occupancy) cell = rng.bernoulli(fill) ? 1 : 0;
    return g;
}

double median_latency_ns(const std::function<void()>& fn, int reps) {
    std::vector<double> samples;
    samples.reserve(static_cast<size_t>(reps));
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        samples.push_back(
            static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
    }
    std::sort(samples.begin(), samples.end());
    return samples[samples.size() / 2];
}

}  // namespace

TEST_CASE("mish has its fixed point, asymptotes, and stability", "[perception]") {
    CHECK(mish(0.0) == 0.0);
    CHECK(std::abs(mish(20.0) - 20.0) < 1e-6);
    CHECK(std::abs(mish(-20.0)) < 1e-7);
    CHECK(std::isfinite(mish(1000.0)));
    CHECK(std::isfinite(mish(-1000.0)));
    CHECK(mish(1000.0) == Catch::Approx(1000.0));
    // known midpoint value: mish(1) = tanh(log(1+e))
    CHECK(mish(1.0) == Catch::Approx(std::tanh(std::log1p(std::exp(1.0)))).epsilon(1e-12));
}

TEST_CASE("identity 1x1 convolution preserves its input", "[perception]") {
    Rng rng(3);
    Conv2dLayer l = Conv2dLayer::make(1, 1, 1, 1, 0, Activation::kNone);
    l.weights[0] = 1.0f;
    const Tensor3 x = random_tensor(rng, 1, 6, 7);
    const Tensor3 y = l.forward(x);
    REQUIRE(y.data.size() == x.data.size());
    for (size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == x.data[i]);

    Conv3dLayer l3 = Conv3dLayer::make(1, 1, 1, 1, 0, Activation::kNone);
    l3.weights[0] = 1.0f;
    const Tensor4 v = random_volume(rng, 1, 4, 5, 6);
    const Tensor4 w = l3.forward(v);
    REQUIRE(w.data.size() == v.data.size());
    for (size_t i = 0; i < v.data.size(); ++i) CHECK(w.data[i] == v.data[i]);
}

TEST_CASE("first network conv maps 40x32x32 to 8x16x16", "[perception]") {
    Rng rng(4);
    Conv2dLayer l = Conv2dLayer::make(40, 8, 3, 2, 1, Activation::kMish);
    init_layer(l, rng);
    const Tensor3 y = l.forward(random_tensor(rng, 40, 32, 32));
    CHECK(y.c == 8);
    CHECK(y.h == 16);
    CHECK(y.w == 16);

    Conv3dLayer l3 = Conv3dLayer::make(1, 8, 3, 2, 1, Activation::kMish);
    init_layer(l3, rng);
    const Tensor4 w = l3.forward(random_volume(rng, 1, 40, 32, 32));
    CHECK(w.c == 8);
    CHECK(w.d == 20);
    CHECK(w.h == 16);
    CHECK(w.w == 16);
}

TEST_CASE("conv2d matches the direct-convolution oracle on 100 random shapes", "[perception]") {
    Rng rng(71);
    for (int trial = 0; trial < 100; ++trial) {
        const int c = rng.uniform_int(1, 5);
        const int o = rng.uniform_int(1, 4);
        const int k = 2 * rng.uniform_int(0, 2) + 1;
        const int s = rng.uniform_int(1, 3);
        const int p = rng.uniform_int(0, 2);
        const int h = rng.uniform_int(k, 12);
        const int w = rng.uniform_int(k, 12);
        Conv2dLayer l = Conv2dLayer::make(c, o, k, s, p,
                                          trial % 2 ? Activation::kMish : Activation::kNone);
        init_layer(l, rng);
        const Tensor3 x = random_tensor(rng, c, h, w);
        const Tensor3 got = l.forward(x);
        const Tensor3 want = conv2d_oracle(x, l);
        REQUIRE(got.data.size() == want.data.size());
        for (size_t i = 0; i < got.data.size(); ++i)
            REQUIRE(std::abs(got.data[i] - want.data[i]) < 1e-5);
    }
}

TEST_CASE("conv3d matches the direct-convolution oracle on 100 random shapes", "[perception]") {
    Rng rng(72);
    for (int trial = 0; trial < 100; ++trial) {
        const int c = rng.uniform_int(1, 3);
        const int o = rng.uniform_int(1, 3);
        const int k = 2 * rng.uniform_int(0, 1) + 1;
        const int s = rng.uniform_int(1, 2);
        const int p = rng.uniform_int(0, 1);
        const int d = rng.uniform_int(k, 8);
        const int h = rng.uniform_int(k, 8);
        const int w = rng.uniform_int(k, 8);
        Conv3dLayer l = Conv3dLayer::make(c, o, k, s, p,
                                          trial % 2 ? Activation::kMish : Activation::kNone);
        init_layer(l, rng);
        const Tensor4 x = random_volume(rng, c, d, h, w);
        const Tensor4 got = l.forward(x);
        const Tensor4 want = conv3d_oracle(x, l);
        REQUIRE(got.data.size() == want.data.size());
        for (size_t i = 0; i < got.data.size(); ++i)
            REQUIRE(std::abs(got.data[i] - want.data[i]) < 1e-5);
    }
}

TEST_CASE("conv rejects mismatched channels and degenerate outputs", "[perception]") {
    Rng rng(5);
    Conv2dLayer l = Conv2dLayer::make(3, 2, 3, 2, 1, Activation::kNone);
    CHECK_THROWS_AS(l.forward(random_tensor(rng, 4, 8, 8)), std::invalid_argument);
    CHECK_THROWS_AS(Conv2dLayer::make(3, 2, 4, 2, 1, Activation::kNone), std::invalid_argument);
    CHECK_THROWS_AS(Conv2dLayer::make(3, 2, 3, 0, 1, Activation::kNone), std::invalid_argument);
}

TEST_CASE("reflection algebra: symmetric kernels commute with row flips", "[perception]") {
    Rng rng(90);

    // stride-2 lattice on an odd height is closed under reflection
    Conv2dLayer l = Conv2dLayer::make(3, 4, 3, 2, 1, Activation::kMish);
    init_layer(l, rng);
    for (int o = 0; o < l.out_channels; ++o)
        for (int c = 0; c < l.in_channels; ++c)
            for (int kx = 0; kx < 3; ++kx) {
                const size_t top = ((static_cast<size_t>(o) * 3 + c) * 3 + 0) * 3 + kx;
                const size_t bot = ((static_cast<size_t>(o) * 3 + c) * 3 + 2) * 3 + kx;
                const float avg = 0.5f * (l.weights[top] + l.weights[bot]);
                l.weights[top] = avg;
                l.weights[bot] = avg;
            }
    const Tensor3 x = random_tensor(rng, 3, 33, 8);
    const Tensor3 a = l.forward(flip_rows(x));
    const Tensor3 b = flip_rows(l.forward(x));
    REQUIRE(a.data.size() == b.data.size());
    for (size_t i = 0; i < a.data.size(); ++i) CHECK(std::abs(a.data[i] - b.data[i]) < 1e-6);

    // stride 1 is closed for any height
    Conv2dLayer u = Conv2dLayer::make(2, 2, 3, 1, 1, Activation::kNone);
    init_layer(u, rng);
    for (int o = 0; o < 2; ++o)
        for (int c = 0; c < 2; ++c)
            for (int kx = 0; kx < 3; ++kx) {
                const size_t top = ((static_cast<size_t>(o) * 2 + c) * 3 + 0) * 3 + kx;
                const size_t bot = ((static_cast<size_t>(o) * 2 + c) * 3 + 2) * 3 + kx;
                const float avg = 0.5f * (u.weights[top] + u.weights[bot]);
                u.weights[top] = avg;
                u.weights[bot] = avg;
            }
    const Tensor3 x2 = random_tensor(rng, 2, 16, 5);
    const Tensor3 a2 = u.forward(flip_rows(x2));
    const Tensor3 b2 = flip_rows(u.forward(x2));
    for (size_t i = 0; i < a2.data.size(); ++i) CHECK(std::abs(a2.data[i] - b2.data[i]) < 1e-6);
}

TEST_CASE("network shape chain is 40x32x32 to 8x16x16 to 8x8x8 to 8x4x4 to 128", "[perception]") {
    const PolicyNetwork net = make_policy_network(20, 29, 1);
    CHECK(net.conv1.out_dim(32) == 16);
    CHECK(net.conv2.out_dim(16) == 8);
    CHECK(net.conv3.out_dim(8) == 4);
    CHECK(net.flat_dim() == 128);
    CHECK(net.cnn_dense1.in_dim == 128);
    CHECK(net.cnn_dense1.out_dim == 64);
    CHECK(net.cnn_dense2.out_dim == 64);
    CHECK(net.mlp1.out_dim == 256);
    CHECK(net.mlp2.out_dim == 256);
    CHECK(net.fusion.in_dim == 320);
    CHECK(net.fusion.out_dim == 256);
    CHECK(net.head.out_dim == 29);
    CHECK(net.mlp1.has_layer_norm);
    CHECK(net.cnn_dense1.has_layer_norm);
    CHECK_FALSE(net.mlp2.has_layer_norm);
    CHECK_FALSE(net.fusion.has_layer_norm);
}

TEST_CASE("voxel features are 64 wide and zero convs leave only dense biases", "[perception]") {
    Rng rng(6);
    PolicyNetwork net = make_policy_network(20, 29, 42);
    const VoxelGrid g = random_grid(rng);
    const std::vector<double> feat = net.encode_voxel(g);
    REQUIRE(feat.size() == 64u);

    // zero conv biases: an all-zero grid then reaches the dense layers as
    // zeros, so conv weights cannot influence the output
    PolicyNetwork a = make_policy_network(20, 29, 100);
    PolicyNetwork b = make_policy_network(20, 29, 200);  // different conv weights
    std::fill(a.conv1.bias.begin(), a.conv1.bias.end(), 0.0f);
    std::fill(a.conv2.bias.begin(), a.conv2.bias.end(), 0.0f);
    std::fill(a.conv3.bias.begin(), a.conv3.bias.end(), 0.0f);
    b.cnn_dense1 = a.cnn_dense1;  // same dense layers, different conv weights
    b.cnn_dense2 = a.cnn_dense2;
    std::fill(b.conv1.bias.begin(), b.conv1.bias.end(), 0.0f);
    std::fill(b.conv2.bias.begin(), b.conv2.bias.end(), 0.0f);
    std::fill(b.conv3.bias.begin(), b.conv3.bias.end(), 0.0f);

    const VoxelGrid empty((GridBounds()));
    const std::vector<double> fa = a.encode_voxel(empty);
    const std::vector<double> fb = b.encode_voxel(empty);
    for (size_t i = 0; i < fa.size(); ++i) CHECK(fa[i] == fb[i]);

    // and the value equals the dense chain applied to a zero vector
    const std::vector<double> direct =
        a.cnn_dense2.forward(a.cnn_dense1.forward(std::vector<double>(128, 0.0)));
    for (size_t i = 0; i < fa.size(); ++i) CHECK(fa[i] == direct[i]);
}

TEST_CASE("grid shape mismatches are rejected", "[perception]") {
    const PolicyNetwork net = make_policy_network(20, 29, 1);
    GridBounds small;
    small.max.z = 0.0;  // 20 z-cells instead of 40
    const VoxelGrid g(small);
    CHECK_THROWS_AS(net.encode_voxel(g), std::invalid_argument);
    CHECK_THROWS_AS(net.forward(std::vector<double>(20, 0.0), g), std::invalid_argument);
    const VoxelGrid ok((GridBounds()));
    CHECK_THROWS_AS(net.forward(std::vector<double>(21, 0.0), ok), std::invalid_argument);
}

TEST_CASE("zero parameters produce a zero action and zero value", "[perception]") {
    Rng rng(7);
    ActorCritic ac = make_actor_critic(20, 40, 9);
    zero_parameters(ac);
    const VoxelGrid g = random_grid(rng);
    const PolicyOutput out = forward_policy(std::vector<double>(20, 0.0),
                                            std::vector<double>(40, 0.0), g, ac);
    REQUIRE(out.action.size() == 29u);
    for (double a : out.action) CHECK(a == 0.0);
    CHECK(out.value == 0.0);
}

TEST_CASE("forward passes are bit-stable across reruns and rebuilds", "[perception]") {
    Rng rng(8);
    const VoxelGrid g = random_grid(rng);
    std::vector<double> actor_obs(30), critic_obs(50);
    for (auto& v : actor_obs) v = rng.uniform(-2.0, 2.0);
    for (auto& v : critic_obs) v = rng.uniform(-2.0, 2.0);

    const ActorCritic ac1 = make_actor_critic(30, 50, 777);
    const ActorCritic ac2 = make_actor_critic(30, 50, 777);
    const PolicyOutput o1 = forward_policy(actor_obs, critic_obs, g, ac1);
    const PolicyOutput o2 = forward_policy(actor_obs, critic_obs, g, ac1);
    const PolicyOutput o3 = forward_policy(actor_obs, critic_obs, g, ac2);
    for (size_t i = 0; i < o1.action.size(); ++i) {
        CHECK(o1.action[i] == o2.action[i]);
        CHECK(o1.action[i] == o3.action[i]);
    }
    CHECK(o1.value == o2.value);
    CHECK(o1.value == o3.value);
    CHECK(std::isfinite(o1.value));
}

TEST_CASE("critic absorbs privileged dimensions at full scale", "[perception]") {
    Rng rng(9);
    const ActorCritic ac = make_actor_critic(506, 1598, 11);
    const VoxelGrid g = random_grid(rng, 0.05);
    std::vector<double> actor_obs(506), critic_obs(1598);
    for (auto& v : actor_obs) v = rng.uniform(-1.0, 1.0);
    for (auto& v : critic_obs) v = rng.uniform(-1.0, 1.0);
    const PolicyOutput out = forward_policy(actor_obs, critic_obs, g, ac);
    REQUIRE(out.action.size() == 29u);
    CHECK(std::isfinite(out.value));
    for (double a : out.action) CHECK(std::isfinite(a));
}

TEST_CASE("mac accounting reproduces the closed-form counts", "[perception]") {
    const PolicyNetwork net = make_policy_network(20, 29, 1);
    CHECK(conv2d_macs(net.conv1, 32, 32) == 737280u);  // 8*16*16*40*9
    CHECK(conv2d_site_macs(40, 3) == 360u);
    CHECK(conv2d_site_macs(5, 1) == 5u);  // 1x1 kernel costs C per site

    // per-site 3d/2d ratio at equal channel count and k=3 is exactly k
    CHECK(conv3d_site_macs(8, 3) == 3u * conv2d_site_macs(8, 3));
    CHECK(conv3d_site_macs(40, 3) / conv2d_site_macs(40, 3) == 3u);

    const Cnn3dReference ref = make_cnn3d_reference(1);
    CHECK(conv3d_macs(ref.conv1, 40, 32, 32) == 1105920u);  // 8*20*16*16*1*27

    // density scales linearly
    CHECK(conv2d_macs(net.conv1, 32, 32, 0.5) == 368640u);

    // the z-grouped encoder undercuts the 3d reference in total MACs
    const uint64_t macs2d = encoder_macs(net);
    const uint64_t macs3d = encoder_macs(ref);
    INFO("2d=" << macs2d << " 3d=" << macs3d);
    CHECK(macs2d < macs3d);
}

TEST_CASE("2d encoder is faster than the 3d reference at the median", "[perception]") {
    Rng rng(10);
    const PolicyNetwork net = make_policy_network(20, 29, 5);
    const Cnn3dReference ref = make_cnn3d_reference(5);
    const VoxelGrid g = random_grid(rng);

    volatile double sink = 0.0;
    const double t2d = median_latency_ns([&] { sink = sink + net.encode_voxel(g)[0]; }, 41);
    const double t3d = median_latency_ns([&] { sink = sink + ref.encode(g)[0]; }, 41);
    INFO("2d median ns " << t2d << ", 3d median ns " << t3d);
    CHECK(t2d < t3d);
}

TEST_CASE("running normalizer flattens a constant stream", "[perception]") {
    RunningNormalizer norm(3);
    const std::vector<double> c = {5.0, -2.0, 0.25};
    norm.update(c);
    norm.update(c);
    const std::vector<double> y = norm.apply(c);
    for (double v : y) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("running normalizer converges on a standard normal stream", "[perception]") {
    Rng rng(321);
    RunningNormalizer norm(2);
    for (int i = 0; i < 100000; ++i) norm.update({rng.gaussian(1.0), rng.gaussian(1.0)});
    for (double m : norm.mean()) CHECK(std::abs(m) < 0.02);
    for (double v : norm.variance()) CHECK(v == Catch::Approx(1.0).margin(0.05));
}

TEST_CASE("normalizer mean is permutation independent and apply inverts", "[perception]") {
    Rng rng(11);
    std::vector<std::vector<double>> batch;
    for (int i = 0; i < 500; ++i) batch.push_back({rng.uniform(-3.0, 3.0), rng.gaussian(2.0)});

    RunningNormalizer a(2), b(2);
    a.update_batch(batch);
    std::vector<std::vector<double>> shuffled = batch;
    std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
    b.update_batch(shuffled);
    for (size_t i = 0; i < 2; ++i) CHECK(a.mean()[i] == Catch::Approx(b.mean()[i]).margin(1e-9));

    const std::vector<double> x = {1.7, -0.3};
    const std::vector<double> back = a.invert(a.apply(x));
    for (size_t i = 0; i < 2; ++i) CHECK(back[i] == Catch::Approx(x[i]).epsilon(1e-9));
    for (double v : a.variance()) CHECK(v >= 0.0);
}

TEST_CASE("network weights round-trip through the weight file", "[perception]") {
    Rng rng(12);
    ActorCritic ac = make_actor_critic(25, 45, 31);
    const VoxelGrid g = random_grid(rng);
    std::vector<double> actor_obs(25), critic_obs(45);
    for (auto& v : actor_obs) v = rng.uniform(-1.0, 1.0);
    for (auto& v : critic_obs) v = rng.uniform(-1.0, 1.0);
    const PolicyOutput before = forward_policy(actor_obs, critic_obs, g, ac);

    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    save_network(ac, ss);

    ActorCritic loaded = make_actor_critic(25, 45, 999);  // different init, same shapes
    load_network(loaded, ss);
    const PolicyOutput after = forward_policy(actor_obs, critic_obs, g, loaded);
    for (size_t i = 0; i < before.action.size(); ++i) CHECK(before.action[i] == after.action[i]);
    CHECK(before.value == after.value);

    // wrong magic and wrong architecture both fail loudly
    std::stringstream junk(std::string("NOPE!!xxxxxxxxxxxxxxxx"), std::ios::in | std::ios::out);
    ActorCritic sink_net = make_actor_critic(25, 45, 1);
    CHECK_THROWS(load_network(sink_net, junk));

    std::stringstream ss2(std::ios::in | std::ios::out | std::ios::binary);
    save_network(ac, ss2);
    ActorCritic other = make_actor_critic(26, 45, 1);  // mlp input differs
    CHECK_THROWS(load_network(other, ss2));
}
