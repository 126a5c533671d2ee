#pragma once

#include <string>
#include <vector>

#include "bridgelab/autodiff.hpp"
#include "bridgelab/params.hpp"

namespace bridgelab {

enum class ActivationKind { relu, selu, silu };

inline ActivationKind activation_from_string(const std::string& s) {
    if (s == "relu") return ActivationKind::relu;
    if (s == "selu") return ActivationKind::selu;
    if (s == "silu") return ActivationKind::silu;
    throw ConfigError("unknown activation: " + s);
}

inline const char* activation_name(ActivationKind k) {
    switch (k) {
        case ActivationKind::relu: return "relu";
        case ActivationKind::selu: return "selu";
        case ActivationKind::silu: return "silu";
    }
    return "?";
}

inline Var activation(const Var& x, ActivationKind kind) {
    switch (kind) {
        case ActivationKind::relu: return relu(x);
        case ActivationKind::selu: return selu(x);
        case ActivationKind::silu: return silu(x);
    }
    throw ConfigError("unknown activation kind");
}

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// Dense

struct DenseLayer {
    Var weight; // in x out
    Var bias;   // 1 x out

    DenseLayer() = default;
    DenseLayer(std::size_t in, std::size_t out, SeededRng& rng, bool zero_init = false) {
        weight = Var::parameter(zero_init ? Tensor::zeros(Shape{in, out})
                                          : he_normal(Shape{in, out}, in, rng));
        bias = Var::parameter(Tensor::zeros(Shape{1, out}));
    }

    Var forward(const Var& x) const { return add(matmul(x, weight), bias); }

    void collect(const std::string& prefix, ParamList& out) const {
        out.push_back({prefix + "/weight", ParamRole::weight, weight});
        out.push_back({prefix + "/bias", ParamRole::bias, bias});
    }
};

// ---------------------------------------------------------------------------
// Convolution (bias-free; a BN layer always follows in this architecture)

struct ConvLayer {
    Var weight; // F x C x k x k
    std::size_t stride = 1;
    std::size_t padding = 0;

    ConvLayer() = default;
    ConvLayer(std::size_t in_ch, std::size_t out_ch, std::size_t k, std::size_t stride_,
              std::size_t padding_, SeededRng& rng)
        : stride(stride_), padding(padding_) {
        weight = Var::parameter(he_normal(Shape{out_ch, in_ch, k, k}, in_ch * k * k, rng));
    }

    Var forward(const Var& x) const { return conv2d(x, weight, stride, padding); }

    void collect(const std::string& prefix, ParamList& out) const {
        out.push_back({prefix + "/weight", ParamRole::weight, weight});
    }
};

// ---------------------------------------------------------------------------
// Batch normalization

// Per-sample modulation of a stack of BN layers: one (dgamma, dbeta) pair of
// shape B x C per BN layer, in the backbone's fixed layer order.
struct ModulationDeltas {
    struct LayerDelta {
        Var gamma; // B x C
        Var beta;  // B x C
    };
    std::vector<LayerDelta> layers;

    static ModulationDeltas zeros(std::size_t batch, const std::vector<std::size_t>& widths) {
        ModulationDeltas d;
        d.layers.reserve(widths.size());
        for (std::size_t c : widths) {
            d.layers.push_back({Var::constant(Tensor::zeros(Shape{batch, c})),
                                Var::constant(Tensor::zeros(Shape{batch, c}))});
        }
        return d;
    }
};

// Channel-wise standardization with learned affine terms. Training mode
// normalizes with batch statistics over batch+spatial dims (biased variance)
// and updates running statistics with `momentum`; evaluation mode normalizes
// with the running statistics, which makes it a per-sample pure function.
//
// Conditioning adds per-sample (dgamma, dbeta) on top of the learned gamma
// and beta. It never touches the statistics path, so running statistics are
// shared between conditioned and unconditioned passes.
struct BatchNorm {
    Var gamma; // 1 x C x 1 x 1
    Var beta;  // 1 x C x 1 x 1
    Tensor running_mean;
    Tensor running_var;
    double epsilon = 1e-5;
    double momentum = 0.1;
    Mode mode = Mode::train;
    std::size_t channels = 0;

    BatchNorm() = default;
    explicit BatchNorm(std::size_t c, double eps = 1e-5, double mom = 0.1)
        : epsilon(eps), momentum(mom), channels(c) {
        gamma = Var::parameter(Tensor::ones(Shape{1, c, 1, 1}));
        beta = Var::parameter(Tensor::zeros(Shape{1, c, 1, 1}));
        running_mean = Tensor::zeros(Shape{1, c, 1, 1});
        running_var = Tensor::ones(Shape{1, c, 1, 1});
    }

    Var forward(const Var& x) { return forward_impl(x, nullptr, nullptr); }

    // dgamma/dbeta: B x C, aligned with this layer's channel count.
    Var forward_conditional(const Var& x, const Var& dgamma, const Var& dbeta) {
        return forward_impl(x, &dgamma, &dbeta);
    }

    void collect(const std::string& prefix, ParamList& out) const {
        out.push_back({prefix + "/gamma", ParamRole::bn_gamma, gamma});
        out.push_back({prefix + "/beta", ParamRole::bn_beta, beta});
    }

    void collect_state(const std::string& prefix, StateList& out) {
        out.push_back({prefix + "/running_mean", &running_mean});
        out.push_back({prefix + "/running_var", &running_var});
    }

private:
    Var forward_impl(const Var& x, const Var* dgamma, const Var* dbeta) {
        ensure_rank(x.value(), 4, "batch_norm");
        const std::size_t B = x.shape()[0], C = x.shape()[1];
        const std::size_t HW = x.shape()[2] * x.shape()[3];
        if (C != channels) {
            throw ShapeError("batch_norm: expected " + std::to_string(channels) +
                             " channels, got " + std::to_string(C));
        }
        if (dgamma) {
            if (dgamma->shape() != Shape{B, C} || dbeta->shape() != Shape{B, C}) {
                throw ShapeError("batch_norm: modulation deltas must be " + std::to_string(B) +
                                 "x" + std::to_string(C) + ", got " +
                                 shape_str(dgamma->shape()));
            }
        }

        Var xhat;
        if (mode == Mode::train) {
            if (B * HW < 2) {
                throw NumericError(
                    "batch_norm: training mode needs at least 2 values per channel");
            }
            // gradient flows through the batch statistics
            Var mean = reduce_mean(x, {0, 2, 3}, true);
            Var centered = sub(x, mean);
            Var var = reduce_mean(mul(centered, centered), {0, 2, 3}, true);
            xhat = mul(centered, elementwise(
                                     add_scalar(var, epsilon),
                                     [](double v) { return 1.0 / std::sqrt(v); },
                                     [](double v) { return -0.5 / (v * std::sqrt(v)); },
                                     "rsqrt"));
            {
                NoGradGuard ng;
                running_mean = add(scale(running_mean, 1.0 - momentum),
                                   scale(mean.value(), momentum));
                running_var = add(scale(running_var, 1.0 - momentum),
                                  scale(var.value(), momentum));
            }
        } else {
            Tensor denom = unary_op(
                add_scalar(running_var, epsilon),
                [](double v) { return 1.0 / std::sqrt(v); }, "rsqrt");
            xhat = mul(sub(x, Var::constant(running_mean)), Var::constant(denom));
        }

        Var g = gamma, b = beta;
        if (dgamma) {
            g = add(g, reshape(*dgamma, Shape{B, C, 1, 1}));
            b = add(b, reshape(*dbeta, Shape{B, C, 1, 1}));
        }
        return add(mul(g, xhat), b);
    }
};

// ---------------------------------------------------------------------------
// Residual backbone

struct BackboneConfig {
    std::size_t in_channels = 3;
    std::vector<std::size_t> widths = {32, 64}; // per-block output channels
    std::size_t convs_per_block = 2;
    std::vector<std::size_t> pool_windows;      // per-block; empty = 2 for every block, 1 = skip
    ActivationKind act = ActivationKind::silu;
    std::size_t embed_dim = 0;                  // 0 = last width, no projection layer
    double bn_epsilon = 1e-5;
    double bn_momentum = 0.1;

    std::size_t pool_window(std::size_t block) const {
        if (pool_windows.empty()) return 2;
        return pool_windows.at(block);
    }

    std::size_t embedding_dim() const { return embed_dim ? embed_dim : widths.back(); }

    // The BN layer list (order and channel widths) is a pure function of the
    // config: per block, one BN per main-path conv, then the shortcut BN.
    // The bridge targets exactly this list.
    std::vector<std::size_t> bn_channel_widths() const {
        std::vector<std::size_t> out;
        for (std::size_t w : widths) {
            for (std::size_t i = 0; i < convs_per_block + 1; ++i) out.push_back(w);
        }
        return out;
    }

    std::size_t total_bn_channels() const {
        std::size_t total = 0;
        for (std::size_t w : bn_channel_widths()) total += w;
        return total;
    }

    void validate() const {
        if (widths.empty()) throw ConfigError("backbone: widths must not be empty");
        if (convs_per_block == 0) throw ConfigError("backbone: convs_per_block must be >= 1");
        if (!pool_windows.empty() && pool_windows.size() != widths.size()) {
            throw ConfigError("backbone: pool_windows must match block count");
        }
    }
};

// The paper-scale configuration; expressible but not the test default.
inline BackboneConfig resnet12_config() {
    BackboneConfig c;
    c.widths = {64, 128, 256, 512};
    c.convs_per_block = 3;
    return c;
}

// Pre-activation-free residual block: (conv3x3 -> BN -> act) x (n-1),
// conv3x3 -> BN, plus a 1x1 conv shortcut with its own BN; sum, act, pool.
struct ResidualBlock {
    std::vector<ConvLayer> convs;
    std::vector<BatchNorm> bns;
    ConvLayer shortcut;
    BatchNorm shortcut_bn;
    ActivationKind act = ActivationKind::silu;
    std::size_t pool = 2;

    ResidualBlock() = default;
    ResidualBlock(std::size_t in_ch, std::size_t out_ch, std::size_t n_convs,
                  const BackboneConfig& cfg, SeededRng& rng)
        : act(cfg.act) {
        std::size_t c = in_ch;
        for (std::size_t i = 0; i < n_convs; ++i) {
            convs.emplace_back(c, out_ch, 3, 1, 1, rng);
            bns.emplace_back(out_ch, cfg.bn_epsilon, cfg.bn_momentum);
            c = out_ch;
        }
        shortcut = ConvLayer(in_ch, out_ch, 1, 1, 0, rng);
        shortcut_bn = BatchNorm(out_ch, cfg.bn_epsilon, cfg.bn_momentum);
    }

    std::size_t bn_count() const { return bns.size() + 1; }

    // `deltas`/`delta_off` index into the backbone-wide BN layer list.
    Var forward(const Var& x, const ModulationDeltas* deltas, std::size_t delta_off) {
        Var h = x;
        for (std::size_t i = 0; i < convs.size(); ++i) {
            h = convs[i].forward(h);
            h = bn_apply(bns[i], h, deltas, delta_off + i);
            if (i + 1 < convs.size()) h = activation(h, act);
        }
        Var s = shortcut.forward(x);
        s = bn_apply(shortcut_bn, s, deltas, delta_off + convs.size());
        Var out = activation(add(h, s), act);
        if (pool > 1) out = max_pool(out, pool, pool);
        return out;
    }

    void set_mode(Mode m) {
        for (auto& bn : bns) bn.mode = m;
        shortcut_bn.mode = m;
    }

    void collect(const std::string& prefix, ParamList& out) const {
        for (std::size_t i = 0; i < convs.size(); ++i) {
            convs[i].collect(prefix + "/conv" + std::to_string(i), out);
            bns[i].collect(prefix + "/bn" + std::to_string(i), out);
        }
        shortcut.collect(prefix + "/shortcut", out);
        shortcut_bn.collect(prefix + "/shortcut_bn", out);
    }

    void collect_state(const std::string& prefix, StateList& out) {
        for (std::size_t i = 0; i < bns.size(); ++i) {
            bns[i].collect_state(prefix + "/bn" + std::to_string(i), out);
        }
        shortcut_bn.collect_state(prefix + "/shortcut_bn", out);
    }

private:
    static Var bn_apply(BatchNorm& bn, const Var& h, const ModulationDeltas* deltas,
                        std::size_t idx) {
        if (!deltas) return bn.forward(h);
        if (idx >= deltas->layers.size()) {
            throw ShapeError("modulation deltas cover fewer BN layers than the backbone has");
        }
        return bn.forward_conditional(h, deltas->layers[idx].gamma, deltas->layers[idx].beta);
    }
};

// Residual convolutional feature extractor: B x C x H x W -> B x M.
struct Backbone {
    BackboneConfig config;
    std::vector<ResidualBlock> blocks;
    DenseLayer projection;
    bool has_projection = false;

    Backbone() = default;
    Backbone(BackboneConfig cfg, SeededRng& rng) : config(std::move(cfg)) {
        config.validate();
        std::size_t in_ch = config.in_channels;
        for (std::size_t b = 0; b < config.widths.size(); ++b) {
            blocks.emplace_back(in_ch, config.widths[b], config.convs_per_block, config, rng);
            blocks.back().pool = config.pool_window(b);
            in_ch = config.widths[b];
        }
        if (config.embed_dim && config.embed_dim != config.widths.back()) {
            projection = DenseLayer(config.widths.back(), config.embed_dim, rng);
            has_projection = true;
        }
        // structural check: constructed BN list equals the config-derived one
        std::size_t n = 0;
        for (const auto& blk : blocks) n += blk.bn_count();
        if (n != config.bn_channel_widths().size()) {
            throw ConfigError("backbone BN layer list diverges from config derivation");
        }
    }

    std::vector<std::size_t> bn_widths() const { return config.bn_channel_widths(); }
    std::size_t embedding_dim() const { return config.embedding_dim(); }

    // With `deltas` null every BN layer runs unconditioned.
    Var forward(const Var& x, const ModulationDeltas* deltas = nullptr) {
        if (deltas && deltas->layers.size() != bn_widths().size()) {
            throw ShapeError("modulation deltas: expected " +
                             std::to_string(bn_widths().size()) + " BN layers, got " +
                             std::to_string(deltas->layers.size()));
        }
        Var h = x;
        std::size_t off = 0;
        for (auto& blk : blocks) {
            h = blk.forward(h, deltas, off);
            off += blk.bn_count();
        }
        Var emb = global_avg_pool(h);
        if (has_projection) emb = projection.forward(emb);
        return emb;
    }

    void set_mode(Mode m) {
        for (auto& blk : blocks) blk.set_mode(m);
    }

    void collect(const std::string& prefix, ParamList& out) const {
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            blocks[b].collect(prefix + "/block" + std::to_string(b), out);
        }
        if (has_projection) projection.collect(prefix + "/proj", out);
    }

    void collect_state(const std::string& prefix, StateList& out) {
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            blocks[b].collect_state(prefix + "/block" + std::to_string(b), out);
        }
    }
};

} // namespace bridgelab
