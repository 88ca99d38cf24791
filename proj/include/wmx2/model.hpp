#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wmx2/autograd.hpp"

// The WaveMixSR-V2 network: token-mixing block, dual-path 2x SR stage, and
// the multi-stage model. Each stage doubles resolution; S stages give 2^S SR.

namespace wmx2 {

struct BlockConfig {
    int embed_dim = 144;        // C, divisible by 4
    float mlp_mult = 2.0f;      // inverse-bottleneck multiplier, > 1
    float dropout_rate = 0.3f;  // in [0, 1)
};

inline int mlp_hidden_dim(const BlockConfig& cfg) {
    return static_cast<int>(std::lround(static_cast<double>(cfg.mlp_mult) * cfg.embed_dim));
}

struct SR2xConfig {
    int depth = 4;  // L blocks in series
    BlockConfig block;
    ResizeMode upsample_mode = ResizeMode::kBicubic;
    // Stem (1 -> C) and head (C -> 1) are fixed 3x3, stride 1, padding 1.
};

struct ModelConfig {
    int stages = 1;  // S; scale factor is 2^S
    SR2xConfig sr2x;

    int scale() const { return 1 << stages; }
};

inline void validate_config(const ModelConfig& cfg) {
    const BlockConfig& b = cfg.sr2x.block;
    if (cfg.stages < 1) throw ParamError("config: stages must be >= 1");
    if (cfg.sr2x.depth < 1) throw ParamError("config: depth must be >= 1");
    if (b.embed_dim < 4 || b.embed_dim % 4 != 0) {
        throw ParamError("config: embed_dim must be a positive multiple of 4, got " +
                         std::to_string(b.embed_dim));
    }
    if (!(b.mlp_mult > 1.0f)) throw ParamError("config: mlp_mult must be > 1");
    if (b.dropout_rate < 0.0f || b.dropout_rate >= 1.0f) {
        throw ParamError("config: dropout_rate must be in [0, 1)");
    }
}

// Trainable state of one block. Channel arithmetic around the wavelet mixer:
// reduce C -> C/4 (DWT restores C at half resolution), MLP C -> mC -> C,
// PixelShuffle drops to C/4 at full resolution, expand restores C.
template <typename T>
struct BlockParamsT {
    ConvParamsT<T> reduce;  // C   -> C/4, 1x1
    ConvParamsT<T> mlp1;    // C   -> mC,  1x1
    ConvParamsT<T> mlp2;    // mC  -> C,   1x1
    ConvParamsT<T> expand;  // C/4 -> C,   1x1
    BatchNormParamsT<T> bn;  // C
};

template <typename T>
struct StageParamsT {
    ConvParamsT<T> stem;  // 1 -> C, 3x3
    std::vector<BlockParamsT<T>> blocks;
    ConvParamsT<T> head;  // C -> 1, 3x3
};

template <typename T>
struct ModelT {
    ModelConfig config;
    std::vector<StageParamsT<T>> stages;
};

using BlockParams = BlockParamsT<float>;
using Model = ModelT<float>;

// ---- parameter traversal ----------------------------------------------------

// Visits every tensor in the canonical (serialization) order:
// per stage: stem, each block (conv weights, conv biases, BN tensors), head.
// fn(name, tensor, trainable, serialized_rank).
template <typename T, typename Fn>
void for_each_tensor(ModelT<T>& m, Fn&& fn) {
    for (size_t s = 0; s < m.stages.size(); ++s) {
        const std::string sp = "stage" + std::to_string(s) + ".";
        auto& stage = m.stages[s];
        fn(sp + "stem.weight", stage.stem.weight, true, 4);
        fn(sp + "stem.bias", stage.stem.bias, true, 1);
        for (size_t b = 0; b < stage.blocks.size(); ++b) {
            const std::string bp = sp + "block" + std::to_string(b) + ".";
            auto& blk = stage.blocks[b];
            fn(bp + "reduce.weight", blk.reduce.weight, true, 4);
            fn(bp + "mlp1.weight", blk.mlp1.weight, true, 4);
            fn(bp + "mlp2.weight", blk.mlp2.weight, true, 4);
            fn(bp + "expand.weight", blk.expand.weight, true, 4);
            fn(bp + "reduce.bias", blk.reduce.bias, true, 1);
            fn(bp + "mlp1.bias", blk.mlp1.bias, true, 1);
            fn(bp + "mlp2.bias", blk.mlp2.bias, true, 1);
            fn(bp + "expand.bias", blk.expand.bias, true, 1);
            fn(bp + "bn.gamma", blk.bn.gamma, true, 1);
            fn(bp + "bn.beta", blk.bn.beta, true, 1);
            fn(bp + "bn.running_mean", blk.bn.running_mean, false, 1);
            fn(bp + "bn.running_var", blk.bn.running_var, false, 1);
        }
        fn(sp + "head.weight", stage.head.weight, true, 4);
        fn(sp + "head.bias", stage.head.bias, true, 1);
    }
}

template <typename T, typename Fn>
void for_each_tensor(const ModelT<T>& m, Fn&& fn) {
    for_each_tensor(const_cast<ModelT<T>&>(m),
                    [&fn](const std::string& name, TensorT<T>& t, bool trainable, int rank) {
                        fn(name, static_cast<const TensorT<T>&>(t), trainable, rank);
                    });
}

// Exact count of trainable scalars (running stats excluded).
template <typename T>
int64_t param_count(const ModelT<T>& m) {
    int64_t total = 0;
    for_each_tensor(m, [&](const std::string&, const TensorT<T>& t, bool trainable, int) {
        if (trainable) total += t.size();
    });
    return total;
}

// ---- initialization ---------------------------------------------------------

namespace detail {

template <typename T>
void init_conv(ConvParamsT<T>& p, int out_ch, int in_ch, int k, Rng& rng) {
    p.weight = TensorT<T>(out_ch, in_ch, k, k);
    p.bias = TensorT<T>(1, out_ch, 1, 1);
    // Uniform with variance 1/fan_in: [-sqrt(3/fan_in), sqrt(3/fan_in)].
    const double bound = std::sqrt(3.0 / (static_cast<double>(in_ch) * k * k));
    for (int64_t i = 0; i < p.weight.size(); ++i) {
        p.weight[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
}

template <typename T>
BlockParamsT<T> init_block(const BlockConfig& cfg, Rng& rng) {
    BlockParamsT<T> b;
    const int c = cfg.embed_dim;
    init_conv(b.reduce, c / 4, c, 1, rng);
    init_conv(b.mlp1, mlp_hidden_dim(cfg), c, 1, rng);
    init_conv(b.mlp2, c, mlp_hidden_dim(cfg), 1, rng);
    init_conv(b.expand, c, c / 4, 1, rng);
    b.bn = BatchNormParamsT<T>::init(c);
    return b;
}

}  // namespace detail

template <typename T>
ModelT<T> init_model(const ModelConfig& cfg, uint64_t seed) {
    validate_config(cfg);
    ModelT<T> m;
    m.config = cfg;
    Rng rng(seed);
    const int c = cfg.sr2x.block.embed_dim;
    m.stages.resize(static_cast<size_t>(cfg.stages));
    for (auto& stage : m.stages) {
        detail::init_conv(stage.stem, c, 1, 3, rng);
        stage.blocks.reserve(static_cast<size_t>(cfg.sr2x.depth));
        for (int b = 0; b < cfg.sr2x.depth; ++b) {
            stage.blocks.push_back(detail::init_block<T>(cfg.sr2x.block, rng));
        }
        detail::init_conv(stage.head, 1, c, 3, rng);
    }
    return m;
}

// ---- forward ----------------------------------------------------------------

struct ForwardCtx {
    bool training = false;
    Rng* rng = nullptr;  // required when training with dropout_rate > 0
};

template <typename T>
struct BoundConv {
    Var<T> weight, bias;

    static BoundConv bind(ConvParamsT<T>& p, bool requires_grad) {
        return {Var<T>::leaf(p.weight, requires_grad), Var<T>::leaf(p.bias, requires_grad)};
    }
};

template <typename T>
struct BoundBlock {
    BoundConv<T> reduce, mlp1, mlp2, expand;
    Var<T> bn_gamma, bn_beta;
    BatchNormParamsT<T>* bn = nullptr;  // running stats live in the model
};

template <typename T>
struct BoundStage {
    BoundConv<T> stem;
    std::vector<BoundBlock<T>> blocks;
    BoundConv<T> head;
};

// A model bound to autograd leaves. Parameter values are snapshotted at bind
// time; gradients accumulate on the leaves after backward().
template <typename T>
struct BoundModelT {
    ModelConfig config;
    std::vector<BoundStage<T>> stages;

    static BoundModelT bind(ModelT<T>& m, bool requires_grad) {
        BoundModelT out;
        out.config = m.config;
        out.stages.reserve(m.stages.size());
        for (auto& stage : m.stages) {
            BoundStage<T> bs;
            bs.stem = BoundConv<T>::bind(stage.stem, requires_grad);
            for (auto& blk : stage.blocks) {
                BoundBlock<T> bb;
                bb.reduce = BoundConv<T>::bind(blk.reduce, requires_grad);
                bb.mlp1 = BoundConv<T>::bind(blk.mlp1, requires_grad);
                bb.mlp2 = BoundConv<T>::bind(blk.mlp2, requires_grad);
                bb.expand = BoundConv<T>::bind(blk.expand, requires_grad);
                bb.bn_gamma = Var<T>::leaf(blk.bn.gamma, requires_grad);
                bb.bn_beta = Var<T>::leaf(blk.bn.beta, requires_grad);
                bb.bn = &blk.bn;
                bs.blocks.push_back(std::move(bb));
            }
            bs.head = BoundConv<T>::bind(stage.head, requires_grad);
            out.stages.push_back(std::move(bs));
        }
        return out;
    }

    // Trainable leaves in the canonical order (matches for_each_tensor).
    std::vector<Var<T>> trainable_leaves() const {
        std::vector<Var<T>> out;
        for (const auto& stage : stages) {
            out.push_back(stage.stem.weight);
            out.push_back(stage.stem.bias);
            for (const auto& blk : stage.blocks) {
                out.push_back(blk.reduce.weight);
                out.push_back(blk.mlp1.weight);
                out.push_back(blk.mlp2.weight);
                out.push_back(blk.expand.weight);
                out.push_back(blk.reduce.bias);
                out.push_back(blk.mlp1.bias);
                out.push_back(blk.mlp2.bias);
                out.push_back(blk.expand.bias);
                out.push_back(blk.bn_gamma);
                out.push_back(blk.bn_beta);
            }
            out.push_back(stage.head.weight);
            out.push_back(stage.head.bias);
        }
        return out;
    }
};

using BoundModel = BoundModelT<float>;

// One WaveMixSR-V2 block. Input and output shapes are identical; odd spatial
// dims are reflect-padded to even before the wavelet transform and cropped
// back afterwards.
template <typename T>
Var<T> block_forward(const Var<T>& x_in, BoundBlock<T>& p, const BlockConfig& cfg,
                     const ForwardCtx& ctx) {
    if (x_in.value().c() != cfg.embed_dim) {
        throw ShapeError("block_forward: expected " + std::to_string(cfg.embed_dim) +
                         " channels, got " + std::to_string(x_in.value().c()));
    }
    if (ctx.training && cfg.dropout_rate > 0.0f && ctx.rng == nullptr) {
        throw ParamError("block_forward: training with dropout requires an RNG");
    }
    const int h = x_in.value().h(), w = x_in.value().w();
    const bool needs_pad = (h % 2 != 0) || (w % 2 != 0);

    Var<T> x0 = conv2d(x_in, p.reduce.weight, p.reduce.bias, 1, 0);
    if (needs_pad) x0 = reflect_pad_to_even(x0);
    Var<T> mixed = dwt2_haar(x0);

    Var<T> hidden = conv2d(mixed, p.mlp1.weight, p.mlp1.bias, 1, 0);
    hidden = gelu(hidden);
    static Rng null_rng;  // untouched when not training
    hidden = dropout(hidden, static_cast<double>(cfg.dropout_rate), ctx.training,
                     ctx.rng ? *ctx.rng : null_rng);
    hidden = conv2d(hidden, p.mlp2.weight, p.mlp2.bias, 1, 0);

    Var<T> up = pixel_shuffle(hidden, 2);
    Var<T> expanded = conv2d(up, p.expand.weight, p.expand.bias, 1, 0);
    Var<T> normed = batch_norm(expanded, p.bn_gamma, p.bn_beta, p.bn->running_mean,
                               p.bn->running_var, p.bn->epsilon, p.bn->momentum, ctx.training);
    if (needs_pad) normed = crop_top_left(normed, h, w);
    return add(normed, x_in);
}

// One 2x SR stage. The Y path learns; the CbCr path is interpolation only.
template <typename T>
std::pair<Var<T>, TensorT<T>> sr2x_forward(const Var<T>& y, const TensorT<T>& cbcr,
                                           BoundStage<T>& p, const SR2xConfig& cfg,
                                           const ForwardCtx& ctx) {
    const TensorT<T>& yv = y.value();
    if (yv.c() != 1) throw ShapeError("sr2x_forward: Y input must have 1 channel");
    if (cbcr.c() != 2) throw ShapeError("sr2x_forward: CbCr input must have 2 channels");
    if (cbcr.n() != yv.n() || cbcr.h() != yv.h() || cbcr.w() != yv.w()) {
        throw ShapeError("sr2x_forward: Y " + yv.shape().str() + " vs CbCr " + cbcr.shape().str());
    }
    const int oh = 2 * yv.h(), ow = 2 * yv.w();

    Var<T> y_up = resize(y, oh, ow, cfg.upsample_mode);
    Var<T> f = conv2d(y_up, p.stem.weight, p.stem.bias, 1, 1);
    for (auto& blk : p.blocks) {
        f = block_forward(f, blk, cfg.block, ctx);
    }
    Var<T> detail_out = conv2d(f, p.head.weight, p.head.bias, 1, 1);
    Var<T> y2 = add(detail_out, y_up);

    TensorT<T> cbcr2 = resize(cbcr, oh, ow, cfg.upsample_mode);
    return {y2, cbcr2};
}

template <typename T>
struct ModelOutput {
    Var<T> y;          // final Y channel (tracked when bound with gradients)
    TensorT<T> cbcr;   // final CbCr channels

    TensorT<T> ycbcr() const { return concat_channels<T>({y.value(), cbcr}); }
};

// Runs all stages. Input is YCbCr with channel 0 = Y.
template <typename T>
ModelOutput<T> model_forward_bound(BoundModelT<T>& bound, const TensorT<T>& ycbcr,
                                   const ForwardCtx& ctx) {
    if (ycbcr.c() != 3) {
        throw ShapeError("model_forward: expected 3-channel YCbCr input, got " + ycbcr.shape().str());
    }
    Var<T> y = Var<T>::constant(slice_channels(ycbcr, 0, 1));
    TensorT<T> cbcr = slice_channels(ycbcr, 1, 2);
    for (auto& stage : bound.stages) {
        auto [y2, cbcr2] = sr2x_forward(y, cbcr, stage, bound.config.sr2x, ctx);
        y = y2;
        cbcr = std::move(cbcr2);
    }
    return {y, std::move(cbcr)};
}

// Eval-mode inference. Does not mutate the model (running stats are read
// only); safe to call concurrently on a shared model.
template <typename T>
TensorT<T> model_forward(const ModelT<T>& model, const TensorT<T>& ycbcr) {
    auto bound = BoundModelT<T>::bind(const_cast<ModelT<T>&>(model), false);
    ForwardCtx ctx;
    return model_forward_bound(bound, ycbcr, ctx).ycbcr();
}

// Eval-mode forward returning each stage's YCbCr output (last element is the
// final output).
template <typename T>
std::vector<TensorT<T>> model_forward_stages(const ModelT<T>& model, const TensorT<T>& ycbcr) {
    auto bound = BoundModelT<T>::bind(const_cast<ModelT<T>&>(model), false);
    ForwardCtx ctx;
    if (ycbcr.c() != 3) {
        throw ShapeError("model_forward: expected 3-channel YCbCr input, got " + ycbcr.shape().str());
    }
    Var<T> y = Var<T>::constant(slice_channels(ycbcr, 0, 1));
    TensorT<T> cbcr = slice_channels(ycbcr, 1, 2);
    std::vector<TensorT<T>> outs;
    for (auto& stage : bound.stages) {
        auto [y2, cbcr2] = sr2x_forward(y, cbcr, stage, bound.config.sr2x, ctx);
        y = y2;
        cbcr = std::move(cbcr2);
        outs.push_back(concat_channels<T>({y.value(), cbcr}));
    }
    return outs;
}

// Plain-tensor block forward (binds no-gradient leaves around the Var path).
template <typename T>
TensorT<T> block_forward(const TensorT<T>& x_in, BlockParamsT<T>& p, const BlockConfig& cfg,
                         bool training, Rng* rng = nullptr) {
    BoundBlock<T> bb;
    bb.reduce = BoundConv<T>::bind(p.reduce, false);
    bb.mlp1 = BoundConv<T>::bind(p.mlp1, false);
    bb.mlp2 = BoundConv<T>::bind(p.mlp2, false);
    bb.expand = BoundConv<T>::bind(p.expand, false);
    bb.bn_gamma = Var<T>::leaf(p.bn.gamma, false);
    bb.bn_beta = Var<T>::leaf(p.bn.beta, false);
    bb.bn = &p.bn;
    ForwardCtx ctx{training, rng};
    return block_forward(Var<T>::constant(x_in), bb, cfg, ctx).value();
}

// ---- compute estimate ---------------------------------------------------

// Static multiply-add estimate for one forward pass at the given input size.
// Multiplications and additions are counted as separate operations (a fused
// multiply-accumulate contributes 2); activations are excluded.
inline double madd_estimate(const ModelConfig& cfg, int in_h, int in_w) {
    const int c = cfg.sr2x.block.embed_dim;
    const int hidden = mlp_hidden_dim(cfg.sr2x.block);
    const double resize_taps = cfg.sr2x.upsample_mode == ResizeMode::kBicubic ? 4.0 : 2.0;
    double total = 0.0;
    int h = in_h, w = in_w;
    for (int s = 0; s < cfg.stages; ++s) {
        const double oh = 2.0 * h, ow = 2.0 * w;
        const double out_elems = oh * ow;
        // Separable resample: horizontal pass on (h, ow), vertical on (oh, ow),
        // 2*taps ops per produced element; Y plus two CbCr channels.
        total += 3.0 * (static_cast<double>(h) * ow + out_elems) * 2.0 * resize_taps;
        // Stem and head, 3x3 over 1<->C channels.
        total += out_elems * 2.0 * 9.0 * c * 2.0;
        const double per_block =
            out_elems * (c / 4.0) * 2.0 * c +              // reduce 1x1
            out_elems * c +                                 // DWT butterflies (4 ops per output)
            (out_elems / 4.0) * hidden * 2.0 * c +          // mlp1 1x1 at half resolution
            (out_elems / 4.0) * c * 2.0 * hidden +          // mlp2
            out_elems * c * 2.0 * (c / 4.0) +               // expand 1x1
            out_elems * c * 2.0 +                           // batch norm affine
            out_elems * c;                                  // residual add
        total += per_block * cfg.sr2x.depth;
        // Y-path global residual add.
        total += out_elems;
        h *= 2;
        w *= 2;
    }
    return total;
}

}  // namespace wmx2
