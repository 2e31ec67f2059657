#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pqd/conv.hpp"
#include "pqd/layers.hpp"
#include "pqd/tensor.hpp"

namespace pqd {

/// Architecture hyperparameters. The defaults are the desk-scale network:
/// 64 px inputs, three stages of two bottlenecks each, 4 convolution groups
/// and a 4x squeeze-excitation reduction.
struct ModelConfig {
    std::size_t input_px = 64;
    std::size_t in_channels = 3;
    std::size_t stem_width = 16;
    std::vector<std::size_t> stage_widths{16, 32, 64};
    std::vector<std::size_t> blocks_per_stage{2, 2, 2};
    std::size_t groups = 4;
    std::size_t se_reduction = 4;
    std::size_t num_classes = 18;
    ActKind activation = ActKind::HSwish;
    bool use_se = true;

    void validate() const {
        if (input_px < 8) throw std::invalid_argument("ModelConfig: input_px must be >= 8");
        if (in_channels == 0 || stem_width == 0 || num_classes < 2)
            throw std::invalid_argument("ModelConfig: bad channel or class count");
        if (stage_widths.empty() || stage_widths.size() != blocks_per_stage.size())
            throw std::invalid_argument("ModelConfig: stage_widths and blocks_per_stage must match");
        if (groups == 0 || se_reduction == 0)
            throw std::invalid_argument("ModelConfig: groups and se_reduction must be positive");
        for (std::size_t w : stage_widths) {
            if (w % 2 != 0)
                throw std::invalid_argument("ModelConfig: stage width " + std::to_string(w) +
                                            " must be even");
            const std::size_t inner = w / 2;
            if (w % groups != 0 || inner % groups != 0)
                throw std::invalid_argument("ModelConfig: width " + std::to_string(w) +
                                            " not divisible by groups " + std::to_string(groups));
            if (w % se_reduction != 0 || inner % se_reduction != 0)
                throw std::invalid_argument("ModelConfig: width " + std::to_string(w) +
                                            " not divisible by se_reduction " +
                                            std::to_string(se_reduction));
        }
        // Every stage after the first halves the spatial size once.
        std::size_t px = input_px;
        for (std::size_t i = 1; i < stage_widths.size(); ++i) {
            px = (px + 1) / 2;
            if (px < 1) throw std::invalid_argument("ModelConfig: too many downsampling stages");
        }
    }
};

/// Squeeze-and-excitation: pool each channel, pass the channel vector through
/// a reducing MLP (C -> C/r -> C, ReLU inside), squash with a sigmoid, and
/// rescale the channels by the resulting weights.
template <typename T>
class SEBlock {
public:
    SEBlock(const std::string& id_prefix, std::size_t channels, std::size_t reduction)
        : fc1_(id_prefix + ".fc1", channels, channels / reduction),
          fc2_(id_prefix + ".fc2", channels / reduction, channels),
          relu_(ActKind::ReLU),
          sigmoid_(ActKind::Sigmoid),
          channels_(channels) {
        if (channels % reduction != 0)
            throw std::invalid_argument("SEBlock: channels not divisible by reduction");
    }

    void init(RandomStream& rng) {
        fc1_.init(rng);
        fc2_.init(rng);
    }

    Tensor<T> forward(Tensor<T> x, Mode mode) {
        if (x.shape.size() != 4 || x.shape[1] != channels_)
            throw std::invalid_argument("SEBlock: bad input shape " + x.shape_str());
        x_ = std::move(x);
        scale_ = sigmoid_.forward(
            fc2_.forward(relu_.forward(fc1_.forward(pool_.forward(x_, mode), mode), mode), mode),
            mode);
        const std::size_t n = x_.shape[0], plane = x_.shape[2] * x_.shape[3];
        Tensor<T> y = Tensor<T>::uninit(x_.shape);
        parallel_for(n * channels_, [&](std::size_t i) {
            const T s = scale_.data[i];
            const T* in = &x_.data[i * plane];
            T* out = &y.data[i * plane];
            for (std::size_t p = 0; p < plane; ++p) out[p] = s * in[p];
        }, 64);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        require_shape(dy, x_.shape, "SEBlock::backward");
        const std::size_t n = dy.shape[0], plane = dy.shape[2] * dy.shape[3];
        Tensor<T> dscale = Tensor<T>::uninit({n, channels_});
        Tensor<T> dx = Tensor<T>::uninit(dy.shape);
        parallel_for(n * channels_, [&](std::size_t i) {
            const T s = scale_.data[i];
            const T* g = &dy.data[i * plane];
            const T* in = &x_.data[i * plane];
            T* out = &dx.data[i * plane];
            T acc = 0;
            for (std::size_t p = 0; p < plane; ++p) {
                acc += g[p] * in[p];
                out[p] = g[p] * s;
            }
            dscale.data[i] = acc;
        }, 64);
        const Tensor<T> dpool =
            fc1_.backward(relu_.backward(fc2_.backward(sigmoid_.backward(dscale))));
        const Tensor<T> dx_pool = pool_.backward(dpool);
        parallel_for(dx.numel(), [&](std::size_t i) { dx.data[i] += dx_pool.data[i]; }, 4096);
        return dx;
    }

    std::vector<Parameter<T>*> parameters() {
        auto p1 = fc1_.parameters();
        auto p2 = fc2_.parameters();
        p1.insert(p1.end(), p2.begin(), p2.end());
        return p1;
    }

    Linear<T>& fc1() { return fc1_; }
    Linear<T>& fc2() { return fc2_; }
    const Tensor<T>& last_scale() const { return scale_; }

private:
    Linear<T> fc1_, fc2_;
    Activation<T> relu_, sigmoid_;
    GlobalAvgPool<T> pool_;
    std::size_t channels_;
    Tensor<T> x_, scale_;
};

/// Residual bottleneck: 1x1 reduce to width/2, grouped 3x3 at the block
/// stride, SE rescale, 1x1 expand to width, plus a projection shortcut when
/// the shape changes.
template <typename T>
class Bottleneck {
public:
    Bottleneck(const std::string& id_prefix, std::size_t c_in, std::size_t width,
               std::size_t stride, const ModelConfig& cfg)
        : conv1_(id_prefix + ".conv1", c_in, width / 2, 1, 1, 0, 1),
          bn1_(id_prefix + ".bn1", width / 2),
          act1_(cfg.activation),
          conv2_(id_prefix + ".conv2", width / 2, width / 2, 3, stride, 1, cfg.groups),
          bn2_(id_prefix + ".bn2", width / 2),
          act2_(cfg.activation),
          conv3_(id_prefix + ".conv3", width / 2, width, 1, 1, 0, 1),
          bn3_(id_prefix + ".bn3", width),
          act_out_(cfg.activation) {
        if (cfg.use_se) se_.emplace(id_prefix + ".se", width / 2, cfg.se_reduction);
        if (stride != 1 || c_in != width) {
            proj_conv_.emplace(id_prefix + ".proj", c_in, width, 1, stride, 0, 1);
            proj_bn_.emplace(id_prefix + ".proj_bn", width);
        }
    }

    void init(RandomStream& rng) {
        conv1_.init(rng);
        conv2_.init(rng);
        conv3_.init(rng);
        if (se_) se_->init(rng);
        if (proj_conv_) proj_conv_->init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        Tensor<T> h = act1_.forward(bn1_.forward(conv1_.forward(x, mode), mode), mode);
        h = act2_.forward(bn2_.forward(conv2_.forward(h, mode), mode), mode);
        if (se_) h = se_->forward(h, mode);
        h = bn3_.forward(conv3_.forward(h, mode), mode);
        Tensor<T> shortcut =
            proj_conv_ ? proj_bn_->forward(proj_conv_->forward(x, mode), mode) : x;
        return act_out_.forward(residual_add(h, shortcut), mode);
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const Tensor<T> dsum = act_out_.backward(dy);
        Tensor<T> dmain = conv3_.backward(bn3_.backward(dsum));
        if (se_) dmain = se_->backward(dmain);
        dmain = conv1_.backward(bn1_.backward(act1_.backward(
            conv2_.backward(bn2_.backward(act2_.backward(dmain))))));
        if (proj_conv_) {
            const Tensor<T> dshort = proj_conv_->backward(proj_bn_->backward(dsum));
            parallel_for(dmain.numel(),
                         [&](std::size_t i) { dmain.data[i] += dshort.data[i]; }, 4096);
            return dmain;
        }
        parallel_for(dmain.numel(), [&](std::size_t i) { dmain.data[i] += dsum.data[i]; }, 4096);
        return dmain;
    }

    void collect(std::vector<Parameter<T>*>& trainable, std::vector<Parameter<T>*>& state) {
        auto push = [&](std::vector<Parameter<T>*> ps) {
            trainable.insert(trainable.end(), ps.begin(), ps.end());
        };
        push(conv1_.parameters());
        auto bn_push = [&](BatchNorm2d<T>& bn) {
            push(bn.parameters());
            state.push_back(&bn.running_mean());
            state.push_back(&bn.running_var());
        };
        bn_push(bn1_);
        push(conv2_.parameters());
        bn_push(bn2_);
        if (se_) push(se_->parameters());
        push(conv3_.parameters());
        bn_push(bn3_);
        if (proj_conv_) {
            push(proj_conv_->parameters());
            bn_push(*proj_bn_);
        }
    }

    SEBlock<T>* se() { return se_ ? &*se_ : nullptr; }

private:
    Conv2dGrouped<T> conv1_;
    BatchNorm2d<T> bn1_;
    Activation<T> act1_;
    Conv2dGrouped<T> conv2_;
    BatchNorm2d<T> bn2_;
    Activation<T> act2_;
    std::optional<SEBlock<T>> se_;
    Conv2dGrouped<T> conv3_;
    BatchNorm2d<T> bn3_;
    Activation<T> act_out_;
    std::optional<Conv2dGrouped<T>> proj_conv_;
    std::optional<BatchNorm2d<T>> proj_bn_;
};

/// The grouped-convolution squeeze-excitation residual classifier.
/// Stem 3x3 -> stages of bottlenecks (first block of every stage except the
/// first downsamples by 2) -> global average pool -> fully connected head.
template <typename T>
class GSResNet {
public:
    GSResNet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), stem_act_(cfg.activation) {
        cfg.validate();
        stem_conv_ = std::make_unique<Conv2dGrouped<T>>("stem.conv", cfg.in_channels,
                                                        cfg.stem_width, 3, 1, 1, 1);
        stem_bn_ = std::make_unique<BatchNorm2d<T>>("stem.bn", cfg.stem_width);
        std::size_t c_in = cfg.stem_width;
        for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
            const std::size_t width = cfg.stage_widths[s];
            for (std::size_t b = 0; b < cfg.blocks_per_stage[s]; ++b) {
                const std::size_t stride = (b == 0 && s > 0) ? 2 : 1;
                const std::string id =
                    "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
                blocks_.push_back(std::make_unique<Bottleneck<T>>(id, c_in, width, stride, cfg));
                c_in = width;
            }
        }
        head_ = std::make_unique<Linear<T>>("head.fc", c_in, cfg.num_classes);

        RandomStream rng(seed);
        stem_conv_->init(rng);
        for (auto& block : blocks_) block->init(rng);
        head_->init(rng);

        rebuild_parameter_lists();
    }

    const ModelConfig& config() const { return cfg_; }

    /// Logits for a batch of (N, in_channels, input_px, input_px) images.
    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        require_shape(x, {x.shape.empty() ? 0 : x.shape[0], cfg_.in_channels, cfg_.input_px,
                          cfg_.input_px},
                      "GSResNet::forward");
        Tensor<T> h = stem_act_.forward(stem_bn_->forward(stem_conv_->forward(x, mode), mode), mode);
        for (auto& block : blocks_) h = block->forward(h, mode);
        return head_->forward(pool_.forward(h, mode), mode);
    }

    /// Backpropagates d(loss)/d(logits), accumulating parameter gradients.
    Tensor<T> backward(const Tensor<T>& dlogits) {
        Tensor<T> g = pool_.backward(head_->backward(dlogits));
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = (*it)->backward(g);
        return stem_conv_->backward(stem_bn_->backward(stem_act_.backward(g)));
    }

    /// Trainable parameters, in a fixed topological order.
    const std::vector<Parameter<T>*>& parameters() { return trainable_; }

    /// Everything a checkpoint must carry: trainable parameters plus batch
    /// norm running statistics.
    const std::vector<Parameter<T>*>& named_state() { return state_; }

    void zero_grads() {
        for (Parameter<T>* p : trainable_) p->zero_grad();
    }

    std::size_t parameter_count() {
        std::size_t count = 0;
        for (Parameter<T>* p : trainable_) count += p->value.numel();
        return count;
    }

    std::vector<Bottleneck<T>*> bottlenecks() {
        std::vector<Bottleneck<T>*> out;
        for (auto& b : blocks_) out.push_back(b.get());
        return out;
    }

private:
    void rebuild_parameter_lists() {
        trainable_.clear();
        std::vector<Parameter<T>*> bn_state;
        auto push = [&](std::vector<Parameter<T>*> ps) {
            trainable_.insert(trainable_.end(), ps.begin(), ps.end());
        };
        push(stem_conv_->parameters());
        push(stem_bn_->parameters());
        bn_state.push_back(&stem_bn_->running_mean());
        bn_state.push_back(&stem_bn_->running_var());
        for (auto& block : blocks_) block->collect(trainable_, bn_state);
        push(head_->parameters());

        state_ = trainable_;
        state_.insert(state_.end(), bn_state.begin(), bn_state.end());
    }

    ModelConfig cfg_;
    std::unique_ptr<Conv2dGrouped<T>> stem_conv_;
    std::unique_ptr<BatchNorm2d<T>> stem_bn_;
    Activation<T> stem_act_;
    std::vector<std::unique_ptr<Bottleneck<T>>> blocks_;
    GlobalAvgPool<T> pool_;
    std::unique_ptr<Linear<T>> head_;
    std::vector<Parameter<T>*> trainable_;
    std::vector<Parameter<T>*> state_;
};

} // namespace pqd
