#pragma once

// Softmax regression and one-hidden-layer MLP classifiers with explicit
// backpropagation, plus SGD/Adam. Parameters live in one flat buffer:
//   MLP:     [W1 (H x D) | b1 (H) | W2 (C x H) | b2 (C)]
//   softmax: [W (C x D) | b (C)]
// The last two blocks are the classifier head.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gwa::harness {

enum class Activation { Relu, Tanh };

struct ModelConfig {
    /// 0 selects softmax regression (the head sees raw features).
    std::size_t hidden_dim = 0;
    Activation activation = Activation::Relu;
};

/// Forward activations of one batch, kept for the backward pass.
struct ForwardPass {
    std::size_t batch = 0;
    std::vector<double> hidden_pre; // n x H (MLP only)
    std::vector<double> latents;    // n x latent_dim
    std::vector<double> logits;     // n x C
    std::vector<double> probs;      // n x C
};

class Classifier {
public:
    Classifier(std::size_t input_dim, std::size_t classes, const ModelConfig& config,
               std::mt19937_64& rng);

    std::size_t input_dim() const noexcept { return input_dim_; }
    std::size_t classes() const noexcept { return classes_; }
    std::size_t latent_dim() const noexcept { return hidden_ > 0 ? hidden_ : input_dim_; }
    bool is_mlp() const noexcept { return hidden_ > 0; }

    std::vector<double>& parameters() noexcept { return params_; }
    const std::vector<double>& parameters() const noexcept { return params_; }

    std::span<const double> head_weights() const; // C x latent_dim
    std::span<const double> head_bias() const;    // C

    /// `x` holds n rows of input_dim features.
    void forward(std::span<const float> x, std::size_t n, ForwardPass& out) const;

    /// Mean cross-entropy of `pass` against `labels`.
    static double loss(const ForwardPass& pass, std::span<const std::uint32_t> labels,
                       std::size_t classes);

    /// Gradient of the mean cross-entropy, same layout as parameters().
    void backward(std::span<const float> x, const ForwardPass& pass,
                  std::span<const std::uint32_t> labels, std::vector<double>& grad) const;

    std::vector<std::uint32_t> predict(std::span<const float> x, std::size_t n) const;

private:
    std::size_t input_dim_;
    std::size_t classes_;
    std::size_t hidden_;
    Activation activation_;
    std::vector<double> params_;
    std::size_t head_offset_ = 0;
};

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Sgd;
    double lr = 0.01;
    double momentum = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

class Optimizer {
public:
    Optimizer(const OptimizerConfig& config, std::size_t parameter_count);

    void step(std::vector<double>& params, const std::vector<double>& grad);

private:
    OptimizerConfig config_;
    std::vector<double> first_;
    std::vector<double> second_;
    std::uint64_t t_ = 0;
};

} // namespace gwa::harness
