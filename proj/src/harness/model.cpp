#include "gwa/harness/model.hpp"

#include "gwa/error.hpp"

#include <algorithm>
#include <cmath>

namespace gwa::harness {

Classifier::Classifier(std::size_t input_dim, std::size_t classes, const ModelConfig& config,
                       std::mt19937_64& rng)
    : input_dim_(input_dim), classes_(classes), hidden_(config.hidden_dim),
      activation_(config.activation)
{
    if (input_dim == 0 || classes < 2) {
        throw Error(ErrorCode::InvalidArgument, "classifier needs input_dim > 0 and >= 2 classes");
    }
    auto glorot = [&](std::size_t fan_in, std::size_t fan_out, std::size_t count) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (std::size_t i = 0; i < count; ++i) {
            params_.push_back(u(rng));
        }
    };
    if (hidden_ > 0) {
        glorot(input_dim_, hidden_, hidden_ * input_dim_);
        params_.insert(params_.end(), hidden_, 0.0);
    }
    head_offset_ = params_.size();
    glorot(latent_dim(), classes_, classes_ * latent_dim());
    params_.insert(params_.end(), classes_, 0.0);
}

std::span<const double> Classifier::head_weights() const
{
    return {params_.data() + head_offset_, classes_ * latent_dim()};
}

std::span<const double> Classifier::head_bias() const
{
    return {params_.data() + head_offset_ + classes_ * latent_dim(), classes_};
}

void Classifier::forward(std::span<const float> x, std::size_t n, ForwardPass& out) const
{
    const std::size_t d = input_dim_;
    const std::size_t l = latent_dim();
    const std::size_t c = classes_;
    out.batch = n;
    out.latents.resize(n * l);
    out.logits.resize(n * c);
    out.probs.resize(n * c);
    if (hidden_ > 0) {
        out.hidden_pre.resize(n * hidden_);
        const double* w1 = params_.data();
        const double* b1 = w1 + hidden_ * d;
        for (std::size_t i = 0; i < n; ++i) {
            const float* xi = x.data() + i * d;
            for (std::size_t h = 0; h < hidden_; ++h) {
                const double* row = w1 + h * d;
                double s = b1[h];
                for (std::size_t j = 0; j < d; ++j) {
                    s += row[j] * static_cast<double>(xi[j]);
                }
                out.hidden_pre[i * hidden_ + h] = s;
                out.latents[i * l + h] =
                    activation_ == Activation::Relu ? std::max(0.0, s) : std::tanh(s);
            }
        }
    } else {
        for (std::size_t k = 0; k < n * d; ++k) {
            out.latents[k] = static_cast<double>(x[k]);
        }
    }
    const auto w = head_weights();
    const auto b = head_bias();
    for (std::size_t i = 0; i < n; ++i) {
        const double* zi = out.latents.data() + i * l;
        double* logit = out.logits.data() + i * c;
        double max_logit = -INFINITY;
        for (std::size_t k = 0; k < c; ++k) {
            const double* row = w.data() + k * l;
            double s = b[k];
            for (std::size_t j = 0; j < l; ++j) {
                s += row[j] * zi[j];
            }
            logit[k] = s;
            max_logit = std::max(max_logit, s);
        }
        double sum = 0.0;
        double* p = out.probs.data() + i * c;
        for (std::size_t k = 0; k < c; ++k) {
            p[k] = std::exp(logit[k] - max_logit);
            sum += p[k];
        }
        for (std::size_t k = 0; k < c; ++k) {
            p[k] /= sum;
        }
    }
}

double Classifier::loss(const ForwardPass& pass, std::span<const std::uint32_t> labels,
                        std::size_t classes)
{
    double total = 0.0;
    for (std::size_t i = 0; i < pass.batch; ++i) {
        const double* logit = pass.logits.data() + i * classes;
        const double max_logit = *std::max_element(logit, logit + classes);
        double sum = 0.0;
        for (std::size_t k = 0; k < classes; ++k) {
            sum += std::exp(logit[k] - max_logit);
        }
        total += max_logit + std::log(sum) - logit[labels[i]];
    }
    return pass.batch > 0 ? total / static_cast<double>(pass.batch) : 0.0;
}

void Classifier::backward(std::span<const float> x, const ForwardPass& pass,
                          std::span<const std::uint32_t> labels, std::vector<double>& grad) const
{
    const std::size_t n = pass.batch;
    const std::size_t d = input_dim_;
    const std::size_t l = latent_dim();
    const std::size_t c = classes_;
    grad.assign(params_.size(), 0.0);
    if (n == 0) {
        return;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    double* gw = grad.data() + head_offset_;
    double* gb = gw + c * l;
    const auto w = head_weights();
    std::vector<double> delta(c);
    std::vector<double> hidden_grad(hidden_);
    for (std::size_t i = 0; i < n; ++i) {
        const double* p = pass.probs.data() + i * c;
        const double* zi = pass.latents.data() + i * l;
        for (std::size_t k = 0; k < c; ++k) {
            delta[k] = (p[k] - (k == labels[i] ? 1.0 : 0.0)) * inv_n;
            gb[k] += delta[k];
            double* row = gw + k * l;
            for (std::size_t j = 0; j < l; ++j) {
                row[j] += delta[k] * zi[j];
            }
        }
        if (hidden_ == 0) {
            continue;
        }
        std::fill(hidden_grad.begin(), hidden_grad.end(), 0.0);
        for (std::size_t k = 0; k < c; ++k) {
            const double* row = w.data() + k * l;
            for (std::size_t h = 0; h < hidden_; ++h) {
                hidden_grad[h] += delta[k] * row[h];
            }
        }
        double* gw1 = grad.data();
        double* gb1 = gw1 + hidden_ * d;
        const float* xi = x.data() + i * d;
        for (std::size_t h = 0; h < hidden_; ++h) {
            const double pre = pass.hidden_pre[i * hidden_ + h];
            double g = hidden_grad[h];
            if (activation_ == Activation::Relu) {
                g = pre > 0.0 ? g : 0.0;
            } else {
                const double t = std::tanh(pre);
                g *= 1.0 - t * t;
            }
            if (g == 0.0) {
                continue;
            }
            gb1[h] += g;
            double* row = gw1 + h * d;
            for (std::size_t j = 0; j < d; ++j) {
                row[j] += g * static_cast<double>(xi[j]);
            }
        }
    }
}

std::vector<std::uint32_t> Classifier::predict(std::span<const float> x, std::size_t n) const
{
    std::vector<std::uint32_t> out(n);
    ForwardPass pass;
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t m = std::min(kChunk, n - start);
        forward(x.subspan(start * input_dim_, m * input_dim_), m, pass);
        for (std::size_t i = 0; i < m; ++i) {
            const double* logit = pass.logits.data() + i * classes_;
            out[start + i] =
                static_cast<std::uint32_t>(std::max_element(logit, logit + classes_) - logit);
        }
    }
    return out;
}

Optimizer::Optimizer(const OptimizerConfig& config, std::size_t parameter_count)
    : config_(config), first_(parameter_count, 0.0)
{
    if (!(config.lr > 0.0)) {
        throw Error(ErrorCode::ConfigError, "learning rate must be positive");
    }
    if (config.kind == OptimizerKind::Adam) {
        second_.assign(parameter_count, 0.0);
    }
}

void Optimizer::step(std::vector<double>& params, const std::vector<double>& grad)
{
    ++t_;
    const double wd = config_.weight_decay;
    if (config_.kind == OptimizerKind::Sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = grad[i] + wd * params[i];
            first_[i] = config_.momentum * first_[i] + g;
            params[i] -= config_.lr * first_[i];
        }
        return;
    }
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i] + wd * params[i];
        first_[i] = config_.beta1 * first_[i] + (1.0 - config_.beta1) * g;
        second_[i] = config_.beta2 * second_[i] + (1.0 - config_.beta2) * g * g;
        const double m_hat = first_[i] / bc1;
        const double v_hat = second_[i] / bc2;
        params[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
}

} // namespace gwa::harness
