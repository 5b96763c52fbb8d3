#pragma once

#include "multilift/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace multilift::nn {

// Fully connected net, tanh hidden activations, identity output. Samples are
// matrix columns. All parameters are 64-bit floats.
struct DenseNet {
    std::vector<int> layer_sizes;
    std::vector<MatX> weights;  // weights[l] is (layer_sizes[l+1], layer_sizes[l])
    std::vector<VecX> biases;
    std::uint64_t version = 0;  // bumped whenever parameters change

    int input_size() const { return layer_sizes.front(); }
    int output_size() const { return layer_sizes.back(); }
};

DenseNet make_net(const std::vector<int>& layer_sizes);

// He-style scaled uniform init; the last layer is additionally scaled (small
// initial policy outputs use 0.01).
void init_uniform(DenseNet& net, Rng& rng, double final_layer_scale = 1.0);

struct ForwardCache {
    std::uint64_t net_version = 0;
    std::vector<MatX> activations;  // activations[0] is the input
};

MatX forward(const DenseNet& net, const MatX& input, ForwardCache* cache = nullptr);
VecX forward(const DenseNet& net, const VecX& input);

struct Gradients {
    std::vector<MatX> weights;
    std::vector<VecX> biases;
    MatX input;
};

// Exact reverse-mode gradients of the scalar loss whose output gradient is
// supplied (including any batch averaging the caller wants).
Gradients backward(const DenseNet& net, const ForwardCache& cache, const MatX& output_gradient);

double gradient_norm(const Gradients& grads);
void scale_gradients(Gradients& grads, double factor);

struct AdamState {
    std::vector<MatX> m_w, v_w;
    std::vector<VecX> m_b, v_b;
    long step = 0;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

AdamState make_adam(const DenseNet& net, double lr = 3e-4);

// Standard bias-corrected Adam update, in place.
void adam_step(DenseNet& net, const Gradients& grads, AdamState& state);

// loss_fn maps the net output to (loss, d loss / d output).
using LossFn = std::function<std::pair<double, VecX>(const VecX&)>;

// Central finite differences over every parameter against backward(). Returns
// the worst relative error |fd - analytic| / max(1e-6, |fd|, |analytic|).
double gradient_check(const DenseNet& net, const LossFn& loss_fn, const VecX& input, double h);

// Throws with diagnostics when any parameter is non-finite.
void check_finite(const DenseNet& net, const std::string& context);

nlohmann::json net_to_json(const DenseNet& net);
DenseNet net_from_json(const nlohmann::json& j);
nlohmann::json adam_to_json(const AdamState& state);
AdamState adam_from_json(const nlohmann::json& j, const DenseNet& net);

}  // namespace multilift::nn
