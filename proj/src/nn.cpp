#include "multilift/nn.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace multilift::nn {

DenseNet make_net(const std::vector<int>& layer_sizes) {
    if (layer_sizes.size() < 2) throw std::invalid_argument("need at least input and output sizes");
    for (int s : layer_sizes) {
        if (s < 1) throw std::invalid_argument("layer sizes must be positive");
    }
    DenseNet net;
    net.layer_sizes = layer_sizes;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        net.weights.push_back(MatX::Zero(layer_sizes[l + 1], layer_sizes[l]));
        net.biases.push_back(VecX::Zero(layer_sizes[l + 1]));
    }
    return net;
}

void init_uniform(DenseNet& net, Rng& rng, double final_layer_scale) {
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        const double limit = std::sqrt(6.0 / net.layer_sizes[l]);
        const double scale = (l + 1 == net.weights.size()) ? final_layer_scale : 1.0;
        MatX& w = net.weights[l];
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            for (Eigen::Index i = 0; i < w.rows(); ++i) {
                w(i, j) = scale * rng.uniform(-limit, limit);
            }
        }
        net.biases[l].setZero();
    }
    ++net.version;
}

MatX forward(const DenseNet& net, const MatX& input, ForwardCache* cache) {
    if (input.rows() != net.input_size()) throw std::invalid_argument("input size mismatch");
    if (cache) {
        cache->net_version = net.version;
        cache->activations.assign(1, input);
    }
    MatX a = input;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        MatX z = (net.weights[l] * a).colwise() + net.biases[l];
        if (l + 1 < net.weights.size()) z = z.array().tanh();
        a = std::move(z);
        if (cache) cache->activations.push_back(a);
    }
    return a;
}

VecX forward(const DenseNet& net, const VecX& input) {
    return forward(net, MatX(input), nullptr).col(0);
}

Gradients backward(const DenseNet& net, const ForwardCache& cache, const MatX& output_gradient) {
    if (cache.net_version != net.version) {
        throw std::logic_error("backward called with a stale forward cache");
    }
    if (cache.activations.size() != net.weights.size() + 1) {
        throw std::logic_error("forward cache is incomplete");
    }
    Gradients g;
    g.weights.resize(net.weights.size());
    g.biases.resize(net.biases.size());

    MatX delta = output_gradient;
    for (std::size_t l = net.weights.size(); l-- > 0;) {
        g.weights[l].noalias() = delta * cache.activations[l].transpose();
        g.biases[l] = delta.rowwise().sum();
        MatX da = net.weights[l].transpose() * delta;
        if (l > 0) {
            delta = da.array() * (1.0 - cache.activations[l].array().square());
        } else {
            g.input = std::move(da);
        }
    }
    return g;
}

double gradient_norm(const Gradients& grads) {
    double sq = 0.0;
    for (const auto& w : grads.weights) sq += w.squaredNorm();
    for (const auto& b : grads.biases) sq += b.squaredNorm();
    return std::sqrt(sq);
}

void scale_gradients(Gradients& grads, double factor) {
    for (auto& w : grads.weights) w *= factor;
    for (auto& b : grads.biases) b *= factor;
}

AdamState make_adam(const DenseNet& net, double lr) {
    AdamState s;
    s.lr = lr;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        s.m_w.push_back(MatX::Zero(net.weights[l].rows(), net.weights[l].cols()));
        s.v_w.push_back(MatX::Zero(net.weights[l].rows(), net.weights[l].cols()));
        s.m_b.push_back(VecX::Zero(net.biases[l].size()));
        s.v_b.push_back(VecX::Zero(net.biases[l].size()));
    }
    return s;
}

void adam_step(DenseNet& net, const Gradients& grads, AdamState& s) {
    if (grads.weights.size() != net.weights.size()) {
        throw std::invalid_argument("gradient shape mismatch");
    }
    s.step += 1;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        s.m_w[l] = s.beta1 * s.m_w[l] + (1.0 - s.beta1) * grads.weights[l];
        s.v_w[l] = s.beta2 * s.v_w[l].array() + (1.0 - s.beta2) * grads.weights[l].array().square();
        net.weights[l].array() -=
            s.lr * (s.m_w[l].array() / bc1) / ((s.v_w[l].array() / bc2).sqrt() + s.eps);

        s.m_b[l] = s.beta1 * s.m_b[l] + (1.0 - s.beta1) * grads.biases[l];
        s.v_b[l] = s.beta2 * s.v_b[l].array() + (1.0 - s.beta2) * grads.biases[l].array().square();
        net.biases[l].array() -=
            s.lr * (s.m_b[l].array() / bc1) / ((s.v_b[l].array() / bc2).sqrt() + s.eps);
    }
    ++net.version;
}

double gradient_check(const DenseNet& net, const LossFn& loss_fn, const VecX& input, double h) {
    if (h < 1e-7 || h > 1e-3) throw std::invalid_argument("h must be in [1e-7, 1e-3]");

    ForwardCache cache;
    const MatX out = forward(net, MatX(input), &cache);
    const auto [loss, dldy] = loss_fn(out.col(0));
    (void)loss;
    const Gradients analytic = backward(net, cache, MatX(dldy));

    DenseNet probe = net;  // mutated parameter by parameter
    auto eval = [&]() { return loss_fn(forward(probe, input)).first; };

    double worst = 0.0;
    auto compare = [&](double fd, double an) {
        const double denom = std::max({1e-6, std::abs(fd), std::abs(an)});
        worst = std::max(worst, std::abs(fd - an) / denom);
    };

    for (std::size_t l = 0; l < probe.weights.size(); ++l) {
        MatX& w = probe.weights[l];
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            for (Eigen::Index i = 0; i < w.rows(); ++i) {
                const double saved = w(i, j);
                w(i, j) = saved + h;
                const double up = eval();
                w(i, j) = saved - h;
                const double down = eval();
                w(i, j) = saved;
                compare((up - down) / (2.0 * h), analytic.weights[l](i, j));
            }
        }
        VecX& b = probe.biases[l];
        for (Eigen::Index i = 0; i < b.size(); ++i) {
            const double saved = b(i);
            b(i) = saved + h;
            const double up = eval();
            b(i) = saved - h;
            const double down = eval();
            b(i) = saved;
            compare((up - down) / (2.0 * h), analytic.biases[l](i));
        }
    }
    return worst;
}

void check_finite(const DenseNet& net, const std::string& context) {
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        if (!net.weights[l].allFinite() || !net.biases[l].allFinite()) {
            std::ostringstream os;
            os << context << ": non-finite parameter in layer " << l << " ("
               << net.weights[l].rows() << "x" << net.weights[l].cols() << ")";
            throw std::runtime_error(os.str());
        }
    }
}

namespace {

nlohmann::json matrix_to_json(const MatX& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

MatX matrix_from_json(const nlohmann::json& j) {
    const std::size_t rows = j.size();
    const std::size_t cols = rows ? j.at(0).size() : 0;
    MatX m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
    }
    return m;
}

nlohmann::json vector_to_json(const VecX& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

VecX vector_from_json(const nlohmann::json& j) {
    VecX v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(i) = j.at(i).get<double>();
    return v;
}

}  // namespace

nlohmann::json net_to_json(const DenseNet& net) {
    nlohmann::json j;
    j["layer_sizes"] = net.layer_sizes;
    j["weights"] = nlohmann::json::array();
    j["biases"] = nlohmann::json::array();
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        j["weights"].push_back(matrix_to_json(net.weights[l]));
        j["biases"].push_back(vector_to_json(net.biases[l]));
    }
    return j;
}

DenseNet net_from_json(const nlohmann::json& j) {
    DenseNet net = make_net(j.at("layer_sizes").get<std::vector<int>>());
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        net.weights[l] = matrix_from_json(j.at("weights").at(l));
        net.biases[l] = vector_from_json(j.at("biases").at(l));
        if (net.weights[l].rows() != net.layer_sizes[l + 1] ||
            net.weights[l].cols() != net.layer_sizes[l]) {
            throw std::invalid_argument("checkpoint weight shape mismatch");
        }
    }
    check_finite(net, "checkpoint load");
    return net;
}

nlohmann::json adam_to_json(const AdamState& s) {
    nlohmann::json j;
    j["step"] = s.step;
    j["lr"] = s.lr;
    j["beta1"] = s.beta1;
    j["beta2"] = s.beta2;
    j["eps"] = s.eps;
    j["m_w"] = nlohmann::json::array();
    j["v_w"] = nlohmann::json::array();
    j["m_b"] = nlohmann::json::array();
    j["v_b"] = nlohmann::json::array();
    for (std::size_t l = 0; l < s.m_w.size(); ++l) {
        j["m_w"].push_back(matrix_to_json(s.m_w[l]));
        j["v_w"].push_back(matrix_to_json(s.v_w[l]));
        j["m_b"].push_back(vector_to_json(s.m_b[l]));
        j["v_b"].push_back(vector_to_json(s.v_b[l]));
    }
    return j;
}

AdamState adam_from_json(const nlohmann::json& j, const DenseNet& net) {
    AdamState s = make_adam(net, j.at("lr").get<double>());
    s.step = j.at("step").get<long>();
    s.beta1 = j.at("beta1").get<double>();
    s.beta2 = j.at("beta2").get<double>();
    s.eps = j.at("eps").get<double>();
    for (std::size_t l = 0; l < s.m_w.size(); ++l) {
        s.m_w[l] = matrix_from_json(j.at("m_w").at(l));
        s.v_w[l] = matrix_from_json(j.at("v_w").at(l));
        s.m_b[l] = vector_from_json(j.at("m_b").at(l));
        s.v_b[l] = vector_from_json(j.at("v_b").at(l));
    }
    return s;
}

}  // namespace multilift::nn
