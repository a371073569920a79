#include "tilp/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace tilp {

DenseLayer DenseLayer::make(int in, int out, RngStream& rng) {
    DenseLayer layer;
    layer.in = in;
    layer.out = out;
    layer.w.resize(static_cast<std::size_t>(in) * out);
    layer.b.assign(out, 0.0);
    double bound = std::sqrt(6.0 / (in + out));
    for (double& v : layer.w) {
        v = rng.next_uniform(-bound, bound);
    }
    return layer;
}

Matrix affine_forward(const Matrix& x, const DenseLayer& layer) {
    if (x.cols != layer.in) {
        throw std::invalid_argument("affine_forward: input width mismatch");
    }
    Matrix y(x.rows, layer.out);
    for (int r = 0; r < x.rows; ++r) {
        std::span<const double> xi = x.row(r);
        std::span<double> yi = y.row(r);
        for (int o = 0; o < layer.out; ++o) {
            const double* wrow = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
            double acc = layer.b[o];
            for (int i = 0; i < layer.in; ++i) {
                acc += wrow[i] * xi[i];
            }
            yi[o] = acc;
        }
    }
    return y;
}

void tanh_inplace(Matrix& m) {
    for (double& v : m.data) {
        v = std::tanh(v);
    }
}

Mlp Mlp::make(std::vector<int> widths, RngStream& rng,
              double last_layer_scale) {
    Mlp net;
    net.widths = std::move(widths);
    std::size_t total = 0;
    for (int l = 0; l + 1 < static_cast<int>(net.widths.size()); ++l) {
        total += static_cast<std::size_t>(net.widths[l]) * net.widths[l + 1] +
                 net.widths[l + 1];
    }
    net.params.resize(total);
    std::size_t off = 0;
    int layers = net.layer_count();
    for (int l = 0; l < layers; ++l) {
        int in = net.widths[l];
        int out = net.widths[l + 1];
        double bound = std::sqrt(6.0 / (in + out));
        if (l == layers - 1) {
            bound *= last_layer_scale;
        }
        for (int k = 0; k < in * out; ++k) {
            net.params[off++] = rng.next_uniform(-bound, bound);
        }
        for (int k = 0; k < out; ++k) {
            net.params[off++] = 0.0;
        }
    }
    return net;
}

std::size_t Mlp::weight_offset(int layer) const {
    std::size_t off = 0;
    for (int l = 0; l < layer; ++l) {
        off += static_cast<std::size_t>(widths[l]) * widths[l + 1] +
               widths[l + 1];
    }
    return off;
}

std::size_t Mlp::bias_offset(int layer) const {
    return weight_offset(layer) +
           static_cast<std::size_t>(widths[layer]) * widths[layer + 1];
}

std::vector<double> Mlp::forward(std::span<const double> x,
                                 Cache* cache) const {
    if (static_cast<int>(x.size()) != input_dim()) {
        throw std::invalid_argument("Mlp::forward: input width mismatch");
    }
    std::vector<double> cur(x.begin(), x.end());
    if (cache) {
        cache->acts.clear();
        cache->acts.push_back(cur);
    }
    int layers = layer_count();
    for (int l = 0; l < layers; ++l) {
        int in = widths[l];
        int out = widths[l + 1];
        const double* w = params.data() + weight_offset(l);
        const double* b = params.data() + bias_offset(l);
        std::vector<double> next(out);
        for (int o = 0; o < out; ++o) {
            double acc = b[o];
            const double* wrow = w + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) {
                acc += wrow[i] * cur[i];
            }
            next[o] = (l + 1 < layers) ? std::tanh(acc) : acc;
        }
        cur = std::move(next);
        if (cache) {
            cache->acts.push_back(cur);
        }
    }
    return cur;
}

std::vector<double> Mlp::backward(const Cache& cache,
                                  std::span<const double> dout,
                                  std::span<double> grad) const {
    int layers = layer_count();
    std::vector<double> delta(dout.begin(), dout.end());
    for (int l = layers - 1; l >= 0; --l) {
        int in = widths[l];
        int out = widths[l + 1];
        const std::vector<double>& a_in = cache.acts[l];
        const std::vector<double>& a_out = cache.acts[l + 1];
        // hidden layers are tanh; fold the activation derivative in
        if (l + 1 < layers) {
            for (int o = 0; o < out; ++o) {
                delta[o] *= 1.0 - a_out[o] * a_out[o];
            }
        }
        double* gw = grad.data() + weight_offset(l);
        double* gb = grad.data() + bias_offset(l);
        const double* w = params.data() + weight_offset(l);
        std::vector<double> dprev(in, 0.0);
        for (int o = 0; o < out; ++o) {
            double d = delta[o];
            gb[o] += d;
            double* gwrow = gw + static_cast<std::size_t>(o) * in;
            const double* wrow = w + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) {
                gwrow[i] += d * a_in[i];
                dprev[i] += d * wrow[i];
            }
        }
        delta = std::move(dprev);
    }
    return delta;
}

double global_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) {
        acc += x * x;
    }
    return std::sqrt(acc);
}

void clip_by_norm(std::span<double> v, double max_norm) {
    double norm = global_norm(v);
    if (norm > max_norm && norm > 0.0) {
        double scale = max_norm / norm;
        for (double& x : v) {
            x *= scale;
        }
    }
}

void soft_update(std::span<double> target, std::span<const double> online,
                 double tau) {
    for (std::size_t i = 0; i < target.size(); ++i) {
        target[i] = (1.0 - tau) * target[i] + tau * online[i];
    }
}

void AdamState::apply(std::span<double> params, std::span<const double> grad,
                      double lr) {
    if (m.size() != params.size()) {
        m.assign(params.size(), 0.0);
        v.assign(params.size(), 0.0);
    }
    ++step;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace tilp
