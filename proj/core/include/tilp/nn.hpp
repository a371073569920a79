#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tilp/rng.hpp"

namespace tilp {

/// Dense row-major matrix of doubles.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const double> row(int r) const { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
};

/// One fully-connected layer, weights stored row-major out x in.
struct DenseLayer {
    int in = 0;
    int out = 0;
    std::vector<double> w;
    std::vector<double> b;

    static DenseLayer make(int in, int out, RngStream& rng);
    std::size_t param_count() const { return w.size() + b.size(); }
};

/// y = W x + b for a batch (rows are samples).
Matrix affine_forward(const Matrix& x, const DenseLayer& layer);
void tanh_inplace(Matrix& m);

/// Plain multi-layer perceptron over flat parameter storage: tanh hidden
/// activations, identity output. The flat layout (W1, b1, W2, b2, ...)
/// makes finite-difference probing, gradient clipping and soft updates a
/// single-vector affair.
struct Mlp {
    std::vector<int> widths;     // layer sizes, including input and output
    std::vector<double> params;  // flat parameter vector

    static Mlp make(std::vector<int> widths, RngStream& rng,
                    double last_layer_scale = 1.0);

    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }
    std::size_t param_count() const { return params.size(); }
    int layer_count() const { return static_cast<int>(widths.size()) - 1; }

    /// Offset of layer l's weight block in the flat vector.
    std::size_t weight_offset(int layer) const;
    std::size_t bias_offset(int layer) const;

    struct Cache {
        std::vector<std::vector<double>> acts;  // acts[0] = input, post-tanh
    };

    std::vector<double> forward(std::span<const double> x,
                                Cache* cache = nullptr) const;

    /// Backpropagate dL/dout; accumulates parameter gradients into grad
    /// (same layout as params) and returns dL/dinput.
    std::vector<double> backward(const Cache& cache,
                                 std::span<const double> dout,
                                 std::span<double> grad) const;
};

double global_norm(std::span<const double> v);

/// Scale v so its global norm does not exceed max_norm.
void clip_by_norm(std::span<double> v, double max_norm);

/// target <- (1 - tau) * target + tau * online, element-wise.
void soft_update(std::span<double> target, std::span<const double> online,
                 double tau);

/// Adam optimizer state over one flat parameter vector.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void apply(std::span<double> params, std::span<const double> grad,
               double lr);
};

}  // namespace tilp
