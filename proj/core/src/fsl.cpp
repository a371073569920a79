#include "tilp/fsl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tilp {
namespace {

// softmax cross-entropy over one logit row, numerically stabilized
double row_cross_entropy(std::span<const double> logits, int label,
                         std::span<double> dlogits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double v : logits) {
        denom += std::exp(v - mx);
    }
    double log_denom = std::log(denom);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        double p = std::exp(logits[i] - mx) / denom;
        dlogits[i] = p;
    }
    dlogits[label] -= 1.0;
    return log_denom - (logits[label] - mx);
}

void accumulate_layer_grad(const Matrix& delta, const Matrix& input,
                           DenseLayer& grad) {
    for (int r = 0; r < delta.rows; ++r) {
        std::span<const double> d = delta.row(r);
        std::span<const double> x = input.row(r);
        for (int o = 0; o < grad.out; ++o) {
            grad.b[o] += d[o];
            double* wrow = grad.w.data() + static_cast<std::size_t>(o) * grad.in;
            for (int i = 0; i < grad.in; ++i) {
                wrow[i] += d[o] * x[i];
            }
        }
    }
}

Matrix backprop_through_layer(const Matrix& delta, const DenseLayer& layer) {
    Matrix dprev(delta.rows, layer.in);
    for (int r = 0; r < delta.rows; ++r) {
        std::span<const double> d = delta.row(r);
        std::span<double> dp = dprev.row(r);
        for (int o = 0; o < layer.out; ++o) {
            const double* wrow = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
            for (int i = 0; i < layer.in; ++i) {
                dp[i] += d[o] * wrow[i];
            }
        }
    }
    return dprev;
}

DenseLayer zeros_like(const DenseLayer& layer) {
    DenseLayer g;
    g.in = layer.in;
    g.out = layer.out;
    g.w.assign(layer.w.size(), 0.0);
    g.b.assign(layer.b.size(), 0.0);
    return g;
}

}  // namespace

std::vector<int> default_layer_widths() {
    return {16, 32, 32, 24, 24, 16, 16, 4};
}

LayeredModel LayeredModel::make(std::vector<int> widths, RngStream& rng) {
    LayeredModel model;
    model.layer_widths = std::move(widths);
    for (std::size_t l = 0; l + 1 < model.layer_widths.size(); ++l) {
        model.layers.push_back(DenseLayer::make(model.layer_widths[l],
                                                model.layer_widths[l + 1],
                                                rng));
    }
    return model;
}

Matrix model_forward(const LayeredModel& model, const Matrix& x) {
    Matrix cur = x;
    for (int l = 0; l < model.depth(); ++l) {
        cur = affine_forward(cur, model.layers[l]);
        if (l + 1 < model.depth()) {
            tanh_inplace(cur);
        }
    }
    return cur;
}

Matrix client_forward(const Matrix& x, std::span<const DenseLayer> prefix,
                      ClientForwardCache* cache) {
    if (!prefix.empty() && x.cols != prefix.front().in) {
        throw std::invalid_argument("client_forward: input width mismatch");
    }
    Matrix cur = x;
    if (cache) {
        cache->acts.clear();
        cache->acts.push_back(cur);
    }
    for (const DenseLayer& layer : prefix) {
        cur = affine_forward(cur, layer);
        tanh_inplace(cur);  // split layers are always hidden layers
        if (cache) {
            cache->acts.push_back(cur);
        }
    }
    return cur;
}

CompressionMask draw_mask(int width, double q, RngStream& rng) {
    CompressionMask mask;
    mask.keep_fraction = 1.0 - q;
    mask.kept_count =
        static_cast<int>(std::lround(mask.keep_fraction * width));
    mask.kept_count = std::clamp(mask.kept_count, 0, width);
    mask.kept.assign(width, 0);
    // partial Fisher-Yates over coordinate indices
    std::vector<int> idx(width);
    for (int i = 0; i < width; ++i) {
        idx[i] = i;
    }
    for (int k = 0; k < mask.kept_count; ++k) {
        int j = k + static_cast<int>(rng.next_below(width - k));
        std::swap(idx[k], idx[j]);
        mask.kept[idx[k]] = 1;
    }
    return mask;
}

Matrix apply_compression(const Matrix& s, const CompressionMask& mask,
                         double q) {
    Matrix out(s.rows, s.cols);
    if (mask.kept_count == 0) {
        return out;
    }
    double scale = 1.0 / (1.0 - q);
    for (int r = 0; r < s.rows; ++r) {
        std::span<const double> in = s.row(r);
        std::span<double> o = out.row(r);
        for (int c = 0; c < s.cols; ++c) {
            o[c] = mask.kept[c] ? in[c] * scale : 0.0;
        }
    }
    return out;
}

CompressResult compress(const Matrix& s, double q, RngStream& rng) {
    CompressResult res;
    res.mask = draw_mask(s.cols, q, rng);
    res.payload = apply_compression(s, res.mask, q);
    return res;
}

TailGradResult tail_backward(const LayeredModel& model, int split_layer,
                             const Matrix& s_tilde,
                             const std::vector<int>& labels) {
    int depth = model.depth();
    if (split_layer < 1 || split_layer >= depth) {
        throw std::invalid_argument("tail_backward: bad split layer");
    }
    // forward through layers split_layer+1 .. L, caching activations
    std::vector<Matrix> acts;
    acts.push_back(s_tilde);
    for (int l = split_layer; l < depth; ++l) {
        Matrix next = affine_forward(acts.back(), model.layers[l]);
        if (l + 1 < depth) {
            tanh_inplace(next);
        }
        acts.push_back(std::move(next));
    }
    const Matrix& logits = acts.back();
    int batch = logits.rows;

    TailGradResult res;
    Matrix delta(batch, logits.cols);
    double loss = 0.0;
    if (batch > 0) {
        for (int r = 0; r < batch; ++r) {
            loss += row_cross_entropy(logits.row(r), labels[r], delta.row(r));
        }
        loss /= batch;
        for (double& v : delta.data) {
            v /= batch;
        }
    }
    res.loss = loss;
    if (!std::isfinite(loss)) {
        throw std::runtime_error("tail_backward: non-finite loss");
    }

    for (int l = depth - 1; l >= split_layer; --l) {
        int ai = l - split_layer;  // index into acts of this layer's input
        if (l + 1 < depth) {
            const Matrix& a_out = acts[ai + 1];
            for (std::size_t k = 0; k < delta.data.size(); ++k) {
                delta.data[k] *= 1.0 - a_out.data[k] * a_out.data[k];
            }
        }
        DenseLayer g = zeros_like(model.layers[l]);
        accumulate_layer_grad(delta, acts[ai], g);
        res.tail_grad.insert(res.tail_grad.begin(), std::move(g));
        delta = backprop_through_layer(delta, model.layers[l]);
    }
    res.dsplit = std::move(delta);
    return res;
}

ServerStepResult server_step(LayeredModel& model,
                             std::span<const ServerTerminalInput> inputs,
                             double lr_server) {
    if (inputs.empty()) {
        throw std::invalid_argument("server_step: empty scheduled set");
    }
    ServerStepResult res;
    // aggregate weighted tail gradients at the pre-update parameters
    std::vector<DenseLayer> agg(model.depth());
    std::vector<bool> touched(model.depth(), false);
    for (const ServerTerminalInput& in : inputs) {
        TailGradResult tg =
            tail_backward(model, in.split_layer, *in.activation, *in.labels);
        res.terminal_loss.push_back(tg.loss);
        res.loss += in.weight * tg.loss;
        for (int l = in.split_layer; l < model.depth(); ++l) {
            DenseLayer& g = tg.tail_grad[l - in.split_layer];
            if (!touched[l]) {
                agg[l] = zeros_like(model.layers[l]);
                touched[l] = true;
            }
            for (std::size_t k = 0; k < g.w.size(); ++k) {
                agg[l].w[k] += in.weight * g.w[k];
            }
            for (std::size_t k = 0; k < g.b.size(); ++k) {
                agg[l].b[k] += in.weight * g.b[k];
            }
        }
        res.split_grads.push_back(
            apply_compression(tg.dsplit, *in.mask, in.compression));
    }
    if (!std::isfinite(res.loss)) {
        throw std::runtime_error("server_step: non-finite training loss");
    }
    for (int l = 0; l < model.depth(); ++l) {
        if (!touched[l]) {
            continue;
        }
        for (std::size_t k = 0; k < agg[l].w.size(); ++k) {
            model.layers[l].w[k] -= lr_server * agg[l].w[k];
        }
        for (std::size_t k = 0; k < agg[l].b.size(); ++k) {
            model.layers[l].b[k] -= lr_server * agg[l].b[k];
        }
    }
    return res;
}

ClientGradResult client_backward(const ClientForwardCache& cache,
                                 std::span<const DenseLayer> prefix,
                                 const Matrix& received_grad) {
    ClientGradResult res;
    res.prefix_grad.resize(prefix.size());
    Matrix delta = received_grad;
    for (int l = static_cast<int>(prefix.size()) - 1; l >= 0; --l) {
        const Matrix& a_out = cache.acts[l + 1];
        for (std::size_t k = 0; k < delta.data.size(); ++k) {
            delta.data[k] *= 1.0 - a_out.data[k] * a_out.data[k];
        }
        res.prefix_grad[l] = zeros_like(prefix[l]);
        accumulate_layer_grad(delta, cache.acts[l], res.prefix_grad[l]);
        if (l > 0) {
            delta = backprop_through_layer(delta, prefix[l]);
        }
    }
    double sq = 0.0;
    for (const DenseLayer& g : res.prefix_grad) {
        for (double v : g.w) {
            sq += v * v;
        }
        for (double v : g.b) {
            sq += v * v;
        }
    }
    res.grad_norm = std::sqrt(sq);
    return res;
}

double client_step(const ClientForwardCache& cache,
                   const Matrix& received_grad,
                   std::vector<DenseLayer>& prefix, double lr_client,
                   bool scheduled) {
    if (!scheduled) {
        return 0.0;
    }
    ClientGradResult g = client_backward(cache, prefix, received_grad);
    for (std::size_t l = 0; l < prefix.size(); ++l) {
        for (std::size_t k = 0; k < prefix[l].w.size(); ++k) {
            prefix[l].w[k] -= lr_client * g.prefix_grad[l].w[k];
        }
        for (std::size_t k = 0; k < prefix[l].b.size(); ++k) {
            prefix[l].b[k] -= lr_client * g.prefix_grad[l].b[k];
        }
    }
    return g.grad_norm;
}

std::vector<DenseLayer> fed_average(
    std::vector<std::vector<DenseLayer>>& prefixes,
    std::span<const double> weights) {
    std::size_t max_depth = 0;
    for (const auto& p : prefixes) {
        max_depth = std::max(max_depth, p.size());
    }
    std::vector<DenseLayer> averaged;
    for (std::size_t d = 0; d < max_depth; ++d) {
        double wsum = 0.0;
        int owners = 0;
        for (std::size_t c = 0; c < prefixes.size(); ++c) {
            if (prefixes[c].size() > d) {
                wsum += weights[c];
                ++owners;
            }
        }
        DenseLayer avg;
        bool first = true;
        for (std::size_t c = 0; c < prefixes.size(); ++c) {
            if (prefixes[c].size() <= d) {
                continue;
            }
            double w = wsum > 0.0 ? weights[c] / wsum : 1.0 / owners;
            if (first) {
                avg = zeros_like(prefixes[c][d]);
                first = false;
            }
            for (std::size_t k = 0; k < avg.w.size(); ++k) {
                avg.w[k] += w * prefixes[c][d].w[k];
            }
            for (std::size_t k = 0; k < avg.b.size(); ++k) {
                avg.b[k] += w * prefixes[c][d].b[k];
            }
        }
        for (std::size_t c = 0; c < prefixes.size(); ++c) {
            if (prefixes[c].size() > d) {
                prefixes[c][d] = avg;
            }
        }
        averaged.push_back(std::move(avg));
    }
    return averaged;
}

double evaluate_success(const LayeredModel& model, const Matrix& inputs,
                        const std::vector<int>& labels) {
    if (inputs.rows == 0) {
        throw std::invalid_argument("evaluate_success: empty evaluation set");
    }
    Matrix logits = model_forward(model, inputs);
    int hits = 0;
    for (int r = 0; r < logits.rows; ++r) {
        std::span<const double> row = logits.row(r);
        int best = 0;
        for (int c = 1; c < logits.cols; ++c) {
            if (row[c] > row[best]) {
                best = c;  // ties keep the lowest class index
            }
        }
        hits += best == labels[r] ? 1 : 0;
    }
    return static_cast<double>(hits) / inputs.rows;
}

double evaluate_loss(const LayeredModel& model, const Matrix& inputs,
                     const std::vector<int>& labels) {
    Matrix logits = model_forward(model, inputs);
    std::vector<double> scratch(logits.cols);
    double loss = 0.0;
    for (int r = 0; r < logits.rows; ++r) {
        loss += row_cross_entropy(logits.row(r), labels[r], scratch);
    }
    return logits.rows > 0 ? loss / logits.rows : 0.0;
}

PayloadGeometry build_geometry(std::span<const int> layer_widths,
                               std::span<const int> split_set, int batch,
                               double payload_scale,
                               double bytes_per_element) {
    if (payload_scale <= 0.0) {
        throw std::invalid_argument("build_geometry: payload_scale must be > 0");
    }
    PayloadGeometry geom;
    geom.split_layers.assign(split_set.begin(), split_set.end());
    double bits_per_element = bytes_per_element * 8.0;
    for (int l : split_set) {
        double macs = 0.0;
        double param_count = 0.0;
        double act_count = 0.0;
        for (int j = 1; j <= l; ++j) {
            macs += static_cast<double>(layer_widths[j - 1]) * layer_widths[j];
            param_count +=
                static_cast<double>(layer_widths[j - 1] + 1) * layer_widths[j];
            act_count += static_cast<double>(layer_widths[j]);
        }
        geom.act_bits_per_sample.push_back(
            static_cast<double>(layer_widths[l]) * bits_per_element *
            payload_scale);
        geom.macs_per_sample.push_back(macs);
        geom.mem_bytes.push_back(
            param_count * bytes_per_element * payload_scale +
            static_cast<double>(batch) * act_count * bytes_per_element *
                payload_scale);
    }
    return geom;
}

ShardedData make_sharded_data(int n_terminals, int per_terminal,
                              int eval_size, int input_dim, int n_classes,
                              RngStream& rng) {
    // class means: scaled simplex over the first n_classes coordinates;
    // the separation leaves headroom between chance and a clean ceiling so
    // gradient quality and data coverage show up in the success rate
    const double scale = 2.0;
    std::vector<std::vector<double>> means(
        n_classes, std::vector<double>(input_dim, 0.0));
    for (int c = 0; c < n_classes; ++c) {
        for (int j = 0; j < n_classes; ++j) {
            means[c][j] = scale * ((j == c ? 1.0 : 0.0) - 1.0 / n_classes);
        }
    }
    auto draw_sample = [&](int cls, RngStream& r, std::span<double> out) {
        for (int j = 0; j < input_dim; ++j) {
            out[j] = means[cls][j] + r.next_normal();
        }
    };

    ShardedData data;
    for (int n = 0; n < n_terminals; ++n) {
        RngStream shard_rng = rng.fork(static_cast<std::uint64_t>(n) + 1);
        // Dirichlet(0.5) class proportions via gamma draws
        std::vector<double> props(n_classes);
        double total = 0.0;
        for (int c = 0; c < n_classes; ++c) {
            double z = shard_rng.next_normal();
            props[c] = 0.5 * z * z + 1e-12;
            total += props[c];
        }
        for (double& p : props) {
            p /= total;
        }
        Matrix inputs(per_terminal, input_dim);
        std::vector<int> labels(per_terminal);
        for (int i = 0; i < per_terminal; ++i) {
            double u = shard_rng.next_double();
            int cls = n_classes - 1;
            double acc = 0.0;
            for (int c = 0; c < n_classes; ++c) {
                acc += props[c];
                if (u < acc) {
                    cls = c;
                    break;
                }
            }
            labels[i] = cls;
            draw_sample(cls, shard_rng, inputs.row(i));
        }
        data.shard_inputs.push_back(std::move(inputs));
        data.shard_labels.push_back(std::move(labels));
    }

    RngStream eval_rng = rng.fork(0);
    data.eval_inputs = Matrix(eval_size, input_dim);
    data.eval_labels.resize(eval_size);
    for (int i = 0; i < eval_size; ++i) {
        int cls = i % n_classes;  // balanced classes
        data.eval_labels[i] = cls;
        draw_sample(cls, eval_rng, data.eval_inputs.row(i));
    }
    return data;
}

bool dump_dataset_csv(const std::string& path, const Matrix& inputs,
                      const std::vector<int>& labels) {
    std::ofstream out(path);
    if (!out) {
        return false;
    }
    char buf[64];
    for (int r = 0; r < inputs.rows; ++r) {
        std::span<const double> row = inputs.row(r);
        for (int c = 0; c < inputs.cols; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", row[c]);
            out << buf << ",";
        }
        out << labels[r] << "\n";
    }
    return static_cast<bool>(out);
}

bool load_dataset_csv(const std::string& path, Matrix& inputs,
                      std::vector<int>& labels) {
    std::ifstream in(path);
    if (!in) {
        return false;
    }
    std::vector<std::vector<double>> rows;
    labels.clear();
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string tok;
        std::vector<double> vals;
        while (std::getline(ss, tok, ',')) {
            vals.push_back(std::strtod(tok.c_str(), nullptr));
        }
        if (vals.empty()) {
            return false;
        }
        labels.push_back(static_cast<int>(vals.back()));
        vals.pop_back();
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) {
        inputs = Matrix();
        return true;
    }
    inputs = Matrix(static_cast<int>(rows.size()),
                    static_cast<int>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy(rows[r].begin(), rows[r].end(), inputs.row(static_cast<int>(r)).begin());
    }
    return true;
}

}  // namespace tilp
