#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tilp/netphys.hpp"
#include "tilp/nn.hpp"
#include "tilp/rng.hpp"

namespace tilp {

/// Widths of the desk-scale classifier: 16-d inputs, four logits, seven
/// weight layers with tanh on all hidden activations.
std::vector<int> default_layer_widths();

/// The trainable network, kept as an explicit layer stack so it can be cut
/// at any admissible split depth.
struct LayeredModel {
    std::vector<int> layer_widths;
    std::vector<DenseLayer> layers;

    static LayeredModel make(std::vector<int> widths, RngStream& rng);

    int depth() const { return static_cast<int>(layers.size()); }
    int input_dim() const { return layer_widths.front(); }
    int n_classes() const { return layer_widths.back(); }
};

/// Forward through the full stack; returns logits.
Matrix model_forward(const LayeredModel& model, const Matrix& x);

/// Activations cached during a client-side forward pass, acts[0] being the
/// input batch and acts[k] the post-tanh output of prefix layer k.
struct ClientForwardCache {
    std::vector<Matrix> acts;
};

/// Run the client prefix (layers 1..l). Returns the split activation and
/// fills the cache needed for the later backward pass.
Matrix client_forward(const Matrix& x, std::span<const DenseLayer> prefix,
                      ClientForwardCache* cache = nullptr);

/// Which split-activation coordinates survive transmission this round. The
/// same mask is applied to the uplink activation and the downlink gradient.
struct CompressionMask {
    std::vector<std::uint8_t> kept;
    int kept_count = 0;
    double keep_fraction = 1.0;
};

/// Uniformly random mask keeping round((1-q)*width) coordinates.
CompressionMask draw_mask(int width, double q, RngStream& rng);

/// Zero the dropped coordinates and rescale the kept ones by 1/(1-q) so the
/// compressed tensor is an unbiased surrogate for the original. Applying
/// the same operator to the split-layer gradient reproduces the exact
/// gradient of the compressed forward pass, so masked coordinates carry
/// exactly zero gradient flow end to end.
Matrix apply_compression(const Matrix& s, const CompressionMask& mask,
                         double q);

struct CompressResult {
    Matrix payload;
    CompressionMask mask;
};

CompressResult compress(const Matrix& s, double q, RngStream& rng);

/// One scheduled terminal's contribution to a server step.
struct ServerTerminalInput {
    int split_layer = 1;
    const Matrix* activation = nullptr;  // compressed split activation
    const std::vector<int>* labels = nullptr;
    const CompressionMask* mask = nullptr;
    double compression = 0.0;
    double weight = 1.0;  // mini-batch weight among the scheduled set
};

/// Loss and gradients of one terminal's batch through the server tail,
/// evaluated at the current parameters without updating them.
struct TailGradResult {
    double loss = 0.0;
    Matrix dsplit;                      // d(loss)/d(tail input)
    std::vector<DenseLayer> tail_grad;  // gradients for layers l+1..L
};

TailGradResult tail_backward(const LayeredModel& model, int split_layer,
                             const Matrix& s_tilde,
                             const std::vector<int>& labels);

struct ServerStepResult {
    double loss = 0.0;                        // weighted training loss
    std::vector<double> terminal_loss;        // per scheduled terminal
    std::vector<Matrix> split_grads;          // compressed downlink payloads
};

/// Compute every terminal's tail gradient at the pre-update parameters,
/// apply one aggregated SGD step to the server-side layers, and return the
/// per-terminal split-layer gradients compressed with the uplink masks.
/// Throws if a loss turns non-finite.
ServerStepResult server_step(LayeredModel& model,
                             std::span<const ServerTerminalInput> inputs,
                             double lr_server);

struct ClientGradResult {
    std::vector<DenseLayer> prefix_grad;
    double grad_norm = 0.0;
};

/// Backpropagate a received split-layer gradient through the cached prefix
/// activations.
ClientGradResult client_backward(const ClientForwardCache& cache,
                                 std::span<const DenseLayer> prefix,
                                 const Matrix& received_grad);

/// Apply one client-side SGD step in place and return the gradient norm.
/// An unscheduled terminal is left bit-identical and reports 0.
double client_step(const ClientForwardCache& cache,
                   const Matrix& received_grad,
                   std::vector<DenseLayer>& prefix, double lr_client,
                   bool scheduled);

/// Depth-wise federated averaging over heterogeneous prefixes: layer depth
/// d is averaged over the clients whose prefix reaches d, with weights
/// renormalized over that subset, and the owners receive the average back.
/// Returns the averaged layers (up to the deepest prefix) so the caller can
/// sync a canonical model.
std::vector<DenseLayer> fed_average(
    std::vector<std::vector<DenseLayer>>& prefixes,
    std::span<const double> weights);

/// Fraction of episodes whose argmax prediction (ties to the lowest class)
/// matches the label.
double evaluate_success(const LayeredModel& model, const Matrix& inputs,
                        const std::vector<int>& labels);

/// Mean cross-entropy of the model on a labelled set.
double evaluate_loss(const LayeredModel& model, const Matrix& inputs,
                     const std::vector<int>& labels);

/// Payload/workload/memory tables per admissible split depth. A sample's
/// activation costs width*8*bytes_per_element*payload_scale bits; the
/// workload is the cumulative MAC count of the prefix; memory covers prefix
/// parameters (plain-SGD optimizer, multiplier one) plus the cached
/// activations of one batch.
PayloadGeometry build_geometry(std::span<const int> layer_widths,
                               std::span<const int> split_set, int batch,
                               double payload_scale,
                               double bytes_per_element = 4.0);

/// Default desk-scale payload multiplier; keeps split-activation payloads
/// in the megabit range so transmission time competes with the deadline.
inline constexpr double kDefaultPayloadScale = 5.0e4;

/// Per-terminal training shards plus a held-out evaluation set.
struct ShardedData {
    std::vector<Matrix> shard_inputs;
    std::vector<std::vector<int>> shard_labels;
    Matrix eval_inputs;
    std::vector<int> eval_labels;
};

/// Gaussian-mixture classification data: class means sit on a scaled
/// simplex, shards are non-IID via Dirichlet(0.5) class proportions, and
/// the evaluation set is class-balanced.
ShardedData make_sharded_data(int n_terminals, int per_terminal,
                              int eval_size, int input_dim, int n_classes,
                              RngStream& rng);

bool dump_dataset_csv(const std::string& path, const Matrix& inputs,
                      const std::vector<int>& labels);
bool load_dataset_csv(const std::string& path, Matrix& inputs,
                      std::vector<int>& labels);

}  // namespace tilp
