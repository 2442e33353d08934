#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "s2fl/matrix.hpp"
#include "s2fl/rng.hpp"

namespace s2fl {

// Simulated wire format: parameters, features and labels travel as 32-bit
// values regardless of the double-precision arithmetic used internally.
inline constexpr long long kBytesPerReal = 4;
inline constexpr long long kBytesPerLabel = 4;

// softmax_output marks the classification head; the layer itself emits raw
// logits and the softmax is folded into cross_entropy_loss for stability.
enum class Activation { identity, relu, softmax_output };

struct Layer {
  Matrix weight;             // out_dim x in_dim
  std::vector<double> bias;  // out_dim
  Activation act = Activation::identity;

  int in_dim() const { return weight.cols; }
  int out_dim() const { return weight.rows; }
  long long param_count() const {
    return static_cast<long long>(weight.rows) * weight.cols + weight.rows;
  }
};

// Training FLOPs for one sample through one dense layer: forward multiply-add
// (2*in*out) plus bias add (out); backward weight gradient and input gradient
// (4*in*out) plus bias gradient (out). Documented so simulated times are
// reproducible bit-exactly.
long long layer_flops_per_sample(const Layer& layer);

long long param_count(const std::vector<Layer>& layers);

// A contiguous run of layers cut out of a full model. entry_index is the
// 0-based position of layers[0] within the originating model; a client portion
// always has entry_index 0, a server portion starts at the split index.
struct ModelPortion {
  std::vector<Layer> layers;
  int entry_index = 0;

  int size() const { return static_cast<int>(layers.size()); }
  bool empty() const { return layers.empty(); }
  int exit_index() const { return entry_index + size() - 1; }
  int input_dim() const { return layers.front().in_dim(); }
  int output_dim() const { return layers.back().out_dim(); }
  long long param_bytes() const { return kBytesPerReal * param_count(layers); }
  long long flops_per_sample() const;
};

struct FullModel {
  std::vector<Layer> layers;
  std::vector<int> split_candidates;  // strictly increasing, each in [1, L-1]

  int num_layers() const { return static_cast<int>(layers.size()); }
  int input_dim() const { return layers.front().in_dim(); }
  int output_dim() const { return layers.back().out_dim(); }
  long long param_bytes() const { return kBytesPerReal * param_count(layers); }
  long long flops_per_sample() const;
};

struct Batch {
  Matrix inputs;           // batch x dim
  std::vector<int> labels; // class index per row
};

// Features a client uploads after running its portion: activations at the
// split boundary plus the batch labels. entry_index names the first server
// layer these features feed into.
struct FeaturePacket {
  int client_id = 0;
  Matrix features;  // batch x q
  std::vector<int> labels;
  int entry_index = 0;
};

// Throws if the layer chain is dimensionally inconsistent, a softmax head
// appears anywhere but last, or the candidate list is out of range.
void validate_model(const FullModel& model);

// Fresh model with relu hidden layers and a softmax head. Weights and biases
// are drawn uniform in [-1/sqrt(in_dim), +1/sqrt(in_dim)] from rng, layer by
// layer, weights in row-major order before the bias. An empty candidate list
// selects every interior boundary 1..L-1.
FullModel make_dense_model(int input_dim, const std::vector<int>& hidden_dims,
                           int n_classes, std::vector<int> split_candidates, Rng& rng);

// Cut after the first `split_index` layers; requires membership in
// model.split_candidates (invalid-split error otherwise).
std::pair<ModelPortion, ModelPortion> split_model(const FullModel& model, int split_index);

// Same cut without the candidate check; 0 <= split_index <= L is allowed, so
// either side may be empty (an empty client portion passes inputs through
// unchanged). Used internally where degenerate cuts are meaningful.
std::pair<ModelPortion, ModelPortion> split_at(const FullModel& model, int split_index);

FullModel merge_portions(const ModelPortion& client, const ModelPortion& server,
                         std::vector<int> split_candidates);

// Activation record from a forward pass: inputs[k] and preacts[k] belong to
// the k-th layer of the span that was run; outputs is the final activation
// (equal to inputs for an empty span).
struct ForwardCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> preacts;
  Matrix outputs;
};

// Run layers[begin..end) on `inputs`. Shape mismatches raise a shape error
// naming the offending layer.
ForwardCache forward_span(const std::vector<Layer>& layers, int begin, const Matrix& inputs);

inline ForwardCache forward_portion(const ModelPortion& portion, const Matrix& inputs) {
  return forward_span(portion.layers, 0, inputs);
}

// Parameter gradients aligned with a layer vector; entries for layers outside
// the traversed span stay zero.
struct PortionGradients {
  std::vector<Matrix> dweight;
  std::vector<std::vector<double>> dbias;
};

PortionGradients zero_gradients(const std::vector<Layer>& layers);

// Backpropagate scale*upstream_grad through layers[begin..end), adding the
// parameter gradients into grads and returning the gradient with respect to
// the span's inputs. Parameters are not modified, so the returned input
// gradient is taken at the pre-update weights.
Matrix backward_span(const std::vector<Layer>& layers, int begin, const ForwardCache& cache,
                     const Matrix& upstream_grad, double scale, PortionGradients& grads);

inline Matrix backward_accumulate(const ModelPortion& portion, const ForwardCache& cache,
                                  const Matrix& upstream_grad, double scale,
                                  PortionGradients& grads) {
  return backward_span(portion.layers, 0, cache, upstream_grad, scale, grads);
}

// w <- w - lr*(g + l2*w), biases included in the regularizer.
void apply_sgd(ModelPortion& portion, const PortionGradients& grads, double lr, double l2 = 0.0);

// Accumulate-then-apply in one call: the single-client training step. Returns
// the input gradient (the feature gradient when `portion` is a server side).
Matrix backward_portion(ModelPortion& portion, const ForwardCache& cache,
                        const Matrix& upstream_grad, double lr, double l2 = 0.0);

struct LossGrad {
  double loss = 0.0;
  Matrix dlogits;  // (softmax - onehot) / batch
};

// Mean negative log softmax probability of the true class. Empty batches and
// out-of-range labels raise a domain error.
LossGrad cross_entropy_loss(const Matrix& logits, const std::vector<int>& labels);

}  // namespace s2fl
