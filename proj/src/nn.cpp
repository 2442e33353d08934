#include "s2fl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "s2fl/errors.hpp"

namespace s2fl {

namespace {

std::string dims(const Matrix& m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

}  // namespace

long long layer_flops_per_sample(const Layer& layer) {
  const long long in = layer.in_dim();
  const long long out = layer.out_dim();
  return 6 * in * out + 2 * out;
}

long long param_count(const std::vector<Layer>& layers) {
  long long n = 0;
  for (const Layer& l : layers) n += l.param_count();
  return n;
}

long long ModelPortion::flops_per_sample() const {
  long long f = 0;
  for (const Layer& l : layers) f += layer_flops_per_sample(l);
  return f;
}

long long FullModel::flops_per_sample() const {
  long long f = 0;
  for (const Layer& l : layers) f += layer_flops_per_sample(l);
  return f;
}

void validate_model(const FullModel& model) {
  const int L = model.num_layers();
  if (L == 0) throw ShapeError("model has no layers");
  for (int k = 0; k < L; ++k) {
    const Layer& l = model.layers[k];
    if (l.weight.rows <= 0 || l.weight.cols <= 0) {
      throw ShapeError("layer " + std::to_string(k) + ": empty weight matrix");
    }
    if (static_cast<int>(l.bias.size()) != l.out_dim()) {
      throw ShapeError("layer " + std::to_string(k) + ": bias length " +
                       std::to_string(l.bias.size()) + " != out_dim " +
                       std::to_string(l.out_dim()));
    }
    if (k + 1 < L && l.out_dim() != model.layers[k + 1].in_dim()) {
      throw ShapeError("layer " + std::to_string(k) + ": out_dim " +
                       std::to_string(l.out_dim()) + " does not chain into layer " +
                       std::to_string(k + 1));
    }
    if (l.act == Activation::softmax_output && k + 1 != L) {
      throw ShapeError("layer " + std::to_string(k) +
                       ": softmax head allowed only as the final layer");
    }
  }
  int prev = 0;
  for (int c : model.split_candidates) {
    if (c < 1 || c > L - 1) {
      throw InvalidSplitError("split candidate " + std::to_string(c) +
                              " outside [1, " + std::to_string(L - 1) + "]");
    }
    if (c <= prev) throw InvalidSplitError("split candidates must be strictly increasing");
    prev = c;
  }
}

FullModel make_dense_model(int input_dim, const std::vector<int>& hidden_dims,
                           int n_classes, std::vector<int> split_candidates, Rng& rng) {
  if (input_dim <= 0 || n_classes <= 0) throw DomainError("model dims must be positive");
  std::vector<int> widths;
  widths.push_back(input_dim);
  for (int h : hidden_dims) widths.push_back(h);
  widths.push_back(n_classes);

  FullModel model;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const int in = widths[k];
    const int out = widths[k + 1];
    Layer layer;
    layer.weight = Matrix(out, in);
    layer.bias.assign(out, 0.0);
    layer.act = (k + 2 == widths.size()) ? Activation::softmax_output : Activation::relu;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
    }
    for (int r = 0; r < out; ++r) layer.bias[r] = rng.uniform(-bound, bound);
    model.layers.push_back(std::move(layer));
  }
  if (split_candidates.empty()) {
    for (int s = 1; s < model.num_layers(); ++s) split_candidates.push_back(s);
  }
  model.split_candidates = std::move(split_candidates);
  validate_model(model);
  return model;
}

std::pair<ModelPortion, ModelPortion> split_at(const FullModel& model, int split_index) {
  const int L = model.num_layers();
  if (split_index < 0 || split_index > L) {
    throw InvalidSplitError("split index " + std::to_string(split_index) +
                            " outside [0, " + std::to_string(L) + "]");
  }
  ModelPortion client;
  client.entry_index = 0;
  client.layers.assign(model.layers.begin(), model.layers.begin() + split_index);
  ModelPortion server;
  server.entry_index = split_index;
  server.layers.assign(model.layers.begin() + split_index, model.layers.end());
  return {std::move(client), std::move(server)};
}

std::pair<ModelPortion, ModelPortion> split_model(const FullModel& model, int split_index) {
  const auto& cands = model.split_candidates;
  if (std::find(cands.begin(), cands.end(), split_index) == cands.end()) {
    std::string list;
    for (int c : cands) list += (list.empty() ? "" : ",") + std::to_string(c);
    throw InvalidSplitError("split index " + std::to_string(split_index) +
                            " is not a candidate (candidates: " + list + ")");
  }
  return split_at(model, split_index);
}

FullModel merge_portions(const ModelPortion& client, const ModelPortion& server,
                         std::vector<int> split_candidates) {
  if (client.entry_index != 0) throw ShapeError("client portion must start at layer 0");
  if (server.entry_index != client.size()) {
    throw ShapeError("server portion starts at layer " + std::to_string(server.entry_index) +
                     " but the client portion ends at layer " + std::to_string(client.size() - 1));
  }
  FullModel model;
  model.layers = client.layers;
  model.layers.insert(model.layers.end(), server.layers.begin(), server.layers.end());
  model.split_candidates = std::move(split_candidates);
  validate_model(model);
  return model;
}

ForwardCache forward_span(const std::vector<Layer>& layers, int begin, const Matrix& inputs) {
  ForwardCache cache;
  cache.outputs = inputs;
  for (std::size_t k = begin; k < layers.size(); ++k) {
    const Layer& layer = layers[k];
    const Matrix& x = cache.outputs;
    if (x.cols != layer.in_dim()) {
      throw ShapeError("layer " + std::to_string(k) + ": input width " + dims(x) +
                       " does not match in_dim " + std::to_string(layer.in_dim()));
    }
    Matrix z(x.rows, layer.out_dim());
    for (int b = 0; b < x.rows; ++b) {
      for (int o = 0; o < layer.out_dim(); ++o) {
        double acc = layer.bias[o];
        for (int i = 0; i < layer.in_dim(); ++i) acc += layer.weight(o, i) * x(b, i);
        z(b, o) = acc;
      }
    }
    cache.inputs.push_back(x);
    Matrix a = z;
    if (layer.act == Activation::relu) {
      for (double& v : a.data) v = v > 0.0 ? v : 0.0;
    }
    cache.preacts.push_back(std::move(z));
    cache.outputs = std::move(a);
  }
  return cache;
}

PortionGradients zero_gradients(const std::vector<Layer>& layers) {
  PortionGradients g;
  for (const Layer& l : layers) {
    g.dweight.emplace_back(l.out_dim(), l.in_dim());
    g.dbias.emplace_back(l.out_dim(), 0.0);
  }
  return g;
}

Matrix backward_span(const std::vector<Layer>& layers, int begin, const ForwardCache& cache,
                     const Matrix& upstream_grad, double scale, PortionGradients& grads) {
  const int span = static_cast<int>(layers.size()) - begin;
  if (static_cast<int>(cache.inputs.size()) != span) {
    throw ShapeError("cache covers " + std::to_string(cache.inputs.size()) +
                     " layers but the span has " + std::to_string(span));
  }
  Matrix delta = upstream_grad;
  for (double& v : delta.data) v *= scale;
  for (int k = span - 1; k >= 0; --k) {
    const Layer& layer = layers[begin + k];
    const Matrix& x = cache.inputs[k];
    const Matrix& z = cache.preacts[k];
    if (delta.rows != z.rows || delta.cols != z.cols) {
      throw ShapeError("layer " + std::to_string(begin + k) + ": upstream gradient " +
                       dims(delta) + " does not match output " + dims(z));
    }
    if (layer.act == Activation::relu) {
      for (std::size_t i = 0; i < delta.data.size(); ++i) {
        if (z.data[i] <= 0.0) delta.data[i] = 0.0;
      }
    }
    Matrix& dw = grads.dweight[begin + k];
    std::vector<double>& db = grads.dbias[begin + k];
    for (int b = 0; b < delta.rows; ++b) {
      for (int o = 0; o < layer.out_dim(); ++o) {
        const double d = delta(b, o);
        db[o] += d;
        for (int i = 0; i < layer.in_dim(); ++i) dw(o, i) += d * x(b, i);
      }
    }
    Matrix prev(delta.rows, layer.in_dim());
    for (int b = 0; b < delta.rows; ++b) {
      for (int i = 0; i < layer.in_dim(); ++i) {
        double acc = 0.0;
        for (int o = 0; o < layer.out_dim(); ++o) acc += delta(b, o) * layer.weight(o, i);
        prev(b, i) = acc;
      }
    }
    delta = std::move(prev);
  }
  return delta;
}

void apply_sgd(ModelPortion& portion, const PortionGradients& grads, double lr, double l2) {
  if (grads.dweight.size() != portion.layers.size()) {
    throw ShapeError("gradient count does not match layer count");
  }
  for (std::size_t k = 0; k < portion.layers.size(); ++k) {
    Layer& layer = portion.layers[k];
    const Matrix& dw = grads.dweight[k];
    if (!dw.same_shape(layer.weight)) {
      throw ShapeError("layer " + std::to_string(portion.entry_index + static_cast<int>(k)) +
                       ": gradient shape " + dims(dw) + " != weight shape " + dims(layer.weight));
    }
    for (std::size_t i = 0; i < layer.weight.data.size(); ++i) {
      layer.weight.data[i] -= lr * (dw.data[i] + l2 * layer.weight.data[i]);
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      layer.bias[i] -= lr * (grads.dbias[k][i] + l2 * layer.bias[i]);
    }
  }
}

Matrix backward_portion(ModelPortion& portion, const ForwardCache& cache,
                        const Matrix& upstream_grad, double lr, double l2) {
  PortionGradients grads = zero_gradients(portion.layers);
  Matrix input_grad = backward_span(portion.layers, 0, cache, upstream_grad, 1.0, grads);
  apply_sgd(portion, grads, lr, l2);
  return input_grad;
}

LossGrad cross_entropy_loss(const Matrix& logits, const std::vector<int>& labels) {
  if (logits.rows == 0) throw DomainError("cross_entropy_loss: empty batch");
  if (logits.rows != static_cast<int>(labels.size())) {
    throw DomainError("cross_entropy_loss: " + std::to_string(logits.rows) + " rows but " +
                      std::to_string(labels.size()) + " labels");
  }
  LossGrad out;
  out.dlogits = Matrix(logits.rows, logits.cols);
  const double inv_batch = 1.0 / logits.rows;
  double total = 0.0;
  for (int b = 0; b < logits.rows; ++b) {
    const int label = labels[b];
    if (label < 0 || label >= logits.cols) {
      throw DomainError("cross_entropy_loss: label " + std::to_string(label) +
                        " outside [0, " + std::to_string(logits.cols) + ")");
    }
    double m = logits(b, 0);
    for (int c = 1; c < logits.cols; ++c) m = std::max(m, logits(b, c));
    double sum = 0.0;
    for (int c = 0; c < logits.cols; ++c) sum += std::exp(logits(b, c) - m);
    total += std::log(sum) + m - logits(b, label);
    for (int c = 0; c < logits.cols; ++c) {
      const double p = std::exp(logits(b, c) - m) / sum;
      out.dlogits(b, c) = (p - (c == label ? 1.0 : 0.0)) * inv_batch;
    }
  }
  out.loss = total * inv_batch;
  return out;
}

}  // namespace s2fl
