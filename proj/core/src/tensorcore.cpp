#include "rewardlab/tensorcore.hpp"

#include <algorithm>
#include <cmath>

#include "rewardlab/errors.hpp"
#include "rewardlab/rng.hpp"

namespace rewardlab {

std::string to_string(Activation act) {
  return act == Activation::tanh ? "tanh" : "relu";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + name + "'");
}

DenseNet::DenseNet(std::vector<std::size_t> layer_dims, Activation activation,
                   std::uint64_t seed)
    : dims_(std::move(layer_dims)), activation_(activation) {
  layout();
  Rng rng = make_stream(derive_seed(seed, "dense-init"));
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const double fan = static_cast<double>(dims_[l] + dims_[l + 1]);
    std::uniform_real_distribution<double> dist{-std::sqrt(6.0 / fan),
                                                std::sqrt(6.0 / fan)};
    for (double& w : weights(l)) w = dist(rng);
  }
}

DenseNet DenseNet::zeros(std::vector<std::size_t> layer_dims, Activation activation) {
  DenseNet net;
  net.dims_ = std::move(layer_dims);
  net.activation_ = activation;
  net.layout();
  return net;
}

void DenseNet::layout() {
  if (dims_.size() < 2) throw ShapeError("a network needs at least input and output dims");
  for (auto d : dims_) {
    if (d == 0) throw ShapeError("layer dimensions must be positive");
  }
  offsets_.clear();
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    offsets_.push_back(total);
    total += dims_[l] * dims_[l + 1] + dims_[l + 1];
  }
  params_.assign(total, 0.0);
}

std::span<const double> DenseNet::weights(std::size_t layer) const {
  return {params_.data() + offsets_.at(layer), dims_[layer] * dims_[layer + 1]};
}
std::span<double> DenseNet::weights(std::size_t layer) {
  return {params_.data() + offsets_.at(layer), dims_[layer] * dims_[layer + 1]};
}
std::span<const double> DenseNet::bias(std::size_t layer) const {
  return {params_.data() + offsets_.at(layer) + dims_[layer] * dims_[layer + 1],
          dims_[layer + 1]};
}
std::span<double> DenseNet::bias(std::size_t layer) {
  return {params_.data() + offsets_.at(layer) + dims_[layer] * dims_[layer + 1],
          dims_[layer + 1]};
}

namespace {

inline double activate(Activation act, double z) {
  return act == Activation::tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

// Derivative expressed through the post-activation value.
inline double activate_grad(Activation act, double a) {
  return act == Activation::tanh ? 1.0 - a * a : (a > 0.0 ? 1.0 : 0.0);
}

}  // namespace

void forward(const DenseNet& net, std::span<const double> input, ForwardTrace& trace) {
  const auto& dims = net.layer_dims();
  if (input.size() != dims.front()) {
    throw ShapeError("input has length " + std::to_string(input.size()) +
                     ", network expects " + std::to_string(dims.front()));
  }
  trace.activations.resize(dims.size());
  trace.activations[0].assign(input.begin(), input.end());
  const std::size_t last = net.num_layers() - 1;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const std::size_t in = dims[l];
    const std::size_t out = dims[l + 1];
    const auto w = net.weights(l);
    const auto b = net.bias(l);
    const auto& x = trace.activations[l];
    auto& y = trace.activations[l + 1];
    y.resize(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = w.data() + o * in;
      double z = b[o];
      for (std::size_t k = 0; k < in; ++k) z += row[k] * x[k];
      y[o] = l == last ? z : activate(net.activation(), z);
    }
  }
}

std::vector<double> forward(const DenseNet& net, std::span<const double> input) {
  ForwardTrace trace;
  forward(net, input, trace);
  return trace.activations.back();
}

void accumulate_gradients(const DenseNet& net, const ForwardTrace& trace,
                          std::span<const double> upstream, std::span<double> param_grad,
                          std::span<double> input_grad) {
  const auto& dims = net.layer_dims();
  if (upstream.size() != dims.back()) {
    throw ShapeError("upstream gradient has length " + std::to_string(upstream.size()) +
                     ", network output is " + std::to_string(dims.back()));
  }
  if (param_grad.size() != net.parameter_count()) {
    throw ShapeError("parameter gradient buffer does not match the network");
  }
  if (!input_grad.empty() && input_grad.size() != dims.front()) {
    throw ShapeError("input gradient buffer does not match the network input");
  }
  if (trace.activations.size() != dims.size()) {
    throw ShapeError("forward trace does not belong to this network");
  }

  // delta holds dL/dz for the current layer's pre-activations.
  std::vector<double> delta(upstream.begin(), upstream.end());
  std::vector<double> next;
  for (std::size_t l = net.num_layers(); l-- > 0;) {
    const std::size_t in = dims[l];
    const std::size_t out = dims[l + 1];
    const auto& x = trace.activations[l];
    const auto w = net.weights(l);
    double* gw = param_grad.data() + net.weight_offset(l);
    double* gb = gw + in * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      gb[o] += d;
      if (d == 0.0) continue;
      double* grow = gw + o * in;
      for (std::size_t k = 0; k < in; ++k) grow[k] += d * x[k];
    }
    if (l == 0 && input_grad.empty()) break;
    next.assign(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = w.data() + o * in;
      for (std::size_t k = 0; k < in; ++k) next[k] += d * row[k];
    }
    if (l > 0) {
      for (std::size_t k = 0; k < in; ++k) {
        next[k] *= activate_grad(net.activation(), x[k]);
      }
    } else {
      std::copy(next.begin(), next.end(), input_grad.begin());
    }
    delta.swap(next);
  }
}

Gradients backward(const DenseNet& net, std::span<const double> input,
                   std::span<const double> upstream) {
  ForwardTrace trace;
  forward(net, input, trace);
  Gradients g;
  g.params.assign(net.parameter_count(), 0.0);
  g.input.assign(net.input_size(), 0.0);
  accumulate_gradients(net, trace, upstream, g.params, g.input);
  return g;
}

AdamState AdamState::for_parameters(std::size_t count, double lr) {
  AdamState s;
  s.first_moment.assign(count, 0.0);
  s.second_moment.assign(count, 0.0);
  s.lr = lr;
  return s;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("parameter and gradient sizes differ");
  }
  if (state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("optimizer moments do not mirror the parameters");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in Adam step");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    double& m = state.first_moment[k];
    double& v = state.second_moment[k];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[k];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[k] * grads[k];
    if (m == 0.0) continue;
    params[k] -= state.lr * (m / c1) / (std::sqrt(v / c2) + state.eps);
  }
}

std::vector<double> numerical_gradient(std::span<double> params,
                                       const std::function<double()>& loss, double h) {
  std::vector<double> grad(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = params[k];
    params[k] = saved + h;
    const double up = loss();
    params[k] = saved - h;
    const double down = loss();
    params[k] = saved;
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(std::span<const double> analytic,
                          std::span<const double> numeric, double floor) {
  if (analytic.size() != numeric.size()) throw ShapeError("gradient sizes differ");
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double scale = std::max({std::abs(analytic[k]), std::abs(numeric[k]), floor});
    worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / scale);
  }
  return worst;
}

nlohmann::json net_header(const DenseNet& net) {
  return {{"topology", net.layer_dims()},
          {"activation", to_string(net.activation())},
          {"parameters", net.parameter_count()}};
}

void append_net(std::vector<float>& blob, const DenseNet& net) {
  append_floats(blob, net.parameters());
}

DenseNet net_from(const nlohmann::json& header, std::span<const float> blob,
                  std::size_t& cursor) {
  auto dims = header.at("topology").get<std::vector<std::size_t>>();
  DenseNet net =
      DenseNet::zeros(std::move(dims), activation_from_string(header.at("activation")));
  const auto values = take_floats(blob, cursor, net.parameter_count());
  std::copy(values.begin(), values.end(), net.parameters().begin());
  return net;
}

}  // namespace rewardlab
