#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rewardlab/checkpoint.hpp"

namespace rewardlab {

enum class Activation { tanh, relu };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

/// Fully connected network with activations on hidden layers and a linear
/// output. All parameters live in one flat vector: for each layer, its
/// weight matrix (out x in, row-major) followed by its bias.
class DenseNet {
 public:
  DenseNet() = default;

  /// Glorot-uniform weights, zero biases, seeded.
  DenseNet(std::vector<std::size_t> layer_dims, Activation activation,
           std::uint64_t seed);

  static DenseNet zeros(std::vector<std::size_t> layer_dims, Activation activation);

  const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
  Activation activation() const noexcept { return activation_; }
  std::size_t input_size() const { return dims_.front(); }
  std::size_t output_size() const { return dims_.back(); }
  std::size_t num_layers() const noexcept { return dims_.size() - 1; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  std::span<const double> weights(std::size_t layer) const;
  std::span<double> weights(std::size_t layer);
  std::span<const double> bias(std::size_t layer) const;
  std::span<double> bias(std::size_t layer);

  std::size_t weight_offset(std::size_t layer) const { return offsets_.at(layer); }

  friend bool operator==(const DenseNet&, const DenseNet&) = default;

 private:
  void layout();

  std::vector<std::size_t> dims_;
  Activation activation_ = Activation::tanh;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// Per-layer post-activation values from the last forward pass; activations[0]
/// is the input. Reusable across calls to avoid reallocations.
struct ForwardTrace {
  std::vector<std::vector<double>> activations;

  std::span<const double> output() const { return activations.back(); }
};

void forward(const DenseNet& net, std::span<const double> input, ForwardTrace& trace);
std::vector<double> forward(const DenseNet& net, std::span<const double> input);

struct Gradients {
  std::vector<double> params;  // same layout as DenseNet::parameters()
  std::vector<double> input;
};

/// Adds d(output . upstream)/d(params) into `param_grad` and writes the
/// input gradient into `input_grad` when it is non-empty. `trace` must come
/// from forward() on the same net and input.
void accumulate_gradients(const DenseNet& net, const ForwardTrace& trace,
                          std::span<const double> upstream,
                          std::span<double> param_grad,
                          std::span<double> input_grad = {});

Gradients backward(const DenseNet& net, std::span<const double> input,
                   std::span<const double> upstream);

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_parameters(std::size_t count, double lr);
};

/// Bias-corrected Adam. Throws DivergenceError on a non-finite gradient,
/// leaving params and state untouched.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

/// Central finite differences of a scalar loss over every parameter.
std::vector<double> numerical_gradient(
    std::span<double> params, const std::function<double()>& loss, double h = 1e-4);

/// max_k |a_k - n_k| / max(|a_k|, |n_k|, floor).
double max_relative_error(std::span<const double> analytic,
                          std::span<const double> numeric, double floor = 1e-6);

/// Header fields (topology, activation) and float32 parameter blob.
nlohmann::json net_header(const DenseNet& net);
void append_net(std::vector<float>& blob, const DenseNet& net);
DenseNet net_from(const nlohmann::json& header, std::span<const float> blob,
                  std::size_t& cursor);

}  // namespace rewardlab
