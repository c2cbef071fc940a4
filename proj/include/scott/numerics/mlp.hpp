#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scott/numerics/rng.hpp"

namespace scott::numerics {

/// Storage for buffers that Eigen maps over. Eigen picks its vectorized
/// loop split from the runtime address, so the base must be aligned for
/// results to be bit-reproducible across allocations.
using AlignedBuffer = std::vector<double, Eigen::aligned_allocator<double>>;

enum class Activation { tanh, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Fully connected network parameters stored in one flat buffer.
///
/// Layer l maps layer_sizes[l] -> layer_sizes[l + 1]. Its weight is an
/// (out x in) column-major block followed by the bias vector. Hidden layers
/// apply the activation; the final layer is affine. Batches are matrices
/// with one sample per column.
class MlpParams {
 public:
  MlpParams() = default;
  MlpParams(std::vector<std::size_t> layer_sizes, Activation activation);

  const std::vector<std::size_t>& layer_sizes() const noexcept { return layer_sizes_; }
  Activation activation() const noexcept { return activation_; }
  std::size_t num_layers() const noexcept { return layer_sizes_.empty() ? 0 : layer_sizes_.size() - 1; }
  std::size_t input_width() const { return layer_sizes_.front(); }
  std::size_t output_width() const { return layer_sizes_.back(); }
  std::size_t parameter_count() const noexcept { return values_.size(); }

  Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer);
  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool same_shape(const MlpParams& other) const noexcept {
    return layer_sizes_ == other.layer_sizes_ && activation_ == other.activation_;
  }

  /// Same shape, every value zero.
  MlpParams zeros_like() const { return MlpParams(layer_sizes_, activation_); }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;

 private:
  std::vector<std::size_t> layer_sizes_;
  Activation activation_ = Activation::tanh;
  std::vector<std::size_t> offsets_;
  AlignedBuffer values_;
};

/// Parameter count of a network with these layer sizes.
std::size_t mlp_parameter_count(std::span<const std::size_t> layer_sizes);

/// Weights uniform in +-sqrt(1/fan_in), biases zero. Draws the weights of
/// layer 0 first, each weight matrix in column-major order.
MlpParams mlp_init(std::vector<std::size_t> layer_sizes, Activation activation, RngStream& rng);

/// Everything backward needs: the input and each layer's post-activation.
struct MlpTape {
  std::vector<std::size_t> layer_sizes;
  std::vector<Eigen::MatrixXd> activations;  // activations[0] is the input
};

struct MlpForward {
  Eigen::MatrixXd output;
  MlpTape tape;
};

struct MlpGradient {
  MlpParams params;
  Eigen::MatrixXd input;  // cotangent with respect to the network input
};

/// Forward pass without recording; throws NumericError on non-finite input.
Eigen::MatrixXd mlp_apply(const MlpParams& params, const Eigen::MatrixXd& input);

MlpForward mlp_forward(const MlpParams& params, const Eigen::MatrixXd& input);

/// Reverse-mode pass. `output_cotangent` has the output's shape; gradients
/// are summed over the batch.
MlpGradient mlp_backward(const MlpParams& params, const MlpTape& tape,
                         const Eigen::MatrixXd& output_cotangent);

}  // namespace scott::numerics
