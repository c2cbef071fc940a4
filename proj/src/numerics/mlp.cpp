#include "scott/numerics/mlp.hpp"

#include <cmath>

#include "scott/error.hpp"

namespace scott::numerics {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh:
      return "tanh";
    case Activation::identity:
      return "identity";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + name + "'");
}

std::size_t mlp_parameter_count(std::span<const std::size_t> layer_sizes) {
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    total += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  }
  return total;
}

MlpParams::MlpParams(std::vector<std::size_t> layer_sizes, Activation activation)
    : layer_sizes_(std::move(layer_sizes)), activation_(activation) {
  if (layer_sizes_.size() < 2) {
    throw ConfigError("MLP needs at least an input and an output size, got " +
                      std::to_string(layer_sizes_.size()) + " sizes");
  }
  for (std::size_t s : layer_sizes_) {
    if (s == 0) throw ConfigError("MLP layer sizes must be positive");
  }
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
    offsets_.push_back(offset);
    offset += layer_sizes_[l] * layer_sizes_[l + 1] + layer_sizes_[l + 1];
  }
  values_.assign(offset, 0.0);
}

Eigen::Map<Eigen::MatrixXd> MlpParams::weight(std::size_t l) {
  return {values_.data() + offsets_[l], static_cast<Eigen::Index>(layer_sizes_[l + 1]),
          static_cast<Eigen::Index>(layer_sizes_[l])};
}

Eigen::Map<const Eigen::MatrixXd> MlpParams::weight(std::size_t l) const {
  return {values_.data() + offsets_[l], static_cast<Eigen::Index>(layer_sizes_[l + 1]),
          static_cast<Eigen::Index>(layer_sizes_[l])};
}

Eigen::Map<Eigen::VectorXd> MlpParams::bias(std::size_t l) {
  return {values_.data() + offsets_[l] + layer_sizes_[l] * layer_sizes_[l + 1],
          static_cast<Eigen::Index>(layer_sizes_[l + 1])};
}

Eigen::Map<const Eigen::VectorXd> MlpParams::bias(std::size_t l) const {
  return {values_.data() + offsets_[l] + layer_sizes_[l] * layer_sizes_[l + 1],
          static_cast<Eigen::Index>(layer_sizes_[l + 1])};
}

MlpParams mlp_init(std::vector<std::size_t> layer_sizes, Activation activation, RngStream& rng) {
  MlpParams params(std::move(layer_sizes), activation);
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    auto w = params.weight(l);
    const double bound = std::sqrt(1.0 / static_cast<double>(w.cols()));
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = bound * (2.0 * rng.uniform() - 1.0);
    }
  }
  return params;
}

namespace {

void check_input(const MlpParams& params, const Eigen::MatrixXd& input) {
  if (params.num_layers() == 0) throw ContractError("MLP has no layers");
  if (static_cast<std::size_t>(input.rows()) != params.input_width()) {
    throw ContractError("MLP input has " + std::to_string(input.rows()) + " rows, expected " +
                        std::to_string(params.input_width()));
  }
  if (!input.allFinite()) throw NumericError("MLP input contains non-finite values");
}

void activate(Activation a, Eigen::MatrixXd& m) {
  if (a == Activation::tanh) m = m.array().tanh();
}

Eigen::MatrixXd affine(const MlpParams& params, std::size_t l, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd y = params.weight(l) * x;
  y.colwise() += params.bias(l);
  return y;
}

}  // namespace

Eigen::MatrixXd mlp_apply(const MlpParams& params, const Eigen::MatrixXd& input) {
  check_input(params, input);
  Eigen::MatrixXd h = input;
  const std::size_t last = params.num_layers() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    h = affine(params, l, h);
    if (l != last) activate(params.activation(), h);
  }
  return h;
}

MlpForward mlp_forward(const MlpParams& params, const Eigen::MatrixXd& input) {
  check_input(params, input);
  MlpForward fwd;
  fwd.tape.layer_sizes = params.layer_sizes();
  fwd.tape.activations.reserve(params.num_layers());
  fwd.tape.activations.push_back(input);
  const std::size_t last = params.num_layers() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    Eigen::MatrixXd h = affine(params, l, fwd.tape.activations.back());
    if (l == last) {
      fwd.output = std::move(h);
    } else {
      activate(params.activation(), h);
      fwd.tape.activations.push_back(std::move(h));
    }
  }
  return fwd;
}

MlpGradient mlp_backward(const MlpParams& params, const MlpTape& tape,
                         const Eigen::MatrixXd& output_cotangent) {
  if (tape.layer_sizes != params.layer_sizes() || tape.activations.size() != params.num_layers()) {
    throw ContractError("mlp_backward: tape was recorded with different parameters");
  }
  const Eigen::Index batch = tape.activations.front().cols();
  if (static_cast<std::size_t>(output_cotangent.rows()) != params.output_width() ||
      output_cotangent.cols() != batch) {
    throw ContractError("mlp_backward: cotangent shape does not match the recorded output");
  }

  MlpGradient grad{params.zeros_like(), {}};
  Eigen::MatrixXd delta = output_cotangent;  // cotangent at the current pre-activation
  for (std::size_t l = params.num_layers(); l-- > 0;) {
    const Eigen::MatrixXd& x = tape.activations[l];
    grad.params.weight(l).noalias() = delta * x.transpose();
    grad.params.bias(l) = delta.rowwise().sum();
    Eigen::MatrixXd upstream = params.weight(l).transpose() * delta;
    if (l > 0 && params.activation() == Activation::tanh) {
      upstream.array() *= 1.0 - x.array().square();
    }
    delta = std::move(upstream);
  }
  grad.input = std::move(delta);
  return grad;
}

}  // namespace scott::numerics
