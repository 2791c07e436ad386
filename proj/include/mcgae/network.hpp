#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "mcgae/common.hpp"

namespace mcgae {

enum class Activation { kRelu, kTanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Dense encoder/decoder stack. Hidden layers use `activation`; the encoding layer and the
/// output layer are linear.
struct ArchitectureSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> encoder_widths;  ///< last entry is the latent dimension
  std::vector<std::size_t> decoder_widths;  ///< last entry must equal input_dim
  Activation activation = Activation::kRelu;

  std::size_t latent_dim() const { return encoder_widths.empty() ? 0 : encoder_widths.back(); }
  void validate() const;
  /// input -> hidden... -> latent -> hidden... -> input with mirrored hidden widths.
  static ArchitectureSpec symmetric(std::size_t input_dim, std::vector<std::size_t> hidden,
                                    std::size_t latent_dim, Activation activation);
};

nlohmann::json to_json(const ArchitectureSpec& arch);
ArchitectureSpec architecture_from_json(const nlohmann::json& j);

/// Location of one dense layer inside the flat parameter vector.
/// Weights are stored column-major as an (out x in) matrix, followed by `out` biases.
struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
  bool activated = false;
};

/// Cached post-activations of every layer for a batch (samples are columns).
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> activations;  ///< [0] = input, back() = reconstruction
  std::size_t encoding_index = 0;

  const Eigen::MatrixXd& encodings() const { return activations[encoding_index]; }
  const Eigen::MatrixXd& reconstructions() const { return activations.back(); }
  Eigen::Index batch_size() const { return activations.front().cols(); }
};

/// Result of a reconstruction-loss evaluation on a subset of the batch.
struct ReconLoss {
  double value = 0.0;
  bool empty = false;  ///< selection was empty; value is 0
};

/// Mean squared L2 reconstruction error over the selected columns.
ReconLoss recon_loss(const ForwardTrace& trace, const Eigen::MatrixXd& x,
                     std::span<const std::size_t> selected);

struct Gradients {
  Eigen::VectorXd params;    ///< d(recon_loss)/d(theta) plus the chained encoding injection
  Eigen::MatrixXd encoding;  ///< D_l x n, d(recon_loss)/d(z) per sample (injection excluded)
};

/// Encoder/decoder parameters together with their architecture.
class Autoencoder {
 public:
  Autoencoder(ArchitectureSpec arch, Eigen::VectorXd params);

  /// Uniform fan-in initialization: weights in +-sqrt(6/fan_in) for ReLU layers and
  /// +-sqrt(3/fan_in) otherwise, biases in +-1/sqrt(fan_in).
  static Autoencoder init(const ArchitectureSpec& arch, std::uint64_t seed);

  const ArchitectureSpec& arch() const { return arch_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& params() { return params_; }
  std::span<const LayerShape> layers() const { return layers_; }
  std::size_t encoder_layer_count() const { return arch_.encoder_widths.size(); }
  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

  ForwardTrace forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd encode(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd decode(const Eigen::MatrixXd& z) const;

  /// Gradient of recon_loss over `selected`, with `injection` (D_l x n, may be empty) added to
  /// the encoding-layer gradient and propagated through the encoder only.
  Gradients backward(const ForwardTrace& trace, const Eigen::MatrixXd& x,
                     std::span<const std::size_t> selected,
                     const Eigen::MatrixXd& injection = {}) const;

  /// Encoder vector-Jacobian product: sum_i J_i^T injection_i over the batch. Decoder entries
  /// of the returned vector are zero.
  Eigen::VectorXd encoder_vjp(const ForwardTrace& trace, const Eigen::MatrixXd& injection) const;

  bool all_finite() const { return params_.allFinite(); }

 private:
  Eigen::MatrixXd apply_layers(Eigen::MatrixXd a, std::size_t first, std::size_t last) const;
  // Backpropagates `delta` (gradient w.r.t. the output of layer `last - 1`) down to layer
  // `first`, accumulating parameter gradients; returns the gradient w.r.t. layer `first`'s input.
  Eigen::MatrixXd backprop(const ForwardTrace& trace, Eigen::MatrixXd delta, std::size_t first,
                           std::size_t last, Eigen::VectorXd& grad) const;

  ArchitectureSpec arch_;
  std::vector<LayerShape> layers_;
  Eigen::VectorXd params_;
};

/// Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8).
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t n = 0)
      : m(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
        v(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr);

/// Checkpoint file: 8-byte magic "MCGAECK\0", uint32 version, uint64 header length, a JSON
/// header (architecture, layer offsets, parameter count, caller metadata), then the flat
/// parameter array as little-endian float64.
void save_checkpoint(const std::filesystem::path& path, const Autoencoder& model,
                     const nlohmann::json& metadata = nlohmann::json::object());

struct LoadedCheckpoint {
  Autoencoder model;
  nlohmann::json metadata;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace mcgae
