#include "mcgae/network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace mcgae {

std::string to_string(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "'");
}

void ArchitectureSpec::validate() const {
  if (input_dim == 0) throw ConfigError("architecture: input_dim must be positive");
  if (encoder_widths.empty() || decoder_widths.empty()) {
    throw ConfigError("architecture: encoder and decoder need at least one layer each");
  }
  for (std::size_t w : encoder_widths) {
    if (w == 0) throw ConfigError("architecture: zero-width encoder layer");
  }
  for (std::size_t w : decoder_widths) {
    if (w == 0) throw ConfigError("architecture: zero-width decoder layer");
  }
  if (decoder_widths.back() != input_dim) {
    throw ConfigError("architecture: decoder output must equal input_dim");
  }
}

ArchitectureSpec ArchitectureSpec::symmetric(std::size_t input_dim, std::vector<std::size_t> hidden,
                                             std::size_t latent_dim, Activation activation) {
  ArchitectureSpec arch;
  arch.input_dim = input_dim;
  arch.activation = activation;
  arch.encoder_widths = hidden;
  arch.encoder_widths.push_back(latent_dim);
  arch.decoder_widths.assign(hidden.rbegin(), hidden.rend());
  arch.decoder_widths.push_back(input_dim);
  return arch;
}

nlohmann::json to_json(const ArchitectureSpec& arch) {
  return {{"input_dim", arch.input_dim},
          {"encoder_widths", arch.encoder_widths},
          {"decoder_widths", arch.decoder_widths},
          {"activation", to_string(arch.activation)}};
}

ArchitectureSpec architecture_from_json(const nlohmann::json& j) {
  ArchitectureSpec arch;
  try {
    arch.input_dim = j.at("input_dim").get<std::size_t>();
    arch.encoder_widths = j.at("encoder_widths").get<std::vector<std::size_t>>();
    arch.decoder_widths = j.at("decoder_widths").get<std::vector<std::size_t>>();
    arch.activation = activation_from_string(j.at("activation").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("architecture descriptor: ") + e.what());
  }
  arch.validate();
  return arch;
}

namespace {

std::vector<LayerShape> layout(const ArchitectureSpec& arch) {
  std::vector<LayerShape> layers;
  std::size_t offset = 0;
  std::size_t in = arch.input_dim;
  auto add = [&](std::size_t out, bool activated) {
    LayerShape s;
    s.in = in;
    s.out = out;
    s.weight_offset = offset;
    s.bias_offset = offset + in * out;
    s.activated = activated;
    offset = s.bias_offset + out;
    layers.push_back(s);
    in = out;
  };
  for (std::size_t i = 0; i < arch.encoder_widths.size(); ++i) {
    add(arch.encoder_widths[i], i + 1 < arch.encoder_widths.size());
  }
  for (std::size_t i = 0; i < arch.decoder_widths.size(); ++i) {
    add(arch.decoder_widths[i], i + 1 < arch.decoder_widths.size());
  }
  return layers;
}

std::size_t total_params(const std::vector<LayerShape>& layers) {
  return layers.empty() ? 0 : layers.back().bias_offset + layers.back().out;
}

using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

}  // namespace

Autoencoder::Autoencoder(ArchitectureSpec arch, Eigen::VectorXd params)
    : arch_(std::move(arch)), params_(std::move(params)) {
  arch_.validate();
  layers_ = layout(arch_);
  if (static_cast<std::size_t>(params_.size()) != total_params(layers_)) {
    throw ConfigError("parameter vector size does not match the architecture");
  }
}

Autoencoder Autoencoder::init(const ArchitectureSpec& arch, std::uint64_t seed) {
  arch.validate();
  const auto layers = layout(arch);
  Eigen::VectorXd params(static_cast<Eigen::Index>(total_params(layers)));
  Rng rng(seed);
  for (const auto& l : layers) {
    const double fan_in = static_cast<double>(l.in);
    const double gain = (l.activated && arch.activation == Activation::kRelu) ? 6.0 : 3.0;
    const double w_bound = std::sqrt(gain / fan_in);
    const double b_bound = 1.0 / std::sqrt(fan_in);
    for (std::size_t i = 0; i < l.in * l.out; ++i) {
      params[static_cast<Eigen::Index>(l.weight_offset + i)] = rng.uniform(-w_bound, w_bound);
    }
    for (std::size_t i = 0; i < l.out; ++i) {
      params[static_cast<Eigen::Index>(l.bias_offset + i)] = rng.uniform(-b_bound, b_bound);
    }
  }
  return Autoencoder(arch, std::move(params));
}

Eigen::MatrixXd Autoencoder::apply_layers(Eigen::MatrixXd a, std::size_t first,
                                          std::size_t last) const {
  for (std::size_t li = first; li < last; ++li) {
    const auto& l = layers_[li];
    ConstMap w(params_.data() + l.weight_offset, static_cast<Eigen::Index>(l.out),
               static_cast<Eigen::Index>(l.in));
    ConstVecMap b(params_.data() + l.bias_offset, static_cast<Eigen::Index>(l.out));
    Eigen::MatrixXd next = w * a;
    next.colwise() += b;
    if (l.activated) {
      if (arch_.activation == Activation::kRelu) next = next.cwiseMax(0.0);
      else next = next.array().tanh().matrix();
    }
    a = std::move(next);
  }
  return a;
}

ForwardTrace Autoencoder::forward(const Eigen::MatrixXd& x) const {
  if (static_cast<std::size_t>(x.rows()) != arch_.input_dim) {
    throw ConfigError("forward: input dimension does not match the architecture");
  }
  ForwardTrace trace;
  trace.encoding_index = encoder_layer_count();
  trace.activations.reserve(layers_.size() + 1);
  trace.activations.push_back(x);
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    trace.activations.push_back(apply_layers(trace.activations.back(), li, li + 1));
  }
  return trace;
}

Eigen::MatrixXd Autoencoder::encode(const Eigen::MatrixXd& x) const {
  if (static_cast<std::size_t>(x.rows()) != arch_.input_dim) {
    throw ConfigError("encode: input dimension does not match the architecture");
  }
  return apply_layers(x, 0, encoder_layer_count());
}

Eigen::MatrixXd Autoencoder::decode(const Eigen::MatrixXd& z) const {
  if (static_cast<std::size_t>(z.rows()) != arch_.latent_dim()) {
    throw ConfigError("decode: latent dimension does not match the architecture");
  }
  return apply_layers(z, encoder_layer_count(), layers_.size());
}

ReconLoss recon_loss(const ForwardTrace& trace, const Eigen::MatrixXd& x,
                     std::span<const std::size_t> selected) {
  if (selected.empty()) return {0.0, true};
  const auto& xhat = trace.reconstructions();
  double sum = 0.0;
  for (std::size_t i : selected) {
    const auto col = static_cast<Eigen::Index>(i);
    sum += (x.col(col) - xhat.col(col)).squaredNorm();
  }
  return {sum / static_cast<double>(selected.size()), false};
}

Eigen::MatrixXd Autoencoder::backprop(const ForwardTrace& trace, Eigen::MatrixXd delta,
                                      std::size_t first, std::size_t last,
                                      Eigen::VectorXd& grad) const {
  for (std::size_t li = last; li-- > first;) {
    const auto& l = layers_[li];
    const auto& out = trace.activations[li + 1];
    if (l.activated) {
      if (arch_.activation == Activation::kRelu) {
        delta = (out.array() > 0.0).select(delta, 0.0);
      } else {
        delta = (delta.array() * (1.0 - out.array().square())).matrix();
      }
    }
    const auto& in = trace.activations[li];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + l.weight_offset, static_cast<Eigen::Index>(l.out),
                                   static_cast<Eigen::Index>(l.in));
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + l.bias_offset, static_cast<Eigen::Index>(l.out));
    gw.noalias() += delta * in.transpose();
    gb += delta.rowwise().sum();
    ConstMap w(params_.data() + l.weight_offset, static_cast<Eigen::Index>(l.out),
               static_cast<Eigen::Index>(l.in));
    delta = w.transpose() * delta;
  }
  return delta;
}

Gradients Autoencoder::backward(const ForwardTrace& trace, const Eigen::MatrixXd& x,
                                std::span<const std::size_t> selected,
                                const Eigen::MatrixXd& injection) const {
  const Eigen::Index n = trace.batch_size();
  if (x.cols() != n || static_cast<std::size_t>(x.rows()) != arch_.input_dim) {
    throw ConfigError("backward: input batch does not match the trace");
  }
  const auto latent = static_cast<Eigen::Index>(arch_.latent_dim());
  if (injection.size() != 0 && (injection.rows() != latent || injection.cols() != n)) {
    throw ConfigError("backward: injection must be latent_dim x batch_size");
  }

  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(x.rows(), n);
  if (!selected.empty()) {
    const double scale = 2.0 / static_cast<double>(selected.size());
    const auto& xhat = trace.reconstructions();
    for (std::size_t i : selected) {
      const auto col = static_cast<Eigen::Index>(i);
      delta.col(col) += scale * (xhat.col(col) - x.col(col));
    }
  }

  Gradients g;
  g.params = Eigen::VectorXd::Zero(params_.size());
  const std::size_t k = encoder_layer_count();
  g.encoding = backprop(trace, std::move(delta), k, layers_.size(), g.params);
  Eigen::MatrixXd at_encoding = g.encoding;
  if (injection.size() != 0) at_encoding += injection;
  backprop(trace, std::move(at_encoding), 0, k, g.params);
  return g;
}

Eigen::VectorXd Autoencoder::encoder_vjp(const ForwardTrace& trace,
                                         const Eigen::MatrixXd& injection) const {
  if (injection.rows() != static_cast<Eigen::Index>(arch_.latent_dim()) ||
      injection.cols() != trace.batch_size()) {
    throw ConfigError("encoder_vjp: injection must be latent_dim x batch_size");
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  backprop(trace, injection, 0, encoder_layer_count(), grad);
  return grad;
}

void adam_step(AdamState& s, Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
  if (s.m.size() != params.size()) {
    s.m = Eigen::VectorXd::Zero(params.size());
    s.v = Eigen::VectorXd::Zero(params.size());
  }
  if (grad.size() != params.size()) throw ConfigError("adam_step: gradient size mismatch");
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  params.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

namespace {

constexpr char kMagic[8] = {'M', 'C', 'G', 'A', 'E', 'C', 'K', '\0'};

void put_u64(std::ostream& os, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(bytes, 8);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(bytes, 4);
}

std::uint64_t get_uint(std::istream& is, int width) {
  unsigned char bytes[8] = {};
  is.read(reinterpret_cast<char*>(bytes), width);
  if (!is) throw FormatError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Autoencoder& model,
                     const nlohmann::json& metadata) {
  nlohmann::json header;
  header["architecture"] = to_json(model.arch());
  header["parameter_count"] = model.parameter_count();
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.layers()) {
    layers.push_back({{"in", l.in},
                      {"out", l.out},
                      {"weight_offset", l.weight_offset},
                      {"bias_offset", l.bias_offset},
                      {"activated", l.activated}});
  }
  header["layers"] = std::move(layers);
  header["metadata"] = metadata;
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, kCheckpointVersion);
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (Eigen::Index i = 0; i < model.params().size(); ++i) {
    put_u64(os, std::bit_cast<std::uint64_t>(model.params()[i]));
  }
  if (!os) throw FormatError("failed writing checkpoint: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint: " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not a checkpoint file");
  const auto version = static_cast<std::uint32_t>(get_uint(is, 4));
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t header_len = get_uint(is, 8);
  std::string text(header_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw FormatError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  ArchitectureSpec arch = architecture_from_json(header.at("architecture"));
  const auto count = header.at("parameter_count").get<std::size_t>();
  Eigen::VectorXd params(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    params[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(get_uint(is, 8));
  }
  return {Autoencoder(std::move(arch), std::move(params)), header.value("metadata", nlohmann::json::object())};
}

}  // namespace mcgae
