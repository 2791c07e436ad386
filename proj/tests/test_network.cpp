#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mcgae/network.hpp"
#include "oracles.hpp"

using namespace mcgae;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

std::vector<std::size_t> all(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

TEST(Architecture, Validation) {
  EXPECT_THROW(ArchitectureSpec::symmetric(4, {0}, 2, Activation::kRelu).validate(), ConfigError);
  EXPECT_THROW(ArchitectureSpec::symmetric(0, {3}, 2, Activation::kRelu).validate(), ConfigError);
  EXPECT_NO_THROW(ArchitectureSpec::symmetric(4, {}, 2, Activation::kTanh).validate());
}

TEST(Autoencoder, InitDeterministicAndLatentDim) {
  const auto arch = ArchitectureSpec::symmetric(16, {12}, 8, Activation::kRelu);
  const auto a = Autoencoder::init(arch, 3);
  const auto b = Autoencoder::init(arch, 3);
  EXPECT_EQ(a.params(), b.params());
  Rng rng(1);
  const auto z = a.encode(random_matrix(16, 5, rng));
  EXPECT_EQ(z.rows(), 8);
  EXPECT_EQ(z.cols(), 5);
}

TEST(Autoencoder, IdentityLinearNetwork) {
  // One linear encoder layer and one linear decoder layer, both identity.
  const auto arch = ArchitectureSpec::symmetric(3, {}, 3, Activation::kRelu);
  Autoencoder m = Autoencoder::init(arch, 0);
  m.params().setZero();
  for (const auto& layer : m.layers()) {
    for (std::size_t k = 0; k < layer.out; ++k) m.params()[static_cast<Eigen::Index>(layer.weight_offset + k * layer.out + k)] = 1.0;
  }
  Rng rng(2);
  const Eigen::MatrixXd x = random_matrix(3, 4, rng);
  const auto trace = m.forward(x);
  EXPECT_EQ(trace.reconstructions(), x);
  EXPECT_EQ(trace.batch_size(), 4);
  EXPECT_EQ(recon_loss(trace, x, all(4)).value, 0.0);
}

TEST(ReconLoss, Examples) {
  const auto arch = ArchitectureSpec::symmetric(2, {}, 1, Activation::kRelu);
  Autoencoder m = Autoencoder::init(arch, 0);
  m.params().setZero();  // reconstruction is 0
  Eigen::MatrixXd x(2, 2);
  x << 3, 1, 4, 0;
  const auto trace = m.forward(x);
  EXPECT_DOUBLE_EQ(recon_loss(trace, x, std::vector<std::size_t>{0}).value, 25.0);
  Eigen::MatrixXd y(2, 2);
  y << 1, 0, 0, 1;
  EXPECT_DOUBLE_EQ(recon_loss(m.forward(y), y, all(2)).value, 1.0);
  EXPECT_TRUE(recon_loss(trace, x, std::vector<std::size_t>{}).empty);
}

TEST(Backward, MatchesFiniteDifferences) {
  Rng rng(3);
  for (int net = 0; net < 10; ++net) {
    const auto arch = ArchitectureSpec::symmetric(5, {4}, 2, Activation::kTanh);
    const Autoencoder base = Autoencoder::init(arch, 100 + net);
    const Eigen::MatrixXd x = random_matrix(5, 6, rng);
    const std::vector<std::size_t> sel{0, 2, 3, 5};
    const auto grads = base.backward(base.forward(x), x, sel);
    const auto fd = oracle::fd_gradient(
        [&](const Eigen::VectorXd& p) {
          const Autoencoder m(arch, p);
          return recon_loss(m.forward(x), x, sel).value;
        },
        base.params());
    EXPECT_LT(oracle::max_rel_error(grads.params, fd), 1e-5);
  }
}

TEST(Backward, DecoderBiasWithZeroFinalWeights) {
  const auto arch = ArchitectureSpec::symmetric(3, {}, 2, Activation::kRelu);
  Autoencoder m = Autoencoder::init(arch, 4);
  const auto& dec = m.layers().back();
  for (std::size_t k = 0; k < dec.in * dec.out; ++k) m.params()[static_cast<Eigen::Index>(dec.weight_offset + k)] = 0.0;
  const Eigen::VectorXd b = m.params().segment(static_cast<Eigen::Index>(dec.bias_offset), 3);
  Rng rng(5);
  const Eigen::MatrixXd x = random_matrix(3, 4, rng);
  const auto g = m.backward(m.forward(x), x, all(4));
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(3);
  for (Eigen::Index i = 0; i < 4; ++i) expected += -2.0 * (x.col(i) - b) / 4.0;
  EXPECT_LT((g.params.segment(static_cast<Eigen::Index>(dec.bias_offset), 3) - expected).norm(), 1e-12);
}

TEST(Backward, InjectionWithZeroResidual) {
  const auto arch = ArchitectureSpec::symmetric(4, {5}, 2, Activation::kTanh);
  const Autoencoder m = Autoencoder::init(arch, 6);
  Rng rng(7);
  const Eigen::MatrixXd x = random_matrix(4, 3, rng);
  const auto trace = m.forward(x);
  const Eigen::MatrixXd inj = random_matrix(2, 3, rng);
  // Empty selection: no reconstruction residual enters.
  const auto g = m.backward(trace, x, std::vector<std::size_t>{}, inj);
  const auto vjp = m.encoder_vjp(trace, inj);
  EXPECT_LT((g.params - vjp).norm(), 1e-14);
  std::size_t encoder_end = m.layers()[m.encoder_layer_count() - 1].bias_offset + 2;
  EXPECT_EQ(g.params.tail(g.params.size() - static_cast<Eigen::Index>(encoder_end)).norm(), 0.0);
  // Encoder VJP equals the Jacobian transpose applied to the injection.
  const auto fd = oracle::fd_gradient(
      [&](const Eigen::VectorXd& p) {
        const Autoencoder mm(arch, p);
        return (mm.encode(x).array() * inj.array()).sum();
      },
      m.params());
  EXPECT_LT(oracle::max_rel_error(vjp, fd), 1e-5);
}

TEST(Backward, InjectionLinearity) {
  const auto arch = ArchitectureSpec::symmetric(4, {3}, 2, Activation::kRelu);
  const Autoencoder m = Autoencoder::init(arch, 8);
  Rng rng(9);
  const Eigen::MatrixXd x = random_matrix(4, 5, rng);
  const auto trace = m.forward(x);
  const Eigen::MatrixXd v = random_matrix(2, 5, rng);
  const auto g0 = m.backward(trace, x, all(5)).params;
  const auto g1 = m.backward(trace, x, all(5), v).params;
  const auto g3 = m.backward(trace, x, all(5), 3.0 * v).params;
  EXPECT_LT(((g3 - g0) - 3.0 * (g1 - g0)).norm(), 1e-10);
}

TEST(Backward, EncodingGradientMatchesFiniteDifferences) {
  const auto arch = ArchitectureSpec::symmetric(5, {4}, 3, Activation::kTanh);
  const Autoencoder m = Autoencoder::init(arch, 10);
  Rng rng(11);
  const Eigen::MatrixXd x = random_matrix(5, 4, rng);
  const auto sel = all(4);
  const auto g = m.backward(m.forward(x), x, sel);
  const Eigen::MatrixXd z = m.encode(x);
  Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(z.data(), z.size());
  const auto fd = oracle::fd_gradient(
      [&](const Eigen::VectorXd& zf) {
        const Eigen::MatrixXd zz = Eigen::Map<const Eigen::MatrixXd>(zf.data(), 3, 4);
        const Eigen::MatrixXd r = m.decode(zz) - x;
        return r.colwise().squaredNorm().sum() / 4.0;
      },
      flat);
  const Eigen::VectorXd ge = Eigen::Map<const Eigen::VectorXd>(g.encoding.data(), g.encoding.size());
  EXPECT_LT(oracle::max_rel_error(ge, fd), 1e-5);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(5, -1, 1);
  const Eigen::VectorXd keep = p;
  AdamState s(5);
  for (int i = 0; i < 10; ++i) adam_step(s, p, Eigen::VectorXd::Zero(5), 1e-3);
  EXPECT_EQ(p, keep);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  // Bias correction makes the first step lr * g / (|g| + eps).
  for (double scale : {1e-2, 1.0, 1e6}) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
    AdamState s(3);
    adam_step(s, p, Eigen::Vector3d(scale, -scale, 2 * scale), 1e-3);
    EXPECT_NEAR(p[0], -1e-3 * scale / (scale + 1e-8), 1e-15);
    EXPECT_NEAR(p[1], 1e-3 * scale / (scale + 1e-8), 1e-15);
    EXPECT_NEAR(p[2], -1e-3 * 2 * scale / (2 * scale + 1e-8), 1e-15);
  }
}

TEST(Adam, ConstantGradientBoundedSteps) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
  AdamState s(1);
  double last = 0;
  for (int i = 0; i < 500; ++i) {
    adam_step(s, p, Eigen::VectorXd::Constant(1, 7.0), 1e-3);
    const double step = last - p[0];
    EXPECT_GT(step, 0.0);
    EXPECT_LE(step, 1e-3 * (1 + 1e-9));
    last = p[0];
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto arch = ArchitectureSpec::symmetric(6, {5}, 3, Activation::kTanh);
  const Autoencoder m = Autoencoder::init(arch, 12);
  const auto path = std::filesystem::temp_directory_path() / "mcgae_test_ckpt.bin";
  save_checkpoint(path, m, {{"model_kind", "MCGAE"}});
  const auto loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.model.params(), m.params());
  EXPECT_EQ(loaded.metadata.at("model_kind"), "MCGAE");
  EXPECT_EQ(loaded.model.arch().encoder_widths, arch.encoder_widths);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto path = std::filesystem::temp_directory_path() / "mcgae_test_bad.bin";
  {
    std::ofstream os(path, std::ios::binary);
    os << "not a checkpoint";
  }
  EXPECT_THROW(load_checkpoint(path), FormatError);
  const Autoencoder m = Autoencoder::init(ArchitectureSpec::symmetric(3, {}, 2, Activation::kRelu), 1);
  save_checkpoint(path, m);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 4);
  EXPECT_THROW(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), FormatError);
}
