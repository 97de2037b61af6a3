#include <fstream>

#include "studa/core/checkpoint.hpp"
#include "studa/core/loss_log.hpp"
#include "studa/core/optim.hpp"
#include "support.hpp"

using namespace studa;
using studa::test::grad_check;
using studa::test::random_tensor;

namespace {

struct OpFixture : ::testing::Test {
  std::mt19937_64 g{42};
  nn::ParameterSet<double> ps;
};

}  // namespace

TEST_F(OpFixture, ConvAndLinearGradients) {
  auto x = ps.add("x", random_tensor<double>({2, 2, 5, 5}, g));
  auto w = ps.add("w", random_tensor<double>({3, 2, 3, 3}, g));
  auto b = ps.add("b", random_tensor<double>({3}, g));
  auto lw = ps.add("lw", random_tensor<double>({4, 3}, g));
  auto lb = ps.add("lb", random_tensor<double>({4}, g));
  auto loss = [&] {
    auto h = ops::conv2d(x, w, b, 2, 1);
    auto p = ops::global_avg_pool(ops::tanh(h));
    return ops::mean(ops::linear(p, lw, lb));
  };
  auto r = grad_check(ps, loss);
  EXPECT_LT(r.rel_error, 1e-6) << r.max_abs;
}

TEST_F(OpFixture, NormalizationAndAffineGradients) {
  auto x = ps.add("x", random_tensor<double>({2, 3, 4, 4}, g));
  auto gamma = ps.add("gamma", random_tensor<double>({2, 3}, g));
  auto beta = ps.add("beta", random_tensor<double>({2, 3}, g));
  auto loss = [&] {
    auto y = ops::channel_affine(ops::instance_norm(x), gamma, beta);
    y = ops::leaky_relu(ops::upsample_nearest(y, 2), 0.2);
    return ops::mse_to_constant(y, 0.3);
  };
  EXPECT_LT(grad_check(ps, loss).rel_error, 1e-6);
}

TEST_F(OpFixture, ShapeOpsGradients) {
  auto a = ps.add("a", random_tensor<double>({2, 2, 3, 3}, g));
  auto c = ps.add("c", random_tensor<double>({2, 1, 3, 3}, g));
  auto f = ps.add("f", random_tensor<double>({2, 6}, g));
  auto loss = [&] {
    auto cat = ops::concat_channels(a, c);
    auto s = ops::slice_columns(f, 1, 4);
    auto r = ops::reshape(s, {6});
    auto t = ops::axpy(ops::scale(cat, 0.7), ops::add_scalar(cat, 0.1), -1.3);
    return ops::add(ops::l1_loss(t, ops::exp(ops::sub(cat, cat))), ops::mean(ops::tanh(r)));
  };
  EXPECT_LT(grad_check(ps, loss).rel_error, 1e-6);
}

TEST_F(OpFixture, LossOpsGradients) {
  auto logits = ps.add("logits", random_tensor<double>({2, 4, 3, 3}, g, -2, 2));
  auto a = ps.add("a", random_tensor<double>({2, 5}, g));
  auto b = ps.add("b", random_tensor<double>({2, 5}, g));
  std::vector<std::uint8_t> labels(18);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 5 == 4 ? 255 : static_cast<std::uint8_t>(i % 4);
  auto loss = [&] {
    auto lp = ops::log_softmax_channels(logits);
    return ops::weighted_sum<double>({{1.0, ops::nll_loss(lp, std::span<const std::uint8_t>(labels))},
                                      {0.5, ops::mean(ops::self_information_from_log(lp))},
                                      {0.3, ops::rms_distance(a, b)},
                                      {0.2, ops::bce_with_logits(logits, 1.0)},
                                      {0.1, ops::bce_with_logits(logits, 0.0)}});
  };
  EXPECT_LT(grad_check(ps, loss).rel_error, 1e-6);
}

TEST(Ops, NllAllIgnoredIsZero) {
  auto lp = constant(Tensor<double>({1, 2, 1, 2}, -0.6931471805599453));
  std::vector<std::uint8_t> labels{255, 255};
  bool all = false;
  EXPECT_EQ(ops::nll_loss(lp, std::span<const std::uint8_t>(labels), 255, &all).item(), 0.0);
  EXPECT_TRUE(all);
}

TEST(Ops, BceClipsLogits) {
  auto l = constant(Tensor<double>({2}, std::vector<double>{1e4, -1e4}));
  EXPECT_NEAR(ops::bce_with_logits(l, 1.0).item(), 0.5 * std::log1p(std::exp(30.0)), 1e-9);
}

TEST(Ops, ShapeMismatchThrows) {
  auto a = constant(Tensor<float>({2, 3}));
  auto b = constant(Tensor<float>({3, 2}));
  EXPECT_THROW(ops::l1_loss(a, b), ShapeError);
}

TEST(Autograd, NoGradGuardBuildsNoGraph) {
  nn::ParameterSet<double> ps;
  auto x = ps.add("x", Tensor<double>({3}, 1.0));
  NoGradGuard ng;
  auto y = ops::scale(x, 2.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, FrozenParametersReceiveNoGradient) {
  nn::ParameterSet<double> ps;
  auto x = ps.add("x", Tensor<double>({3}, 1.0));
  ps.set_trainable(false);
  auto y = ops::mean(ops::scale(x, 2.0));
  EXPECT_FALSE(y.requires_grad());
  ps.set_trainable(true);
  backward(ops::mean(ops::scale(x, 2.0)));
  EXPECT_NEAR(x.grad()[0], 2.0 / 3.0, 1e-15);
}

TEST(Rng, DerivedSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(5, "a", 1), derive_seed(5, "a", 1));
  EXPECT_NE(derive_seed(5, "a", 1), derive_seed(5, "a", 2));
  EXPECT_NE(derive_seed(5, "a", 1), derive_seed(5, "b", 1));
  EXPECT_NE(derive_seed(5, "a", 1), derive_seed(6, "a", 1));
}

TEST(Optim, Schedules) {
  EXPECT_DOUBLE_EQ(optim::poly_lr(1.0, 0, 100), 1.0);
  EXPECT_NEAR(optim::poly_lr(1.0, 50, 100, 0.9), std::pow(0.5, 0.9), 1e-15);
  EXPECT_DOUBLE_EQ(optim::step_lr(1.0, 999, 1000), 1.0);
  EXPECT_DOUBLE_EQ(optim::step_lr(1.0, 2000, 1000), 0.25);
}

TEST(Optim, SgdAndAdamDescendAQuadratic) {
  for (int which = 0; which < 2; ++which) {
    nn::ParameterSet<double> ps;
    auto x = ps.add("x", Tensor<double>({4}, 3.0));
    optim::Sgd<double> sgd(ps, 0.9, 0.0);
    optim::Adam<double> adam(ps, 0.9, 0.999);
    for (int i = 0; i < 300; ++i) {
      ps.zero_grad();
      backward(ops::mse_to_constant(x, 1.0));
      if (which == 0)
        sgd.step(0.1);
      else
        adam.step(0.05);
    }
    for (double v : x.value().vec()) EXPECT_NEAR(v, 1.0, 1e-2);
  }
}

// ---- checkpoints ---------------------------------------------------------------

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  ck.meta = {{"kind", "test"}, {"n", 3}};
  std::mt19937_64 g(1);
  ck.put("a", random_tensor<float>({2, 3}, g));
  ck.put("b", random_tensor<double>({4}, g));
  return ck;
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& b) {
  std::ofstream f(p, std::ios::binary);
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitIdentical) {
  test::TempDir dir("ckpt");
  const auto ck = sample_checkpoint();
  ck.save(dir / "x.ckpt");
  const auto back = Checkpoint::load(dir / "x.ckpt");
  EXPECT_EQ(back.meta, ck.meta);
  EXPECT_EQ(back.get<float>("a"), ck.get<float>("a"));
  EXPECT_EQ(back.get<double>("b"), ck.get<double>("b"));
  back.save(dir / "y.ckpt");
  EXPECT_EQ(read_bytes(dir / "x.ckpt"), read_bytes(dir / "y.ckpt"));
}

TEST(Checkpoint, TruncatedFileIsCorrupt) {
  test::TempDir dir("ckpt");
  sample_checkpoint().save(dir / "x.ckpt");
  auto bytes = read_bytes(dir / "x.ckpt");
  bytes.resize(bytes.size() - 7);
  write_bytes(dir / "x.ckpt", bytes);
  EXPECT_THROW(Checkpoint::load(dir / "x.ckpt"), CorruptionError);
}

TEST(Checkpoint, FlippedByteFailsChecksum) {
  test::TempDir dir("ckpt");
  sample_checkpoint().save(dir / "x.ckpt");
  auto bytes = read_bytes(dir / "x.ckpt");
  bytes[bytes.size() / 2] ^= 0x40;
  write_bytes(dir / "x.ckpt", bytes);
  EXPECT_THROW(Checkpoint::load(dir / "x.ckpt"), CorruptionError);
}

TEST(Checkpoint, FutureVersionIsRejected) {
  test::TempDir dir("ckpt");
  sample_checkpoint().save(dir / "x.ckpt");
  auto bytes = read_bytes(dir / "x.ckpt");
  const std::uint32_t future = kCheckpointVersion + 1;
  std::memcpy(bytes.data() + 8, &future, 4);
  write_bytes(dir / "x.ckpt", bytes);
  EXPECT_THROW(Checkpoint::load(dir / "x.ckpt"), VersionError);
}

TEST(Checkpoint, WrongScalarTypeAndMissingBlob) {
  const auto ck = sample_checkpoint();
  EXPECT_THROW(ck.get<double>("a"), CheckpointError);
  EXPECT_THROW(ck.get<float>("zzz"), CheckpointError);
}

TEST(LossLog, CsvRoundTrip) {
  test::TempDir dir("log");
  LossLog log;
  log.add(0, "L_s", 0.5);
  log.add(10, "L_t", 0.25);
  log.write_csv(dir / "loss.csv");
  const auto back = LossLog::read_csv(dir / "loss.csv");
  ASSERT_EQ(back.rows().size(), 2u);
  EXPECT_EQ(back.rows()[1].name, "L_t");
  EXPECT_DOUBLE_EQ(back.rows()[1].value, 0.25);
  EXPECT_THROW(check_finite("L_x", std::nan("")), NumericalError);
}

// ---- configuration -----------------------------------------------------------

TEST(Config, DefaultsValidateAndRoundTrip) {
  const PipelineConfig c;
  EXPECT_NO_THROW(c.validate());
  const auto back = parse_config(nlohmann::json(c));
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(c));
}

TEST(Config, OverridesAreTypeChecked) {
  nlohmann::json j = nlohmann::json::object();
  apply_overrides(j, {"translation.use_sem=false", "pseudo.K=5", "seed=9"});
  const auto c = parse_config(j);
  EXPECT_FALSE(c.translation.use_sem);
  EXPECT_EQ(c.pseudo.K, 5);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_THROW(apply_overrides(j, {"translation.nope=1"}), ConfigError);
  EXPECT_THROW(apply_overrides(j, {"pseudo.K=\"ten\""}), ConfigError);
  EXPECT_THROW(apply_overrides(j, {"novalue"}), ConfigError);
}

TEST(Config, UnknownKeysAndBadValuesRejected) {
  EXPECT_THROW(parse_config({{"bogus", 1}}), ConfigError);
  EXPECT_THROW(parse_config({{"pseudo", {{"K", 0}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"pseudo", {{"r_schedule", {1.5}}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"dataset", {{"min_objects", 7}, {"max_objects", 2}}}}), ConfigError);
}
