#include "studa/segmentation/train.hpp"
#include "support.hpp"

using namespace studa;
using namespace studa::seg;
using studa::test::random_tensor;

namespace {

constexpr int C = synth::kNumClasses;

SegmentationModel<double> tiny_segmenter(std::uint64_t seed, Role role = Role::pretrain) {
  return SegmentationModel<double>(SegArch{3, 2, 2, C}, role, seed);
}

SegmentationConfig tiny_seg_config() {
  SegmentationConfig c;
  c.iterations = 3;
  c.batch_size = 2;
  c.log_every = 1;
  return c;
}

std::vector<std::uint8_t> random_labels(std::size_t n, std::mt19937_64& g, double ignore_fraction = 0.1) {
  std::uniform_int_distribution<int> cls(0, C - 1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::uint8_t> out(n);
  for (auto& l : out) l = u(g) < ignore_fraction ? synth::kIgnoreLabel : static_cast<std::uint8_t>(cls(g));
  return out;
}

}  // namespace

TEST(Segmenter, PredictIsADistributionPerPixel) {
  SegmentationModel<float> m(seg_arch(SegmentationConfig{}), Role::pretrain, 3);
  std::mt19937_64 g(0);
  const auto p = m.predict(random_tensor<float>({2, 3, 32, 32}, g));
  EXPECT_EQ(p.shape(), (Shape{2, C, 32, 32}));
  for (const auto& map : split_maps(p)) EXPECT_NO_THROW(map.validate());
}

TEST(Segmenter, ZeroedHeadGivesUniformMap) {
  SegmentationModel<double> m(seg_arch(SegmentationConfig{}), Role::pretrain, 3);
  m.zero_head();
  std::mt19937_64 g(1);
  const auto p = m.predict(random_tensor<double>({1, 3, 32, 32}, g));
  for (double v : p.vec()) EXPECT_NEAR(v, 1.0 / C, 1e-12);
}

TEST(Segmenter, RejectsBadShapes) {
  SegmentationModel<float> m(seg_arch(SegmentationConfig{}), Role::pretrain, 3);
  EXPECT_THROW(m.predict(Tensor<float>({1, 3, 30, 32})), ShapeError);
  EXPECT_THROW(m.predict(Tensor<float>({1, 1, 32, 32})), ShapeError);
}

TEST(Segmenter, CheckpointRoundTrip) {
  SegmentationModel<float> m(seg_arch(SegmentationConfig{}), Role::target, 4);
  m.info["sigma2"] = 10.0;
  test::TempDir dir("seg");
  m.to_checkpoint().save(dir / "m.ckpt");
  const auto back = SegmentationModel<float>::from_checkpoint(Checkpoint::load(dir / "m.ckpt"));
  EXPECT_EQ(back.role(), Role::target);
  EXPECT_EQ(back.info, m.info);
  std::mt19937_64 g(2);
  const auto x = random_tensor<float>({1, 3, 32, 32}, g);
  EXPECT_EQ(m.predict(x), back.predict(x));
}

TEST(SelfInformation, WorkedExamples) {
  const auto a = weighted_self_information(Tensor<double>(Shape{2}, std::vector<double>{0.9, 0.1}));
  EXPECT_NEAR(a[0], 0.09482, 1e-5);
  EXPECT_NEAR(a[1], 0.23026, 1e-5);
  const auto b = weighted_self_information(Tensor<double>(Shape{2}, std::vector<double>{0.5, 0.5}));
  EXPECT_NEAR(b[0], 0.34657, 1e-5);
  EXPECT_NEAR(b[1], 0.34657, 1e-5);
  EXPECT_EQ(weighted_self_information(Tensor<double>(Shape{2}, std::vector<double>{1.0, 0.0}))[1], 0.0);
}

TEST(SelfInformation, GraphOpMatchesDirectFormula) {
  std::mt19937_64 g(3);
  const auto logits = random_tensor<double>({2, C, 4, 4}, g, -3, 3);
  const auto logp = ops::log_softmax_channels(constant(logits));
  const auto e = ops::self_information_from_log(logp).value();
  const auto direct = weighted_self_information(ops::exp(logp).value());
  for (std::size_t i = 0; i < e.size(); ++i) EXPECT_NEAR(e[i], direct[i], 1e-12);
}

TEST(CrossEntropy, UniformPredictionIsLogC) {
  Tensor<double> p(Shape{C, 2, 2}, 1.0 / C);
  const std::vector<std::uint8_t> y{0, 1, 4, 255};
  const auto r = ce_loss(p, y);
  EXPECT_NEAR(r.loss, 1.60944, 1e-5);
  EXPECT_EQ(r.pixels, 3);
  EXPECT_FALSE(r.all_ignored);
}

TEST(CrossEntropy, AllIgnoredIsZeroWithWarning) {
  Tensor<double> p(Shape{C, 1, 2}, 1.0 / C);
  const std::vector<std::uint8_t> y{255, 255};
  const auto r = ce_loss(p, y);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_TRUE(r.all_ignored);
}

TEST(CrossEntropy, LabelCountMismatch) {
  Tensor<double> p(Shape{C, 1, 2}, 1.0 / C);
  const std::vector<std::uint8_t> y{0};
  EXPECT_THROW(ce_loss(p, y), ShapeError);
}

TEST(Adversarial, ZeroLogitGivesLog2ForBothLosses) {
  EntropyDiscriminator<double> D(C, 2, 5);
  for (auto& [name, v] : D.parameters().items())
    if (name.rfind("classifier", 0) == 0) {
      Var<double> p = v;
      p.mutable_value().fill(0.0);
    }
  std::mt19937_64 g(4);
  const auto a = constant(random_tensor<double>({2, C, 32, 32}, g, 0, 0.5));
  const auto b = constant(random_tensor<double>({2, C, 32, 32}, g, 0, 0.5));
  const auto l = adversarial_alignment_losses(a, b, D);
  EXPECT_NEAR(l.generator.item(), std::log(2.0), 1e-12);
  EXPECT_NEAR(l.discriminator.item(), std::log(2.0), 1e-12);
}

TEST(Adversarial, ConfidentCorrectLogitsCostNothing) {
  const auto src = constant(Tensor<double>(Shape{1, 1, 2, 2}, 40.0));
  const auto tgt = constant(Tensor<double>(Shape{1, 1, 2, 2}, -40.0));
  EXPECT_LT(ops::bce_with_logits(src, kSourceSide).item(), 1e-12);
  EXPECT_LT(ops::bce_with_logits(tgt, kTargetSide).item(), 1e-12);
}

TEST(Adversarial, EmptyOrNonFiniteMapsRejected) {
  EntropyDiscriminator<double> D(C, 2, 5);
  const auto ok = constant(Tensor<double>(Shape{1, C, 16, 16}, 0.1));
  EXPECT_THROW(adversarial_alignment_losses(Var<double>(), ok, D), UsageError);
  Tensor<double> bad(Shape{1, C, 16, 16}, 0.1);
  bad[3] = std::nan("");
  EXPECT_THROW(adversarial_alignment_losses(ok, constant(bad), D), NumericalError);
}

TEST(Objective, SourceAndTargetAssembliesHaveCorrectGradients) {
  std::mt19937_64 g(6);
  for (bool pseudo : {false, true}) {
    auto F = tiny_segmenter(7);
    EntropyDiscriminator<double> D(C, 1, 8);
    test::jitter(F.parameters(), 9);
    test::jitter(D.parameters(), 10);
    ObjectiveInputs<double> in;
    in.labeled = constant(random_tensor<double>({2, 3, 8, 8}, g));
    in.labels = random_labels(2 * 64, g);
    in.adapt = constant(random_tensor<double>({2, 3, 8, 8}, g));
    if (pseudo) in.pseudo = random_labels(2 * 64, g, 0.5);
    // A large adversarial weight keeps that term visible in the total.
    const ObjectiveWeights w{true, 0.5, 1.0};
    const auto r = test::grad_check(F.parameters(), [&] { return segmentation_objective(F, &D, in, w).total; });
    EXPECT_LT(r.rel_error, 1e-4) << "pseudo=" << pseudo;
    const auto rd =
        test::grad_check(D.parameters(), [&] { return segmentation_objective(F, &D, in, w).adv_discriminator; });
    EXPECT_LT(rd.rel_error, 1e-4) << "pseudo=" << pseudo;
  }
}

TEST(Objective, TotalIsTheWeightedSumOfTerms) {
  std::mt19937_64 g(11);
  const auto F = tiny_segmenter(7);
  EntropyDiscriminator<double> D(C, 1, 8);
  ObjectiveInputs<double> in;
  in.labeled = constant(random_tensor<double>({1, 3, 8, 8}, g));
  in.labels = random_labels(64, g);
  in.adapt = constant(random_tensor<double>({1, 3, 8, 8}, g));
  in.pseudo = random_labels(64, g, 0.5);
  const ObjectiveWeights w{true, 0.25, 2.0};
  const auto t = segmentation_objective(F, &D, in, w);
  EXPECT_NEAR(t.total.item(), t.ce.item() + 0.25 * t.adv_generator.item() + 2.0 * t.pseudo_ce.item(), 1e-12);
  const auto plain = segmentation_objective(F, &D, in, ObjectiveWeights{false, 0.25, 2.0});
  EXPECT_FALSE(plain.adv_generator.defined());
  ObjectiveInputs<double> no_adapt = in;
  no_adapt.adapt = Var<double>();
  EXPECT_THROW(segmentation_objective(F, &D, no_adapt, w), UsageError);
}

TEST(Objective, AllIgnoredPseudoLabelsContributeZero) {
  std::mt19937_64 g(12);
  const auto F = tiny_segmenter(7);
  ObjectiveInputs<double> in;
  in.labeled = constant(random_tensor<double>({1, 3, 8, 8}, g));
  in.labels = random_labels(64, g);
  in.adapt = constant(random_tensor<double>({1, 3, 8, 8}, g));
  in.pseudo.assign(64, synth::kIgnoreLabel);
  const auto t = segmentation_objective<double>(F, nullptr, in, ObjectiveWeights{false, 0.0, 1.0});
  EXPECT_EQ(t.pseudo_ce.item(), 0.0);
  EXPECT_TRUE(t.pseudo_all_ignored);
}

class SegTraining : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto g = test::tiny_generator(6, 6, 2);
    source = test::render_split(g, "source-train");
    target = test::render_split(g, "target-train", false);
  }
  std::vector<synth::LabeledImage> source, target;
  Translator translator{translation::translator_arch(TranslationConfig{}), 3};
};

TEST_F(SegTraining, PretrainIsDeterministic) {
  TrainOptions o{tiny_seg_config(), 4};
  LossLog la, lb;
  o.log = &la;
  const auto a = pretrain_semantic_net(o, {&source, &target});
  o.log = &lb;
  const auto b = pretrain_semantic_net(o, {&source, &target});
  EXPECT_EQ(a.parameters().snapshot(), b.parameters().snapshot());
  EXPECT_EQ(la.rows(), lb.rows());
  EXPECT_FALSE(la.empty());
}

TEST_F(SegTraining, TargetNetworkNeedsTranslator) {
  TrainOptions o{tiny_seg_config(), 4};
  EXPECT_THROW(train_target_network(o, nullptr, {&source, &target}, StylePolicy{}), PrerequisiteError);
  EXPECT_THROW(train_source_network(o, nullptr, {&source, &target}), PrerequisiteError);
  EXPECT_THROW(train_target_network(o, &translator, {&source, &target}, StylePolicy{0.0, false}), ConfigError);
}

TEST_F(SegTraining, PseudoLabelsMustCoverTarget) {
  TrainOptions o{tiny_seg_config(), 4};
  LabelIndex partial{{target[0].id, std::vector<std::uint8_t>(target[0].labels.size(), 0)}};
  EXPECT_THROW(train_source_network(o, &translator, {&source, &target, &partial}), DatasetIntegrityError);
}

TEST_F(SegTraining, FrozenStyleDecodesDeterministically) {
  const auto codes = encode_contents(translator, source, synth::Domain::source);
  const auto content = gather_contents(codes, {0, 1});
  Rng a(1), b(2);
  const StylePolicy frozen{10.0, true};
  EXPECT_EQ(decode_batch(translator, content, synth::Domain::target, frozen, a),
            decode_batch(translator, content, synth::Domain::target, frozen, b));
  Rng c(1), d(2);
  const StylePolicy sampled{10.0, false};
  EXPECT_NE(decode_batch(translator, content, synth::Domain::target, sampled, c),
            decode_batch(translator, content, synth::Domain::target, sampled, d));
}

TEST_F(SegTraining, AdaptedNetworksRecordTheirSettings) {
  TrainOptions o{tiny_seg_config(), 5};
  const auto ft = train_target_network(o, &translator, {&source, &target}, StylePolicy{10.0, false});
  EXPECT_EQ(ft.role(), Role::target);
  EXPECT_EQ(ft.info.at("sigma2").get<double>(), 10.0);
  EXPECT_FALSE(ft.info.at("frozen_style").get<bool>());
  o.cfg.use_adversarial = false;
  const auto fs = train_source_network(o, &translator, {&source, &target});
  EXPECT_EQ(fs.role(), Role::source);
  EXPECT_FALSE(fs.info.at("adversarial").get<bool>());
}

TEST_F(SegTraining, InitWeightsAreUsedAsStartingPoint) {
  TrainOptions o{tiny_seg_config(), 6};
  o.cfg.iterations = 0;
  const auto base = pretrain_semantic_net(TrainOptions{tiny_seg_config(), 7}, {&source, &target});
  o.init = &base;
  const auto copy = pretrain_semantic_net(o, {&source, &target});
  EXPECT_EQ(copy.parameters().snapshot(), base.parameters().snapshot());
}
