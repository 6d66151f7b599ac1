#include "deaps/baselines.hpp"
#include "deaps/trainer.hpp"

#include "fixtures.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace deaps;
using namespace deaps::train;
using namespace deaps::testing;

TEST(NtXent, IdenticalPositivesOrthogonalNegatives) {
  Mat<double> a(2, 2);
  a << 1, 0, 0, 1;
  const double v = nt_xent<double>(a, a, 0.1).value;
  // Each of the 4 anchors sees its positive at similarity 1/T and two negatives at 0.
  EXPECT_NEAR(v, std::log(1.0 + 2.0 * std::exp(-10.0)), 1e-12);
  EXPECT_LT(v, std::log(3.0));
}

TEST(NtXent, UniformSimilarityValue) {
  const Mat<double> a = Mat<double>::Ones(3, 4);
  EXPECT_NEAR(nt_xent<double>(a, a, 0.1).value, std::log(5.0), 1e-12);
}

TEST(NtXent, ScaleInvariant) {
  std::mt19937_64 rng(1);
  const Mat<double> a = random_mat(5, 6, rng), b = random_mat(5, 6, rng);
  EXPECT_NEAR(nt_xent<double>(4.2 * a, 0.3 * b, 0.1).value, nt_xent<double>(a, b, 0.1).value, 1e-10);
}

TEST(NtXent, PermutationInvariant) {
  std::mt19937_64 rng(2);
  const Mat<double> a = random_mat(5, 6, rng), b = random_mat(5, 6, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> p(5);
  p.indices() << 4, 2, 0, 1, 3;
  EXPECT_NEAR(nt_xent<double>(p * a, p * b, 0.1).value, nt_xent<double>(a, b, 0.1).value, 1e-10);
}

TEST(NtXent, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    std::mt19937_64 rng(s);
    Mat<double> a = random_mat(4, 8, rng), b = random_mat(4, 8, rng);
    const auto g = nt_xent<double>(a, b, 0.5);
    auto f = [&] { return nt_xent<double>(a, b, 0.5).value; };
    EXPECT_LT(rel_error(g.grad_a, numeric_grad(f, a)), 1e-4);
    EXPECT_LT(rel_error(g.grad_b, numeric_grad(f, b)), 1e-4);
  }
}

TEST(NtXent, SinglePairRejected) {
  const Mat<double> a = Mat<double>::Ones(1, 3);
  EXPECT_THROW(nt_xent<double>(a, a, 0.1), InvalidArgument);
}

TEST(Byol, LossInRangeAndUpdatesStudentOnly) {
  const auto corpus = small_corpus();
  auto s = init_state<double>(tiny_config(Method::Byol), corpus);
  EXPECT_FALSE(s.teacher->has_predictors());
  EXPECT_THROW(s.student.projector(model::HeadKind::Dynamic), InvalidArgument);
  for (int k = 0; k < 3; ++k) {
    const auto lb = byol_step(s, sampling::batch_for_iteration(corpus, s.config.sampler(), static_cast<std::uint64_t>(k)));
    EXPECT_GE(lb.total, 0.0);
    EXPECT_LE(lb.total, 2.0);
    EXPECT_EQ(lb.l_gra, 0.0);
    EXPECT_EQ(lb.l_cov, 0.0);
  }
  EXPECT_EQ(s.optimizer.steps(), 3);
}

TEST(Contrastive, BatchOfOneRejected) {
  auto cfg = tiny_config(Method::Contrastive);
  cfg.batch_size = 1;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(Baselines, ShareEncoderArchitecture) {
  const auto n = [](Method m) {
    auto s = make_state<float>(tiny_config(m));
    return model::count_parameters(s.student.encoder_parameters());
  };
  EXPECT_EQ(n(Method::Deaps), n(Method::Byol));
  EXPECT_EQ(n(Method::Deaps), n(Method::Contrastive));
}
