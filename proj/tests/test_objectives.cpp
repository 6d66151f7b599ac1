#include "deaps/objectives.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace deaps;
using namespace deaps::objectives;
using namespace deaps::testing;

namespace {

Mat<double> rows(std::initializer_list<std::initializer_list<double>> v) {
  Mat<double> m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(v.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : v) {
    Eigen::Index c = 0;
    for (double x : row) m(r, c++) = x;
    ++r;
  }
  return m;
}

}  // namespace

TEST(Cosine, Examples) {
  EXPECT_NEAR(cosine_loss(rows({{0.3, -2.0}}), rows({{0.3, -2.0}})).value, 0.0, 1e-12);
  EXPECT_NEAR(cosine_loss(rows({{1, 0}}), rows({{0, 1}})).value, 1.0, 1e-12);
  EXPECT_NEAR(cosine_loss(rows({{1, 0}}), rows({{0.6, 0.8}})).value, 0.4, 1e-12);
}

TEST(Cosine, ZeroVectorIsGuarded) {
  const auto g = cosine_loss(rows({{0, 0}}), rows({{1, 0}}));
  EXPECT_TRUE(std::isfinite(g.value));
  EXPECT_TRUE(g.grad_a.allFinite());
}

TEST(Cosine, ScaleInvariantAndBounded) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    const Mat<double> a = random_mat(6, 8, rng), b = random_mat(6, 8, rng);
    const double v = cosine_loss(a, b).value;
    EXPECT_NEAR(cosine_loss<double>(3.7 * a, b).value, v, 1e-12);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 2.0);
  }
}

TEST(Cosine, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_LT(fd_cosine(s), 1e-4) << "seed " << s;
}

TEST(Par, Examples) {
  EXPECT_TRUE(par(rows({{0, 0}}), rows({{2, 2}}), {5}, {5}).isApprox(rows({{1, 1}}), 1e-12));
  const Mat<double> lim = par(rows({{4, -1}}), rows({{9, 9}}), {1e-9}, {1});
  EXPECT_NEAR((lim - rows({{4, -1}})).cwiseAbs().maxCoeff(), 0.0, 1e-6);
  const Mat<double> ex = par(rows({{0, 3}}), rows({{3, 0}}), {2}, {1});
  EXPECT_NEAR(ex(0, 0), 2.0, 1e-9);
  EXPECT_NEAR(ex(0, 1), 1.0, 1e-9);
}

TEST(Par, NonPositiveOffsetsRejected) {
  EXPECT_THROW(par(rows({{0, 0}}), rows({{1, 1}}), {0}, {1}), InvalidArgument);
  EXPECT_THROW(par(rows({{0, 0}}), rows({{1, 1}}), {1}, {-2}), InvalidArgument);
}

TEST(Par, FixedPointAndPerItemWeights) {
  std::mt19937_64 rng(2);
  const Mat<double> z = random_mat(3, 5, rng);
  EXPECT_TRUE(par(z, z, {10, 20, 30}, {40, 11, 12}).isApprox(z, 1e-12));
  const Mat<double> a = Mat<double>::Zero(2, 1), b = Mat<double>::Ones(2, 1);
  const Mat<double> p = par(a, b, {1, 3}, {3, 1});
  EXPECT_NEAR(p(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(p(1, 0), 0.75, 1e-12);
}

TEST(Mask, Examples) {
  const Mat<double> zero = Mat<double>::Zero(1, 4);
  EXPECT_EQ(gradual_mask(rows({{0.1, -1.5, 0.7, 0.05}}), zero, 2), rows({{0, 1, 1, 0}}));
  EXPECT_EQ(gradual_mask(rows({{1, 1, 0, 0}}), zero, 1), rows({{1, 0, 0, 0}}));
  EXPECT_EQ(gradual_mask(rows({{3, 1, 2, 9}}), zero, 4), Mat<double>::Ones(1, 4));
}

TEST(Mask, MatchesStableSortOracle) {
  for (std::uint64_t s = 0; s < 1000; ++s) ASSERT_TRUE(mask_instance_matches(s)) << "seed " << s;
}

TEST(Mask, OutOfRangeSelectionRejected) {
  const Mat<double> z = Mat<double>::Zero(2, 4);
  EXPECT_THROW(gradual_mask(z, z, 0), InvalidArgument);
  EXPECT_THROW(gradual_mask(z, z, 5), InvalidArgument);
}

TEST(Gradual, Examples) {
  const Mat<double> full = Mat<double>::Ones(1, 2);
  // PAR of [1,0] and [1,0] is [1,0].
  EXPECT_NEAR(gradual_loss(rows({{1, 1}}), rows({{1, 0}}), rows({{1, 0}}), {10}, {20}, full).value,
              1.0 - 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(gradual_loss(rows({{2, 4}}), rows({{1, 2}}), rows({{1, 2}}), {10}, {20}, full).value, 0.0, 1e-12);
  EXPECT_NEAR(gradual_loss(rows({{0, 1}}), rows({{1, 0}}), rows({{1, 0}}), {10}, {20}, full).value, 1.0, 1e-12);
}

TEST(Gradual, MaskedFeaturesIgnored) {
  const Mat<double> mask = rows({{1, 0}});
  const auto g = gradual_loss(rows({{2, -50}}), rows({{1, 7}}), rows({{1, 3}}), {10}, {20}, mask);
  EXPECT_NEAR(g.value, 0.0, 1e-12);
  EXPECT_EQ(g.grad_mid(0, 1), 0.0);
}

TEST(Gradual, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_LT(fd_gradual(s), 1e-4) << "seed " << s;
}

TEST(Covariance, Examples) {
  EXPECT_NEAR(covariance_loss(rows({{1, 0}, {-1, 0}, {0, 1}, {0, -1}})).value, 0.0, 1e-12);
  EXPECT_NEAR(covariance_loss(rows({{1, 1}, {-1, -1}})).value, 4.0, 1e-9);
}

TEST(Covariance, QuarticHomogeneity) {
  std::mt19937_64 rng(3);
  const Mat<double> z = random_mat(7, 5, rng);
  EXPECT_NEAR(covariance_loss<double>(2.0 * z).value, 16.0 * covariance_loss(z).value, 1e-9);
}

TEST(Covariance, SingleRowRejected) { EXPECT_THROW(covariance_loss(rows({{1, 2}})), InvalidArgument); }

TEST(Covariance, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_LT(fd_covariance(s), 1e-4) << "seed " << s;
}

TEST(Total, Composition) {
  EXPECT_NEAR(compose_total(0.5, 0.3, 1.0, 0.1), 0.9, 1e-12);
  EXPECT_NEAR(compose_total(0.5, 0.3, 123.0, 0.0), 0.8, 1e-12);
}

TEST(Total, BreakdownRecomposesFromParts) {
  std::mt19937_64 rng(4);
  const auto x = random_tensors(rng, 5, 8);
  LossConfig cfg;
  cfg.n_selected = 4;
  cfg.proj_dim = 8;
  const auto [lb, g] = total_loss(x, cfg);
  const Eigen::Index B = 5;
  auto blk = [B](const Mat<double>& m, Eigen::Index k) -> Mat<double> { return m.middleRows(k * B, B); };
  const double sim = 0.5 * (cosine_loss(blk(x.pred_static, 0), blk(x.teacher_static, 1)).value +
                            cosine_loss(blk(x.pred_static, 1), blk(x.teacher_static, 0)).value);
  const Mat<double> mask = gradual_mask(blk(x.pred_dynamic, 0), blk(x.pred_dynamic, 2), 4);
  const double gra =
      0.5 * (gradual_loss(blk(x.teacher_dynamic, 1), blk(x.pred_dynamic, 0), blk(x.pred_dynamic, 2), x.i_s, x.j_s, mask)
                 .value +
             gradual_loss(blk(x.pred_dynamic, 1), blk(x.teacher_dynamic, 0), blk(x.teacher_dynamic, 2), x.i_s, x.j_s,
                          mask)
                 .value);
  const double cov = covariance_loss(x.proj_static).value + covariance_loss(x.proj_dynamic).value;
  EXPECT_NEAR(lb.l_sim, sim, 1e-12);
  EXPECT_NEAR(lb.l_gra, gra, 1e-12);
  EXPECT_NEAR(lb.l_cov, cov, 1e-12);
  EXPECT_NEAR(lb.total, sim + gra + 0.1 * cov, 1e-12);
  EXPECT_EQ(g.mask, mask);
  EXPECT_GE(lb.l_sim, 0.0);
  EXPECT_LE(lb.l_sim, 2.0);
  EXPECT_GE(lb.l_gra, 0.0);
  EXPECT_LE(lb.l_gra, 2.0);
}

TEST(Total, TeacherGradientsAreZero) {
  std::mt19937_64 rng(5);
  LossConfig cfg;
  cfg.n_selected = 3;
  cfg.proj_dim = 8;
  const auto g = total_loss(random_tensors(rng), cfg).second;
  EXPECT_EQ(g.teacher_static.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.teacher_dynamic.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Total, AgreementGivesZeroSimilarityAndGradual) {
  std::mt19937_64 rng(6);
  const Eigen::Index B = 3, d = 6;
  const Mat<double> z = random_mat(B, d, rng), s1 = random_mat(B, d, rng);
  DeapsTensors<double> x;
  x.pred_static.resize(2 * B, d);
  x.pred_static << s1, s1;
  x.teacher_static = x.pred_static;
  x.proj_static = random_mat(2 * B, d, rng);
  // Endpoints 1z and 3z with i=j make the middle 2z, collinear with PAR.
  x.pred_dynamic.resize(3 * B, d);
  x.pred_dynamic << z, 2.0 * z, 3.0 * z;
  x.teacher_dynamic = x.pred_dynamic;
  x.proj_dynamic = random_mat(3 * B, d, rng);
  x.i_s = {20, 20, 20};
  x.j_s = {20, 20, 20};
  LossConfig cfg;
  cfg.n_selected = 2;
  cfg.proj_dim = d;
  const auto lb = total_loss(x, cfg).first;
  EXPECT_NEAR(lb.l_sim, 0.0, 1e-12);
  EXPECT_NEAR(lb.l_gra, 0.0, 1e-12);
}

TEST(Total, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_LT(fd_total(s), 1e-4) << "seed " << s;
}
