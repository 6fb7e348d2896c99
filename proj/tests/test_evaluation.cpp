#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "lcmia/evaluation.hpp"

using namespace lcmia;

namespace {

MetricsReport from(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  ConfusionCounts c;
  c.tp = tp;
  c.fp = fp;
  c.fn = fn;
  c.tn = tn;
  return metrics_from_counts(c);
}

std::vector<LabeledScore> labeled(std::vector<double> members, std::vector<double> nonmembers) {
  std::vector<LabeledScore> v;
  for (double m : members) v.push_back({m, Membership::Member});
  for (double n : nonmembers) v.push_back({n, Membership::NonMember});
  return v;
}

double accuracy_at(std::span<const LabeledScore> s, double t, Direction d) {
  std::size_t ok = 0;
  for (const auto& x : s) ok += classify(x.value, t, d) == x.label;
  return static_cast<double>(ok) / static_cast<double>(s.size());
}

}  // namespace

struct Expected {
  std::size_t tp, fp, fn, tn;
  double acc, prec, rec, f1;
  bool prec_undef, rec_undef, f1_undef;
};

class HandMatrices : public ::testing::TestWithParam<Expected> {};

TEST_P(HandMatrices, Exact) {
  const auto& e = GetParam();
  auto r = from(e.tp, e.fp, e.fn, e.tn);
  EXPECT_NEAR(r.accuracy, e.acc, 1e-9);
  EXPECT_NEAR(r.precision, e.prec, 1e-9);
  EXPECT_NEAR(r.recall, e.rec, 1e-9);
  EXPECT_NEAR(r.f1, e.f1, 1e-9);
  EXPECT_EQ(r.precision_undefined, e.prec_undef);
  EXPECT_EQ(r.recall_undefined, e.rec_undef);
  EXPECT_EQ(r.f1_undefined, e.f1_undef);
  EXPECT_LE(r.f1, std::max(r.precision, r.recall) + 1e-12);
}

INSTANTIATE_TEST_SUITE_P(
    Metrics, HandMatrices,
    ::testing::Values(
        Expected{500, 0, 0, 500, 100, 100, 100, 100, false, false, false},
        Expected{3, 1, 1, 5, 80, 75, 75, 75, false, false, false},
        Expected{0, 0, 5, 5, 50, 0, 0, 0, true, false, true},      // never predicts member
        Expected{0, 0, 0, 10, 100, 0, 0, 0, true, true, true},     // no members at all
        Expected{0, 5, 5, 0, 0, 0, 0, 0, false, false, true},      // always wrong
        Expected{10, 10, 0, 0, 50, 50, 100, 200.0 / 3, false, false, false},
        Expected{1, 0, 3, 4, 62.5, 100, 25, 40, false, false, false},
        Expected{6, 2, 2, 0, 60, 75, 75, 75, false, false, false},
        Expected{2, 8, 0, 0, 20, 20, 100, 100.0 / 3, false, false, false},
        Expected{0, 4, 0, 6, 60, 0, 0, 0, false, true, true},      // no actual members
        Expected{7, 3, 1, 9, 80, 70, 87.5, 700.0 / 9, false, false, false},
        Expected{1, 1, 1, 1, 50, 50, 50, 50, false, false, false}));

TEST(Metrics, ReconstructedMetaRow) {
  // 500 members / 500 non-members.
  auto r = from(432, 21, 68, 479);
  EXPECT_NEAR(r.accuracy, 91.10, 0.05);
  EXPECT_NEAR(r.precision, 95.36, 0.05);
  EXPECT_NEAR(r.recall, 86.40, 0.05);
  EXPECT_NEAR(r.f1, 90.66, 0.05);
}

TEST(Metrics, ZeroSamplesRejected) { EXPECT_THROW(metrics_from_counts({}), ValidationError); }

TEST(Metrics, OrderInvariant) {
  std::vector<LabeledVerdict> v;
  for (int i = 0; i < 50; ++i)
    v.push_back({i % 3 ? Membership::Member : Membership::NonMember, i % 2 ? Membership::Member : Membership::NonMember});
  auto a = compute_metrics(v);
  std::ranges::reverse(v);
  auto b = compute_metrics(v);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.f1, b.f1);
}

TEST(Metrics, JsonRoundsToTwoDecimals) {
  auto r = from(432, 21, 68, 479);
  auto j = to_json(r);
  EXPECT_DOUBLE_EQ(j["precision"].get<double>(), 95.36);
  EXPECT_EQ(j["counts"]["tp"], 432);
}

TEST(Classify, InclusiveBoundary) {
  EXPECT_EQ(classify(0.1, 0.5, Direction::LowerIsMember), Membership::Member);
  EXPECT_EQ(classify(0.5, 0.5, Direction::LowerIsMember), Membership::Member);
  EXPECT_EQ(classify(0.6, 0.5, Direction::LowerIsMember), Membership::NonMember);
  EXPECT_EQ(classify(0.5, 0.5, Direction::HigherIsMember), Membership::Member);
  EXPECT_EQ(classify(0.4, 0.5, Direction::HigherIsMember), Membership::NonMember);
  EXPECT_THROW(classify(AttackScore::of(ScoreKind::Loss, 0.1), 0.5, Direction::HigherIsMember), ValidationError);
  EXPECT_EQ(classify(AttackScore::of(ScoreKind::Bleu, 60), 50, Direction::HigherIsMember), Membership::Member);
}

TEST(Calibrate, SeparatedGivesMidpoint) {
  auto s = labeled({0.1, 0.2, 0.3}, {0.9, 1.1});
  auto c = calibrate_threshold(s, Direction::LowerIsMember);
  EXPECT_DOUBLE_EQ(c.threshold, 0.6);
  EXPECT_DOUBLE_EQ(c.objective_value, 1.0);
  auto h = calibrate_threshold(labeled({80, 90}, {10, 20}), Direction::HigherIsMember);
  EXPECT_DOUBLE_EQ(h.threshold, 50);
  EXPECT_DOUBLE_EQ(h.objective_value, 1.0);
}

TEST(Calibrate, SmallOverlapExample) {
  auto c = calibrate_threshold(labeled({1, 2}, {1.5, 3}), Direction::LowerIsMember);
  EXPECT_DOUBLE_EQ(c.objective_value, 0.75);
  EXPECT_DOUBLE_EQ(c.threshold, 1.25);
}

TEST(Calibrate, AllIdentical) {
  auto c = calibrate_threshold(labeled({4, 4}, {4, 4}), Direction::LowerIsMember);
  EXPECT_DOUBLE_EQ(c.threshold, 4);
  EXPECT_DOUBLE_EQ(c.objective_value, 0.5);
}

TEST(Calibrate, SingleClassRejected) {
  EXPECT_THROW(calibrate_threshold(labeled({1, 2}, {}), Direction::LowerIsMember), ValidationError);
}

TEST(Calibrate, F1Objective) {
  auto s = labeled({1, 2, 3}, {2.5, 4, 5});
  auto c = calibrate_threshold(s, Direction::LowerIsMember, CalibrationObjective::F1);
  EXPECT_EQ(c.objective, CalibrationObjective::F1);
  // Threshold 3 catches every member with one false positive: F1 = 6/7.
  EXPECT_NEAR(c.objective_value, 6.0 / 7.0, 1e-12);
}

// Brute force: every distinct score used directly as the inclusive threshold.
TEST(Calibrate, EquivalentToBruteForceOn100RandomSets) {
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 2 + rng() % 60;
    std::vector<LabeledScore> s;
    bool coarse = trial % 3 == 0;  // many ties
    for (std::size_t i = 0; i < n; ++i) {
      auto label = i == 0 ? Membership::Member : i == 1 ? Membership::NonMember
                   : (rng() & 1) ? Membership::Member : Membership::NonMember;
      double shift = label == Membership::Member ? 0.0 : 0.7;
      double v = std::uniform_real_distribution<double>(0, 2)(rng) + shift;
      if (coarse) v = std::round(v * 4) / 4;
      s.push_back({v, label});
    }
    for (auto dir : {Direction::LowerIsMember, Direction::HigherIsMember}) {
      std::vector<double> distinct;
      for (auto& x : s) distinct.push_back(x.value);
      std::ranges::sort(distinct);
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      double best_acc = -1, best_t = 0;
      for (double t : distinct) {
        double a = accuracy_at(s, t, dir);
        if (a > best_acc) {
          best_acc = a;
          best_t = t;
        }
      }
      auto c = calibrate_threshold(s, dir);
      ASSERT_NEAR(c.objective_value, best_acc, 1e-12) << "trial " << trial;
      ASSERT_NEAR(accuracy_at(s, c.threshold, dir), best_acc, 1e-12);
      for (auto& x : s)
        ASSERT_EQ(classify(x.value, c.threshold, dir), classify(x.value, best_t, dir)) << "trial " << trial;
    }
  }
}

TEST(Auc, PerfectAndChance) {
  EXPECT_DOUBLE_EQ(roc_auc(labeled({0.1, 0.2}, {0.8, 0.9}), Direction::LowerIsMember), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(labeled({0.1, 0.2}, {0.8, 0.9}), Direction::HigherIsMember), 0.0);
  EXPECT_DOUBLE_EQ(roc_auc(labeled({1, 1}, {1, 1}), Direction::HigherIsMember), 0.5);
}

TEST(Density, NormalisedPerClass) {
  auto s = labeled({0.0, 0.1, 0.2, 0.1}, {0.9, 1.0, 0.8});
  auto t = export_density(s, 10);
  ASSERT_EQ(t.bins(), 10u);
  double m = 0, n = 0;
  for (std::size_t i = 0; i < t.bins(); ++i) {
    m += t.member[i];
    n += t.nonmember[i];
  }
  EXPECT_NEAR(m, 1.0, 1e-12);
  EXPECT_NEAR(n, 1.0, 1e-12);
  EXPECT_NEAR(t.overlap(), 0.0, 1e-12);
  EXPECT_EQ(t.member.back(), 0.0);
  EXPECT_NEAR(t.nonmember.back(), 2.0 / 3.0, 1e-12);  // max value lands in the last bin

  auto csv = t.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "bin,lo,hi,norm_lo,norm_hi,member,nonmember");
  EXPECT_EQ(std::ranges::count(csv, '\n'), 11);
  EXPECT_THROW(export_density(s, 1), ValidationError);
}

TEST(Density, SingleValueGoesToFirstBin) {
  auto t = export_density(labeled({3.0}, {3.0}), 5);
  EXPECT_EQ(t.member[0], 1.0);
  EXPECT_EQ(t.nonmember[0], 1.0);
  EXPECT_DOUBLE_EQ(t.overlap(), 1.0);
}
