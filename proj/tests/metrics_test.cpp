#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hgtnet/errors.hpp"
#include "hgtnet/metrics.hpp"
#include "hgtnet/rng.hpp"
#include "table_fixture.hpp"

using namespace hgt;
using namespace hgt::metrics;

namespace {

PredictionRecord rec(int label, std::vector<double> scores, std::string id = "s") {
  return {std::move(id), label, std::move(scores)};
}

std::vector<PredictionRecord> random_records(RngStream& rng, std::size_t n, std::size_t k, bool coarse) {
  std::vector<PredictionRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    PredictionRecord r;
    r.sample_id = "r" + std::to_string(i);
    r.true_label = static_cast<int>(rng.below(k));
    for (std::size_t c = 0; c < k; ++c) {
      // Coarse scores collide often, which exercises tie handling.
      r.scores.push_back(coarse ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

// ---- confusion ----

TEST(Confusion, PerfectPredictionsAreDiagonal) {
  std::vector<PredictionRecord> rs{rec(0, {1, 0}), rec(1, {0, 1}), rec(1, {0.2, 0.8})};
  const ConfusionMatrix cm = confusion_matrix(rs, 2);
  EXPECT_EQ(cm.counts, (std::vector<std::size_t>{1, 0, 0, 2}));
  EXPECT_EQ(cm.trace(), 3u);
}

TEST(Confusion, TiesGoToLowestIndex) {
  EXPECT_EQ(predicted_label(std::vector<double>{0.4, 0.4, 0.2}), 0u);
  EXPECT_EQ(predicted_label(std::vector<double>{0.1, 0.45, 0.45}), 1u);
  EXPECT_THROW(predicted_label(std::vector<double>{}), ContractError);
}

TEST(Confusion, MatchesTallyOracle) {
  RngStream rng(1, 1);
  const auto rs = random_records(rng, 300, 4, true);
  const ConfusionMatrix cm = confusion_matrix(rs, 4);
  std::vector<std::size_t> tally(16, 0);
  for (const auto& r : rs) {
    std::size_t best = 0;
    for (std::size_t k = 0; k < 4; ++k)
      if (r.scores[k] > r.scores[best]) best = k;
    ++tally[static_cast<std::size_t>(r.true_label) * 4 + best];
  }
  EXPECT_EQ(cm.counts, tally);
  EXPECT_EQ(cm.total(), rs.size());
}

TEST(Confusion, LabelOutOfRangeIsContractError) {
  std::vector<PredictionRecord> rs{rec(2, {0.5, 0.5})};
  EXPECT_THROW(confusion_matrix(rs, 2), ContractError);
}

TEST(Confusion, ReferenceColonAdenocarcinomaRow) {
  const auto rs = hgt::testing::reference_records();
  const ConfusionMatrix cm = confusion_matrix(rs, 5);
  EXPECT_EQ(cm.at(0, 0), 474u);
  EXPECT_EQ(cm.row_sum(0), 500u);
  EXPECT_EQ(cm.row_sum(4), 499u);
  EXPECT_EQ(cm.total(), 2499u);
}

// ---- precision / recall / F1 ----

TEST(Prf, ReferenceRecallArithmetic) {
  const auto s = precision_recall_f1(confusion_matrix(hgt::testing::reference_records(), 5));
  EXPECT_EQ(s.per_class[0].recall, 474.0 / 500.0);
  EXPECT_EQ(s.per_class[1].recall, 490.0 / 500.0);
  EXPECT_EQ(s.per_class[4].recall, 453.0 / 499.0);
  EXPECT_EQ(format_metric(s.per_class[0].recall), "0.95");
  EXPECT_EQ(format_metric(s.per_class[1].recall), "0.98");
  EXPECT_EQ(format_metric(s.per_class[4].recall), "0.91");
}

TEST(Prf, IdentityIsPerfect) {
  ConfusionMatrix cm{3, {4, 0, 0, 0, 5, 0, 0, 0, 6}};
  const auto s = precision_recall_f1(cm);
  for (const auto& m : s.per_class) {
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    EXPECT_EQ(m.f1, 1.0);
  }
  EXPECT_EQ(s.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(s.macro.f1, 1.0);
  EXPECT_DOUBLE_EQ(s.weighted.f1, 1.0);
}

TEST(Prf, ZeroDenominatorsAreFlagged) {
  // Class 2 never predicted and never present.
  ConfusionMatrix cm{3, {2, 1, 0, 0, 3, 0, 0, 0, 0}};
  const auto s = precision_recall_f1(cm);
  EXPECT_EQ(s.per_class[2].precision, 0.0);
  EXPECT_TRUE(s.per_class[2].precision_undefined);
  EXPECT_TRUE(s.per_class[2].recall_undefined);
  EXPECT_TRUE(s.per_class[2].f1_undefined);
  EXPECT_FALSE(s.per_class[0].precision_undefined);
  EXPECT_THROW(precision_recall_f1(ConfusionMatrix{2, {0, 0, 0, 0}}), ContractError);
}

TEST(Prf, EqualSupportsMakeWeightedEqualMacro) {
  ConfusionMatrix cm{3, {5, 3, 2, 1, 8, 1, 0, 4, 6}};
  const auto s = precision_recall_f1(cm);
  EXPECT_DOUBLE_EQ(s.weighted.precision, s.macro.precision);
  EXPECT_DOUBLE_EQ(s.weighted.recall, s.macro.recall);
  EXPECT_DOUBLE_EQ(s.weighted.f1, s.macro.f1);
  EXPECT_DOUBLE_EQ(s.accuracy, 19.0 / 30.0);
}

// ---- ROC / AUC ----

TEST(Roc, PerfectSeparationPassesThroughTopLeft) {
  std::vector<PredictionRecord> rs{rec(1, {0.1, 0.9}), rec(1, {0.3, 0.7}), rec(0, {0.6, 0.4}), rec(0, {0.8, 0.2})};
  const auto curve = roc_curve(rs, 1);
  EXPECT_NE(std::find(curve.begin(), curve.end(), RocPoint{0.0, 1.0}), curve.end());
  EXPECT_EQ(auc_trapezoid(curve), 1.0);
  EXPECT_EQ(auc_pair_oracle(rs, 1), 1.0);
}

TEST(Roc, AllTiesGiveDiagonal) {
  std::vector<PredictionRecord> rs{rec(1, {0.5, 0.5}), rec(0, {0.5, 0.5}), rec(0, {0.5, 0.5})};
  const auto curve = roc_curve(rs, 1);
  EXPECT_EQ(curve, (std::vector<RocPoint>{{0, 0}, {1, 1}}));
  EXPECT_EQ(auc_trapezoid(curve), 0.5);
  EXPECT_EQ(auc_pair_oracle(rs, 1), 0.5);
}

TEST(Roc, TwoPairEnumeration) {
  std::vector<PredictionRecord> rs{rec(1, {0.1, 0.9}), rec(1, {0.6, 0.4}), rec(0, {0.5, 0.5})};
  EXPECT_EQ(auc_pair_oracle(rs, 1), 0.5);
  EXPECT_NEAR(auc_trapezoid(roc_curve(rs, 1)), 0.5, 1e-12);
}

TEST(Roc, SingleClassIsDegenerate) {
  std::vector<PredictionRecord> rs{rec(1, {0.1, 0.9}), rec(1, {0.6, 0.4})};
  EXPECT_THROW(roc_curve(rs, 1), DegenerateInputError);
  EXPECT_THROW(auc_pair_oracle(rs, 0), DegenerateInputError);
}

TEST(Roc, MatchesExhaustiveThresholdOracle) {
  RngStream rng(2, 2);
  for (int trial = 0; trial < 50; ++trial) {
    auto rs = random_records(rng, 20, 3, trial % 2 == 0);
    rs[0].true_label = 0;
    rs[1].true_label = 1;
    const auto curve = roc_curve(rs, 0);
    std::vector<double> thresholds;
    for (const auto& r : rs) thresholds.push_back(r.scores[0]);
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    std::vector<RocPoint> expected{{0, 0}};
    double pos = 0, neg = 0;
    for (const auto& r : rs) (r.true_label == 0 ? pos : neg) += 1;
    for (double t : thresholds) {
      double tp = 0, fp = 0;
      for (const auto& r : rs)
        if (r.scores[0] >= t) (r.true_label == 0 ? tp : fp) += 1;
      expected.push_back({fp / neg, tp / pos});
    }
    EXPECT_EQ(curve, expected);
  }
}

TEST(Roc, MonotoneAndBounded) {
  RngStream rng(3, 3);
  for (int trial = 0; trial < 30; ++trial) {
    auto rs = random_records(rng, 60, 4, trial % 3 == 0);
    rs[0].true_label = 2;
    rs[1].true_label = 0;
    const auto curve = roc_curve(rs, 2);
    for (std::size_t i = 0; i < curve.size(); ++i) {
      EXPECT_GE(curve[i].fpr, 0.0);
      EXPECT_LE(curve[i].tpr, 1.0);
      if (i > 0) {
        EXPECT_GE(curve[i].fpr, curve[i - 1].fpr);
        EXPECT_GE(curve[i].tpr, curve[i - 1].tpr);
      }
    }
  }
}

TEST(Auc, TrapezoidEqualsPairOracleProperty) {
  RngStream rng(4, 4);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    auto rs = random_records(rng, n, 3, trial % 2 == 0);
    rs[0].true_label = 1;
    rs[1].true_label = 2;
    const double a = auc_trapezoid(roc_curve(rs, 1));
    const double b = auc_pair_oracle(rs, 1);
    ASSERT_NEAR(a, b, 1e-9) << "trial " << trial;
    ASSERT_GE(a, 0.0);
    ASSERT_LE(a, 1.0);
  }
}

TEST(Auc, RejectsMalformedCurves) {
  EXPECT_THROW(auc_trapezoid(std::vector<RocPoint>{{0, 0}, {0.5, 0.6}, {0.4, 0.7}, {1, 1}}), ContractError);
  EXPECT_THROW(auc_trapezoid(std::vector<RocPoint>{{0, 0}, {0.5, 0.5}}), ContractError);
  EXPECT_EQ(auc_trapezoid(std::vector<RocPoint>{{0, 0}, {1, 1}}), 0.5);
}

// ---- report ----

TEST(Report, RoundingIsHalfUp) {
  EXPECT_EQ(format_metric(0.948), "0.95");
  EXPECT_EQ(format_metric(0.905), "0.91");
  EXPECT_EQ(format_metric(0.9049), "0.90");
  EXPECT_EQ(format_metric(1.0), "1.00");
  EXPECT_EQ(format_metric(0.0), "0.00");
}

TEST(Report, ReproducesReferenceTable) {
  const std::vector<std::string> names{"colon_aca", "colon_n", "lung_aca", "lung_n", "lung_scc"};
  const MetricsReport report = build_report(hgt::testing::reference_records(), 5);
  const std::string text = render_report(report, names);
  const std::vector<std::vector<std::string>> expected{
      {"colon_aca", "0.98", "0.95", "0.96", "500"}, {"colon_n", "0.95", "0.98", "0.97", "500"},
      {"lung_aca", "0.90", "0.94", "0.92", "500"},  {"lung_n", "0.99", "1.00", "1.00", "500"},
      {"lung_scc", "0.96", "0.91", "0.93", "499"},  {"Accuracy", "0.96", "2499"},
      {"Macro", "Avg", "0.96", "0.96", "0.96", "2499"}, {"Weighted", "Avg", "0.96", "0.96", "0.96", "2499"}};
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  EXPECT_NE(line.find("Precision"), std::string::npos);
  for (const auto& row : expected) {
    ASSERT_TRUE(std::getline(lines, line));
    std::istringstream cells(line);
    std::vector<std::string> got;
    for (std::string c; cells >> c;) got.push_back(c);
    EXPECT_EQ(got, row) << line;
  }
  EXPECT_FALSE(std::getline(lines, line));
}

TEST(Report, PerfectPredictionsRenderOnes) {
  std::vector<PredictionRecord> rs;
  for (int k = 0; k < 5; ++k)
    for (int i = 0; i < 3; ++i) {
      std::vector<double> s(5, 0.0);
      s[static_cast<std::size_t>(k)] = 1.0;
      rs.push_back(rec(k, s));
    }
  const std::vector<std::string> names{"a", "b", "c", "d", "e"};
  const MetricsReport report = build_report(rs, 5);
  const std::string text = render_report(report, names);
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) {
    std::istringstream cells(line);
    std::vector<std::string> got;
    for (std::string c; cells >> c;) got.push_back(c);
    for (const auto& c : got) {
      if (c.find('.') != std::string::npos) {
        EXPECT_EQ(c, "1.00");
      }
    }
  }
  for (const auto& a : report.auc) EXPECT_EQ(*a, 1.0);
}

TEST(Report, OrderInsensitive) {
  RngStream rng(5, 5);
  auto rs = random_records(rng, 80, 4, true);
  const std::vector<std::string> names{"a", "b", "c", "d"};
  const MetricsReport a = build_report(rs, 4);
  std::reverse(rs.begin(), rs.end());
  std::swap(rs[3], rs[40]);
  const MetricsReport b = build_report(rs, 4);
  EXPECT_EQ(render_report(a, names), render_report(b, names));
  EXPECT_EQ(a.confusion.counts, b.confusion.counts);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(a.roc[k], b.roc[k]);
    EXPECT_EQ(a.auc[k], b.auc[k]);
  }
}

TEST(Report, AbsentClassHasNoCurve) {
  std::vector<PredictionRecord> rs{rec(0, {0.9, 0.1, 0.0}), rec(1, {0.2, 0.8, 0.0})};
  const MetricsReport r = build_report(rs, 3);
  EXPECT_TRUE(r.roc[2].empty());
  EXPECT_FALSE(r.auc[2].has_value());
  EXPECT_TRUE(r.auc[0].has_value());
}

// ---- CSV ----

TEST(Csv, PredictionsRoundTripExactly) {
  RngStream rng(6, 6);
  const auto rs = random_records(rng, 25, 5, false);
  const std::string text = predictions_to_csv(rs);
  EXPECT_EQ(text.substr(0, text.find('\n')), "sample_id,true_label,score_0,score_1,score_2,score_3,score_4");
  const auto back = predictions_from_csv(text);
  ASSERT_EQ(back.size(), rs.size());
  for (std::size_t i = 0; i < rs.size(); ++i) {
    EXPECT_EQ(back[i].sample_id, rs[i].sample_id);
    EXPECT_EQ(back[i].true_label, rs[i].true_label);
    EXPECT_EQ(back[i].scores, rs[i].scores);
  }
}

TEST(Csv, MalformedRowsNameTheLine) {
  const std::string header = "sample_id,true_label,score_0,score_1\n";
  const auto expect_line = [](const std::string& text, const std::string& needle) {
    try {
      predictions_from_csv(text);
      FAIL() << "no error for " << text;
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_line(header + "a,0,0.5,0.5\nb,1,0.5\n", "line 3");
  expect_line(header + "a,0,0.5,zz\n", "line 2");
  expect_line(header + "a,7,0.5,0.5\n", "line 2");
  expect_line(header + "a,-1,0.5,0.5\n", "line 2");
  expect_line("id,label\n", "line 1");
  EXPECT_THROW(predictions_from_csv(header), FormatError);
}

TEST(Csv, ConfusionAndRocDumps) {
  ConfusionMatrix cm{2, {3, 1, 0, 4}};
  EXPECT_EQ(confusion_to_csv(cm), "actual,pred_0,pred_1\n0,3,1\n1,0,4\n");
  EXPECT_EQ(roc_to_csv(std::vector<RocPoint>{{0, 0}, {0.5, 1}, {1, 1}}), "fpr,tpr\n0,0\n0.5,1\n1,1\n");
}
