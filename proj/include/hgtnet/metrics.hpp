#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hgt::metrics {

struct PredictionRecord {
  std::string sample_id;
  int true_label = 0;
  std::vector<double> scores;
};

// Argmax with ties resolved toward the lowest index.
std::size_t predicted_label(std::span<const double> scores);

// Rows are actual classes, columns predicted classes.
struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::size_t> counts;  // num_classes x num_classes

  std::size_t at(std::size_t actual, std::size_t predicted) const { return counts[actual * num_classes + predicted]; }
  std::size_t row_sum(std::size_t actual) const;
  std::size_t col_sum(std::size_t predicted) const;
  std::size_t trace() const;
  std::size_t total() const;
};

ConfusionMatrix confusion_matrix(std::span<const PredictionRecord> records, std::size_t num_classes);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  // Set when the metric's denominator was zero and 0 was substituted.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

struct AverageMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassificationSummary {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  AverageMetrics macro;
  AverageMetrics weighted;
};

ClassificationSummary precision_recall_f1(const ConfusionMatrix& confusion);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  bool operator==(const RocPoint&) const = default;
};

// One-vs-rest curve on scores[positive_class]: one point per distinct score
// (descending), starting at (0, 0) and ending at (1, 1).
std::vector<RocPoint> roc_curve(std::span<const PredictionRecord> records, std::size_t positive_class);
// Trapezoidal area; ContractError unless the curve is anchored and monotone.
double auc_trapezoid(std::span<const RocPoint> curve);
// P(score_pos > score_neg) + 0.5 P(tie) over every positive/negative pair.
double auc_pair_oracle(std::span<const PredictionRecord> records, std::size_t positive_class);

struct MetricsReport {
  ConfusionMatrix confusion;
  ClassificationSummary summary;
  std::vector<std::vector<RocPoint>> roc;  // empty when the class is absent or universal
  std::vector<std::optional<double>> auc;
};

MetricsReport build_report(std::span<const PredictionRecord> records, std::size_t num_classes);

// Two decimals, half-up.
std::string format_metric(double value);
// Fixed-width table: one row per class, then Accuracy, Macro Avg, Weighted Avg.
std::string render_report(const MetricsReport& report, std::span<const std::string> class_names);

// ---- CSV interchange ----

std::string predictions_to_csv(std::span<const PredictionRecord> records);
// FormatError naming the 1-based line on any malformed row.
std::vector<PredictionRecord> predictions_from_csv(const std::string& text);
std::string confusion_to_csv(const ConfusionMatrix& confusion);
std::string roc_to_csv(std::span<const RocPoint> curve);
std::string auc_to_csv(const MetricsReport& report);

}  // namespace hgt::metrics
