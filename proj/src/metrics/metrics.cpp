#include "hgtnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "hgtnet/errors.hpp"

namespace hgt::metrics {

std::size_t predicted_label(std::span<const double> scores) {
  if (scores.empty()) throw ContractError("prediction has no scores");
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k)
    if (scores[k] > scores[best]) best = k;
  return best;
}

// ---- confusion ----

std::size_t ConfusionMatrix::row_sum(std::size_t actual) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < num_classes; ++p) s += at(actual, p);
  return s;
}

std::size_t ConfusionMatrix::col_sum(std::size_t predicted) const {
  std::size_t s = 0;
  for (std::size_t a = 0; a < num_classes; ++a) s += at(a, predicted);
  return s;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t s = 0;
  for (std::size_t k = 0; k < num_classes; ++k) s += at(k, k);
  return s;
}

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

namespace {

void check_record(const PredictionRecord& r, std::size_t num_classes) {
  if (r.true_label < 0 || static_cast<std::size_t>(r.true_label) >= num_classes) {
    throw ContractError("record " + r.sample_id + " has label " + std::to_string(r.true_label) + " outside [0, " +
                        std::to_string(num_classes) + ")");
  }
  if (r.scores.size() != num_classes) {
    throw ContractError("record " + r.sample_id + " has " + std::to_string(r.scores.size()) + " scores, expected " +
                        std::to_string(num_classes));
  }
}

double ratio(std::size_t num, std::size_t den, bool& undefined) {
  undefined = den == 0;
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const PredictionRecord> records, std::size_t num_classes) {
  if (num_classes == 0) throw ContractError("confusion matrix needs at least one class");
  ConfusionMatrix cm{num_classes, std::vector<std::size_t>(num_classes * num_classes, 0)};
  for (const auto& r : records) {
    check_record(r, num_classes);
    ++cm.counts[static_cast<std::size_t>(r.true_label) * num_classes + predicted_label(r.scores)];
  }
  return cm;
}

ClassificationSummary precision_recall_f1(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (cm.num_classes == 0 || total == 0) throw ContractError("classification metrics of an empty confusion matrix");
  ClassificationSummary s;
  const auto k_count = static_cast<double>(cm.num_classes);
  for (std::size_t k = 0; k < cm.num_classes; ++k) {
    ClassMetrics m;
    m.support = cm.row_sum(k);
    m.precision = ratio(cm.at(k, k), cm.col_sum(k), m.precision_undefined);
    m.recall = ratio(cm.at(k, k), m.support, m.recall_undefined);
    const double denom = m.precision + m.recall;
    m.f1_undefined = denom == 0.0;
    m.f1 = m.f1_undefined ? 0.0 : 2.0 * m.precision * m.recall / denom;
    s.macro.precision += m.precision / k_count;
    s.macro.recall += m.recall / k_count;
    s.macro.f1 += m.f1 / k_count;
    const double w = static_cast<double>(m.support) / static_cast<double>(total);
    s.weighted.precision += w * m.precision;
    s.weighted.recall += w * m.recall;
    s.weighted.f1 += w * m.f1;
    s.per_class.push_back(m);
  }
  s.macro.support = s.weighted.support = total;
  s.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  return s;
}

// ---- ROC ----

namespace {

struct Scored {
  double score;
  bool positive;
};

std::vector<Scored> one_vs_rest(std::span<const PredictionRecord> records, std::size_t positive_class) {
  std::vector<Scored> out;
  out.reserve(records.size());
  std::size_t pos = 0;
  for (const auto& r : records) {
    if (positive_class >= r.scores.size()) {
      throw ContractError("class " + std::to_string(positive_class) + " has no score in record " + r.sample_id);
    }
    const bool is_pos = r.true_label == static_cast<int>(positive_class);
    pos += is_pos;
    out.push_back({r.scores[positive_class], is_pos});
  }
  if (pos == 0 || pos == out.size()) {
    throw DegenerateInputError("class " + std::to_string(positive_class) +
                               " needs at least one positive and one negative record");
  }
  return out;
}

}  // namespace

std::vector<RocPoint> roc_curve(std::span<const PredictionRecord> records, std::size_t positive_class) {
  std::vector<Scored> items = one_vs_rest(records, positive_class);
  std::sort(items.begin(), items.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  const auto pos_total = static_cast<double>(std::count_if(items.begin(), items.end(), [](const Scored& s) { return s.positive; }));
  const double neg_total = static_cast<double>(items.size()) - pos_total;

  std::vector<RocPoint> curve{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < items.size();) {
    const double threshold = items[i].score;
    while (i < items.size() && items[i].score == threshold) {
      (items[i].positive ? tp : fp) += 1;
      ++i;
    }
    curve.push_back({static_cast<double>(fp) / neg_total, static_cast<double>(tp) / pos_total});
  }
  if (!(curve.back() == RocPoint{1.0, 1.0})) curve.push_back({1.0, 1.0});
  return curve;
}

double auc_trapezoid(std::span<const RocPoint> curve) {
  if (curve.size() < 2 || !(curve.front() == RocPoint{0.0, 0.0}) || !(curve.back() == RocPoint{1.0, 1.0})) {
    throw ContractError("ROC curve must start at (0, 0) and end at (1, 1)");
  }
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].fpr < curve[i - 1].fpr || curve[i].tpr < curve[i - 1].tpr) {
      throw ContractError("ROC curve is not monotone at point " + std::to_string(i));
    }
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  }
  return area;
}

double auc_pair_oracle(std::span<const PredictionRecord> records, std::size_t positive_class) {
  const std::vector<Scored> items = one_vs_rest(records, positive_class);
  double wins = 0.0;
  std::size_t pairs = 0;
  for (const auto& p : items) {
    if (!p.positive) continue;
    for (const auto& n : items) {
      if (n.positive) continue;
      ++pairs;
      if (p.score > n.score) wins += 1.0;
      else if (p.score == n.score) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

MetricsReport build_report(std::span<const PredictionRecord> records, std::size_t num_classes) {
  MetricsReport r;
  r.confusion = confusion_matrix(records, num_classes);
  r.summary = precision_recall_f1(r.confusion);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const std::size_t support = r.confusion.row_sum(k);
    if (support == 0 || support == records.size()) {
      r.roc.emplace_back();
      r.auc.emplace_back();
      continue;
    }
    r.roc.push_back(roc_curve(records, k));
    r.auc.emplace_back(auc_trapezoid(r.roc.back()));
  }
  return r;
}

// ---- rendering ----

std::string format_metric(double value) {
  // The nudge keeps values like 0.905 (stored as 0.90499999...) rounding up.
  const double hundredths = std::floor(value * 100.0 + 0.5 + 1e-9);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", hundredths / 100.0);
  return buf;
}

std::string render_report(const MetricsReport& report, std::span<const std::string> class_names) {
  const auto& s = report.summary;
  if (class_names.size() != s.per_class.size()) {
    throw ContractError("report has " + std::to_string(s.per_class.size()) + " classes but " +
                        std::to_string(class_names.size()) + " names were given");
  }
  std::size_t label_w = std::string("Weighted Avg").size();
  for (const auto& n : class_names) label_w = std::max(label_w, n.size());

  std::ostringstream os;
  char line[256];
  const auto row = [&](const std::string& label, const std::string& p, const std::string& r, const std::string& f,
                       std::size_t support) {
    std::snprintf(line, sizeof(line), "%-*s  %9s  %9s  %9s  %9zu\n", static_cast<int>(label_w), label.c_str(), p.c_str(),
                  r.c_str(), f.c_str(), support);
    os << line;
  };
  std::snprintf(line, sizeof(line), "%-*s  %9s  %9s  %9s  %9s\n", static_cast<int>(label_w), "Class", "Precision",
                "Recall", "F1-Score", "Support");
  os << line;
  for (std::size_t k = 0; k < s.per_class.size(); ++k) {
    const auto& m = s.per_class[k];
    row(class_names[k], format_metric(m.precision), format_metric(m.recall), format_metric(m.f1), m.support);
  }
  row("Accuracy", "", "", format_metric(s.accuracy), s.macro.support);
  row("Macro Avg", format_metric(s.macro.precision), format_metric(s.macro.recall), format_metric(s.macro.f1),
      s.macro.support);
  row("Weighted Avg", format_metric(s.weighted.precision), format_metric(s.weighted.recall),
      format_metric(s.weighted.f1), s.weighted.support);
  return os.str();
}

// ---- CSV ----

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& text, std::size_t line_no) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(v)) {
    throw FormatError("predictions line " + std::to_string(line_no) + ": bad number '" + text + "'");
  }
  return v;
}

}  // namespace

std::string predictions_to_csv(std::span<const PredictionRecord> records) {
  const std::size_t k = records.empty() ? 0 : records.front().scores.size();
  std::string out = "sample_id,true_label";
  for (std::size_t i = 0; i < k; ++i) out += ",score_" + std::to_string(i);
  out += '\n';
  for (const auto& r : records) {
    if (r.sample_id.find_first_of(",\n\r") != std::string::npos) {
      throw FormatError("sample id '" + r.sample_id + "' cannot be written to CSV");
    }
    if (r.scores.size() != k) throw ContractError("records disagree on the number of classes");
    out += r.sample_id + "," + std::to_string(r.true_label);
    for (double s : r.scores) out += "," + fmt17(s);
    out += '\n';
  }
  return out;
}

std::vector<PredictionRecord> predictions_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw FormatError("predictions line 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  if (header.size() < 3 || header[0] != "sample_id" || header[1] != "true_label") {
    throw FormatError("predictions line 1: header must be sample_id,true_label,score_0,...");
  }
  const std::size_t k = header.size() - 2;
  for (std::size_t i = 0; i < k; ++i) {
    if (header[2 + i] != "score_" + std::to_string(i)) {
      throw FormatError("predictions line 1: expected column score_" + std::to_string(i));
    }
  }
  std::vector<PredictionRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != k + 2) {
      throw FormatError("predictions line " + std::to_string(line_no) + ": expected " + std::to_string(k + 2) +
                        " fields, got " + std::to_string(fields.size()));
    }
    PredictionRecord r;
    r.sample_id = fields[0];
    const std::string& label = fields[1];
    if (label.empty() || label.size() > 9 || !std::all_of(label.begin(), label.end(), ::isdigit)) {
      throw FormatError("predictions line " + std::to_string(line_no) + ": bad label '" + label + "'");
    }
    r.true_label = std::stoi(label);
    if (static_cast<std::size_t>(r.true_label) >= k) {
      throw FormatError("predictions line " + std::to_string(line_no) + ": label " + label + " out of range");
    }
    for (std::size_t i = 0; i < k; ++i) r.scores.push_back(parse_double(fields[2 + i], line_no));
    records.push_back(std::move(r));
  }
  if (records.empty()) throw FormatError("predictions file has no records");
  return records;
}

std::string confusion_to_csv(const ConfusionMatrix& cm) {
  std::string out = "actual";
  for (std::size_t p = 0; p < cm.num_classes; ++p) out += ",pred_" + std::to_string(p);
  out += '\n';
  for (std::size_t a = 0; a < cm.num_classes; ++a) {
    out += std::to_string(a);
    for (std::size_t p = 0; p < cm.num_classes; ++p) out += "," + std::to_string(cm.at(a, p));
    out += '\n';
  }
  return out;
}

std::string roc_to_csv(std::span<const RocPoint> curve) {
  std::string out = "fpr,tpr\n";
  for (const auto& p : curve) out += fmt17(p.fpr) + "," + fmt17(p.tpr) + "\n";
  return out;
}

std::string auc_to_csv(const MetricsReport& report) {
  std::string out = "class,auc\n";
  for (std::size_t k = 0; k < report.auc.size(); ++k) {
    out += std::to_string(k) + "," + (report.auc[k] ? fmt17(*report.auc[k]) : std::string("nan")) + "\n";
  }
  return out;
}

}  // namespace hgt::metrics
