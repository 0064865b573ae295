#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace pvcrack::eval {

// counts[t][p]: rows are the true class, columns the prediction.
struct ConfusionMatrix {
  int classes = 0;
  std::vector<std::vector<long>> counts;

  long total() const;
  long trace() const;
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& preds, const std::vector<int>& truth,
                                 int classes);

struct MetricsReport {
  double accuracy = 0.0;
  std::vector<double> precision;  // per class
  std::vector<double> recall;
  std::vector<double> f1;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  long sample_count = 0;
  ConfusionMatrix confusion;
};

// Zero denominators give 0. ParamError on an empty matrix.
MetricsReport compute_metrics(const ConfusionMatrix& cm);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single report
};

struct CvSummary {
  std::size_t folds = 0;
  MetricSummary accuracy;
  MetricSummary macro_precision;
  MetricSummary macro_recall;
  MetricSummary macro_f1;
  std::vector<MetricSummary> precision;
  std::vector<MetricSummary> recall;
  std::vector<MetricSummary> f1;
};

CvSummary aggregate_cv(const std::vector<MetricsReport>& reports);

MetricSummary summarize(const std::vector<double>& values);

// Plain-text table of a single report.
std::string render_metrics(const MetricsReport& r);
std::string render_cv(const CvSummary& s);

}  // namespace pvcrack::eval
