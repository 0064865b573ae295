#include "pvcrack/eval/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "pvcrack/common.hpp"

namespace pvcrack::eval {

long ConfusionMatrix::total() const {
  long n = 0;
  for (const auto& row : counts)
    for (long v : row) n += v;
  return n;
}

long ConfusionMatrix::trace() const {
  long n = 0;
  for (int i = 0; i < classes; ++i) n += counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
  return n;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& preds, const std::vector<int>& truth,
                                 int classes) {
  if (classes < 1) throw ParamError("confusion_matrix: class count must be >= 1");
  if (preds.size() != truth.size())
    throw ParamError("confusion_matrix: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " labels");
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.counts.assign(static_cast<std::size_t>(classes),
                   std::vector<long>(static_cast<std::size_t>(classes), 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= classes || truth[i] < 0 || truth[i] >= classes)
      throw ParamError("confusion_matrix: class index out of range at position " +
                       std::to_string(i));
    ++cm.counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(preds[i])];
  }
  return cm;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  const long total = cm.total();
  if (total <= 0) throw ParamError("compute_metrics: empty confusion matrix");
  const auto c = static_cast<std::size_t>(cm.classes);
  MetricsReport r;
  r.sample_count = total;
  r.confusion = cm;
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  r.precision.assign(c, 0.0);
  r.recall.assign(c, 0.0);
  r.f1.assign(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    long tp = cm.counts[k][k], pred = 0, actual = 0;
    for (std::size_t j = 0; j < c; ++j) {
      pred += cm.counts[j][k];
      actual += cm.counts[k][j];
    }
    r.precision[k] = pred > 0 ? static_cast<double>(tp) / static_cast<double>(pred) : 0.0;
    r.recall[k] = actual > 0 ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    const double s = r.precision[k] + r.recall[k];
    r.f1[k] = s > 0.0 ? 2.0 * r.precision[k] * r.recall[k] / s : 0.0;
    r.macro_precision += r.precision[k];
    r.macro_recall += r.recall[k];
    r.macro_f1 += r.f1[k];
  }
  r.macro_precision /= static_cast<double>(c);
  r.macro_recall /= static_cast<double>(c);
  r.macro_f1 /= static_cast<double>(c);
  return r;
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

CvSummary aggregate_cv(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw ParamError("aggregate_cv: no reports");
  const std::size_t c = reports.front().precision.size();
  for (const auto& r : reports)
    if (r.precision.size() != c) throw ParamError("aggregate_cv: reports have mixed class counts");
  auto collect = [&](auto get) {
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(get(r));
    return summarize(v);
  };
  CvSummary s;
  s.folds = reports.size();
  s.accuracy = collect([](const MetricsReport& r) { return r.accuracy; });
  s.macro_precision = collect([](const MetricsReport& r) { return r.macro_precision; });
  s.macro_recall = collect([](const MetricsReport& r) { return r.macro_recall; });
  s.macro_f1 = collect([](const MetricsReport& r) { return r.macro_f1; });
  for (std::size_t k = 0; k < c; ++k) {
    s.precision.push_back(collect([k](const MetricsReport& r) { return r.precision[k]; }));
    s.recall.push_back(collect([k](const MetricsReport& r) { return r.recall[k]; }));
    s.f1.push_back(collect([k](const MetricsReport& r) { return r.f1[k]; }));
  }
  return s;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string render_metrics(const MetricsReport& r) {
  std::string out = "samples   " + std::to_string(r.sample_count) + "\n";
  out += "accuracy  " + fmt("%.4f", r.accuracy) + "\n";
  out += "class  precision  recall  f1\n";
  for (std::size_t k = 0; k < r.precision.size(); ++k)
    out += fmt("%5.0f", static_cast<double>(k)) + "  " + fmt("%9.4f", r.precision[k]) + "  " +
           fmt("%6.4f", r.recall[k]) + "  " + fmt("%6.4f", r.f1[k]) + "\n";
  out += "macro  " + fmt("%9.4f", r.macro_precision) + "  " + fmt("%6.4f", r.macro_recall) +
         "  " + fmt("%6.4f", r.macro_f1) + "\n";
  out += "confusion (rows true, cols predicted)\n";
  for (const auto& row : r.confusion.counts) {
    for (long v : row) out += fmt("%8.0f", static_cast<double>(v));
    out += "\n";
  }
  return out;
}

std::string render_cv(const CvSummary& s) {
  auto line = [](const char* name, const MetricSummary& m) {
    return std::string(name) + fmt("%.4f", m.mean) + " +- " + fmt("%.4f", m.stddev) + "\n";
  };
  std::string out = "folds            " + std::to_string(s.folds) + "\n";
  out += line("accuracy         ", s.accuracy);
  out += line("macro precision  ", s.macro_precision);
  out += line("macro recall     ", s.macro_recall);
  out += line("macro f1         ", s.macro_f1);
  return out;
}

}  // namespace pvcrack::eval
