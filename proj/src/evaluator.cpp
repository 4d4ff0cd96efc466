#include "asl/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace asl {

namespace {

using json = nlohmann::json;

// One canonical global ordering shared by every metric: descending score,
// ties by ascending query id, then ascending reference id.
std::vector<Prediction> ranked(std::vector<Prediction> preds) {
  std::sort(preds.begin(), preds.end(),
            [](const Prediction& a, const Prediction& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.query != b.query) return a.query < b.query;
              return a.reference < b.reference;
            });
  return preds;
}

std::set<std::pair<ImageId, ImageId>> gt_set(const GtPairs& gt) {
  return {gt.begin(), gt.end()};
}

}  // namespace

double micro_ap(const std::vector<Prediction>& predictions, const GtPairs& gt) {
  if (gt.empty()) {
    throw EmptyGroundTruth("micro_ap is undefined for empty ground truth");
  }
  const auto positives = gt_set(gt);
  const std::vector<Prediction> order = ranked(predictions);
  double sum = 0.0;
  std::int64_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (positives.count({order[r].query, order[r].reference})) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(positives.size());
}

PrecisionAtN precision_at_n(const std::vector<Prediction>& predictions,
                            const GtPairs& gt, std::int64_t n) {
  if (n < 1) throw ConfigInvalid("n", "must be >= 1");
  const auto positives = gt_set(gt);
  const std::vector<Prediction> order = ranked(predictions);
  const std::size_t take =
      std::min<std::size_t>(order.size(), static_cast<std::size_t>(n));
  PrecisionAtN out;
  out.short_list = order.size() < static_cast<std::size_t>(n);
  for (std::size_t r = 0; r < take; ++r) {
    if (positives.count({order[r].query, order[r].reference})) {
      ++out.true_positives;
    } else {
      ++out.false_positives;
    }
  }
  const std::int64_t total = out.true_positives + out.false_positives;
  out.precision = total == 0 ? 0.0
                             : static_cast<double>(out.true_positives) /
                                   static_cast<double>(total);
  return out;
}

EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const GtPairs& gt, std::int64_t n) {
  EvalReport report;
  report.micro_ap = micro_ap(predictions, gt);
  const PrecisionAtN p = precision_at_n(predictions, gt, n);
  report.precision_at_n = p.precision;
  report.n = n;
  report.true_positives = p.true_positives;
  report.false_positives = p.false_positives;
  report.num_gt_pairs = static_cast<std::int64_t>(gt_set(gt).size());
  report.short_list = p.short_list;
  return report;
}

ReportDelta compare_reports(const EvalReport& a, const EvalReport& b) {
  if (a.num_gt_pairs != b.num_gt_pairs) {
    throw GtMismatch("compare_reports: reports score different ground truths (" +
                     std::to_string(a.num_gt_pairs) + " vs " +
                     std::to_string(b.num_gt_pairs) + " pairs)");
  }
  ReportDelta d;
  d.micro_ap = b.micro_ap - a.micro_ap;
  d.precision_at_n = b.precision_at_n - a.precision_at_n;
  d.n = b.n - a.n;
  d.true_positives = b.true_positives - a.true_positives;
  d.false_positives = b.false_positives - a.false_positives;
  return d;
}

std::string render_delta_text(const EvalReport& a, const EvalReport& b,
                              const ReportDelta& d) {
  char buf[160];
  std::ostringstream out;
  out << "field            a            b        delta\n";
  std::snprintf(buf, sizeof(buf), "%-12s %12.6f %12.6f %+12.6f\n", "micro_ap",
                a.micro_ap, b.micro_ap, d.micro_ap);
  out << buf;
  std::snprintf(buf, sizeof(buf), "%-12s %12.6f %12.6f %+12.6f\n", "precision",
                a.precision_at_n, b.precision_at_n, d.precision_at_n);
  out << buf;
  std::snprintf(buf, sizeof(buf), "%-12s %12lld %12lld %+12lld\n", "tp",
                static_cast<long long>(a.true_positives),
                static_cast<long long>(b.true_positives),
                static_cast<long long>(d.true_positives));
  out << buf;
  std::snprintf(buf, sizeof(buf), "%-12s %12lld %12lld %+12lld\n", "fp",
                static_cast<long long>(a.false_positives),
                static_cast<long long>(b.false_positives),
                static_cast<long long>(d.false_positives));
  out << buf;
  std::snprintf(buf, sizeof(buf), "%-12s %12lld %12lld %+12lld\n", "n",
                static_cast<long long>(a.n), static_cast<long long>(b.n),
                static_cast<long long>(d.n));
  out << buf;
  return out.str();
}

std::string render_delta_csv(const EvalReport& a, const EvalReport& b,
                             const ReportDelta& d) {
  char buf[160];
  std::ostringstream out;
  out << "field,a,b,delta\n";
  std::snprintf(buf, sizeof(buf), "micro_ap,%.9g,%.9g,%.9g\n", a.micro_ap,
                b.micro_ap, d.micro_ap);
  out << buf;
  std::snprintf(buf, sizeof(buf), "precision_at_n,%.9g,%.9g,%.9g\n",
                a.precision_at_n, b.precision_at_n, d.precision_at_n);
  out << buf;
  out << "tp," << a.true_positives << ',' << b.true_positives << ','
      << d.true_positives << "\n";
  out << "fp," << a.false_positives << ',' << b.false_positives << ','
      << d.false_positives << "\n";
  out << "n," << a.n << ',' << b.n << ',' << d.n << "\n";
  return out.str();
}

std::vector<SweepPoint> sweep_hard_negatives(
    const std::vector<Descriptor>& queries,
    const std::vector<ImageId>& hardneg_query_ids, const RefIndex& index,
    const MatchConfig& cfg, const GtPairs& gt,
    const std::vector<double>& fractions) {
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (fractions[i] < 0.0 || fractions[i] > 1.0) {
      throw ConfigInvalid("fractions", "every fraction must be in [0, 1]");
    }
    if (i > 0 && fractions[i] < fractions[i - 1]) {
      throw ConfigInvalid("fractions", "must be sorted ascending");
    }
  }
  const std::set<ImageId> pool_set(hardneg_query_ids.begin(),
                                   hardneg_query_ids.end());
  std::vector<Descriptor> base;
  std::map<ImageId, const Descriptor*> by_id;
  for (const Descriptor& q : queries) {
    if (pool_set.count(q.id)) {
      by_id[q.id] = &q;
    } else {
      base.push_back(q);
    }
  }

  std::vector<SweepPoint> curve;
  for (double f : fractions) {
    const std::size_t take = static_cast<std::size_t>(
        std::ceil(f * static_cast<double>(hardneg_query_ids.size())));
    std::vector<Descriptor> active = base;
    for (std::size_t i = 0; i < take && i < hardneg_query_ids.size(); ++i) {
      const auto it = by_id.find(hardneg_query_ids[i]);
      if (it == by_id.end()) {
        throw ConfigInvalid("hardneg_query_ids",
                            "id " + std::to_string(hardneg_query_ids[i]) +
                                " has no descriptor");
      }
      active.push_back(*it->second);
    }
    const MatchOutput matched = match_all(active, index, cfg);
    curve.push_back(SweepPoint{f, micro_ap(matched.predictions, gt)});
  }
  return curve;
}

void write_report_json(const std::filesystem::path& path,
                       const EvalReport& report) {
  json j;
  j["micro_ap"] = report.micro_ap;
  j["precision_at_n"] = report.precision_at_n;
  j["n"] = report.n;
  j["tp"] = report.true_positives;
  j["fp"] = report.false_positives;
  j["num_gt_pairs"] = report.num_gt_pairs;
  j["short_list"] = report.short_list;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("short write to " + path.string());
}

EvalReport read_report_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("report JSON: ") + e.what(), 1);
  }
  EvalReport r;
  r.micro_ap = j.at("micro_ap").get<double>();
  r.precision_at_n = j.at("precision_at_n").get<double>();
  r.n = j.at("n").get<std::int64_t>();
  r.true_positives = j.at("tp").get<std::int64_t>();
  r.false_positives = j.at("fp").get<std::int64_t>();
  r.num_gt_pairs = j.at("num_gt_pairs").get<std::int64_t>();
  r.short_list = j.at("short_list").get<bool>();
  return r;
}

std::string render_report_text(const EvalReport& r) {
  char buf[256];
  std::ostringstream out;
  std::snprintf(buf, sizeof(buf), "micro_ap       %10.6f\n", r.micro_ap);
  out << buf;
  std::snprintf(buf, sizeof(buf), "precision@%-5lld %9.4f%%\n",
                static_cast<long long>(r.n), 100.0 * r.precision_at_n);
  out << buf;
  std::snprintf(buf, sizeof(buf), "true positives  %9lld\n",
                static_cast<long long>(r.true_positives));
  out << buf;
  std::snprintf(buf, sizeof(buf), "false positives %9lld\n",
                static_cast<long long>(r.false_positives));
  out << buf;
  std::snprintf(buf, sizeof(buf), "gt pairs        %9lld\n",
                static_cast<long long>(r.num_gt_pairs));
  out << buf;
  if (r.short_list) out << "short_list      true\n";
  return out.str();
}

void write_sweep_csv(const std::filesystem::path& path,
                     const std::vector<SweepPoint>& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "fraction,micro_ap\n";
  char buf[64];
  for (const SweepPoint& p : curve) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g\n", p.fraction, p.micro_ap);
    out << buf;
  }
  if (!out) throw IoError("short write to " + path.string());
}

void write_sweep_svg(const std::filesystem::path& path,
                     const std::vector<SweepPoint>& curve) {
  const int w = 640, h = 400, ml = 60, mr = 20, mt = 20, mb = 50;
  const double px = w - ml - mr, py = h - mt - mb;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr
      << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  char buf[128];
  svg << "<polyline fill=\"none\" stroke=\"#2060c0\" stroke-width=\"2\" points=\"";
  for (const SweepPoint& p : curve) {
    const double x = ml + p.fraction * px;
    const double y = h - mb - p.micro_ap * py;
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", x, y);
    svg << buf;
  }
  svg << "\"/>\n";
  for (const SweepPoint& p : curve) {
    const double x = ml + p.fraction * px;
    const double y = h - mb - p.micro_ap * py;
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"#2060c0\"/>\n",
                  x, y);
    svg << buf;
  }
  svg << "<text x=\"" << ml + px / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\" font-size=\"14\">hard-negative fraction"
      << "</text>\n"
      << "<text x=\"16\" y=\"" << mt + py / 2
      << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 16 "
      << mt + py / 2 << ")\">micro AP</text>\n</svg>\n";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << svg.str();
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace asl
