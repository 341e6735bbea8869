#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "crl/harness.hpp"

namespace crl {

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

double interpolated_quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void emit_csv(const std::vector<MetricsRecord>& records, std::ostream& os) {
  os << "example,setting,method,k,xi,rep,coverage,avg_length,inf_regions,seed\n";
  for (const MetricsRecord& r : records) {
    os << r.example << ',' << r.setting << ',' << r.method << ',';
    if (r.k) os << *r.k;
    os << ',';
    if (r.xi) os << format_double(*r.xi);
    os << ',' << r.rep << ',' << format_double(r.coverage) << ',';
    if (r.avg_length) os << format_double(*r.avg_length);
    os << ',' << r.inf_regions << ',' << r.seed << '\n';
  }
}

void emit_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
  auto out = open_output(path);
  emit_csv(records, out);
}

void emit_weights_csv(const std::vector<WeightDiagnostics>& rows, const std::string& path) {
  auto out = open_output(path);
  out << "rep,k,";
  write_weight_summary_header(out);
  for (const auto& row : rows) {
    out << row.rep << ',' << row.k << ',';
    write_weight_summary_row(out, "segments", row.summary);
  }
}

BoxStats box_stats(std::vector<double> values, std::string label) {
  if (values.empty()) throw std::invalid_argument("box_stats of an empty group");
  std::sort(values.begin(), values.end());
  BoxStats b;
  b.label = std::move(label);
  b.count = values.size();
  b.min = values.front();
  b.max = values.back();
  b.q1 = interpolated_quantile(values, 0.25);
  b.median = interpolated_quantile(values, 0.5);
  b.q3 = interpolated_quantile(values, 0.75);
  const double reach = 1.5 * (b.q3 - b.q1);
  b.whisker_low = *std::lower_bound(values.begin(), values.end(), b.q1 - reach);
  b.whisker_high = *(std::upper_bound(values.begin(), values.end(), b.q3 + reach) - 1);
  return b;
}

std::vector<BoxStats> group_boxes(const std::vector<MetricsRecord>& records, PlotMetric metric) {
  std::set<double> xis;
  for (const auto& r : records) {
    if (r.xi) xis.insert(*r.xi);
  }
  const bool show_xi = xis.size() > 1;
  // Conformal groups ordered by (k, xi); baselines follow, in order of appearance.
  using Key = std::tuple<int, int, double, std::string>;
  std::map<Key, std::vector<double>> groups;
  std::map<std::string, int> baseline_order;
  for (const auto& r : records) {
    const double v = metric == PlotMetric::kCoverage ? r.coverage : r.avg_length.value_or(NAN);
    if (std::isnan(v)) continue;
    Key key;
    if (r.k) {
      key = {0, *r.k, show_xi ? r.xi.value_or(0.0) : 0.0, r.method};
    } else {
      const auto [it, _] = baseline_order.emplace(r.method, static_cast<int>(baseline_order.size()));
      key = {1, it->second, 0.0, r.method};
    }
    groups[key].push_back(v);
  }
  std::vector<BoxStats> out;
  for (auto& [key, values] : groups) {
    const auto& [kind, k, xi, method] = key;
    std::string label;
    if (kind == 0) {
      label = "k=" + std::to_string(k);
      if (show_xi) label += " xi=" + format_double(xi);
      if (method != "conformal") label = method + " " + label;
    } else {
      label = method == "drl-qr" ? "DRL-QR" : method == "kde-qr" ? "KDE-QR" : method;
    }
    out.push_back(box_stats(std::move(values), std::move(label)));
  }
  return out;
}

void emit_boxplot_svg(const std::vector<MetricsRecord>& records, PlotMetric metric, double alpha,
                      std::ostream& os) {
  const std::vector<BoxStats> boxes = group_boxes(records, metric);
  if (boxes.empty()) throw std::invalid_argument("boxplot needs at least one record");
  const bool coverage = metric == PlotMetric::kCoverage;

  double lo = boxes.front().min;
  double hi = boxes.front().max;
  for (const auto& b : boxes) {
    lo = std::min(lo, b.min);
    hi = std::max(hi, b.max);
  }
  if (coverage) {
    lo = std::min(lo, 1.0 - alpha);
    hi = std::max(hi, 1.0 - alpha);
  }
  const double pad = std::max(0.05 * (hi - lo), 1e-3);
  lo -= pad;
  hi += pad;

  const double left = 70.0, right = 20.0, top = 40.0, bottom = 60.0;
  const double slot = 80.0, plot_h = 320.0;
  const double width = left + right + slot * static_cast<double>(boxes.size());
  const double height = top + plot_h + bottom;
  auto y = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << (coverage ? "Empirical coverage" : "Average interval length") << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
     << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = lo + (hi - lo) * t / 5.0;
    os << "<line x1=\"" << left - 4 << "\" y1=\"" << y(v) << "\" x2=\"" << left << "\" y2=\""
       << y(v) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\">"
       << format_double(std::round(v * 1000.0) / 1000.0) << "</text>\n";
  }
  if (coverage) {
    os << "<line class=\"nominal\" x1=\"" << left << "\" y1=\"" << y(1.0 - alpha) << "\" x2=\""
       << width - right << "\" y2=\"" << y(1.0 - alpha)
       << "\" stroke=\"red\" stroke-dasharray=\"6,4\"/>\n";
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const BoxStats& b = boxes[i];
    const double cx = left + slot * (static_cast<double>(i) + 0.5);
    const double half = slot * 0.3;
    os << "<g class=\"box\" data-label=\"" << xml_escape(b.label) << "\" data-median=\""
       << format_double(b.median) << "\">\n";
    os << "  <line x1=\"" << cx << "\" y1=\"" << y(b.whisker_high) << "\" x2=\"" << cx
       << "\" y2=\"" << y(b.q3) << "\" stroke=\"black\"/>\n";
    os << "  <line x1=\"" << cx << "\" y1=\"" << y(b.q1) << "\" x2=\"" << cx << "\" y2=\""
       << y(b.whisker_low) << "\" stroke=\"black\"/>\n";
    os << "  <rect x=\"" << cx - half << "\" y=\"" << y(b.q3) << "\" width=\"" << 2 * half
       << "\" height=\"" << std::max(y(b.q1) - y(b.q3), 0.5)
       << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
    os << "  <line x1=\"" << cx - half << "\" y1=\"" << y(b.median) << "\" x2=\"" << cx + half
       << "\" y2=\"" << y(b.median) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    for (double w : {b.whisker_low, b.whisker_high}) {
      os << "  <line x1=\"" << cx - half / 2 << "\" y1=\"" << y(w) << "\" x2=\"" << cx + half / 2
         << "\" y2=\"" << y(w) << "\" stroke=\"black\"/>\n";
    }
    for (double v : {b.min, b.max}) {
      if (v < b.whisker_low || v > b.whisker_high) {
        os << "  <circle cx=\"" << cx << "\" cy=\"" << y(v) << "\" r=\"2.5\" fill=\"none\" stroke=\"black\"/>\n";
      }
    }
    os << "  <text x=\"" << cx << "\" y=\"" << top + plot_h + 20 << "\" text-anchor=\"middle\">"
       << xml_escape(b.label) << "</text>\n";
    os << "</g>\n";
  }
  os << "</svg>\n";
}

void emit_boxplot_svg(const std::vector<MetricsRecord>& records, PlotMetric metric, double alpha,
                      const std::string& path) {
  auto out = open_output(path);
  emit_boxplot_svg(records, metric, alpha, out);
}

}  // namespace crl
