#include "bct/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "bct/error.hpp"
#include "bct/io.hpp"

namespace bct {

namespace {

constexpr double kWidth = 800, kHeight = 500;
constexpr double kLeft = 70, kRight = 620, kTop = 40, kBottom = 450;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(const char* fmt, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

double value(const EpochRecord& r, PlotMetric m) { return m == PlotMetric::accuracy ? r.train_acc : r.train_loss; }

}  // namespace

std::string render_svg(const std::vector<PlotSeries>& series, PlotMetric metric) {
  if (series.empty()) throw DataError("nothing to plot");
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series) {
    if (s.records.empty()) throw DataError("runlog '" + s.name + "' has no epochs");
    for (const auto& r : s.records) {
      const double y = value(r, metric);
      if (!std::isfinite(y)) throw DataError("runlog '" + s.name + "' holds a non-finite value");
      x0 = std::min(x0, static_cast<double>(r.epoch));
      x1 = std::max(x1, static_cast<double>(r.epoch));
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  const double xs = x1 > x0 ? x1 - x0 : 1.0;
  const double ys = y1 > y0 ? y1 - y0 : 1.0;
  auto px = [&](double x) { return kLeft + (x - x0) / xs * (kRight - kLeft); };
  auto py = [&](double y) { return kBottom - (y - y0) / ys * (kBottom - kTop); };

  const char* title = metric == PlotMetric::accuracy ? "train accuracy" : "train loss";
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 500\" width=\"800\" height=\"500\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + num("%.0f", kWidth) + "\" height=\"" + num("%.0f", kHeight) +
         "\" fill=\"white\"/>\n";
  svg += "<text x=\"345\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">" +
         std::string(title) + "</text>\n";
  svg += "<g stroke=\"black\" stroke-width=\"1\">\n";
  svg += "<line x1=\"70\" y1=\"450\" x2=\"620\" y2=\"450\"/>\n<line x1=\"70\" y1=\"40\" x2=\"70\" y2=\"450\"/>\n";
  svg += "</g>\n<g font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<text x=\"70\" y=\"468\" text-anchor=\"middle\">" + num("%.0f", x0) + "</text>\n";
  svg += "<text x=\"620\" y=\"468\" text-anchor=\"middle\">" + num("%.0f", x1) + "</text>\n";
  svg += "<text x=\"345\" y=\"490\" text-anchor=\"middle\">epoch</text>\n";
  svg += "<text x=\"64\" y=\"454\" text-anchor=\"end\">" + num("%.4g", y0) + "</text>\n";
  svg += "<text x=\"64\" y=\"44\" text-anchor=\"end\">" + num("%.4g", y1) + "</text>\n";
  svg += "</g>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < series[i].records.size(); ++k) {
      const auto& r = series[i].records[k];
      if (k) svg += ' ';
      svg += num("%.2f", px(static_cast<double>(r.epoch))) + "," + num("%.2f", py(value(r, metric)));
    }
    svg += "\"/>\n";
    const double ly = kTop + 10 + 20.0 * static_cast<double>(i);
    svg += "<line x1=\"635\" y1=\"" + num("%.0f", ly) + "\" x2=\"660\" y2=\"" + num("%.0f", ly) + "\" stroke=\"" +
           color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"666\" y=\"" + num("%.0f", ly + 4) + "\" font-family=\"sans-serif\" font-size=\"12\">" +
           escape(series[i].name) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<std::string> plot_runlogs(const std::vector<std::string>& runlog_paths, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (runlog_paths.empty()) throw ConfigError("plot needs at least one runlog");
  std::vector<PlotSeries> series;
  for (const auto& path : runlog_paths) {
    PlotSeries s;
    const fs::path p(path);
    s.name = p.parent_path().filename().string();
    if (s.name.empty()) s.name = p.stem().string();
    s.records = parse_runlog_csv(read_text_file(path), path);
    if (s.records.empty()) throw DataError(path + ": runlog has a header but no epochs");
    series.push_back(std::move(s));
  }
  std::set<std::string> names;
  bool unique = true;
  for (const auto& s : series) unique = names.insert(s.name).second && unique;
  if (!unique) {
    for (std::size_t i = 0; i < series.size(); ++i) {
      const fs::path p(runlog_paths[i]);
      series[i].name = (p.parent_path().filename() / p.stem()).string();
      if (series[i].name.empty()) series[i].name = p.string();
    }
  }
  const std::vector<std::string> names_out = {(fs::path(out_dir) / "accuracy.svg").string(),
                                              (fs::path(out_dir) / "loss.svg").string()};
  const std::string acc = render_svg(series, PlotMetric::accuracy);
  const std::string loss = render_svg(series, PlotMetric::loss);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir + ": " + ec.message());
  write_text_file(names_out[0], acc);
  write_text_file(names_out[1], loss);
  return names_out;
}

}  // namespace bct
