#include "report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>

#include "mvkd/errors.hpp"

namespace mvkd {
namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 56, kRight = 150, kTop = 24, kBottom = 44;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default:
        // Control characters other than tab/newline are not allowed in XML 1.0.
        if (static_cast<unsigned char>(c) >= 0x20 || c == '\t' || c == '\n') out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

std::vector<RunSeries> load_series(const std::vector<std::filesystem::path>& dirs) {
  if (dirs.empty()) throw UsageError("report needs at least one run directory");
  std::vector<RunSeries> out;
  for (const auto& dir : dirs) {
    const auto file = dir / "epochs.jsonl";
    std::ifstream in(file);
    if (!in) throw DataError("no per-epoch reports in " + dir.string() + " (missing epochs.jsonl)");
    RunSeries s;
    s.run = std::filesystem::path(dir).lexically_normal().filename().string();
    if (s.run.empty()) s.run = std::filesystem::path(dir).lexically_normal().parent_path().filename().string();
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        s.reports.push_back(eval_report_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed report line in " + file.string() + ": " + e.what());
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string series_csv(const std::vector<RunSeries>& series) {
  std::string out = "run,epoch,mAP\n";
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.reports.size(); ++i) {
      const auto& r = s.reports[i];
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", r.map);
      out += csv_field(s.run) + "," + std::to_string(r.epoch.value_or(i + 1)) + "," + buf + "\n";
    }
  }
  return out;
}

std::string series_svg(const std::vector<RunSeries>& series) {
  std::size_t max_epoch = 1;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.reports.size(); ++i) max_epoch = std::max(max_epoch, s.reports[i].epoch.value_or(i + 1));
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  auto x_of = [&](double epoch) { return kLeft + plot_w * (max_epoch == 1 ? 0.5 : (epoch - 1) / (max_epoch - 1.0)); };
  auto y_of = [&](double map) { return kTop + plot_h * (1.0 - std::clamp(map, 0.0, 1.0)); };

  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
  svg += "  <rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) + "\" fill=\"white\"/>\n";
  svg += "  <g stroke=\"#bbbbbb\" stroke-width=\"1\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = k / 5.0, y = y_of(v);
    svg += "    <line x1=\"" + num(kLeft) + "\" y1=\"" + num(y) + "\" x2=\"" + num(kLeft + plot_w) + "\" y2=\"" +
           num(y) + "\"/>\n";
    svg += "    <text x=\"" + num(kLeft - 6) + "\" y=\"" + num(y + 4) +
           "\" text-anchor=\"end\" stroke=\"none\" fill=\"black\">" + num(100.0 * v) + "</text>\n";
  }
  svg += "  </g>\n";
  svg += "  <text x=\"" + num(kLeft + plot_w / 2) + "\" y=\"" + num(kHeight - 10) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">epoch (1.." +
         std::to_string(max_epoch) + ")</text>\n";
  svg += "  <text x=\"14\" y=\"" + num(kTop + plot_h / 2) + "\" transform=\"rotate(-90 14 " + num(kTop + plot_h / 2) +
         ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">test mAP [%]</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % std::size(kColors)];
    std::string points;
    for (std::size_t i = 0; i < s.reports.size(); ++i) {
      const double e = static_cast<double>(s.reports[i].epoch.value_or(i + 1));
      if (!points.empty()) points += ' ';
      points += num(x_of(e)) + "," + num(y_of(s.reports[i].map));
    }
    svg += "  <polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + points +
           "\"><title>" + xml_escape(s.run) + "</title></polyline>\n";
    const double ly = kTop + 14.0 * static_cast<double>(k) + 6;
    svg += "  <line x1=\"" + num(kWidth - kRight + 10) + "\" y1=\"" + num(ly) + "\" x2=\"" +
           num(kWidth - kRight + 28) + "\" y2=\"" + num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "  <text x=\"" + num(kWidth - kRight + 32) + "\" y=\"" + num(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + xml_escape(s.run) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace mvkd
