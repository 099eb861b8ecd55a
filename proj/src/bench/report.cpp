#include "gridvla/bench/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "gridvla/common/error.hpp"

namespace gridvla::bench {
namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json metric_json(const MetricSummary& m) { return {{"mean", m.mean}, {"std", m.std}}; }

// "0.922 (.013)"
std::string cell(const MetricSummary& m) {
  std::string sd = fmt("%.3f", m.std);
  if (sd.rfind("0.", 0) == 0) sd.erase(0, 1);
  return fmt("%.3f", m.mean) + " (" + sd + ")";
}

std::string xml_escape(const std::string& s) {
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

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["units"] = nlohmann::json::array();
  for (const auto& u : r.units) {
    j["units"].push_back({{"variant", env::variant_name(u.variant)},
                          {"seed", u.seed},
                          {"episodes", u.episodes},
                          {"grasp_acc", u.grasp_acc},
                          {"cont_grasp_acc", u.cont_grasp_acc},
                          {"success", u.success},
                          {"mean_return", u.mean_return}});
  }
  j["variants"] = nlohmann::json::array();
  for (const auto& v : r.variants) {
    j["variants"].push_back({{"variant", env::variant_name(v.variant)},
                             {"label", env::variant_label(v.variant)},
                             {"axis", env::axis_name(v.axis)},
                             {"seeds", v.seeds},
                             {"episodes", v.episodes},
                             {"grasp_acc", metric_json(v.grasp_acc)},
                             {"cont_grasp_acc", metric_json(v.cont_grasp_acc)},
                             {"success", metric_json(v.success)},
                             {"degradation",
                              {{"grasp_acc", opt_json(v.grasp_degradation)},
                               {"cont_grasp_acc", opt_json(v.cont_grasp_degradation)},
                               {"success", opt_json(v.success_degradation)}}}});
  }
  j["axes"] = nlohmann::json::array();
  for (const auto& a : r.axes) {
    nlohmann::json members = nlohmann::json::array();
    for (auto v : a.members) members.push_back(env::variant_name(v));
    j["axes"].push_back({{"axis", env::axis_name(a.axis)},
                         {"members", members},
                         {"grasp_acc", a.grasp_acc},
                         {"cont_grasp_acc", a.cont_grasp_acc},
                         {"success", a.success},
                         {"success_degradation", opt_json(a.success_degradation)}});
  }
  return j;
}

std::string report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "variant,seed,episodes,grasp_acc,cont_grasp_acc,success\n";
  for (const auto& u : r.units) {
    os << env::variant_name(u.variant) << ',' << u.seed << ',' << u.episodes << ',' << fmt("%.6f", u.grasp_acc)
       << ',' << fmt("%.6f", u.cont_grasp_acc) << ',' << fmt("%.6f", u.success) << '\n';
  }
  return os.str();
}

std::string report_markdown(const EvalReport& r) {
  std::ostringstream os;
  os << "| Task | Axis | Acc. | Cont. Acc. | Suc. | Suc. drop |\n";
  os << "|---|---|---|---|---|---|\n";
  for (const auto& v : r.variants) {
    os << "| " << env::variant_label(v.variant) << " | " << env::axis_name(v.axis) << " | " << cell(v.grasp_acc) << " | " << cell(v.cont_grasp_acc)
       << " | " << cell(v.success) << " | "
       << (v.success_degradation ? fmt("%+.3f", *v.success_degradation) : std::string("n/a")) << " |\n";
  }
  os << "\n| Axis | Acc. | Cont. Acc. | Suc. | Mean suc. drop |\n";
  os << "|---|---|---|---|---|\n";
  for (const auto& a : r.axes) {
    os << "| " << env::axis_name(a.axis) << " | " << fmt("%.3f", a.grasp_acc) << " | "
       << fmt("%.3f", a.cont_grasp_acc) << " | " << fmt("%.3f", a.success) << " | "
       << (a.success_degradation ? fmt("%+.3f", *a.success_degradation) : std::string("n/a")) << " |\n";
  }
  return os.str();
}

std::string success_svg(const EvalReport& r) {
  const int bar = 28, gap = 8, left = 50, top = 20, plot_h = 200, label_h = 110;
  const int n = static_cast<int>(r.variants.size());
  const int width = left + n * (bar + gap) + 20;
  const int height = top + plot_h + label_h;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = top + plot_h - plot_h * t / 4.0;
    os << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << width - 10 << "\" y2=\"" << y
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fmt("%.2f", t / 4.0)
       << "</text>\n";
  }
  const char* colors[] = {"#555555", "#4c78a8", "#f58518", "#54a24b"};
  for (int i = 0; i < n; ++i) {
    const auto& v = r.variants[static_cast<std::size_t>(i)];
    const double h = plot_h * v.success.mean;
    const int x = left + gap / 2 + i * (bar + gap);
    os << "<rect x=\"" << x << "\" y=\"" << fmt("%.2f", top + plot_h - h) << "\" width=\"" << bar
       << "\" height=\"" << fmt("%.2f", h) << "\" fill=\"" << colors[static_cast<int>(v.axis)] << "\"><title>"
       << xml_escape(env::variant_name(v.variant)) << ' ' << fmt("%.3f", v.success.mean) << "</title></rect>\n";
    const int lx = x + bar / 2, ly = top + plot_h + 8;
    os << "<text x=\"" << lx << "\" y=\"" << ly << "\" transform=\"rotate(60 " << lx << ' ' << ly
       << ")\">" << xml_escape(env::variant_label(v.variant)) << "</text>\n";
  }
  os << "<text x=\"" << left << "\" y=\"12\">success</text>\n";
  os << "</svg>\n";
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  f.close();
  if (!f) throw IoError("failed writing " + path.string());
}

void write_report(const EvalReport& r, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  write_text(out_dir / "report.csv", report_csv(r));
  write_text(out_dir / "report.json", to_json(r).dump(2) + "\n");
  write_text(out_dir / "report.md", report_markdown(r));
  write_text(out_dir / "success.svg", success_svg(r));
}

}  // namespace gridvla::bench
