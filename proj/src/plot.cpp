#include "psmt/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "psmt/data.hpp"
#include "psmt/error.hpp"
#include "psmt/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace psmt::plot {

namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 440;
constexpr double kLeft = 70;
constexpr double kRight = 170;
constexpr double kTop = 40;
constexpr double kBottom = 50;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void finish() {
        if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
    }
};

struct Frame {
    Range xr;
    Range yr;
    [[nodiscard]] double px(double x) const {
        return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * (kWidth - kLeft - kRight);
    }
    [[nodiscard]] double py(double y) const {
        return kHeight - kBottom - (y - yr.lo) / (yr.hi - yr.lo) * (kHeight - kTop - kBottom);
    }
};

void header(std::ostringstream& o, const std::string& title) {
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(title)
      << "</text>\n";
}

void axes(std::ostringstream& o, const Frame& f, const std::string& xl, const std::string& yl, bool x_ticks) {
    const double x0 = kLeft;
    const double x1 = kWidth - kRight;
    const double y0 = kHeight - kBottom;
    const double y1 = kTop;
    o << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double v = f.yr.lo + (f.yr.hi - f.yr.lo) * i / 5.0;
        const double y = f.py(v);
        o << "<line x1=\"" << x0 - 4 << "\" y1=\"" << y << "\" x2=\"" << x1 << "\" y2=\"" << y
          << "\" stroke=\"#ddd\"/>\n<text x=\"" << x0 - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
          << num(v) << "</text>\n";
        if (x_ticks) {
            const double xv = f.xr.lo + (f.xr.hi - f.xr.lo) * i / 5.0;
            o << "<text x=\"" << f.px(xv) << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">" << num(xv)
              << "</text>\n";
        }
    }
    o << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << esc(xl)
      << "</text>\n";
    o << "<text transform=\"translate(16," << (y0 + y1) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << esc(yl) << "</text>\n";
}

void legend(std::ostringstream& o, const std::vector<Series>& series) {
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double y = kTop + 10 + 18.0 * static_cast<double>(i);
        const double x = kWidth - kRight + 12;
        o << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"10\" fill=\""
          << kPalette[i % 10] << "\"/>\n<text x=\"" << x + 18 << "\" y=\"" << y << "\">" << esc(series[i].label)
          << "</text>\n";
    }
}

}  // namespace

std::string render_svg(const LineChart& chart) {
    Frame f;
    for (const auto& s : chart.series) {
        for (double v : s.x) f.xr.add(v);
        for (double v : s.y) f.yr.add(v);
    }
    f.xr.finish();
    f.yr.finish();
    std::ostringstream o;
    header(o, chart.title);
    axes(o, f, chart.x_label, chart.y_label, true);
    for (std::size_t i = 0; i < chart.series.size(); ++i) {
        const auto& s = chart.series[i];
        std::string pts;
        for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
            if (!std::isfinite(s.y[k])) continue;
            pts += num(f.px(s.x[k])) + "," + num(f.py(s.y[k])) + " ";
            if (chart.markers) {
                o << "<circle cx=\"" << f.px(s.x[k]) << "\" cy=\"" << f.py(s.y[k]) << "\" r=\"3\" fill=\""
                  << kPalette[i % 10] << "\"/>\n";
            }
        }
        o << "<polyline fill=\"none\" stroke=\"" << kPalette[i % 10] << "\" stroke-width=\"1.5\" points=\"" << pts
          << "\"/>\n";
    }
    legend(o, chart.series);
    o << "</svg>\n";
    return o.str();
}

std::string render_svg(const BarChart& chart) {
    Frame f;
    f.xr = {0.0, static_cast<double>(std::max<std::size_t>(chart.categories.size(), 1))};
    f.yr.add(0.0);
    for (const auto& s : chart.series) {
        for (double v : s.y) f.yr.add(v);
    }
    f.yr.finish();
    std::ostringstream o;
    header(o, chart.title);
    axes(o, f, "", chart.y_label, false);
    const double slot = (kWidth - kLeft - kRight) / f.xr.hi;
    const double bar = slot * 0.8 / static_cast<double>(std::max<std::size_t>(chart.series.size(), 1));
    for (std::size_t c = 0; c < chart.categories.size(); ++c) {
        const double x0 = kLeft + slot * static_cast<double>(c) + slot * 0.1;
        for (std::size_t s = 0; s < chart.series.size(); ++s) {
            const double v = c < chart.series[s].y.size() ? chart.series[s].y[c] : 0.0;
            const double top = f.py(std::max(v, f.yr.lo));
            const double base = f.py(std::max(0.0, f.yr.lo));
            o << "<rect class=\"bar\" x=\"" << x0 + bar * static_cast<double>(s) << "\" y=\"" << std::min(top, base)
              << "\" width=\"" << bar << "\" height=\"" << std::abs(base - top) << "\" fill=\"" << kPalette[s % 10]
              << "\"><title>" << esc(chart.categories[c]) << " " << esc(chart.series[s].label) << " " << num(v)
              << "</title></rect>\n";
        }
        o << "<text x=\"" << x0 + slot * 0.4 << "\" y=\"" << kHeight - kBottom + 14
          << "\" text-anchor=\"middle\" font-size=\"10\">" << esc(chart.categories[c]) << "</text>\n";
    }
    legend(o, chart.series);
    o << "</svg>\n";
    return o.str();
}

std::vector<json> read_metrics(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read metrics file " + path.string());
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto rec = json::parse(line, nullptr, false);
        if (rec.is_discarded()) throw DataError("malformed record in " + path.string());
        out.push_back(std::move(rec));
    }
    if (out.empty()) throw DataError("metrics file " + path.string() + " is empty");
    return out;
}

namespace {

std::string run_label(const fs::path& metrics) {
    const auto dir = metrics.parent_path().filename().string();
    return dir.empty() ? metrics.filename().string() : dir;
}

}  // namespace

LineChart loss_chart(const std::vector<fs::path>& metrics) {
    LineChart chart{"training loss", "iteration", "total loss", {}, false};
    for (const auto& p : metrics) {
        Series s{run_label(p), {}, {}};
        for (const auto& r : read_metrics(p)) {
            if (r.value("kind", "") != "iter") continue;
            s.x.push_back(r.at("iter").get<double>());
            s.y.push_back(r.at("total").get<double>());
        }
        if (s.x.empty()) throw DataError("no iteration records in " + p.string());
        chart.series.push_back(std::move(s));
    }
    return chart;
}

LineChart miou_chart(const std::vector<fs::path>& metrics) {
    LineChart chart{"validation mIoU", "epoch", "mIoU", {}, true};
    for (const auto& p : metrics) {
        Series s{run_label(p), {}, {}};
        for (const auto& r : read_metrics(p)) {
            if (r.value("kind", "") != "eval") continue;
            s.x.push_back(r.at("epoch").get<double>());
            s.y.push_back(r.at("miou").get<double>());
        }
        if (s.x.empty()) throw DataError("no evaluation records in " + p.string());
        chart.series.push_back(std::move(s));
    }
    return chart;
}

BarChart gradient_chart(const fs::path& probe) {
    json doc;
    try {
        doc = json::parse(io::read_text(probe));
    } catch (const json::exception& e) {
        throw DataError("malformed gradient probe " + probe.string() + ": " + e.what());
    }
    BarChart chart{"mean |gradient| per layer", "mean |grad|", {}, {}};
    chart.categories = doc.at("layers").get<std::vector<std::string>>();
    if (chart.categories.empty()) throw DataError("gradient probe " + probe.string() + " lists no layers");
    for (const char* mode : {"conf_ce", "mse"}) {
        if (!doc.contains(mode)) continue;
        Series s{mode, {}, doc.at(mode).get<std::vector<double>>()};
        chart.series.push_back(std::move(s));
    }
    return chart;
}

LineChart ratio_chart(const std::vector<fs::path>& metrics) {
    std::map<double, std::vector<double>> by_ratio;
    for (const auto& p : metrics) {
        const auto run = json::parse(io::read_text(p.parent_path() / "run.json"));
        const auto split = run.at("config").at("split").get<std::string>();
        const auto manifest = json::parse(io::read_text(split));
        const Ratio r = parse_ratio(manifest.at("ratio").get<std::string>());
        double last = std::nan("");
        for (const auto& rec : read_metrics(p)) {
            if (rec.value("kind", "") == "eval") last = rec.at("miou").get<double>();
        }
        if (std::isnan(last)) throw DataError("no evaluation records in " + p.string());
        by_ratio[static_cast<double>(r.num) / static_cast<double>(r.den)].push_back(last);
    }
    LineChart chart{"mIoU vs labelled ratio", "labelled fraction", "final mIoU", {}, true};
    Series s{"mean over runs", {}, {}};
    for (const auto& [ratio, vals] : by_ratio) {
        double m = 0.0;
        for (double v : vals) m += v;
        s.x.push_back(ratio);
        s.y.push_back(m / static_cast<double>(vals.size()));
    }
    chart.series.push_back(std::move(s));
    return chart;
}

}  // namespace psmt::plot
