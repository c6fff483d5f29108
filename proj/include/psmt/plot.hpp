#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace psmt::plot {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct LineChart {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    bool markers = false;
};

struct BarChart {
    std::string title;
    std::string y_label;
    std::vector<std::string> categories;  // one group of bars per category
    std::vector<Series> series;           // y[i] is the bar for categories[i]
};

std::string render_svg(const LineChart& chart);
std::string render_svg(const BarChart& chart);

// Records of one metrics.jsonl file; throws DataError when it has none.
std::vector<nlohmann::json> read_metrics(const std::filesystem::path& path);

// Total loss against iteration, one curve per file.
LineChart loss_chart(const std::vector<std::filesystem::path>& metrics);
// Validation mIoU against epoch, one curve per file.
LineChart miou_chart(const std::vector<std::filesystem::path>& metrics);
// One bar per layer and loss mode from a grad_probe.json file.
BarChart gradient_chart(const std::filesystem::path& probe);
// Final mIoU against labelled fraction; each metrics file's run.json names its split.
LineChart ratio_chart(const std::vector<std::filesystem::path>& metrics);

}  // namespace psmt::plot
