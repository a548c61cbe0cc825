#pragma once

#include <string>
#include <vector>

namespace krlab::svg {

/// One curve; `lower`/`upper` (optional, same length as x) draw a translucent band.
struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> lower;
  std::vector<double> upper;
};

struct Panel {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = true;
  bool log_y = true;
  std::vector<Series> series;
};

/// Panels laid out left to right in one SVG document.
std::string render(const std::vector<Panel>& panels);

void write(const std::string& path, const std::vector<Panel>& panels);

}  // namespace krlab::svg
