#pragma once

#include <string>
#include <vector>

#include "bct/trainer.hpp"

namespace bct {

struct PlotSeries {
  std::string name;  // legend label
  std::vector<EpochRecord> records;
};

enum class PlotMetric { accuracy, loss };

// Deterministic 800x500 SVG line chart, one polyline per series, axes labelled
// with their min and max. Throws DataError for a series without records.
std::string render_svg(const std::vector<PlotSeries>& series, PlotMetric metric);

// Reads each runlog CSV (legend = name of its parent directory, or the file
// stem when that is ambiguous) and writes accuracy.svg and loss.svg under
// out_dir. Returns the written paths.
std::vector<std::string> plot_runlogs(const std::vector<std::string>& runlog_paths, const std::string& out_dir);

}  // namespace bct
