#pragma once

// mAP-vs-epoch curves gathered from run directories.

#include <filesystem>
#include <string>
#include <vector>

#include "mvkd/metrics.hpp"

namespace mvkd {

struct RunSeries {
  std::string run;
  std::vector<EvalReport> reports;  // one per epoch, in file order
};

// Reads <dir>/epochs.jsonl from every directory; the run name is the
// directory's final path component.
std::vector<RunSeries> load_series(const std::vector<std::filesystem::path>& dirs);

// run,epoch,mAP with one row per epoch report.
std::string series_csv(const std::vector<RunSeries>& series);

// Standalone SVG line chart, one polyline per run.
std::string series_svg(const std::vector<RunSeries>& series);

}  // namespace mvkd
