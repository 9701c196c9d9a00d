#pragma once

#include <string>
#include <vector>

#include "mapf/bench.hpp"

namespace mapf::plot {

// trajectories[i] lists agent i's cells from t = 0.
std::string render_svg(const GridMap& map, const std::vector<Cell>& goals,
                       const std::vector<std::vector<Cell>>& trajectories, int cell_px = 24);

// Text overlay: '@' obstacle, agent letters on visited cells ('+' where paths
// share a cell), upper-case at the start, '*' on goals.
std::string render_text(const GridMap& map, const std::vector<Cell>& goals,
                        const std::vector<std::vector<Cell>>& trajectories);

// One text frame per time step: agents as upper-case letters, their goals as
// lower-case letters, and the actions that led to the frame.
std::vector<std::string> storyboard(const bench::TraceEpisode& episode);

std::vector<std::vector<Cell>> trajectories(const bench::TraceEpisode& episode);

// Runs CBS on the canned corridor and returns the replayed episode.
bench::TraceEpisode corridor_episode();

struct PlotFiles {
  std::string svg;
  std::string text;
  std::string storyboard;  // empty unless written
};

// Renders episode `index` of a trace file into out_dir. The storyboard is
// written when asked for or when the episode is the canned corridor.
PlotFiles emit_trace_plot(const std::string& trace_path, int index, const std::string& out_dir,
                          bool with_storyboard = false);

PlotFiles emit_episode_plot(const bench::TraceEpisode& episode, const std::string& out_dir,
                            bool with_storyboard);

}  // namespace mapf::plot
