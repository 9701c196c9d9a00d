#include "mapf/plot.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mapf::plot {

namespace fs = std::filesystem;

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                         "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

char agent_letter(size_t i, bool upper) {
  char base = upper ? 'A' : 'a';
  return static_cast<char>(base + static_cast<int>(i % 26));
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

}  // namespace

std::string render_svg(const GridMap& map, const std::vector<Cell>& goals,
                       const std::vector<std::vector<Cell>>& trajectories, int cell_px) {
  const int w = map.width() * cell_px;
  const int h = map.height() * cell_px;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  os << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      os << "<rect x=\"" << x * cell_px << "\" y=\"" << y * cell_px << "\" width=\"" << cell_px
         << "\" height=\"" << cell_px << "\" fill=\""
         << (map.is_obstacle({x, y}) ? "#333333" : "#f4f4f4")
         << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
    }
  }
  auto centre = [&](Cell c) {
    return std::make_pair(c.x * cell_px + cell_px / 2, c.y * cell_px + cell_px / 2);
  };
  for (size_t i = 0; i < trajectories.size(); ++i) {
    const char* color = kColors[i % (sizeof kColors / sizeof *kColors)];
    const auto& tr = trajectories[i];
    if (i < goals.size()) {
      auto [gx, gy] = centre(goals[i]);
      int r = cell_px / 3;
      os << "<rect x=\"" << gx - r << "\" y=\"" << gy - r << "\" width=\"" << 2 * r
         << "\" height=\"" << 2 * r << "\" fill=\"none\" stroke=\"" << color
         << "\" stroke-width=\"2\"/>\n";
    }
    if (tr.empty()) continue;
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"3\" stroke-linejoin=\"round\" points=\"";
    for (size_t k = 0; k < tr.size(); ++k) {
      // Drop repeated cells so waits do not add zero-length segments.
      if (k > 0 && tr[k] == tr[k - 1]) continue;
      auto [px, py] = centre(tr[k]);
      os << (k ? " " : "") << px << ',' << py;
    }
    os << "\"/>\n";
    auto [sx, sy] = centre(tr.front());
    os << "<circle cx=\"" << sx << "\" cy=\"" << sy << "\" r=\"" << cell_px / 4 << "\" fill=\""
       << color << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string render_text(const GridMap& map, const std::vector<Cell>& goals,
                        const std::vector<std::vector<Cell>>& trajectories) {
  std::vector<std::string> rows(map.height(), std::string(map.width(), '.'));
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (map.is_obstacle({x, y})) rows[y][x] = '@';
    }
  }
  for (size_t i = 0; i < trajectories.size(); ++i) {
    for (Cell c : trajectories[i]) {
      char& ch = rows[c.y][c.x];
      char mine = agent_letter(i, false);
      if (ch == '.') {
        ch = mine;
      } else if (ch != mine) {
        ch = '+';
      }
    }
  }
  for (Cell g : goals) rows[g.y][g.x] = '*';
  for (size_t i = 0; i < trajectories.size(); ++i) {
    if (!trajectories[i].empty()) {
      Cell s = trajectories[i].front();
      rows[s.y][s.x] = agent_letter(i, true);
    }
  }
  std::string out;
  for (const auto& r : rows) out += r + "\n";
  return out;
}

std::vector<std::vector<Cell>> trajectories(const bench::TraceEpisode& ep) {
  std::vector<std::vector<Cell>> tr(ep.starts.size());
  for (size_t i = 0; i < ep.starts.size(); ++i) tr[i].push_back(ep.starts[i]);
  for (const auto& s : ep.steps) {
    for (size_t i = 0; i < s.positions.size(); ++i) tr[i].push_back(s.positions[i]);
  }
  return tr;
}

std::vector<std::string> storyboard(const bench::TraceEpisode& ep) {
  std::vector<std::string> frames;
  const GridMap& map = ep.map;
  auto draw = [&](int t, const std::vector<Cell>& pos, const JointAction* actions) {
    std::vector<std::string> rows(map.height(), std::string(map.width(), '.'));
    for (int y = 0; y < map.height(); ++y) {
      for (int x = 0; x < map.width(); ++x) {
        if (map.is_obstacle({x, y})) rows[y][x] = '@';
      }
    }
    for (size_t i = 0; i < ep.goals.size(); ++i) {
      rows[ep.goals[i].y][ep.goals[i].x] = agent_letter(i, false);
    }
    for (size_t i = 0; i < pos.size(); ++i) rows[pos[i].y][pos[i].x] = agent_letter(i, true);
    std::string f = "T" + std::to_string(t);
    if (actions) {
      for (size_t i = 0; i < actions->size(); ++i) {
        f += "  ";
        f += agent_letter(i, true);
        f += ':';
        f += std::string(action_name((*actions)[i]));
        bool waiting = (*actions)[i] == static_cast<int>(Action::kStay) && pos[i] != ep.goals[i];
        if (waiting) f += " (yields)";
      }
    }
    f += "\n";
    for (const auto& r : rows) f += r + "\n";
    frames.push_back(std::move(f));
  };
  draw(0, ep.starts, nullptr);
  for (const auto& s : ep.steps) draw(s.t, s.positions, &s.actions);
  return frames;
}

bench::TraceEpisode corridor_episode() {
  bench::Instance inst = bench::corridor_instance();
  baselines::Solution sol = baselines::cbs(inst.map, inst.tasks());
  bench::EpisodeResult r = bench::run_planned(inst, sol, EnvConfig{});
  bench::TraceEpisode ep;
  ep.setting = "corridor";
  ep.solver = "cbs";
  ep.instance_hash = r.instance_hash;
  ep.note = sol.note;
  ep.family = inst.family;
  ep.size = inst.size;
  ep.density = inst.density;
  ep.max_steps = EnvConfig{}.max_steps;
  ep.map = inst.map;
  for (const auto& a : inst.spawn) {
    ep.starts.push_back(a.pos);
    ep.goals.push_back(a.goal);
  }
  ep.steps = r.trace;
  return ep;
}

PlotFiles emit_episode_plot(const bench::TraceEpisode& ep, const std::string& out_dir,
                            bool with_storyboard) {
  fs::create_directories(out_dir);
  PlotFiles files;
  const auto tr = trajectories(ep);
  const fs::path dir(out_dir);
  files.svg = (dir / "trajectories.svg").string();
  files.text = (dir / "trajectories.txt").string();
  if (ep.map.size() == 0) {
    // Failed instance: nothing to draw.
    write_file(files.svg, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"0\" height=\"0\"/>\n");
    write_file(files.text, "");
    return files;
  }
  write_file(files.svg, render_svg(ep.map, ep.goals, tr));
  write_file(files.text, render_text(ep.map, ep.goals, tr));
  const bool corridor = ep.instance_hash == bench::corridor_instance().hash();
  if (with_storyboard || corridor) {
    files.storyboard = (dir / "storyboard.txt").string();
    std::string all;
    for (const auto& f : storyboard(ep)) all += f + "\n";
    write_file(files.storyboard, all);
  }
  return files;
}

PlotFiles emit_trace_plot(const std::string& trace_path, int index, const std::string& out_dir,
                          bool with_storyboard) {
  auto eps = bench::read_trace_file(trace_path);
  if (index < 0 || index >= static_cast<int>(eps.size())) {
    throw std::out_of_range("trace " + trace_path + " holds " + std::to_string(eps.size()) +
                            " episodes, no index " + std::to_string(index));
  }
  return emit_episode_plot(eps[index], out_dir, with_storyboard);
}

}  // namespace mapf::plot
