#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "coildraw/geometry.hpp"

namespace coildraw {

inline const char* mode_name(Mode m) { return m == Mode::kSymmetric ? "symmetric" : "non-symmetric"; }

inline Mode mode_from_name(const std::string& s) {
  if (s == "symmetric") return Mode::kSymmetric;
  if (s == "non-symmetric") return Mode::kNonSymmetric;
  throw std::invalid_argument("unknown mode: " + s);
}

/// Layout exchange record: {mode, wire_width, layer, actions, nodes}.
/// Nodes are the head positions from the input port through every append.
inline nlohmann::json layout_to_json(const Layout& layout) {
  nlohmann::json j;
  j["mode"] = mode_name(layout.mode);
  j["wire_width"] = layout.canvas.wire_width;
  j["layer"] = layout.layer;
  j["actions"] = layout.actions;
  nlohmann::json nodes = nlohmann::json::array();
  nodes.push_back({layout.canvas.input_port.x, layout.canvas.input_port.y});
  for (const Segment& s : layout.segments) nodes.push_back({s.end.x, s.end.y});
  j["nodes"] = std::move(nodes);
  return j;
}

/// Rebuilds a layout by replaying the record's actions on the given canvas,
/// then cross-checks the stored nodes and wire width. Throws
/// std::invalid_argument on any mismatch or malformed record.
inline Layout layout_from_json(const nlohmann::json& j, const Canvas& canvas) {
  for (const char* key : {"mode", "wire_width", "layer", "actions", "nodes"}) {
    if (!j.contains(key)) throw std::invalid_argument(std::string("layout record: missing key ") + key);
  }
  const Mode mode = mode_from_name(j.at("mode").get<std::string>());
  if (!near(j.at("wire_width").get<double>(), canvas.wire_width))
    throw std::invalid_argument("layout record: wire_width does not match the canvas");

  Layout layout = initial_layout(canvas, mode);
  layout.layer = j.at("layer").get<int>();
  for (const auto& a : j.at("actions")) {
    const AppendResult r = append_segment(layout, a.get<int>());
    if (!r.ok())
      throw std::invalid_argument(std::string("layout record: action replay failed (") +
                                  to_cstr(r.error) + ")");
    layout = *r.layout;
  }

  const auto& nodes = j.at("nodes");
  if (nodes.size() != layout.segments.size() + 1)
    throw std::invalid_argument("layout record: node count does not match actions");
  const auto node_at = [&](std::size_t i) {
    const auto& n = nodes.at(i);
    if (!n.is_array() || n.size() != 2) throw std::invalid_argument("layout record: malformed node");
    return Point{n.at(0).get<double>(), n.at(1).get<double>()};
  };
  if (!near(node_at(0), canvas.input_port))
    throw std::invalid_argument("layout record: first node is not the input port");
  for (std::size_t i = 0; i < layout.segments.size(); ++i) {
    if (!near(node_at(i + 1), layout.segments[i].end))
      throw std::invalid_argument("layout record: node disagrees with action replay");
  }
  return layout;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out.flush()) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace coildraw
