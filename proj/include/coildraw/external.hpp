#pragma once

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"

#include "coildraw/io.hpp"
#include "coildraw/simulate_types.hpp"

namespace coildraw {

/// File-exchange hook for an external field solver. The command template is
/// run through the shell with {request} and {response} replaced by file
/// paths; the tool must read the layout record and write a metrics record.
struct ExternalConfig {
  std::string command;      // e.g. "my_solver {request} {response}"
  int timeout_ms = 60000;
  std::string work_dir = ".";
};

struct ExternalError : std::runtime_error {
  enum class Kind { kToolFailure, kParse, kTimeout };
  Kind kind;
  ExternalError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

namespace detail {

inline std::string substitute(std::string tpl, const std::string& key, const std::string& value) {
  for (std::size_t pos = tpl.find(key); pos != std::string::npos; pos = tpl.find(key, pos)) {
    tpl.replace(pos, key.size(), value);
    pos += value.size();
  }
  return tpl;
}

/// Runs a shell command in its own process group, killing it at the deadline.
inline int run_with_timeout(const std::string& command, int timeout_ms) {
  const pid_t pid = fork();
  if (pid < 0) throw ExternalError(ExternalError::Kind::kToolFailure, "fork failed");
  if (pid == 0) {
    setpgid(0, 0);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  int status = 0;
  for (;;) {
    const pid_t done = waitpid(pid, &status, WNOHANG);
    if (done == pid) break;
    if (done < 0) throw ExternalError(ExternalError::Kind::kToolFailure, "waitpid failed");
    if (std::chrono::steady_clock::now() >= deadline) {
      kill(-pid, SIGKILL);
      waitpid(pid, &status, 0);
      throw ExternalError(ExternalError::Kind::kTimeout, "external tool timed out");
    }
    usleep(2000);
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw ExternalError(ExternalError::Kind::kToolFailure, "external tool exited abnormally");
  return 0;
}

}  // namespace detail

/// Parses the adapter response record {"L_h","R_ohm","SRF_hz","Q"}.
/// The area field is filled by the caller from the layout geometry.
inline Metrics parse_adapter_response(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ExternalError(ExternalError::Kind::kParse, std::string("bad response JSON: ") + e.what());
  }
  Metrics m;
  try {
    m.inductance = j.at("L_h").get<double>();
    m.resistance = j.at("R_ohm").get<double>();
    m.srf = j.at("SRF_hz").get<double>();
    m.q_factor = j.at("Q").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ExternalError(ExternalError::Kind::kParse, std::string("bad response fields: ") + e.what());
  }
  return m;
}

/// Evaluates a complete layout through the configured external command.
inline Metrics external_adapter(const Layout& layout, const ExternalConfig& cfg) {
  if (layout.status != LayoutStatus::kComplete)
    throw std::logic_error("external_adapter: layout is not complete");
  namespace fs = std::filesystem;
  const fs::path dir(cfg.work_dir);
  fs::create_directories(dir);
  const fs::path request = dir / "request.json";
  const fs::path response = dir / "response.json";
  std::error_code ec;
  fs::remove(response, ec);

  write_text_file(request.string(), layout_to_json(layout).dump(2) + "\n");
  std::string cmd = detail::substitute(cfg.command, "{request}", request.string());
  cmd = detail::substitute(cmd, "{response}", response.string());
  detail::run_with_timeout(cmd, cfg.timeout_ms);

  if (!fs::exists(response))
    throw ExternalError(ExternalError::Kind::kToolFailure, "external tool wrote no response file");
  Metrics m = parse_adapter_response(read_text_file(response.string()));
  // Area comes from the geometry, not the tool; reflection leaves the
  // bounding box well-defined whether or not the mirror halves collide.
  std::vector<Segment> chain = layout.segments;
  if (layout.mode == Mode::kSymmetric) {
    const double mid = layout.canvas.midline_x();
    for (const Segment& s : layout.segments)
      chain.push_back(Segment{{2.0 * mid - s.end.x, s.end.y},
                              {2.0 * mid - s.start.x, s.start.y},
                              s.width,
                              s.layer});
  }
  m.area = bounding_box_area(chain);
  return m;
}

}  // namespace coildraw
