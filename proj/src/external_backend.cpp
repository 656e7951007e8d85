#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "maiscope/classify.hpp"
#include "maiscope/detect.hpp"
#include "maiscope/error.hpp"

namespace maiscope {

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  out += "'";
  return out;
}

// Writes the image to a private temp file, runs `command <file>`, returns stdout.
std::string run_model_process(const std::string& command, const RasterImage& img) {
#ifndef MAISCOPE_EXTERNAL_BACKENDS
  (void)command;
  (void)img;
  throw Error(ErrorCode::kBackendUnavailable, "external backends are disabled in this build");
#else
  std::string pattern = (std::filesystem::temp_directory_path() / "maiscope-XXXXXX.ppm").string();
  const int fd = mkstemps(pattern.data(), 4);
  if (fd < 0) throw Error(ErrorCode::kIoFailure, "cannot create temp file for external backend");
  close(fd);
  struct Cleanup {
    std::string path;
    ~Cleanup() {
      std::error_code ec;
      std::filesystem::remove(path, ec);
    }
  } cleanup{pattern};
  save_image(img, pattern);

  const std::string cmdline = command + " " + shell_quote(pattern);
  FILE* pipe = popen(cmdline.c_str(), "r");
  if (!pipe) throw Error(ErrorCode::kBackendUnavailable, "cannot start: " + command);
  std::string output;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, n);
  const int status = pclose(pipe);
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(ErrorCode::kBackendUnavailable, "model process failed: " + command);
  }
  return output;
#endif
}

}  // namespace

std::vector<RawDetection> parse_detector_output(std::string_view text) {
  std::vector<RawDetection> out;
  std::istringstream lines{std::string(text)};
  std::string line;
  while (std::getline(lines, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    int class_id = -1;
    RawDetection d;
    if (!(fields >> class_id >> d.score >> d.box.top >> d.box.left >> d.box.bottom >> d.box.right)) {
      throw Error(ErrorCode::kBackendUnavailable, "malformed detector line: " + line);
    }
    const auto cls = cell_class_from_code(class_id);
    if (!cls) throw Error(ErrorCode::kBackendUnavailable, "unknown class id in detector output: " + line);
    d.cls = *cls;
    if (!d.valid()) throw Error(ErrorCode::kBackendUnavailable, "detector output out of range: " + line);
    out.push_back(d);
  }
  return out;
}

std::string format_detection_line(const RawDetection& d) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d %.6f %.6f %.6f %.6f %.6f", static_cast<int>(d.cls), d.score, d.box.top,
                d.box.left, d.box.bottom, d.box.right);
  return buf;
}

CellVerdict parse_classifier_output(std::string_view text) {
  std::istringstream in{std::string(text)};
  double p_inf = 0, p_uninf = 0;
  if (!(in >> p_inf >> p_uninf)) throw Error(ErrorCode::kBackendUnavailable, "malformed classifier output");
  if (!(p_inf >= 0 && p_inf <= 1 && p_uninf >= 0 && p_uninf <= 1)) {
    throw Error(ErrorCode::kBackendUnavailable, "classifier probabilities out of range");
  }
  const double total = p_inf + p_uninf;
  if (std::abs(total - 1.0) > 1e-3) {
    throw Error(ErrorCode::kBackendUnavailable, "classifier probabilities must sum to 1");
  }
  // Six printed decimals leave rounding slack; renormalise.
  return CellVerdict::from_infected(p_inf / total);
}

ExternalDetector::ExternalDetector(std::string command) : command_(std::move(command)) {
  if (command_.empty()) throw Error(ErrorCode::kBadConfig, "external detector needs a command");
}

BackendDescriptor ExternalDetector::descriptor() const {
  return {"external:" + command_, kDetectorInputSize, kDetectorInputSize, BackendKind::kExternal, true};
}

std::vector<RawDetection> ExternalDetector::run(const RasterImage& img320) const {
  return parse_detector_output(run_model_process(command_, img320));
}

ExternalClassifier::ExternalClassifier(std::string command) : command_(std::move(command)) {
  if (command_.empty()) throw Error(ErrorCode::kBadConfig, "external classifier needs a command");
}

BackendDescriptor ExternalClassifier::descriptor() const {
  return {"external:" + command_, kClassifierInputSize, kClassifierInputSize, BackendKind::kExternal, true};
}

CellVerdict ExternalClassifier::run(const RasterImage& crop224) const {
  return parse_classifier_output(run_model_process(command_, crop224));
}

}  // namespace maiscope
