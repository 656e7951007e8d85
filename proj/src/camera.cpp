#include "maiscope/camera.hpp"

#include <algorithm>

#include "maiscope/error.hpp"

namespace maiscope {

namespace fs = std::filesystem;

namespace {

Frame load_frame(const fs::path& path) { return {load_image(path), path.stem().string(), path}; }

}  // namespace

DirectoryCamera::DirectoryCamera(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kBadConfig, "camera directory " + dir.string() + " not found");
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = e.path().extension().string();
    if (ext == ".ppm" || ext == ".png") files_.push_back(e.path());
  }
  std::sort(files_.begin(), files_.end());
}

Frame DirectoryCamera::preview() const {
  if (exhausted()) throw Error(ErrorCode::kEndOfFrames, "no frames left");
  return load_frame(files_[cursor_]);
}

Frame DirectoryCamera::capture() {
  Frame f = preview();
  ++cursor_;
  return f;
}

namespace {

Frame load_single(const fs::path& file) {
  if (!fs::is_regular_file(file)) throw Error(ErrorCode::kBadConfig, "camera file " + file.string() + " not found");
  return load_frame(file);
}

}  // namespace

FileCamera::FileCamera(const fs::path& file) : frame_(load_single(file)) {}

std::unique_ptr<CameraSource> open_camera(const std::string& kind, const fs::path& path) {
  if (kind == "directory") return std::make_unique<DirectoryCamera>(path);
  if (kind == "file") return std::make_unique<FileCamera>(path);
  if (kind == "live") throw Error(ErrorCode::kBadConfig, "live camera support is not built into this binary");
  throw Error(ErrorCode::kBadConfig, "unknown camera kind '" + kind + "'");
}

}  // namespace maiscope
