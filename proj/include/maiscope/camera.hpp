#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "maiscope/imaging.hpp"

namespace maiscope {

struct Frame {
  RasterImage image;
  std::string stem;  // file name without extension; keys oracle fixtures
  std::filesystem::path path;
};

class CameraSource {
 public:
  virtual ~CameraSource() = default;
  // The frame a capture would take now. Throws EndOfFrames when exhausted.
  virtual Frame preview() const = 0;
  // Takes the current frame and moves on. Throws EndOfFrames when exhausted.
  virtual Frame capture() = 0;
  virtual bool exhausted() const = 0;
  virtual std::string kind() const = 0;
};

// Replays *.ppm and *.png files in lexicographic order, one per capture.
class DirectoryCamera final : public CameraSource {
 public:
  explicit DirectoryCamera(const std::filesystem::path& dir);

  Frame preview() const override;
  Frame capture() override;
  bool exhausted() const override { return cursor_ >= files_.size(); }
  std::string kind() const override { return "directory"; }
  std::size_t remaining() const noexcept { return files_.size() - cursor_; }

 private:
  std::vector<std::filesystem::path> files_;
  std::size_t cursor_ = 0;
};

// A slide that stays on the stage: every capture returns the same image.
class FileCamera final : public CameraSource {
 public:
  explicit FileCamera(const std::filesystem::path& file);

  Frame preview() const override { return frame_; }
  Frame capture() override { return frame_; }
  bool exhausted() const override { return false; }
  std::string kind() const override { return "file"; }

 private:
  Frame frame_;
};

// kind: directory | file | live. Live capture is not built; it raises BadConfig.
std::unique_ptr<CameraSource> open_camera(const std::string& kind, const std::filesystem::path& path);

}  // namespace maiscope
