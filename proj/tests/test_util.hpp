#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

// Scratch directory removed when the test ends.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "maiscope-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

#define CHECK_THROWS_CODE(expr, expected)                 \
  do {                                                    \
    bool thrown_ = false;                                 \
    try {                                                 \
      (void)(expr);                                       \
    } catch (const maiscope::Error& e) {                  \
      thrown_ = true;                                     \
      CHECK_MESSAGE(e.code() == (expected), e.what());    \
    }                                                     \
    CHECK_MESSAGE(thrown_, "expected " #expected);        \
  } while (0)
