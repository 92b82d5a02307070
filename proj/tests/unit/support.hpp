#pragma once

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "pvx/error.hpp"

namespace testing {

template <typename F>
pvx::ErrorCode error_of(F&& f) {
  try {
    f();
  } catch (const pvx::Error& e) {
    return e.code();
  }
  FAIL("expected pvx::Error");
  return pvx::ErrorCode::InvalidArgument;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("pvx_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
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

}  // namespace testing
