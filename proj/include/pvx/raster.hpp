#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace pvx {

// Row-major 2-D image. Pixel (x, y) covers the unit square [x, x+1) x [y, y+1),
// so its center sits at (x + 0.5, y + 0.5) in continuous coordinates.
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    assert(width >= 0 && height >= 0);
  }
  Raster(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    assert(data_.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  T& operator()(int x, int y) noexcept {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  const T& operator()(int x, int y) const noexcept {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }

  std::span<T> row(int y) noexcept {
    return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)};
  }
  std::span<const T> row(int y) const noexcept {
    return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)};
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using RasterU16 = Raster<std::uint16_t>;
using RasterU8 = Raster<std::uint8_t>;
using RasterF = Raster<float>;
using RasterD = Raster<double>;

}  // namespace pvx
