#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "usvis/error.hpp"

namespace usvis {

struct Dims {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t voxel_count() const noexcept { return nx * ny * nz; }
  std::size_t min_extent() const noexcept;
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + nx * (y + ny * z);
  }
  bool operator==(const Dims&) const = default;
};

/// Dense x-fastest 3D grid with no range constraint. Used for intermediate
/// quantities (raw filter responses, importance, vector components).
template <typename T>
class Grid3 {
 public:
  Grid3() = default;
  explicit Grid3(Dims dims, T fill = T{}) : dims_(dims), data_(dims.voxel_count(), fill) {}
  Grid3(Dims dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
    if (data_.size() != dims_.voxel_count()) {
      throw Error(ErrorCode::InvalidArgument, "grid data length does not match dims");
    }
  }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t x, std::size_t y, std::size_t z) noexcept {
    return data_[dims_.index(x, y, z)];
  }
  const T& operator()(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return data_[dims_.index(x, y, z)];
  }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T> release() && { return std::move(data_); }

  bool operator==(const Grid3&) const = default;

 private:
  Dims dims_;
  std::vector<T> data_;
};

using ScalarGrid = Grid3<float>;

}  // namespace usvis
