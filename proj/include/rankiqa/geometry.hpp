#pragma once

#include <cstddef>

namespace rankiqa {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_ch = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_ch = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  bool valid() const {
    return kernel > 0 && stride > 0 && in_h + 2 * pad >= kernel && in_w + 2 * pad >= kernel;
  }
};

struct PoolGeometry {
  std::size_t batch = 1;
  std::size_t channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t kernel = 2;

  std::size_t out_h() const { return in_h / kernel; }
  std::size_t out_w() const { return in_w / kernel; }
};

}  // namespace rankiqa
