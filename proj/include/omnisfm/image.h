#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace omnisfm {

// Interleaved float raster, channel values nominally in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  float& at(int x, int y, int c) {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  float at(int x, int y, int c) const {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }

  const std::vector<float>& data() const { return data_; }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// 8-bit PNG I/O. Gray, gray+alpha, RGB and RGBA inputs are expanded to RGB.
Image ReadPng(const std::string& path);
void WritePng(const std::string& path, const Image& image);

// Peak signal-to-noise ratio in dB for peak value 1, over pixels where
// `mask` is true (all pixels if `mask` is empty).
double Psnr(const Image& a, const Image& b,
            const std::vector<bool>& mask = {});

}  // namespace omnisfm
