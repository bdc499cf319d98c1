// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "avattn/image.hpp"

#include <cstring>
#include <fmt/format.h>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "avattn/error.hpp"

namespace avattn {

Image ReadImage(const std::filesystem::path& path, int width, int height) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) Fail(ErrorKind::kIo, fmt::format("image: cannot decode {}", path.string()));
  if (bgr.cols != width || bgr.rows != height) {
    cv::Mat resized;
    cv::resize(bgr, resized, cv::Size(width, height), 0, 0, cv::INTER_AREA);
    bgr = resized;
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image out(width, height);
  for (int y = 0; y < height; ++y) {
    std::memcpy(out.pixel(0, y), rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(width) * 3);
  }
  return out;
}

void WriteImage(const std::filesystem::path& path, const Image& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.rgb.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) {
    Fail(ErrorKind::kIo, fmt::format("image: cannot write {}", path.string()));
  }
}

}  // namespace avattn
