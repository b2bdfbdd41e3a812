#include "mislstm/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <fmt/format.h>
#include <png.h>

namespace mislstm {

BlockSlices segment_blocks(const DayFeatureGrid& grid, const BlockConfig& config) {
  config.validate();
  grid.check();
  BlockSlices slices;
  const int blocks = config.blocks_per_day();
  const int minutes = config.block_minutes();
  const int windows = config.block_windows();
  for (int b = 0; b < blocks; ++b) {
    slices.continuous.emplace_back(grid.continuous.middleCols(b * minutes, minutes));
    slices.discrete.emplace_back(grid.discrete.middleCols(b * windows, windows));
  }
  return slices;
}

int raster_row(double value, double lo, double hi, int height) {
  const double v = std::clamp(value, lo, hi);
  const int row = static_cast<int>(std::floor((v - lo) / (hi - lo) * height));
  return std::clamp(row, 0, height - 1);
}

SparseImage rasterize_sparse(const RowMatrixF& slice, const BlockConfig& config,
                             std::span<const ValueRange> ranges) {
  config.validate();
  if (static_cast<Eigen::Index>(ranges.size()) != slice.rows()) {
    throw ShapeError("one value range per raster row is required");
  }
  const int rows = static_cast<int>(slice.rows());
  const int width = static_cast<int>(slice.cols());
  const int h = config.raster_height;

  SparseImage image;
  image.width = width;
  if (config.encoding == Encoding::MultiChannel) {
    image.channels = rows;
    image.height = h;
  } else {
    image.channels = 1;
    image.height = rows * h;
  }
  // Channel k occupies flat rows [k*h, (k+1)*h) in both layouts.
  image.lit.reserve(static_cast<std::size_t>(rows) * width * 2);
  std::vector<int> bins(width);
  for (int k = 0; k < rows; ++k) {
    for (int t = 0; t < width; ++t) bins[t] = raster_row(slice(k, t), ranges[k].lo, ranges[k].hi, h);
    const std::size_t base = image.lit.size();
    for (int t = 0; t < width; ++t) {
      int from = bins[t], to = bins[t];
      if (config.line_fill && t > 0) {
        from = std::min(bins[t - 1], bins[t]);
        to = std::max(bins[t - 1], bins[t]);
      }
      for (int r = from; r <= to; ++r) {
        image.lit.push_back(static_cast<std::uint32_t>((k * h + r) * width + t));
      }
    }
    std::sort(image.lit.begin() + static_cast<std::ptrdiff_t>(base), image.lit.end());
  }
  return image;
}

SparseImage rasterize_sparse(const RowMatrixF& slice, const BlockConfig& config) {
  std::vector<ValueRange> ranges(slice.rows(), ValueRange{config.value_lo, config.value_hi});
  return rasterize_sparse(slice, config, ranges);
}

BlockImage to_dense(const SparseImage& image, Encoding encoding) {
  BlockImage dense;
  dense.channels = image.channels;
  dense.height = image.height;
  dense.width = image.width;
  dense.encoding = encoding;
  dense.pixels.assign(static_cast<std::size_t>(image.channels) * image.height * image.width, 0.0f);
  for (auto index : image.lit) dense.pixels[index] = 1.0f;
  return dense;
}

BlockImage rasterize(const RowMatrixF& slice, const BlockConfig& config) {
  return to_dense(rasterize_sparse(slice, config), config.encoding);
}

BlockSequence make_block_sequence(const DayFeatureGrid& grid, const BlockConfig& config) {
  auto slices = segment_blocks(grid, config);
  BlockSequence sequence;
  for (const auto& slice : slices.continuous) sequence.images.push_back(rasterize(slice, config));
  sequence.discrete_blocks = std::move(slices.discrete);
  return sequence;
}

void write_png(const std::filesystem::path& path, const BlockImage& image) {
  const int rows = image.channels * image.height;
  const int cols = image.width;
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw Error(fmt::format("cannot write '{}'", path.string()));

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(fmt::format("libpng failed writing '{}'", path.string()));
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, cols, rows, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const float v = std::clamp(image.pixels[static_cast<std::size_t>(r) * cols + c], 0.0f, 1.0f);
      row[c] = static_cast<png_byte>(std::lround(v * 255.0f));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace mislstm
