#pragma once

// N-hour block segmentation and rasterization of continuous blocks into
// binary plot-like images (x = minute, y = value bin).

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "mislstm/types.hpp"

namespace mislstm {

struct BlockSlices {
  std::vector<RowMatrixF> continuous;  // B slices of 7 x 60N
  std::vector<RowMatrixF> discrete;    // B slices of 9 x 6N
};

/// Non-overlapping, time-ordered blocks. Throws ConfigError when N does not
/// divide 24.
BlockSlices segment_blocks(const DayFeatureGrid& grid, const BlockConfig& config);

/// Dense C x H x W image with entries in [0, 1].
struct BlockImage {
  int channels = 0;
  int height = 0;
  int width = 0;
  Encoding encoding = Encoding::MultiChannel;
  std::vector<float> pixels;  // c-major, then row, then column

  float at(int c, int y, int x) const { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

/// Binary image stored as the sorted flat indices of its lit pixels.
struct SparseImage {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> lit;
};

/// Value bin: floor((v - lo) / (hi - lo) * H), clamped to [0, H-1].
int raster_row(double value, double lo, double hi, int height);

struct ValueRange {
  double lo;
  double hi;
};

/// Rasterizes each row of `slice` (K x W) into its own H x W raster. With
/// line fill, column t also lights every row between the bins of minutes t-1
/// and t. multi_channel stacks rasters as channels; stacked_vertical
/// concatenates them along the height in row order.
SparseImage rasterize_sparse(const RowMatrixF& slice, const BlockConfig& config,
                             std::span<const ValueRange> ranges);
SparseImage rasterize_sparse(const RowMatrixF& slice, const BlockConfig& config);

BlockImage rasterize(const RowMatrixF& slice, const BlockConfig& config);
BlockImage to_dense(const SparseImage& image, Encoding encoding);

struct BlockSequence {
  std::vector<BlockImage> images;
  std::vector<RowMatrixF> discrete_blocks;
};

BlockSequence make_block_sequence(const DayFeatureGrid& grid, const BlockConfig& config);

/// Writes the image as one 8-bit grayscale PNG, channels tiled top to bottom.
void write_png(const std::filesystem::path& path, const BlockImage& image);

}  // namespace mislstm
