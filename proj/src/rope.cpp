#include "spattn/rope.hpp"

#include <cmath>
#include <string>

namespace spattn {

void GridSpec::validate() const {
    if (frames < 1 || height < 1 || width < 1) {
        throw ShapeError("grid extents must be >= 1, got (" + std::to_string(frames) + ", " +
                         std::to_string(height) + ", " + std::to_string(width) + ")");
    }
}

BandSplit BandSplit::defaults_for(std::int64_t head_dim) {
    const std::int64_t pairs = head_dim / 2;
    const std::int64_t spatial = pairs / 3;
    return BandSplit{pairs - 2 * spatial, spatial, spatial};
}

RopeFrequencyTable precompute_frequencies(std::int64_t max_frames, std::int64_t max_h,
                                          std::int64_t max_w, std::int64_t head_dim, double base,
                                          const BandSplit& split) {
    if (head_dim < 2 || head_dim % 2 != 0) {
        throw ConfigError("head_dim must be even and >= 2, got " + std::to_string(head_dim));
    }
    if (split.temporal < 0 || split.height < 0 || split.width < 0 ||
        split.total() != head_dim / 2) {
        throw ConfigError("band split (" + std::to_string(split.temporal) + ", " +
                          std::to_string(split.height) + ", " + std::to_string(split.width) +
                          ") must sum to D/2 = " + std::to_string(head_dim / 2));
    }
    if (max_frames < 1 || max_h < 1 || max_w < 1) {
        throw ConfigError("table extents must be >= 1");
    }
    if (!(base > 0.0)) {
        throw ConfigError("frequency base must be positive");
    }

    RopeFrequencyTable table;
    table.max_pos_[0] = max_frames;
    table.max_pos_[1] = max_h;
    table.max_pos_[2] = max_w;
    table.split_ = split;
    table.base_ = base;

    const std::int64_t band_pairs[3] = {split.temporal, split.height, split.width};
    const std::int64_t band_extent[3] = {max_frames, max_h, max_w};
    for (int band = 0; band < 3; ++band) {
        const std::int64_t p = band_pairs[band];
        std::vector<double>& out = table.data_[band];
        out.resize(static_cast<std::size_t>(band_extent[band] * p * 2));
        for (std::int64_t m = 0; m < band_extent[band]; ++m) {
            for (std::int64_t j = 0; j < p; ++j) {
                const double freq =
                    std::pow(base, -static_cast<double>(j) / static_cast<double>(p));
                const double angle = static_cast<double>(m) * freq;
                out[static_cast<std::size_t>((m * p + j) * 2)] = std::cos(angle);
                out[static_cast<std::size_t>((m * p + j) * 2 + 1)] = std::sin(angle);
            }
        }
    }
    return table;
}

std::int64_t global_time_index(std::int64_t i_local, std::int64_t rank, std::int64_t local_len,
                               std::int64_t grid_hw, std::int64_t start_frame) {
    const std::int64_t i_global = rank * local_len + i_local;
    return start_frame + i_global / grid_hw;
}

namespace {

// Shared rotation kernel: rows [0, rows) of x correspond to global sequence
// positions [row_offset, row_offset + rows) of the current block. Both the
// global and the causal-local entry points funnel here, which is what makes
// their outputs bit-identical.
Tensor4 rotate_rows(const Tensor4& x, const GridSpec& grid, const RopeFrequencyTable& table,
                    std::int64_t start_frame, std::int64_t row_offset) {
    const Shape4& xs = x.shape();
    const std::int64_t hw = grid.tokens_per_frame();
    const BandSplit& split = table.split();
    if (split.total() != xs.head_dim / 2) {
        throw ShapeError("table pairs " + std::to_string(split.total()) +
                         " do not match head_dim " + std::to_string(xs.head_dim));
    }
    if (start_frame < 0 || start_frame + grid.frames > table.max_frames()) {
        throw RangeError("block frames [" + std::to_string(start_frame) + ", " +
                         std::to_string(start_frame + grid.frames) +
                         ") exceed table max_frames " + std::to_string(table.max_frames()));
    }
    if (grid.height > table.max_height() || grid.width > table.max_width()) {
        throw RangeError("grid exceeds table spatial extents");
    }

    Tensor4 out = x;
    for (std::int64_t i = 0; i < xs.seq; ++i) {
        const std::int64_t i_global = row_offset + i;
        const std::int64_t t_global = start_frame + i_global / hw;
        const std::int64_t h_pos = (i_global % hw) / grid.width;
        const std::int64_t w_pos = i_global % grid.width;
        for (std::int64_t b = 0; b < xs.batch; ++b) {
            for (std::int64_t hd = 0; hd < xs.heads; ++hd) {
                double* row = out.data() + out.offset(b, i, hd, 0);
                std::int64_t j = 0;
                for (std::int64_t jt = 0; jt < split.temporal; ++jt, ++j) {
                    const double c = table.cos_at(Band::Temporal, t_global, jt);
                    const double s = table.sin_at(Band::Temporal, t_global, jt);
                    const double a = row[2 * j], bb = row[2 * j + 1];
                    row[2 * j] = a * c - bb * s;
                    row[2 * j + 1] = a * s + bb * c;
                }
                for (std::int64_t jh = 0; jh < split.height; ++jh, ++j) {
                    const double c = table.cos_at(Band::Height, h_pos, jh);
                    const double s = table.sin_at(Band::Height, h_pos, jh);
                    const double a = row[2 * j], bb = row[2 * j + 1];
                    row[2 * j] = a * c - bb * s;
                    row[2 * j + 1] = a * s + bb * c;
                }
                for (std::int64_t jw = 0; jw < split.width; ++jw, ++j) {
                    const double c = table.cos_at(Band::Width, w_pos, jw);
                    const double s = table.sin_at(Band::Width, w_pos, jw);
                    const double a = row[2 * j], bb = row[2 * j + 1];
                    row[2 * j] = a * c - bb * s;
                    row[2 * j + 1] = a * s + bb * c;
                }
            }
        }
    }
    return out;
}

} // namespace

Tensor4 apply_rope_global(const Tensor4& x, const GridSpec& grid, const RopeFrequencyTable& table,
                          std::int64_t start_frame) {
    grid.validate();
    if (x.shape().seq != grid.seq_len()) {
        throw ShapeError("sequence length " + std::to_string(x.shape().seq) +
                         " does not equal F*H_g*W_g = " + std::to_string(grid.seq_len()));
    }
    return rotate_rows(x, grid, table, start_frame, 0);
}

Tensor4 apply_rope_causal_local(const Tensor4& x_local, const GridSpec& grid,
                                const RopeFrequencyTable& table, std::int64_t start_frame,
                                std::int64_t rank, std::int64_t world_size) {
    grid.validate();
    const std::int64_t full_len = grid.seq_len();
    if (world_size < 1 || full_len % world_size != 0) {
        throw PartitionError("sequence length " + std::to_string(full_len) +
                             " not divisible by world size " + std::to_string(world_size));
    }
    const std::int64_t local_len = full_len / world_size;
    if (x_local.shape().seq != local_len) {
        throw ShapeError("local sequence length " + std::to_string(x_local.shape().seq) +
                         " does not equal L/P = " + std::to_string(local_len));
    }
    if (rank < 0 || rank >= world_size) {
        throw PartitionError("rank " + std::to_string(rank) + " out of range for world size " +
                             std::to_string(world_size));
    }
    return rotate_rows(x_local, grid, table, start_frame, rank * local_len);
}

} // namespace spattn
