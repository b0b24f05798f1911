#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spattn/sp_attention.hpp"

namespace spattn {

// Full description of one block-wise autoregressive run.
struct GenerationConfig {
    GridSpec grid_per_block{3, 4, 4}; // frames = tau
    std::int64_t num_blocks = 5;
    std::int64_t layers = 4;
    std::int64_t denoise_steps = 2;
    std::int64_t batch = 1;
    std::int64_t heads = 8;
    std::int64_t head_dim = 16;
    int world_size = 1;
    std::uint64_t seed = 0;
    PipelineVariant variant = PipelineVariant::optimized();
    std::optional<std::int64_t> window_frames;
    std::int64_t element_width_bytes = 2;
    double rope_base = 10000.0;
    std::optional<BandSplit> band_split;

    // Fault injection: run every block with start_frame 0. Block 0 coincides
    // with the correct value, later blocks must diverge from the reference.
    bool force_start_frame_zero = false;

    std::int64_t block_len() const { return grid_per_block.seq_len(); }
    std::int64_t local_len() const { return block_len() / world_size; }
    std::int64_t total_calls() const { return num_blocks * denoise_steps * layers; }
    BandSplit effective_band_split() const {
        return band_split ? *band_split : BandSplit::defaults_for(head_dim);
    }

    void validate() const; // ConfigError / PartitionError on bad combinations
};

// Aggregate timing/ledger of one generate() run. Stage times are rank 0's.
struct RunProfile {
    std::int64_t calls = 0;
    double wall_ms = 0.0;
    std::vector<std::string> stage_order;
    std::map<std::string, double> stage_us_total;
    CommStats ledger;
};

struct GenerationResult {
    GenerationConfig config;
    std::vector<std::int64_t> start_frames;
    // Rank-gathered block outputs, (B, tau * H_g * W_g, H, D), emitted in
    // block order; block k is final before block k+1 begins.
    std::vector<Tensor4> block_outputs;
    RunProfile profile;
};

// Runs num_blocks blocks of denoise_steps x layers self-attention calls with
// per-layer per-rank KV caches. Block inputs are seeded noise; the machinery
// under test is agnostic to what produces them.
GenerationResult generate(const GenerationConfig& config);

struct VerificationReport {
    struct BlockCheck {
        std::int64_t block = 0;
        double max_abs_dev = 0.0;
        bool pass = false;
    };

    GenerationConfig config;
    double tolerance = 0.0;
    std::vector<BlockCheck> blocks;
    CommStats ledger; // of the variant run
    bool pass = false;
};

// Runs config.variant and the P=1 reference side by side on identical seeds
// and compares per-block outputs at the tolerance.
VerificationReport verify_stream(const GenerationConfig& config, double tolerance = 1e-10);

} // namespace spattn
