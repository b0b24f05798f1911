#include "spattn/generator.hpp"

#include <chrono>

namespace spattn {

void GenerationConfig::validate() const {
    grid_per_block.validate();
    if (num_blocks < 1 || layers < 1 || denoise_steps < 1) {
        throw ConfigError("num_blocks, layers and denoise_steps must be >= 1");
    }
    if (batch < 1 || heads < 1 || head_dim < 2 || head_dim % 2 != 0) {
        throw ConfigError("batch/heads must be >= 1 and head_dim even");
    }
    if (world_size < 1) {
        throw ConfigError("world_size must be >= 1");
    }
    if (block_len() % world_size != 0) {
        throw PartitionError("block length " + std::to_string(block_len()) +
                             " not divisible by world size " + std::to_string(world_size));
    }
    if (heads % world_size != 0) {
        throw PartitionError("heads " + std::to_string(heads) + " not divisible by world size " +
                             std::to_string(world_size));
    }
    if (variant.kind == PipelineKind::Reference && world_size != 1) {
        throw ConfigError("reference variant requires world_size 1");
    }
    if (effective_band_split().total() != head_dim / 2) {
        throw ConfigError("band split must sum to head_dim/2");
    }
    if (element_width_bytes < 1) {
        throw ConfigError("element_width_bytes must be >= 1");
    }
    if (window_frames && *window_frames < grid_per_block.frames) {
        throw ConfigError("window_frames smaller than one block is not supported");
    }
}

namespace {

Tensor4 block_noise(const GenerationConfig& cfg, std::int64_t block, std::int64_t step) {
    Rng rng(derive_seed(cfg.seed, 0x10, static_cast<std::uint64_t>(block),
                        static_cast<std::uint64_t>(step)));
    return random_tensor(Shape4{cfg.batch, cfg.block_len(), cfg.heads, cfg.head_dim}, rng);
}

} // namespace

GenerationResult generate(const GenerationConfig& cfg) {
    cfg.validate();

    const int P = cfg.world_size;
    const std::int64_t L = cfg.block_len();
    const std::int64_t tau = cfg.grid_per_block.frames;

    const RopeFrequencyTable table =
        precompute_frequencies(cfg.num_blocks * tau, cfg.grid_per_block.height,
                               cfg.grid_per_block.width, cfg.head_dim, cfg.rope_base,
                               cfg.effective_band_split());

    std::vector<AttentionLayerParams> params;
    params.reserve(static_cast<std::size_t>(cfg.layers));
    for (std::int64_t layer = 0; layer < cfg.layers; ++layer) {
        params.push_back(AttentionLayerParams::seeded(
            cfg.heads * cfg.head_dim, derive_seed(cfg.seed, 0x20, static_cast<std::uint64_t>(layer))));
    }

    CommWorld world(P);

    // One cache per layer per rank; ranks never share caches.
    std::vector<std::vector<KvCache>> caches;
    caches.reserve(static_cast<std::size_t>(P));
    for (int r = 0; r < P; ++r) {
        std::vector<KvCache> per_layer;
        per_layer.reserve(static_cast<std::size_t>(cfg.layers));
        for (std::int64_t layer = 0; layer < cfg.layers; ++layer) {
            per_layer.emplace_back(cfg.grid_per_block.tokens_per_frame(), cfg.window_frames);
        }
        caches.push_back(std::move(per_layer));
    }

    std::vector<std::vector<Tensor4>> local_outputs(
        static_cast<std::size_t>(P), std::vector<Tensor4>(static_cast<std::size_t>(cfg.num_blocks)));
    std::vector<CallProfile> rank0_profiles;
    rank0_profiles.reserve(static_cast<std::size_t>(cfg.total_calls()));

    const auto wall_start = std::chrono::steady_clock::now();
    world.run([&](int rank) {
        for (std::int64_t block = 0; block < cfg.num_blocks; ++block) {
            const std::int64_t start_frame =
                cfg.force_start_frame_zero ? 0 : BlockContext::for_block(block, tau).start_frame;
            Tensor4 x_local;
            for (std::int64_t step = 0; step < cfg.denoise_steps; ++step) {
                const Tensor4 x_full = block_noise(cfg, block, step);
                x_local = x_full.slice(Axis::Seq, rank * (L / P), L / P);
                for (std::int64_t layer = 0; layer < cfg.layers; ++layer) {
                    CallProfile prof;
                    CallProfile* pp = rank == 0 ? &prof : nullptr;
                    x_local = run_self_attention(cfg.variant, x_local, rank, world,
                                                 params[static_cast<std::size_t>(layer)],
                                                 cfg.grid_per_block, table, start_frame,
                                                 caches[static_cast<std::size_t>(rank)]
                                                       [static_cast<std::size_t>(layer)],
                                                 block, pp);
                    if (rank == 0) {
                        rank0_profiles.push_back(std::move(prof));
                    }
                }
            }
            // Block output is final after its last denoising step.
            local_outputs[static_cast<std::size_t>(rank)][static_cast<std::size_t>(block)] =
                std::move(x_local);
        }
    });
    const auto wall_end = std::chrono::steady_clock::now();

    GenerationResult result;
    result.config = cfg;
    result.start_frames.reserve(static_cast<std::size_t>(cfg.num_blocks));
    result.block_outputs.reserve(static_cast<std::size_t>(cfg.num_blocks));
    for (std::int64_t block = 0; block < cfg.num_blocks; ++block) {
        result.start_frames.push_back(cfg.force_start_frame_zero
                                          ? 0
                                          : BlockContext::for_block(block, tau).start_frame);
        std::vector<Tensor4> parts;
        parts.reserve(static_cast<std::size_t>(P));
        for (int r = 0; r < P; ++r) {
            parts.push_back(local_outputs[static_cast<std::size_t>(r)][static_cast<std::size_t>(block)]);
        }
        result.block_outputs.push_back(concat(parts, Axis::Seq));
    }

    RunProfile& prof = result.profile;
    prof.calls = cfg.total_calls();
    prof.wall_ms = std::chrono::duration<double, std::milli>(wall_end - wall_start).count();
    prof.ledger = world.stats();
    if (!rank0_profiles.empty()) {
        prof.stage_order = rank0_profiles.front().stage_order();
        for (const CallProfile& cp : rank0_profiles) {
            for (const CallProfile::Stage& s : cp.stages) {
                prof.stage_us_total[s.label] += s.time_us;
            }
        }
    }
    return result;
}

VerificationReport verify_stream(const GenerationConfig& cfg, double tolerance) {
    if (cfg.variant.kind == PipelineKind::Reference) {
        throw ConfigError("verify_stream needs a non-reference variant");
    }
    GenerationResult actual = generate(cfg);

    GenerationConfig ref_cfg = cfg;
    ref_cfg.variant = PipelineVariant::reference();
    ref_cfg.world_size = 1;
    ref_cfg.force_start_frame_zero = false;
    GenerationResult expected = generate(ref_cfg);

    VerificationReport report;
    report.config = cfg;
    report.tolerance = tolerance;
    report.ledger = actual.profile.ledger;
    report.pass = true;
    for (std::int64_t block = 0; block < cfg.num_blocks; ++block) {
        VerificationReport::BlockCheck check;
        check.block = block;
        check.max_abs_dev =
            max_abs_diff(actual.block_outputs[static_cast<std::size_t>(block)],
                         expected.block_outputs[static_cast<std::size_t>(block)]);
        check.pass = check.max_abs_dev <= tolerance;
        report.pass = report.pass && check.pass;
        report.blocks.push_back(check);
    }
    return report;
}

} // namespace spattn
