#include "spattn/cli.hpp"

#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "spattn/report.hpp"

namespace spattn {

namespace {

struct CommonOpts {
    std::vector<int> worlds{1, 2, 4, 8};
    std::int64_t frames_per_block = 3;
    std::int64_t grid_h = 4;
    std::int64_t grid_w = 4;
    std::int64_t heads = 8;
    std::int64_t head_dim = 16;
    std::int64_t layers = 4;
    std::int64_t steps = 2;
    std::int64_t blocks = 5;
    std::int64_t batch = 1;
    std::uint64_t seed = 0;
    std::int64_t window_frames = -1; // -1: unlimited
    std::int64_t element_width_bytes = 2;
    double tolerance = 1e-10;
    std::string out_path;
    std::string format = "json";
};

void add_common_options(CLI::App& cmd, CommonOpts& o) {
    cmd.add_option("--world", o.worlds, "world sizes P (comma separated)")->delimiter(',');
    cmd.add_option("--frames-per-block", o.frames_per_block, "latent frames per block (tau)");
    cmd.add_option("--grid-h", o.grid_h, "token rows per frame");
    cmd.add_option("--grid-w", o.grid_w, "token columns per frame");
    cmd.add_option("--heads", o.heads, "attention heads");
    cmd.add_option("--head-dim", o.head_dim, "head dimension (even)");
    cmd.add_option("--layers", o.layers, "attention layers per step");
    cmd.add_option("--steps", o.steps, "denoising steps per block");
    cmd.add_option("--blocks", o.blocks, "generation blocks");
    cmd.add_option("--batch", o.batch, "batch size");
    cmd.add_option("--seed", o.seed, "base seed");
    cmd.add_option("--window-frames", o.window_frames, "rolling window in frames (-1: unlimited)");
    cmd.add_option("--element-width-bytes", o.element_width_bytes,
                   "element width used for byte accounting");
    cmd.add_option("--tolerance", o.tolerance, "verification tolerance");
    cmd.add_option("--out", o.out_path, "write the report to this path instead of stdout");
    cmd.add_option("--format", o.format, "json or csv (bench only)")
        ->check(CLI::IsMember({"json", "csv"}));
}

GenerationConfig make_config(const CommonOpts& o, int world, const PipelineVariant& variant) {
    GenerationConfig cfg;
    cfg.grid_per_block = GridSpec{o.frames_per_block, o.grid_h, o.grid_w};
    cfg.num_blocks = o.blocks;
    cfg.layers = o.layers;
    cfg.denoise_steps = o.steps;
    cfg.batch = o.batch;
    cfg.heads = o.heads;
    cfg.head_dim = o.head_dim;
    cfg.world_size = world;
    cfg.seed = o.seed;
    cfg.variant = variant;
    if (o.window_frames >= 0) {
        cfg.window_frames = o.window_frames;
    }
    cfg.element_width_bytes = o.element_width_bytes;
    return cfg;
}

PipelineVariant variant_by_name(const std::string& name) {
    if (name == "baseline") return PipelineVariant::baseline();
    if (name == "optimized") return PipelineVariant::optimized();
    if (name == "reference") return PipelineVariant::reference();
    throw ConfigError("unknown variant '" + name + "' (expected baseline|optimized|reference)");
}

int emit(const CommonOpts& o, const std::string& text, std::ostream& out, std::ostream& err) {
    if (o.out_path.empty()) {
        out << text;
        return 0;
    }
    std::ofstream f(o.out_path);
    if (!f) {
        err << "error: cannot open " << o.out_path << " for writing\n";
        return 1;
    }
    f << text;
    return f.good() ? 0 : 1;
}

CommStats expected_per_call(const AblationFlags& flags) {
    CommStats per;
    if (flags.use_fused_all_to_all) {
        per.fused_all_to_all = 1;
        per.all_to_all = 1;
        per.rounds = 2;
    } else {
        per.all_gather = 3;
        per.all_to_all = 1;
        per.rounds = 4;
    }
    return per;
}

bool ledger_counts_match(const CommStats& got, const CommStats& per_call, std::int64_t calls) {
    return got.all_gather == per_call.all_gather * calls &&
           got.all_to_all == per_call.all_to_all * calls &&
           got.fused_all_to_all == per_call.fused_all_to_all * calls &&
           got.rounds == per_call.rounds * calls;
}

int run_verify(const CommonOpts& o, const std::vector<std::string>& variant_names,
               bool corrupt_start_frame, bool parallel_cells, std::ostream& out,
               std::ostream& err) {
    std::vector<GenerationConfig> cell_cfgs;
    for (int world : o.worlds) {
        for (const std::string& name : variant_names) {
            GenerationConfig cfg = make_config(o, world, variant_by_name(name));
            cfg.force_start_frame_zero = corrupt_start_frame;
            cfg.validate();
            cell_cfgs.push_back(cfg);
        }
    }

    // Verification carries no timing, so cells may run concurrently; each
    // cell owns its worlds and the output order stays fixed.
    std::vector<VerificationReport> reports(cell_cfgs.size());
    if (parallel_cells) {
        std::vector<std::future<VerificationReport>> futures;
        futures.reserve(cell_cfgs.size());
        for (const GenerationConfig& cfg : cell_cfgs) {
            futures.push_back(std::async(std::launch::async,
                                         [&cfg, &o] { return verify_stream(cfg, o.tolerance); }));
        }
        for (std::size_t i = 0; i < futures.size(); ++i) {
            reports[i] = futures[i].get();
        }
    } else {
        for (std::size_t i = 0; i < cell_cfgs.size(); ++i) {
            reports[i] = verify_stream(cell_cfgs[i], o.tolerance);
        }
    }

    Json cells = Json::array();
    bool all_pass = true;
    for (const VerificationReport& report : reports) {
        all_pass = all_pass && report.pass;
        cells.push_back(to_json(report));
    }
    Json j{{"cells", cells}, {"pass", all_pass}};
    const int io = emit(o, j.dump(2) + "\n", out, err);
    if (io != 0) return io;
    return all_pass ? 0 : 1;
}

int run_bench(const CommonOpts& o, const std::vector<std::string>& variant_names, int reps,
              std::ostream& out, std::ostream& err) {
    BenchReport report;
    for (int world : o.worlds) {
        std::ptrdiff_t baseline_at = -1;
        for (const std::string& name : variant_names) {
            GenerationConfig cfg = make_config(o, world, variant_by_name(name));
            cfg.validate();
            std::vector<double> walls;
            GenerationResult last;
            for (int rep = 0; rep < reps; ++rep) {
                last = generate(cfg);
                walls.push_back(last.profile.wall_ms);
            }
            report.cells.push_back(aggregate_run(last, walls));
            if (name == "baseline") {
                baseline_at = static_cast<std::ptrdiff_t>(report.cells.size()) - 1;
            }
        }
        if (baseline_at < 0) {
            continue;
        }
        // Derived deltas for (baseline, optimized) pairs at the same P.
        const VariantAggregate base = report.cells[static_cast<std::size_t>(baseline_at)];
        auto stage_ms = [](const VariantAggregate& c, const char* label) {
            auto it = c.mean_stage_us.find(label);
            return it == c.mean_stage_us.end() ? 0.0 : it->second / 1000.0;
        };
        for (VariantAggregate& cell : report.cells) {
            if (cell.world_size != world || cell.variant != "optimized") {
                continue;
            }
            cell.speedup_vs_baseline = cell.wall_ms > 0.0 ? base.wall_ms / cell.wall_ms : 0.0;
            const double b_stages[2] = {stage_ms(base, kStageGatherOrFused),
                                        stage_ms(base, kStageRope)};
            const double v_stages[2] = {stage_ms(cell, kStageGatherOrFused),
                                        stage_ms(cell, kStageRope)};
            report.deltas.push_back(compute_report_arithmetic(b_stages, v_stages, cell.calls,
                                                              base.wall_ms / 1000.0,
                                                              cell.wall_ms / 1000.0));
        }
    }
    const std::string text =
        o.format == "csv" ? bench_csv(report) : to_json(report).dump(2) + "\n";
    return emit(o, text, out, err);
}

int run_ablate(const CommonOpts& o, std::ostream& out, std::ostream& err) {
    Json cells = Json::array();
    bool all_pass = true;
    for (int world : o.worlds) {
        for (int mask = 0; mask < 8; ++mask) {
            AblationFlags flags;
            flags.use_fused_all_to_all = (mask & 1) != 0;
            flags.use_local_rope = (mask & 2) != 0;
            flags.use_precomputed_freqs = (mask & 4) != 0;

            GenerationConfig cfg = make_config(o, world, PipelineVariant::optimized(flags));
            cfg.validate();
            VerificationReport verify = verify_stream(cfg, o.tolerance);

            const CommStats per_call = expected_per_call(flags);
            const bool ledger_ok = ledger_counts_match(verify.ledger, per_call, cfg.total_calls());

            // Stage order: local RoPE runs before the exchange, otherwise after.
            CallProfile prof = profile_call(PipelineVariant::optimized(flags),
                                            ProfileCallInputs{world, cfg.batch, cfg.grid_per_block,
                                                              cfg.heads, cfg.head_dim, cfg.seed});
            const std::vector<std::string> order = prof.stage_order();
            std::size_t rope_at = 0, exchange_at = 0;
            for (std::size_t i = 0; i < order.size(); ++i) {
                if (order[i] == kStageRope) rope_at = i;
                if (order[i] == kStageGatherOrFused) exchange_at = i;
            }
            const bool order_ok =
                flags.use_local_rope ? rope_at < exchange_at : exchange_at < rope_at;

            const bool pass = verify.pass && ledger_ok && order_ok;
            all_pass = all_pass && pass;
            cells.push_back(Json{{"world_size", world},
                                 {"flags",
                                  {{"use_fused_all_to_all", flags.use_fused_all_to_all},
                                   {"use_local_rope", flags.use_local_rope},
                                   {"use_precomputed_freqs", flags.use_precomputed_freqs}}},
                                 {"equivalence_pass", verify.pass},
                                 {"ledger_ok", ledger_ok},
                                 {"stage_order_ok", order_ok},
                                 {"ledger", to_json(verify.ledger, o.element_width_bytes)},
                                 {"stage_order", order},
                                 {"pass", pass}});
        }
    }
    Json j{{"cells", cells}, {"pass", all_pass}};
    const int io = emit(o, j.dump(2) + "\n", out, err);
    if (io != 0) return io;
    return all_pass ? 0 : 1;
}

int run_report(const CommonOpts& o, const std::vector<double>& baseline_stage_ms,
               const std::vector<double>& optimized_stage_ms, std::int64_t calls,
               double baseline_total_s, double optimized_total_s, std::ostream& out,
               std::ostream& err) {
    const ReportArithmetic computed = compute_report_arithmetic(
        baseline_stage_ms, optimized_stage_ms, calls, baseline_total_s, optimized_total_s);
    Json j{{"computed", to_json(computed)}, {"published_reference", published_reference_context()}};
    return emit(o, j.dump(2) + "\n", out, err);
}

} // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"sequence-parallel block-wise self-attention simulator"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::vector<std::string> variant_names{"baseline", "optimized"};
    bool corrupt_start_frame = false;
    bool parallel_cells = false;
    int reps = 5;

    const PublishedAccountingInputs published;
    std::vector<double> baseline_stage_ms = published.baseline_stage_ms;
    std::vector<double> optimized_stage_ms = published.optimized_stage_ms;
    std::int64_t calls = published.calls;
    double baseline_total_s = published.baseline_total_s;
    double optimized_total_s = published.optimized_total_s;

    CLI::App* verify = app.add_subcommand("verify", "check SP pipelines against the reference");
    add_common_options(*verify, opts);
    verify->add_option("--variants", variant_names, "variants to verify")->delimiter(',');
    verify->add_flag("--corrupt-start-frame", corrupt_start_frame,
                     "force start_frame 0 for every block (expected to fail)");
    verify->add_flag("--parallel-cells", parallel_cells,
                     "run verification cells concurrently");

    CLI::App* bench = app.add_subcommand("bench", "time pipelines and report ledgers");
    add_common_options(*bench, opts);
    bench->add_option("--variants", variant_names, "variants to bench")->delimiter(',');
    bench->add_option("--reps", reps, "repetitions per cell (median)");

    CLI::App* ablate = app.add_subcommand("ablate", "run all 2^3 ablation combinations");
    add_common_options(*ablate, opts);

    CLI::App* report = app.add_subcommand("report", "accounting arithmetic from stage timings");
    add_common_options(*report, opts);
    report->add_option("--baseline-stage-ms", baseline_stage_ms, "baseline per-call stage ms")
        ->delimiter(',');
    report->add_option("--optimized-stage-ms", optimized_stage_ms, "optimized per-call stage ms")
        ->delimiter(',');
    report->add_option("--calls", calls, "self-attention calls end to end");
    report->add_option("--baseline-total-s", baseline_total_s, "baseline end-to-end seconds");
    report->add_option("--optimized-total-s", optimized_total_s, "optimized end-to-end seconds");

    std::vector<std::string> argv_copy = args;
    try {
        std::vector<const char*> argv;
        argv.push_back("spattn");
        for (const std::string& a : argv_copy) {
            argv.push_back(a.c_str());
        }
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (verify->parsed()) {
            return run_verify(opts, variant_names, corrupt_start_frame, parallel_cells, out, err);
        }
        if (bench->parsed()) {
            return run_bench(opts, variant_names, reps, out, err);
        }
        if (ablate->parsed()) {
            return run_ablate(opts, out, err);
        }
        if (report->parsed()) {
            return run_report(opts, baseline_stage_ms, optimized_stage_ms, calls,
                              baseline_total_s, optimized_total_s, out, err);
        }
        err << "usage error: no subcommand\n";
        return 2;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const PartitionError& e) {
        err << "partition error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace spattn
