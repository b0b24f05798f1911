#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "spattn/generator.hpp"

namespace spattn {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Report arithmetic (the accounting identities the reports must satisfy)
// ---------------------------------------------------------------------------

struct ReportArithmetic {
    std::int64_t calls = 0;
    double baseline_per_call_ms = 0.0;  // sum of baseline stage times
    double optimized_per_call_ms = 0.0; // sum of optimized stage times
    double per_call_delta_ms = 0.0;     // baseline - optimized
    double end_to_end_delta_ms = 0.0;   // calls * per_call_delta_ms, exact
    double baseline_total_s = 0.0;
    double optimized_total_s = 0.0;
    double speedup_ratio = 0.0;   // baseline_total / optimized_total
    double speedup_percent = 0.0; // (1 - optimized/baseline) * 100
};

ReportArithmetic compute_report_arithmetic(std::span<const double> baseline_stage_ms,
                                           std::span<const double> optimized_stage_ms,
                                           std::int64_t calls, double baseline_total_s,
                                           double optimized_total_s);

// True when value reproduces a displayed figure up to one unit in its last
// printed decimal place.
bool matches_displayed(double value, double displayed, int decimals);

// Published timings quoted verbatim for context in reports. Hardware-bound;
// displayed, never asserted against measurements.
Json published_reference_context();

// The published per-stage inputs of the accounting example, for feeding
// through compute_report_arithmetic.
struct PublishedAccountingInputs {
    std::vector<double> baseline_stage_ms{1.308, 2.166};
    std::vector<double> optimized_stage_ms{0.069257, 0.273916};
    std::int64_t calls = 920;
    double baseline_total_s = 8.86;
    double optimized_total_s = 8.86 - 3.276;
};

// ---------------------------------------------------------------------------
// Aggregated per-variant profile (one bench cell)
// ---------------------------------------------------------------------------

struct VariantAggregate {
    std::string variant;
    int world_size = 1;
    GridSpec grid{};
    std::int64_t layers = 0;
    std::int64_t steps = 0;
    std::int64_t calls = 0;
    double wall_ms = 0.0; // median over repetitions
    std::vector<double> wall_ms_all;
    std::map<std::string, double> mean_stage_us;
    std::vector<std::string> stage_order;
    CommStats ledger;
    std::int64_t element_width_bytes = 2;
    double speedup_vs_baseline = 1.0;
};

VariantAggregate aggregate_run(const GenerationResult& result, std::vector<double> wall_ms_all);

struct BenchReport {
    std::vector<VariantAggregate> cells;
    // Derived deltas per (grid, P) pair where both variants are present.
    std::vector<ReportArithmetic> deltas;
};

// ---------------------------------------------------------------------------
// JSON / CSV emission
// ---------------------------------------------------------------------------

Json to_json(const CommStats& stats, std::int64_t element_width_bytes);
Json to_json(const CallProfile& profile);
Json to_json(const RunProfile& profile, std::int64_t element_width_bytes);
Json to_json(const GenerationConfig& config);
Json to_json(const GenerationResult& result);
Json to_json(const VerificationReport& report);
Json to_json(const ReportArithmetic& arithmetic);
Json to_json(const VariantAggregate& cell);
Json to_json(const BenchReport& report);

CommStats comm_stats_from_json(const Json& j);
ReportArithmetic report_arithmetic_from_json(const Json& j);

// Removes measured wall-time fields (recursively) so reports from runs with
// identical seeds compare byte-identically.
void strip_timing_fields(Json& j);

// FNV-1a over the raw little-endian double bytes; stable across runs because
// the whole simulation is bit-deterministic.
std::string tensor_checksum(const Tensor4& t);

// Fixed column set:
// variant,P,F,Hg,Wg,layers,steps,calls,wall_ms,ag,a2a,fused,elements_sent,bytes_sent,speedup_vs_baseline
std::string bench_csv(const BenchReport& report);

} // namespace spattn
