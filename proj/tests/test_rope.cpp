#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "spattn/rope.hpp"

using namespace spattn;

namespace {
constexpr double kPi = 3.14159265358979323846;

double angle_of(const RopeFrequencyTable& t, Band band, std::int64_t pos, std::int64_t pair) {
    return std::atan2(t.sin_at(band, pos, pair), t.cos_at(band, pos, pair));
}
} // namespace

TEST_CASE("position zero rotates by nothing") {
    const RopeFrequencyTable t = precompute_frequencies(4, 4, 4, 8, 10000.0, BandSplit{2, 1, 1});
    for (Band band : {Band::Temporal, Band::Height, Band::Width}) {
        for (std::int64_t j = 0; j < t.pairs(band); ++j) {
            CHECK(t.cos_at(band, 0, j) == 1.0);
            CHECK(t.sin_at(band, 0, j) == 0.0);
        }
    }
}

TEST_CASE("band split must sum to D/2") {
    CHECK_THROWS_AS(precompute_frequencies(4, 4, 4, 4, 10000.0, BandSplit{1, 1, 1}), ConfigError);
    CHECK_THROWS_AS(precompute_frequencies(4, 4, 4, 7, 10000.0, BandSplit{2, 1, 0}), ConfigError);
}

TEST_CASE("closed-form band angles: D=8, base 10000, split (2,1,1)") {
    const RopeFrequencyTable t = precompute_frequencies(4, 4, 4, 8, 10000.0, BandSplit{2, 1, 1});
    // temporal band, m=1: j=0 -> 1 * 10000^0 = 1 rad; j=1 -> 10000^(-1/2) = 0.01 rad
    CHECK(std::abs(angle_of(t, Band::Temporal, 1, 0) - 1.0) <= 1e-12);
    CHECK(std::abs(angle_of(t, Band::Temporal, 1, 1) - 0.01) <= 1e-12);
}

TEST_CASE("stored pairs stay on the unit circle") {
    const RopeFrequencyTable t =
        precompute_frequencies(16, 8, 8, 16, 10000.0, BandSplit::defaults_for(16));
    for (Band band : {Band::Temporal, Band::Height, Band::Width}) {
        const std::int64_t extent = band == Band::Temporal ? t.max_frames()
                                    : band == Band::Height ? t.max_height()
                                                           : t.max_width();
        for (std::int64_t m = 0; m < extent; ++m) {
            for (std::int64_t j = 0; j < t.pairs(band); ++j) {
                const double c = t.cos_at(band, m, j);
                const double s = t.sin_at(band, m, j);
                CHECK(std::abs(c * c + s * s - 1.0) <= 1e-12);
            }
        }
    }
}

TEST_CASE("global_time_index basics and worked example") {
    // first token of a block lands on the start frame
    for (std::int64_t s : {0, 3, 17}) {
        CHECK(global_time_index(0, 0, 4, 4, s) == s);
    }
    // H_g=2, W_g=2, L=8, P=2, r=1, i_local=1, s=3 -> i_global=5 -> frame 1 -> 4
    CHECK(global_time_index(1, 1, 4, 4, 3) == 4);
    CHECK(oracle::frame_index_by_enumeration(5, 2, 2, 2) == 1);

    // enumeration oracle over a sweep of grids and ranks
    for (std::int64_t f : {1, 2, 5}) {
        for (std::int64_t hg : {1, 3}) {
            for (std::int64_t wg : {1, 4}) {
                const std::int64_t L = f * hg * wg;
                for (std::int64_t P : {1, 2, 4}) {
                    if (L % P != 0) continue;
                    for (std::int64_t r = 0; r < P; ++r) {
                        for (std::int64_t i = 0; i < L / P; ++i) {
                            const std::int64_t want =
                                7 + oracle::frame_index_by_enumeration(r * (L / P) + i, f, hg, wg);
                            CHECK(global_time_index(i, r, L / P, hg * wg, 7) == want);
                        }
                    }
                }
            }
        }
    }
}

TEST_CASE("start frames of successive blocks step by tau") {
    for (std::int64_t k = 0; k < 4; ++k) {
        CHECK(BlockContext::for_block(k, 3).start_frame == 3 * k);
    }
}

TEST_CASE("zero angles leave the input unchanged") {
    // extents of 1 mean every position is 0, so every stored angle is 0
    const RopeFrequencyTable t = precompute_frequencies(1, 1, 1, 4, 10000.0, BandSplit{1, 1, 0});
    Rng rng(2);
    const Tensor4 x = random_tensor(Shape4{1, 1, 2, 4}, rng);
    const Tensor4 out = apply_rope_global(x, GridSpec{1, 1, 1}, t, 0);
    CHECK(out == x);
}

TEST_CASE("quarter-turn rotation matches the 2x2 rotation matrix") {
    // p_T=2: pair j=1 has angle m * base^(-1/2); base = (2/pi)^2 makes it
    // pi/2 at frame 1.
    const double base = (2.0 / kPi) * (2.0 / kPi);
    const RopeFrequencyTable t = precompute_frequencies(2, 1, 1, 4, base, BandSplit{2, 0, 0});
    Tensor4 x(Shape4{1, 2, 1, 4}, {1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0});
    const Tensor4 out = apply_rope_global(x, GridSpec{2, 1, 1}, t, 0);

    // frame 0: identity
    CHECK(out.at(0, 0, 0, 2) == 1.0);
    CHECK(out.at(0, 0, 0, 3) == 0.0);
    // frame 1, pair j=1: (1,0) -> (0,1) up to cos(pi/2) rounding
    double a = 1.0, b = 0.0;
    oracle::rotate_pair(a, b, kPi / 2.0);
    CHECK(std::abs(out.at(0, 1, 0, 2) - a) <= 1e-12);
    CHECK(std::abs(out.at(0, 1, 0, 3) - b) <= 1e-12);
    CHECK(std::abs(out.at(0, 1, 0, 2)) <= 1e-12);
    CHECK(std::abs(out.at(0, 1, 0, 3) - 1.0) <= 1e-12);
    // frame 1, pair j=0 rotates by exactly 1 rad
    a = 1.0;
    b = 0.0;
    oracle::rotate_pair(a, b, 1.0 * std::pow(base, 0.0));
    CHECK(std::abs(out.at(0, 1, 0, 0) - a) <= 1e-12);
    CHECK(std::abs(out.at(0, 1, 0, 1) - b) <= 1e-12);
}

TEST_CASE("causal-local at P=1 is bit-identical to global") {
    const GridSpec grid{3, 4, 4};
    const RopeFrequencyTable t = precompute_frequencies(12, 4, 4, 16);
    Rng rng(6);
    const Tensor4 x = random_tensor(Shape4{2, grid.seq_len(), 4, 16}, rng);
    for (std::int64_t s : {0, 3, 9}) {
        CHECK(apply_rope_causal_local(x, grid, t, s, 0, 1) == apply_rope_global(x, grid, t, s));
    }
}

TEST_CASE("rank concatenation of causal-local equals global, bit for bit") {
    const GridSpec grid{4, 2, 4}; // L = 32
    const RopeFrequencyTable t = precompute_frequencies(32, 4, 4, 8, 10000.0, BandSplit{2, 1, 1});
    Rng rng(13);
    const Tensor4 x = random_tensor(Shape4{1, grid.seq_len(), 2, 8}, rng);
    for (std::int64_t s : {0, 4, 20}) {
        const Tensor4 want = apply_rope_global(x, grid, t, s);
        for (int P : {1, 2, 4, 8}) {
            std::vector<Tensor4> parts;
            const std::int64_t lp = grid.seq_len() / P;
            for (int r = 0; r < P; ++r) {
                parts.push_back(
                    apply_rope_causal_local(x.slice(Axis::Seq, r * lp, lp), grid, t, s, r, P));
            }
            CHECK(concat(parts, Axis::Seq) == want);
        }
    }
}

TEST_CASE("start_frame only moves the temporal band") {
    const GridSpec grid{2, 2, 2};
    Rng rng(17);
    const Tensor4 x = random_tensor(Shape4{1, 4, 2, 12}, rng); // local shard of P=2

    // with a temporal band present, s=3 differs from s=0
    const RopeFrequencyTable with_t =
        precompute_frequencies(8, 2, 2, 12, 10000.0, BandSplit{2, 2, 2});
    CHECK(apply_rope_causal_local(x, grid, with_t, 3, 1, 2) !=
          apply_rope_causal_local(x, grid, with_t, 0, 1, 2));

    // with the temporal band removed, the offset cannot matter
    const RopeFrequencyTable no_t =
        precompute_frequencies(8, 2, 2, 12, 10000.0, BandSplit{0, 3, 3});
    CHECK(apply_rope_causal_local(x, grid, no_t, 3, 1, 2) ==
          apply_rope_causal_local(x, grid, no_t, 0, 1, 2));
}

TEST_CASE("offset shift: a block at start_frame s matches the embedded slice") {
    // Rotating a block in isolation with offset s must equal rotating a
    // longer sequence and restricting to the block's rows.
    const GridSpec block{2, 2, 2};
    const std::int64_t s = 3;
    const GridSpec full{5, 2, 2}; // frames 0..4, block occupies frames 3..4
    const RopeFrequencyTable t = precompute_frequencies(8, 2, 2, 8, 10000.0, BandSplit{2, 1, 1});

    Rng rng(23);
    const Tensor4 long_x = random_tensor(Shape4{1, full.seq_len(), 2, 8}, rng);
    const std::int64_t row0 = s * block.tokens_per_frame();
    const Tensor4 block_x = long_x.slice(Axis::Seq, row0, block.seq_len());

    const Tensor4 from_block = apply_rope_causal_local(block_x, block, t, s, 0, 1);
    const Tensor4 from_full =
        apply_rope_global(long_x, full, t, 0).slice(Axis::Seq, row0, block.seq_len());
    CHECK(from_block == from_full);
}

TEST_CASE("rotation preserves pair norms") {
    const GridSpec grid{3, 2, 2};
    const RopeFrequencyTable t = precompute_frequencies(3, 2, 2, 8, 10000.0, BandSplit{2, 1, 1});
    Rng rng(29);
    const Tensor4 x = random_tensor(Shape4{1, grid.seq_len(), 2, 8}, rng);
    const Tensor4 out = apply_rope_global(x, grid, t, 0);
    for (std::int64_t i = 0; i < grid.seq_len(); ++i) {
        for (std::int64_t h = 0; h < 2; ++h) {
            for (std::int64_t j = 0; j < 4; ++j) {
                const double n0 = std::hypot(x.at(0, i, h, 2 * j), x.at(0, i, h, 2 * j + 1));
                const double n1 = std::hypot(out.at(0, i, h, 2 * j), out.at(0, i, h, 2 * j + 1));
                CHECK(std::abs(n0 - n1) <= 1e-12);
            }
        }
    }
}

TEST_CASE("temporal inner products depend only on the position difference") {
    // pure temporal positions: H_g = W_g = 1
    const RopeFrequencyTable t = precompute_frequencies(8, 1, 1, 8, 10000.0, BandSplit{4, 0, 0});
    Rng rng(31);
    const Tensor4 q = random_tensor(Shape4{1, 1, 1, 8}, rng);
    const Tensor4 k = random_tensor(Shape4{1, 1, 1, 8}, rng);

    auto rotated_at = [&](const Tensor4& x, std::int64_t frame) {
        return apply_rope_global(x, GridSpec{1, 1, 1}, t, frame);
    };
    auto pair_dot = [](const Tensor4& a, const Tensor4& b, std::int64_t j) {
        return a.at(0, 0, 0, 2 * j) * b.at(0, 0, 0, 2 * j) +
               a.at(0, 0, 0, 2 * j + 1) * b.at(0, 0, 0, 2 * j + 1);
    };

    const Tensor4 q2 = rotated_at(q, 2), k0 = rotated_at(k, 0);
    const Tensor4 q5 = rotated_at(q, 5), k3 = rotated_at(k, 3);
    for (std::int64_t j = 0; j < 4; ++j) {
        CHECK(std::abs(pair_dot(q2, k0, j) - pair_dot(q5, k3, j)) <= 1e-12);
    }
}

TEST_CASE("shape and range errors") {
    const GridSpec grid{2, 2, 2};
    const RopeFrequencyTable t = precompute_frequencies(4, 2, 2, 8, 10000.0, BandSplit{2, 1, 1});
    Rng rng(37);
    const Tensor4 bad = random_tensor(Shape4{1, 7, 2, 8}, rng);
    CHECK_THROWS_AS(apply_rope_global(bad, grid, t, 0), ShapeError);

    const Tensor4 ok = random_tensor(Shape4{1, 8, 2, 8}, rng);
    CHECK_THROWS_AS(apply_rope_global(ok, grid, t, 3), RangeError); // 3 + 2 > 4

    const Tensor4 local = random_tensor(Shape4{1, 4, 2, 8}, rng);
    CHECK_THROWS_AS(apply_rope_causal_local(local, grid, t, 0, 0, 3), PartitionError);
}

TEST_CASE("locality parity over 100 random cases") {
    Rng meta(123);
    int cases = 0;
    const std::int64_t forced_starts[4] = {0, 3, 6, 17};
    while (cases < 100) {
        const std::int64_t f = 1 + static_cast<std::int64_t>(meta.next_u64() % 5);
        const std::int64_t hg = 1 + static_cast<std::int64_t>(meta.next_u64() % 4);
        const std::int64_t wg = 1 + static_cast<std::int64_t>(meta.next_u64() % 4);
        const GridSpec grid{f, hg, wg};
        const int P_opts[4] = {1, 2, 4, 8};
        const int P = P_opts[meta.next_u64() % 4];
        if (grid.seq_len() % P != 0) continue;

        const std::int64_t s = cases < 4 ? forced_starts[cases]
                                         : static_cast<std::int64_t>(meta.next_u64() % 20);
        const RopeFrequencyTable t =
            precompute_frequencies(s + f, hg, wg, 12, 10000.0, BandSplit{2, 2, 2});

        Rng data(derive_seed(99, static_cast<std::uint64_t>(cases)));
        const Tensor4 x = random_tensor(Shape4{1, grid.seq_len(), 2, 12}, data);
        const Tensor4 want = apply_rope_global(x, grid, t, s);

        std::vector<Tensor4> parts;
        const std::int64_t lp = grid.seq_len() / P;
        for (int r = 0; r < P; ++r) {
            parts.push_back(
                apply_rope_causal_local(x.slice(Axis::Seq, r * lp, lp), grid, t, s, r, P));
        }
        CHECK(max_abs_diff(concat(parts, Axis::Seq), want) <= 1e-14);
        ++cases;
    }
    CHECK(cases == 100);
}
