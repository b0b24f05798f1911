#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spattn/errors.hpp"

namespace spattn {

// Semantic axes of every tensor in this project. Canonical layout is
// row-major (B, S, H, D).
enum class Axis : int { Batch = 0, Seq = 1, Heads = 2, HeadDim = 3 };

inline constexpr int axis_index(Axis a) { return static_cast<int>(a); }

struct Shape4 {
    std::int64_t batch = 0;
    std::int64_t seq = 0;
    std::int64_t heads = 0;
    std::int64_t head_dim = 0;

    std::int64_t numel() const { return batch * seq * heads * head_dim; }
    std::int64_t extent(Axis a) const;
    Shape4 with_extent(Axis a, std::int64_t value) const;

    // All extents >= 1; D even so adjacent element pairs can be read as
    // complex numbers by the rotary embedding.
    void validate() const;

    bool operator==(const Shape4&) const = default;
    std::string str() const;
};

// Dense double-precision array over (B, S, H, D).
class Tensor4 {
  public:
    Tensor4() = default;
    explicit Tensor4(Shape4 shape);
    Tensor4(Shape4 shape, std::vector<double> data);

    const Shape4& shape() const { return shape_; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    std::int64_t extent(Axis a) const { return shape_.extent(a); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::int64_t offset(std::int64_t b, std::int64_t s, std::int64_t h, std::int64_t d) const {
        return ((b * shape_.seq + s) * shape_.heads + h) * shape_.head_dim + d;
    }
    double& at(std::int64_t b, std::int64_t s, std::int64_t h, std::int64_t d) {
        return data_[offset(b, s, h, d)];
    }
    double at(std::int64_t b, std::int64_t s, std::int64_t h, std::int64_t d) const {
        return data_[offset(b, s, h, d)];
    }

    Tensor4 slice(Axis a, std::int64_t start, std::int64_t len) const;

    bool operator==(const Tensor4&) const = default;

  private:
    Shape4 shape_{};
    std::vector<double> data_;
};

Tensor4 concat(const std::vector<Tensor4>& parts, Axis a);

// Deterministic stream of standard-normal doubles. The engine is mt19937_64
// seeded directly; normals come from Box-Muller over the raw 64-bit outputs,
// so the stream is identical on every platform (std::normal_distribution is
// implementation-defined and deliberately avoided).
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    double next_uniform(); // [0, 1)
    double next_normal();  // N(0, 1), two raw draws per pair

  private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Mixes (base, a, b, c) into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

// i.i.d. N(0, 1/D) entries, 1/sqrt(D) scaling keeping q.k logits O(1).
Tensor4 random_tensor(const Shape4& shape, Rng& rng);

// out = softmax(q k^T / sqrt(D)) v, per batch and head. No mask: causality
// is structural, enforced by what the KV cache exposes.
// q: (B, S_q, H, D); k, v: (B, S_kv, H, D) -> (B, S_q, H, D)
Tensor4 scaled_dot_product_attention(const Tensor4& q, const Tensor4& k, const Tensor4& v);

// |a - b| <= abs_tol + rel_tol * |b| element-wise.
bool allclose(const Tensor4& a, const Tensor4& b, double abs_tol, double rel_tol = 0.0);

double max_abs_diff(const Tensor4& a, const Tensor4& b);

} // namespace spattn
