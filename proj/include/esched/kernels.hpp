#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "esched/dag.hpp"
#include "esched/rng.hpp"

namespace esched {

/// One runnable kernel bound to its working set (one data slot). Work is
/// split into stages of independent chunks; all chunks of a stage complete
/// before the next stage starts. Chunks never write across each other.
class KernelInstance {
 public:
  virtual ~KernelInstance() = default;
  virtual std::size_t stage_count() const = 0;
  virtual std::size_t stage_chunks(std::size_t stage) const = 0;
  virtual void run_chunk(std::size_t stage, std::size_t chunk) = 0;
  virtual bool verify() const = 0;
};

struct KernelSizes {
  std::size_t matmul_n = 64;            // 64x64 doubles
  std::size_t sort_bytes = 262144;      // 262KB of int32, doubled by the merge buffer
  std::size_t copy_bytes = 16800000;    // 16.8MB in, 16.8MB out
};

inline constexpr TypeId kMatmulType = 0;
inline constexpr TypeId kSortType = 1;
inline constexpr TypeId kCopyType = 2;

/// Compute-bound dense multiply, parallel over output-row blocks so members
/// write disjoint cache lines while sharing the inputs.
class MatmulKernel final : public KernelInstance {
 public:
  MatmulKernel(std::size_t n, std::uint64_t seed) : n_(n), a_(n * n), b_(n * n), c_(n * n, 0.0) {
    Rng rng(seed);
    for (auto& v : a_) v = rng.unit() * 2.0 - 1.0;
    for (auto& v : b_) v = rng.unit() * 2.0 - 1.0;
    rows_per_chunk_ = std::max<std::size_t>(1, n_ / 8);
    chunks_ = (n_ + rows_per_chunk_ - 1) / rows_per_chunk_;
  }

  std::size_t stage_count() const override { return 1; }
  std::size_t stage_chunks(std::size_t) const override { return chunks_; }

  void run_chunk(std::size_t, std::size_t chunk) override {
    std::size_t r0 = chunk * rows_per_chunk_;
    std::size_t r1 = std::min(n_, r0 + rows_per_chunk_);
    for (std::size_t r = r0; r < r1; ++r) {
      double* crow = &c_[r * n_];
      std::fill(crow, crow + n_, 0.0);
      for (std::size_t k = 0; k < n_; ++k) {
        double aval = a_[r * n_ + k];
        const double* brow = &b_[k * n_];
        for (std::size_t j = 0; j < n_; ++j) crow[j] += aval * brow[j];
      }
    }
  }

  // Independent reduction order (per-element dot products).
  bool verify() const override {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < n_; ++k) s += a_[i * n_ + k] * b_[k * n_ + j];
        if (std::fabs(s - c_[i * n_ + j]) > 1e-9 * std::max(1.0, std::fabs(s))) return false;
      }
    return true;
  }

  const std::vector<double>& a() const { return a_; }
  const std::vector<double>& b() const { return b_; }
  const std::vector<double>& result() const { return c_; }
  std::vector<double>& mutable_a() { return a_; }

 private:
  std::size_t n_;
  std::vector<double> a_, b_, c_;
  std::size_t rows_per_chunk_ = 1, chunks_ = 1;
};

/// Cache-resident sort: four in-place quicksort chunks, two pair merges into
/// the double buffer, one final merge back. Maximum parallelism is four.
class SortKernel final : public KernelInstance {
 public:
  SortKernel(std::size_t bytes, std::uint64_t seed)
      : elems_(std::max<std::size_t>(8, bytes / sizeof(std::int32_t))),
        data_(elems_),
        buffer_(elems_) {
    Rng rng(seed);
    for (auto& v : data_) v = static_cast<std::int32_t>(rng.next());
  }

  std::size_t stage_count() const override { return 3; }
  std::size_t stage_chunks(std::size_t stage) const override {
    return stage == 0 ? 4 : (stage == 1 ? 2 : 1);
  }

  void run_chunk(std::size_t stage, std::size_t chunk) override {
    if (stage == 0) {
      quicksort(&data_[quarter(chunk)], quarter(chunk + 1) - quarter(chunk));
    } else if (stage == 1) {
      // quarters (2c, 2c+1) -> buffer half
      merge(quarter(2 * chunk), quarter(2 * chunk + 1), quarter(2 * chunk + 2), buffer_.data());
    } else {
      std::merge(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(quarter(2)),
                 buffer_.begin() + static_cast<std::ptrdiff_t>(quarter(2)), buffer_.end(), data_.begin());
    }
  }

  bool verify() const override { return std::is_sorted(data_.begin(), data_.end()); }

  const std::vector<std::int32_t>& result() const { return data_; }
  std::vector<std::int32_t>& mutable_data() { return data_; }

 private:
  std::size_t quarter(std::size_t i) const { return i * elems_ / 4; }

  void merge(std::size_t lo, std::size_t mid, std::size_t hi, std::int32_t* out) {
    std::merge(data_.begin() + static_cast<std::ptrdiff_t>(lo), data_.begin() + static_cast<std::ptrdiff_t>(mid),
               data_.begin() + static_cast<std::ptrdiff_t>(mid), data_.begin() + static_cast<std::ptrdiff_t>(hi),
               out + lo);
  }

  static void quicksort(std::int32_t* a, std::size_t n) {
    while (n > 16) {
      std::size_t mid = n / 2;
      // median of three as pivot
      if (a[mid] < a[0]) std::swap(a[mid], a[0]);
      if (a[n - 1] < a[0]) std::swap(a[n - 1], a[0]);
      if (a[n - 1] < a[mid]) std::swap(a[n - 1], a[mid]);
      std::int32_t pivot = a[mid];
      std::size_t i = 0, j = n - 1;
      for (;;) {
        while (a[i] < pivot) ++i;
        while (pivot < a[j]) --j;
        if (i >= j) break;
        std::swap(a[i], a[j]);
        ++i;
        --j;
      }
      // recurse into the smaller side, loop on the larger
      std::size_t left = j + 1;
      if (left < n - left) {
        quicksort(a, left);
        a += left;
        n -= left;
      } else {
        quicksort(a + left, n - left);
        n = left;
      }
    }
    for (std::size_t i = 1; i < n; ++i) {
      std::int32_t v = a[i];
      std::size_t j = i;
      for (; j > 0 && v < a[j - 1]; --j) a[j] = a[j - 1];
      a[j] = v;
    }
  }

  std::size_t elems_;
  std::vector<std::int32_t> data_, buffer_;
};

/// Streaming copy; each member moves a contiguous subset.
class CopyKernel final : public KernelInstance {
 public:
  CopyKernel(std::size_t bytes, std::uint64_t seed)
      : src_(std::max<std::size_t>(16, bytes)), dst_(src_.size(), 0) {
    Rng rng(seed);
    for (std::size_t i = 0; i < src_.size(); i += 8) {
      std::uint64_t w = rng.next();
      std::memcpy(&src_[i], &w, std::min<std::size_t>(8, src_.size() - i));
    }
  }

  std::size_t stage_count() const override { return 1; }
  std::size_t stage_chunks(std::size_t) const override { return 16; }

  void run_chunk(std::size_t, std::size_t chunk) override {
    std::size_t lo = chunk * src_.size() / 16;
    std::size_t hi = (chunk + 1) * src_.size() / 16;
    std::memcpy(&dst_[lo], &src_[lo], hi - lo);
  }

  bool verify() const override { return std::memcmp(src_.data(), dst_.data(), src_.size()) == 0; }

  const std::vector<std::uint8_t>& source() const { return src_; }
  const std::vector<std::uint8_t>& result() const { return dst_; }
  std::vector<std::uint8_t>& mutable_source() { return src_; }

 private:
  std::vector<std::uint8_t> src_, dst_;
};

/// Task-type to kernel wiring plus one instance per (type, data slot).
/// Tasks sharing a slot are dependency-ordered by construction, so an
/// instance never runs concurrently with itself.
class KernelRegistry {
 public:
  using Factory = std::function<std::unique_ptr<KernelInstance>(std::uint32_t slot)>;

  void register_type(TypeId type, Factory f) {
    if (factories_.size() <= type) factories_.resize(type + 1);
    factories_[type] = std::move(f);
  }

  /// Instantiate working sets for every (type, slot) the graph touches.
  void prepare(const TaskGraph& g) {
    auto counts = g.slot_counts();
    instances_.clear();
    instances_.resize(counts.size());
    for (TypeId t = 0; t < counts.size(); ++t) {
      bool used = false;
      for (const auto& n : g.nodes())
        if (n.type == t) { used = true; break; }
      if (!used) continue;
      if (t >= factories_.size() || !factories_[t])
        throw std::runtime_error("no kernel registered for task type " + std::to_string(t));
      instances_[t].reserve(counts[t]);
      for (std::uint32_t s = 0; s < counts[t]; ++s) instances_[t].push_back(factories_[t](s));
    }
  }

  KernelInstance* instance(TypeId type, std::uint32_t slot) const {
    if (type >= instances_.size() || slot >= instances_[type].size() || !instances_[type][slot])
      throw std::runtime_error("no kernel instance for type " + std::to_string(type) + " slot " +
                               std::to_string(slot));
    return instances_[type][slot].get();
  }

  bool verify_all(std::string* failure = nullptr) const {
    for (TypeId t = 0; t < instances_.size(); ++t)
      for (std::uint32_t s = 0; s < instances_[t].size(); ++s)
        if (instances_[t][s] && !instances_[t][s]->verify()) {
          if (failure) *failure = "kernel verify failed: type " + std::to_string(t) + " slot " + std::to_string(s);
          return false;
        }
    return true;
  }

  /// The three benchmark kernels on their default working sets.
  static KernelRegistry standard(KernelSizes sizes = {}, std::uint64_t seed = 1) {
    KernelRegistry reg;
    reg.register_type(kMatmulType, [sizes, seed](std::uint32_t slot) {
      return std::make_unique<MatmulKernel>(sizes.matmul_n, splitmix64(seed ^ (0x10000ull + slot)));
    });
    reg.register_type(kSortType, [sizes, seed](std::uint32_t slot) {
      return std::make_unique<SortKernel>(sizes.sort_bytes, splitmix64(seed ^ (0x20000ull + slot)));
    });
    reg.register_type(kCopyType, [sizes, seed](std::uint32_t slot) {
      return std::make_unique<CopyKernel>(sizes.copy_bytes, splitmix64(seed ^ (0x30000ull + slot)));
    });
    return reg;
  }

 private:
  std::vector<Factory> factories_;
  std::vector<std::vector<std::unique_ptr<KernelInstance>>> instances_;
};

}  // namespace esched
