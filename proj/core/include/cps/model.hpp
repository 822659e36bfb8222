#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cps/autodiff.hpp"
#include "cps/errors.hpp"
#include "cps/tensor.hpp"

namespace cps {

enum class ArchKind {
  convolutional,  // 3x3 same conv + ReLU (+ 2x2 max-pool) per width, global average pool, linear head
  dense,          // linear + ReLU per width, linear head
  linear,         // a single bias-free linear map; widths must be {classes}
};

std::string_view to_string(ArchKind kind);
ArchKind arch_kind_from_string(std::string_view name);

struct ModelSpec {
  ArchKind kind = ArchKind::convolutional;
  std::vector<std::size_t> widths{16, 16, 16};
  Shape input_shape{3, 32, 32};
  std::size_t classes = 10;

  void validate() const;
  std::size_t input_size() const { return shape_size(input_shape); }
  /// Canonical text form, e.g. "conv;w=16,16,16;in=3x32x32;c=10".
  std::string canonical() const;
  std::string fingerprint() const;

  /// Named depth/width presets: "3-layer", "6-layer", "9-layer", "6-layer-wide".
  static ModelSpec preset(std::string_view name, Shape input_shape = {3, 32, 32}, std::size_t classes = 10);

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct LayerEntry {
  std::string name;
  Shape shape;
  friend bool operator==(const LayerEntry&, const LayerEntry&) = default;
};

std::vector<LayerEntry> parameter_layout(const ModelSpec& spec);
std::size_t parameter_count(const ModelSpec& spec);

/// One model's parameters as a flat vector plus the layout that gives it meaning.
template <typename T>
class BasicParamVector {
 public:
  BasicParamVector() = default;
  BasicParamVector(std::vector<T> values, std::vector<LayerEntry> layout, std::string fingerprint)
      : values_(std::move(values)), layout_(std::move(layout)), fingerprint_(std::move(fingerprint)) {
    std::size_t total = 0;
    for (const auto& e : layout_) total += shape_size(e.shape);
    if (total != values_.size()) {
      throw ShapeError("parameter layout covers " + std::to_string(total) + " values but vector holds " +
                       std::to_string(values_.size()));
    }
  }

  /// Zero vector with the layout of `spec`.
  static BasicParamVector zeros(const ModelSpec& spec) {
    return BasicParamVector(std::vector<T>(parameter_count(spec), T{0}), parameter_layout(spec), spec.fingerprint());
  }

  /// Same layout/fingerprint, new values.
  BasicParamVector with_values(std::vector<T> values) const { return BasicParamVector(std::move(values), layout_, fingerprint_); }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  const std::vector<T>& storage() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<LayerEntry>& layout() const noexcept { return layout_; }
  const std::string& fingerprint() const noexcept { return fingerprint_; }

  bool compatible_with(const BasicParamVector& other) const noexcept {
    return fingerprint_ == other.fingerprint_ && values_.size() == other.values_.size();
  }
  void require_compatible(const BasicParamVector& other, const char* where) const {
    if (!compatible_with(other)) throw ShapeError(std::string(where) + ": parameter vectors are not interpolation-compatible");
  }
  void require_spec(const ModelSpec& spec) const;

  template <typename U>
  BasicParamVector<U> cast() const {
    return BasicParamVector<U>(std::vector<U>(values_.begin(), values_.end()), layout_, fingerprint_);
  }

  friend bool operator==(const BasicParamVector&, const BasicParamVector&) = default;

 private:
  std::vector<T> values_;
  std::vector<LayerEntry> layout_;
  std::string fingerprint_;
};

using ParamVector = BasicParamVector<float>;
using ParamVector64 = BasicParamVector<double>;

template <typename T>
void BasicParamVector<T>::require_spec(const ModelSpec& spec) const {
  if (fingerprint_ != spec.fingerprint()) {
    throw ShapeError("parameter fingerprint " + fingerprint_ + " does not match model " + spec.canonical());
  }
}

template <typename T>
struct BasicGradRecord {
  BasicParamVector<T> gradient;
  T loss{};
  std::uint64_t batch_id = 0;
};

using GradRecord = BasicGradRecord<float>;

/// He-uniform weights, zero biases, drawn from `seed`.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

/// Builds the logits node for `batch` (shape (B, input_shape...)) on `tape`.
/// `flat_params` must be a rank-1 node holding parameter_count(spec) values.
template <typename T>
ad::Var build_logits(ad::Tape<T>& tape, const ModelSpec& spec, ad::Var flat_params, ad::Var batch);

/// Logits of shape (B, classes).
template <typename T>
Tensor<T> forward(const ModelSpec& spec, const BasicParamVector<T>& params, const Tensor<T>& batch);

/// Mean cross-entropy and its gradient w.r.t. the parameters.
template <typename T>
BasicGradRecord<T> backward(const ModelSpec& spec, const BasicParamVector<T>& params, const Tensor<T>& batch,
                            std::span<const int> labels, std::uint64_t batch_id = 0);

/// Mean cross-entropy of precomputed logits; used by tests and evaluation.
template <typename T>
T cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

}  // namespace cps
