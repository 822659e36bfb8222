#include "cps/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cps/hashing.hpp"
#include "cps/rng.hpp"

namespace cps {

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

std::string_view to_string(ArchKind kind) {
  switch (kind) {
    case ArchKind::convolutional: return "conv";
    case ArchKind::dense: return "dense";
    case ArchKind::linear: return "linear";
  }
  return "?";
}

ArchKind arch_kind_from_string(std::string_view name) {
  if (name == "conv" || name == "convolutional") return ArchKind::convolutional;
  if (name == "dense") return ArchKind::dense;
  if (name == "linear") return ArchKind::linear;
  throw ConfigError("unknown architecture kind '" + std::string(name) + "'");
}

void ModelSpec::validate() const {
  if (widths.empty()) throw ConfigError("model widths must be non-empty");
  for (auto w : widths)
    if (w == 0) throw ConfigError("model widths must be positive");
  if (classes < 2) throw ConfigError("model needs at least 2 classes");
  if (input_shape.empty()) throw ConfigError("model input shape is empty");
  for (auto d : input_shape)
    if (d == 0) throw ConfigError("model input dimensions must be positive");
  if (kind == ArchKind::convolutional && input_shape.size() != 3) {
    throw ConfigError("convolutional model needs a (channels, height, width) input shape");
  }
  if (kind == ArchKind::linear && (widths.size() != 1 || widths[0] != classes)) {
    throw ConfigError("linear model widths must be exactly {classes}");
  }
}

std::string ModelSpec::canonical() const {
  std::ostringstream os;
  os << to_string(kind) << ";w=";
  for (std::size_t i = 0; i < widths.size(); ++i) os << (i ? "," : "") << widths[i];
  os << ";in=";
  for (std::size_t i = 0; i < input_shape.size(); ++i) os << (i ? "x" : "") << input_shape[i];
  os << ";c=" << classes;
  return os.str();
}

std::string ModelSpec::fingerprint() const { return fnv1a_hex(canonical()); }

ModelSpec ModelSpec::preset(std::string_view name, Shape input_shape, std::size_t classes) {
  ModelSpec spec;
  spec.kind = ArchKind::convolutional;
  spec.input_shape = std::move(input_shape);
  spec.classes = classes;
  if (name == "3-layer") {
    spec.widths = {16, 16, 16};
  } else if (name == "6-layer") {
    spec.widths = {16, 16, 16, 32, 32, 32};
  } else if (name == "9-layer") {
    spec.widths = {16, 16, 16, 32, 32, 32, 32, 32, 32};
  } else if (name == "6-layer-wide") {
    spec.widths = {256, 256, 256, 512, 512, 512};
  } else {
    throw ConfigError("unknown model preset '" + std::string(name) + "'");
  }
  spec.validate();
  return spec;
}

std::vector<LayerEntry> parameter_layout(const ModelSpec& spec) {
  spec.validate();
  std::vector<LayerEntry> layout;
  switch (spec.kind) {
    case ArchKind::convolutional: {
      std::size_t in = spec.input_shape[0];
      for (std::size_t l = 0; l < spec.widths.size(); ++l) {
        const auto w = spec.widths[l];
        layout.push_back({"conv" + std::to_string(l) + ".weight", {w, in, 3, 3}});
        layout.push_back({"conv" + std::to_string(l) + ".bias", {w}});
        in = w;
      }
      layout.push_back({"head.weight", {spec.classes, in}});
      layout.push_back({"head.bias", {spec.classes}});
      break;
    }
    case ArchKind::dense: {
      std::size_t in = spec.input_size();
      for (std::size_t l = 0; l < spec.widths.size(); ++l) {
        const auto w = spec.widths[l];
        layout.push_back({"dense" + std::to_string(l) + ".weight", {w, in}});
        layout.push_back({"dense" + std::to_string(l) + ".bias", {w}});
        in = w;
      }
      layout.push_back({"head.weight", {spec.classes, in}});
      layout.push_back({"head.bias", {spec.classes}});
      break;
    }
    case ArchKind::linear:
      layout.push_back({"linear.weight", {spec.classes, spec.input_size()}});
      break;
  }
  return layout;
}

std::size_t parameter_count(const ModelSpec& spec) {
  std::size_t n = 0;
  for (const auto& e : parameter_layout(spec)) n += shape_size(e.shape);
  return n;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  const auto layout = parameter_layout(spec);
  auto rng = make_rng(seed, streams::init);
  std::vector<float> values;
  values.reserve(parameter_count(spec));
  for (const auto& e : layout) {
    const std::size_t n = shape_size(e.shape);
    if (e.shape.size() == 1) {
      values.insert(values.end(), n, 0.0f);
      continue;
    }
    const std::size_t fan_in = n / e.shape[0];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t i = 0; i < n; ++i) values.push_back(static_cast<float>(dist(rng)));
  }
  return ParamVector(std::move(values), layout, spec.fingerprint());
}

template <typename T>
ad::Var build_logits(ad::Tape<T>& tape, const ModelSpec& spec, ad::Var flat_params, ad::Var batch) {
  const auto layout = parameter_layout(spec);
  const auto& flat = tape.value(flat_params);
  if (flat.size() != parameter_count(spec)) {
    throw ShapeError("parameter vector length " + std::to_string(flat.size()) + " does not match model " +
                     spec.canonical());
  }
  const auto& x = tape.value(batch);
  if (x.rank() != spec.input_shape.size() + 1 ||
      !std::equal(spec.input_shape.begin(), spec.input_shape.end(), x.shape().begin() + 1)) {
    throw ShapeError("batch shape " + shape_string(x.shape()) + " does not match model input " +
                     shape_string(spec.input_shape));
  }
  const std::size_t rows = x.dim(0);

  std::size_t offset = 0;
  std::size_t cursor = 0;
  auto next = [&]() {
    const auto& e = layout[cursor++];
    auto v = ad::slice(tape, flat_params, offset, e.shape);
    offset += shape_size(e.shape);
    return v;
  };

  ad::Var h = batch;
  switch (spec.kind) {
    case ArchKind::convolutional: {
      for (std::size_t l = 0; l < spec.widths.size(); ++l) {
        auto w = next();
        auto b = next();
        h = ad::relu(tape, ad::add_channel_bias(tape, ad::conv2d_same(tape, h, w), b));
        const auto& hv = tape.value(h);
        if (hv.dim(2) >= 2 && hv.dim(3) >= 2) h = ad::maxpool2(tape, h);
      }
      h = ad::global_avg_pool(tape, h);
      auto w = next();
      auto b = next();
      return ad::add_channel_bias(tape, ad::matmul_nt(tape, h, w), b);
    }
    case ArchKind::dense: {
      h = ad::reshape(tape, h, {rows, spec.input_size()});
      for (std::size_t l = 0; l < spec.widths.size(); ++l) {
        auto w = next();
        auto b = next();
        h = ad::relu(tape, ad::add_channel_bias(tape, ad::matmul_nt(tape, h, w), b));
      }
      auto w = next();
      auto b = next();
      return ad::add_channel_bias(tape, ad::matmul_nt(tape, h, w), b);
    }
    case ArchKind::linear: {
      h = ad::reshape(tape, h, {rows, spec.input_size()});
      return ad::matmul_nt(tape, h, next());
    }
  }
  throw ConfigError("unsupported architecture");
}

template <typename T>
Tensor<T> forward(const ModelSpec& spec, const BasicParamVector<T>& params, const Tensor<T>& batch) {
  params.require_spec(spec);
  ad::Tape<T> tape;
  auto p = tape.constant(Tensor<T>({params.size()}, params.storage()));
  auto x = tape.constant(batch);
  auto logits = build_logits(tape, spec, p, x);
  require_finite(tape.value(logits), "forward activations");
  return tape.value(logits);
}

template <typename T>
BasicGradRecord<T> backward(const ModelSpec& spec, const BasicParamVector<T>& params, const Tensor<T>& batch,
                            std::span<const int> labels, std::uint64_t batch_id) {
  params.require_spec(spec);
  ad::Tape<T> tape;
  auto p = tape.variable(Tensor<T>({params.size()}, params.storage()));
  auto x = tape.constant(batch);
  auto logits = build_logits(tape, spec, p, x);
  require_finite(tape.value(logits), "forward activations");
  auto loss = ad::cross_entropy(tape, logits, labels);
  tape.backward(loss);
  return {params.with_values(std::move(tape.grad(p).storage())), tape.value(loss)[0], batch_id};
}

template <typename T>
T cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  ad::Tape<T> tape;
  auto z = tape.constant(logits);
  return tape.value(ad::cross_entropy(tape, z, labels))[0];
}

#define CPS_INSTANTIATE_MODEL(T)                                                                                \
  template ad::Var build_logits<T>(ad::Tape<T>&, const ModelSpec&, ad::Var, ad::Var);                         \
  template Tensor<T> forward<T>(const ModelSpec&, const BasicParamVector<T>&, const Tensor<T>&);              \
  template BasicGradRecord<T> backward<T>(const ModelSpec&, const BasicParamVector<T>&, const Tensor<T>&,     \
                                          std::span<const int>, std::uint64_t);                               \
  template T cross_entropy<T>(const Tensor<T>&, std::span<const int>);

CPS_INSTANTIATE_MODEL(float)
CPS_INSTANTIATE_MODEL(double)

#undef CPS_INSTANTIATE_MODEL

}  // namespace cps
