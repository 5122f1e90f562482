#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "sentinet/kernels.hpp"
#include "sentinet/tensor.hpp"

namespace sentinet {

enum class LayerKind { conv, relu, maxpool, lrn, dense, softmax };

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

struct DenseSpec {
  std::size_t out = 0;
};

struct LayerDef {
  std::string name;
  LayerKind kind = LayerKind::relu;
  std::variant<std::monostate, ConvSpec, PoolSpec, LrnSpec, DenseSpec> spec;
  float lr_mult = 1.0f;
};

// Channels-height-width.
using Chw = std::array<std::size_t, 3>;

struct Architecture {
  std::vector<LayerDef> layers;
  Chw input_shape{0, 0, 0};
  std::size_t class_count = 0;

  const LayerDef* find(const std::string& name) const;
  bool has_layer(const std::string& name) const;
};

struct LayerParams {
  Tensor weights;
  Tensor bias;
};

struct Model {
  Architecture arch;
  std::map<std::string, LayerParams> params;  // one entry per weighted layer
  std::string provenance = "scratch";
};

enum class TemplateScale { full, mini };

// Five conv blocks plus a three-layer fully-connected head. Pooling runs
// before normalization after conv1 and conv2. The mini scale keeps the exact
// layer ordering at desk-size widths; its convolutions are unpadded so a
// converted network computes the same values on crops and on full images.
Architecture build_template(TemplateScale scale, std::size_t class_count);

enum class Variant { full, fc7_2, fc6_2, fc9_extended };

const char* variant_name(Variant v);
std::optional<Variant> variant_from_name(const std::string& name);

// Pure surgery on a template-shaped architecture:
//   full:         replace the head with a fresh `fc8_twitter` dense layer
//   fc7-2:        drop fc7 (+ its relu) as well, head fed by fc6
//   fc6-2:        drop fc6 and fc7, head fed by flattened pool5
//   fc9-extended: keep fc8 and append a fresh `fc9_twitter` head
// New layers get head_classes outputs and a 10x learning-rate multiplier.
Architecture apply_variant(const Architecture& arch, Variant v, std::size_t head_classes = 2);

struct LayerShape {
  std::string name;
  Chw out;
};

// Output shape per layer; throws naming the first failing layer.
std::vector<LayerShape> infer_shapes(const Architecture& arch, const Chw& input);

// Spatial stride product from input to the last feature map.
std::size_t total_stride(const Architecture& arch);

struct ParamCount {
  std::size_t total = 0;
  std::vector<std::pair<std::string, std::size_t>> per_layer;
};

ParamCount param_count(const Architecture& arch);

enum class InitPolicy {
  paper_head,  // Gaussian std 0.01, zero bias (fresh task heads)
  he_scratch   // Gaussian std sqrt(2/fan_in), zero bias (training from scratch)
};

Model init_weights(const Architecture& arch, std::uint64_t seed, InitPolicy policy);

struct TransferResult {
  Model model;
  std::vector<std::string> transferred;  // copied by name+shape match
  std::vector<std::string> fresh;        // freshly initialized (reported)
};

// Name-based weight transfer. A name match with a shape mismatch is an error;
// unmatched weighted layers are initialized with the paper_head policy.
TransferResult transfer_weights(const Model& source, const Architecture& target,
                                std::uint64_t seed = 1);

// Names whose activations can be captured: conv/pool/lrn/dense layers (13 in
// the templates). Captured tensors are post-activation where a relu follows.
std::vector<std::string> capturable_layers(const Architecture& arch);

struct ForwardResult {
  Tensor logits;
  std::map<std::string, Tensor> captured;
};

ForwardResult forward(const Model& model, const Tensor& batch,
                      const std::set<std::string>& capture = {});

// Forward pass that accepts any spatial size compatible with the layer chain
// (used by the converted dense-prediction path).
Tensor forward_any_size(const Model& model, const Tensor& batch);

}  // namespace sentinet
