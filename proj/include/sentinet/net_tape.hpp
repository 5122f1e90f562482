#pragma once

#include <map>
#include <string>
#include <vector>

#include "sentinet/net.hpp"

namespace sentinet {

// Cached activations from one forward walk, enough to run the backward pass.
// inputs[i] is the tensor fed to layer i (in its natural, unflattened shape);
// the softmax marker layer is not walked.
struct ForwardTape {
  std::vector<Tensor> inputs;
  std::vector<std::vector<std::size_t>> argmax;  // per layer, empty unless maxpool
  Tensor logits;
};

ForwardTape forward_with_tape(const Model& model, const Tensor& batch, bool strict_input = true);

// Parameter gradients keyed by layer name, given d loss / d logits.
std::map<std::string, LayerParams> backward_from_logits(const Model& model,
                                                        const ForwardTape& tape,
                                                        const Tensor& dlogits);

}  // namespace sentinet
