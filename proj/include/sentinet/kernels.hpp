#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "sentinet/tensor.hpp"

namespace sentinet {

struct ConvSpec {
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t groups = 1;
};

struct PoolSpec {
  std::size_t kernel = 0;
  std::size_t stride = 1;
};

// Cross-channel response normalization:
//   b_c = a_c / (k + (alpha/n) * sum_{j in window(c)} a_j^2)^beta
// with the channel window clipped at the edges.
struct LrnSpec {
  std::size_t n = 5;
  double alpha = 1e-4;
  double beta = 0.75;
  double k = 2.0;
};

// Output spatial size for a sliding window, floor convention.
std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

void check_conv_spec(const ConvSpec& spec, std::size_t in_channels);
void check_lrn_spec(const LrnSpec& spec);

// When SENTINET_CHECKED=1 every kernel verifies its output is finite.
bool checked_mode();

template <class T>
void assert_all_finite(const TensorT<T>& t, const char* op);

// --- convolution ------------------------------------------------------------

template <class T>
struct ConvGrads {
  TensorT<T> input;
  TensorT<T> weights;
  TensorT<T> bias;
};

// input [N,C,H,W], weights [K,C/g,kh,kw], bias [K] -> [N,K,H',W'].
// im2col + GEMM path; grouped channels are convolved independently.
template <class T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weights,
                  const TensorT<T>& bias, const ConvSpec& spec);

// Naive seven-loop reference, kept as the equivalence oracle for the GEMM path.
template <class T>
TensorT<T> conv2d_direct(const TensorT<T>& input, const TensorT<T>& weights,
                         const TensorT<T>& bias, const ConvSpec& spec);

template <class T>
ConvGrads<T> conv2d_backward(const TensorT<T>& input, const TensorT<T>& weights,
                             const ConvSpec& spec, const TensorT<T>& dout);

// --- max pooling ------------------------------------------------------------

template <class T>
struct PoolResult {
  TensorT<T> output;
  // Flat index into the input tensor of each pooled maximum. Ties break
  // toward the smallest flat index.
  std::vector<std::size_t> argmax;
};

template <class T>
PoolResult<T> maxpool(const TensorT<T>& input, const PoolSpec& spec);

template <class T>
TensorT<T> maxpool_backward(const std::vector<std::size_t>& argmax,
                            const std::vector<std::size_t>& input_shape,
                            const TensorT<T>& dout);

// --- local response normalization -------------------------------------------

template <class T>
TensorT<T> lrn(const TensorT<T>& input, const LrnSpec& spec);

template <class T>
TensorT<T> lrn_backward(const TensorT<T>& input, const LrnSpec& spec,
                        const TensorT<T>& dout);

// --- relu -------------------------------------------------------------------

template <class T>
TensorT<T> relu(const TensorT<T>& input);

// Gradient at exactly zero is defined as zero.
template <class T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& dout);

// --- dense ------------------------------------------------------------------

template <class T>
struct DenseGrads {
  TensorT<T> input;
  TensorT<T> weights;
  TensorT<T> bias;
};

// input [N,d], weights [m,d], bias [m] -> [N,m]; out = input * W^T + b.
template <class T>
TensorT<T> dense(const TensorT<T>& input, const TensorT<T>& weights,
                 const TensorT<T>& bias);

template <class T>
DenseGrads<T> dense_backward(const TensorT<T>& input, const TensorT<T>& weights,
                             const TensorT<T>& dout);

// --- softmax / losses -------------------------------------------------------

// Row softmax with max-subtraction stabilization.
template <class T>
TensorT<T> softmax(const TensorT<T>& logits);

template <class T>
struct XentResult {
  double loss = 0.0;  // mean negative log-likelihood
  TensorT<T> probs;
};

template <class T>
XentResult<T> softmax_cross_entropy(const TensorT<T>& logits, std::span<const int> labels);

// d loss / d logits = (probs - onehot) / N.
template <class T>
TensorT<T> softmax_cross_entropy_backward(const TensorT<T>& probs, std::span<const int> labels);

template <class T>
struct HingeResult {
  double loss = 0.0;  // mean max(0, 1 - y*s); L2 penalty added when weights given
  TensorT<T> dscores;
};

// scores [N], labels in {-1,+1}. The subgradient at the hinge point is zero.
// When `weights` is non-null, reg_strength * ||weights||^2 is added to the
// loss; the matching 2*reg*w term on the weight gradient is the caller's.
template <class T>
HingeResult<T> hinge_loss(const TensorT<T>& scores, std::span<const int> labels,
                          double reg_strength = 0.0, const TensorT<T>* weights = nullptr);

}  // namespace sentinet
