#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "levemb/nn/batchnorm.hpp"
#include "levemb/seqcore.hpp"
#include "levemb/tensor.hpp"

namespace levemb {

using nn::Mode;

enum class ArchKind { kCnn5, kCnn10, kCnn5Wide, kCnn10Wide };

std::string to_string(ArchKind kind);
// Accepts cnn5, cnn10, cnn5w, cnn10w (case-insensitive, '-' ignored).
ArchKind parse_arch(std::string_view text);

struct ArchitectureSpec {
  ArchKind kind = ArchKind::kCnn5;
  std::size_t embedding_dim = 80;
  std::size_t input_len = 160;
  std::size_t alphabet_size = 6;
  std::size_t hidden = 512;
  double bn_eps = 1e-9;

  std::size_t channels() const;
  std::size_t conv_layers() const;
  static constexpr std::size_t kPoolStages = 5;
  // Spatial length after the pooling stages.
  std::size_t pooled_len() const;
  std::size_t flat_features() const { return channels() * pooled_len(); }

  void validate() const;
  bool operator==(const ArchitectureSpec&) const = default;
};

// log_r such that r = sqrt(M / (2 n)).
double init_scale(double mean_distance, std::size_t embedding_dim);

// r^2 * sum_i (u_i - v_i)^2
double predict_distance(std::span<const double> u, std::span<const double> v, double scale);
double predict_distance(std::span<const float> u, std::span<const float> v, double scale);

template <typename T>
struct ForwardCache;

// Conv/ReLU/pool stack -> FC -> ReLU -> FC(n) -> batch norm, plus the
// learnable distance scale stored as log r.
template <typename T>
class EmbeddingModel {
 public:
  EmbeddingModel(const ArchitectureSpec& spec, std::uint64_t init_seed);

  const ArchitectureSpec& spec() const noexcept { return spec_; }

  // onehot: (B, alphabet_size, input_len) -> (B, n)
  BasicTensor<T> forward(const BasicTensor<T>& onehot, Mode mode,
                         ForwardCache<T>* cache = nullptr);
  // Accumulates parameter gradients for dL/d(output).
  void backward(const BasicTensor<T>& grad_out, ForwardCache<T>& cache);

  // Sequences must already be padded to input_len.
  BasicTensor<T> embed(std::span<const Sequence> batch, Mode mode);
  BasicTensor<T> encode(std::span<const Sequence* const> batch) const;

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  void zero_grad();

  Parameter<T>& log_scale() noexcept { return log_r_; }
  const Parameter<T>& log_scale() const noexcept { return log_r_; }
  double scale() const;
  void set_log_scale(double log_r) { log_r_.value[0] = static_cast<T>(log_r); }

  nn::BatchNormState<T>& batch_norm() noexcept { return bn_; }
  const nn::BatchNormState<T>& batch_norm() const noexcept { return bn_; }

  // Copies every parameter and batch-norm statistic into a model of another
  // scalar type.
  template <typename U>
  void copy_to(EmbeddingModel<U>& other) const;

 private:
  struct Op {
    enum Kind { kConv, kRelu, kPool } kind;
    std::size_t conv = 0;
  };

  ArchitectureSpec spec_;
  std::vector<Op> ops_;
  std::vector<Parameter<T>> conv_w_;
  std::vector<Parameter<T>> conv_b_;
  Parameter<T> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
  nn::BatchNormState<T> bn_;
  Parameter<T> log_r_;

  template <typename U>
  friend class EmbeddingModel;
};

template <typename T>
struct ForwardCache {
  std::vector<BasicTensor<T>> op_inputs;
  BasicTensor<T> flat;
  BasicTensor<T> fc1_pre;
  BasicTensor<T> fc1_act;
  BasicTensor<T> fc2_out;
  nn::BatchNormCache<T> bn;
};

template <typename T>
template <typename U>
void EmbeddingModel<T>::copy_to(EmbeddingModel<U>& other) const {
  if (!(other.spec_ == spec_)) throw ShapeError("copy_to: architecture mismatch");
  auto src = parameters();
  auto dst = other.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i]->value = src[i]->value.template cast<U>();
    dst[i]->adam_m = src[i]->adam_m.template cast<U>();
    dst[i]->adam_v = src[i]->adam_v.template cast<U>();
  }
  other.bn_.running_mean = bn_.running_mean.template cast<U>();
  other.bn_.running_var = bn_.running_var.template cast<U>();
}

extern template class EmbeddingModel<float>;
extern template class EmbeddingModel<double>;

}  // namespace levemb
