#include "levemb/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "levemb/nn/layers.hpp"
#include "levemb/rng.hpp"

namespace levemb {

std::string to_string(ArchKind kind) {
  switch (kind) {
    case ArchKind::kCnn5: return "cnn5";
    case ArchKind::kCnn10: return "cnn10";
    case ArchKind::kCnn5Wide: return "cnn5w";
    case ArchKind::kCnn10Wide: return "cnn10w";
  }
  return "?";
}

ArchKind parse_arch(std::string_view text) {
  std::string key;
  for (char c : text) {
    if (c == '-' || c == '_') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (key == "cnn5") return ArchKind::kCnn5;
  if (key == "cnn10") return ArchKind::kCnn10;
  if (key == "cnn5w") return ArchKind::kCnn5Wide;
  if (key == "cnn10w") return ArchKind::kCnn10Wide;
  throw UsageError("unknown architecture '" + std::string(text) + "'");
}

std::size_t ArchitectureSpec::channels() const {
  return (kind == ArchKind::kCnn5Wide || kind == ArchKind::kCnn10Wide) ? 256 : 64;
}

std::size_t ArchitectureSpec::conv_layers() const {
  return (kind == ArchKind::kCnn10 || kind == ArchKind::kCnn10Wide) ? 10 : 5;
}

std::size_t ArchitectureSpec::pooled_len() const {
  std::size_t len = input_len;
  for (std::size_t i = 0; i < kPoolStages; ++i) len /= 2;
  return len;
}

void ArchitectureSpec::validate() const {
  if (embedding_dim == 0) throw UsageError("embedding dimension must be positive");
  if (hidden == 0) throw UsageError("hidden width must be positive");
  if (alphabet_size < 2) throw UsageError("alphabet size must be at least 2");
  if (pooled_len() == 0) {
    throw UsageError("input length " + std::to_string(input_len) + " is too short for " +
                     std::to_string(kPoolStages) + " pooling stages");
  }
  if (!(bn_eps > 0.0)) throw UsageError("batch norm eps must be positive");
}

double init_scale(double mean_distance, std::size_t embedding_dim) {
  if (!(mean_distance > 0.0)) throw UsageError("mean distance M must be positive");
  if (embedding_dim == 0) throw UsageError("embedding dimension must be positive");
  return 0.5 * std::log(mean_distance / (2.0 * static_cast<double>(embedding_dim)));
}

namespace {

template <typename T>
double squared_distance(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) {
    throw ShapeError("embedding length mismatch: " + std::to_string(u.size()) + " vs " +
                     std::to_string(v.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double diff = static_cast<double>(u[i]) - static_cast<double>(v[i]);
    s += diff * diff;
  }
  return s;
}

template <typename T>
void init_uniform(BasicTensor<T>& t, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& v : t.data()) v = static_cast<T>(dist(rng));
}

}  // namespace

double predict_distance(std::span<const double> u, std::span<const double> v, double scale) {
  return scale * scale * squared_distance(u, v);
}

double predict_distance(std::span<const float> u, std::span<const float> v, double scale) {
  return scale * scale * squared_distance(u, v);
}

template <typename T>
EmbeddingModel<T>::EmbeddingModel(const ArchitectureSpec& spec, std::uint64_t init_seed)
    : spec_(spec) {
  spec_.validate();
  const std::size_t ch = spec_.channels();
  const std::size_t layers = spec_.conv_layers();
  // CNN-5 pools after every conv; CNN-10 after every second one.
  const std::size_t pool_every = layers / ArchitectureSpec::kPoolStages;
  for (std::size_t i = 0; i < layers; ++i) {
    ops_.push_back({Op::kConv, i});
    ops_.push_back({Op::kRelu, 0});
    if ((i + 1) % pool_every == 0) ops_.push_back({Op::kPool, 0});
  }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  Rng rng = make_rng(init_seed, Stream::kInit);
  for (std::size_t i = 0; i < layers; ++i) {
    const std::size_t c_in = i == 0 ? spec_.alphabet_size : ch;
    const std::string name = "conv" + std::to_string(i);
    conv_w_.emplace_back(name + ".weight", Shape{ch, c_in, 3});
    conv_b_.emplace_back(name + ".bias", Shape{ch});
    const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * 3));
    init_uniform(conv_w_.back().value, bound, rng);
    init_uniform(conv_b_.back().value, bound, rng);
  }
  const std::size_t flat = spec_.flat_features();
  fc1_w_ = Parameter<T>("fc1.weight", {spec_.hidden, flat});
  fc1_b_ = Parameter<T>("fc1.bias", {spec_.hidden});
  fc2_w_ = Parameter<T>("fc2.weight", {spec_.embedding_dim, spec_.hidden});
  fc2_b_ = Parameter<T>("fc2.bias", {spec_.embedding_dim});
  const double b1 = 1.0 / std::sqrt(static_cast<double>(flat));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(spec_.hidden));
  init_uniform(fc1_w_.value, b1, rng);
  init_uniform(fc1_b_.value, b1, rng);
  init_uniform(fc2_w_.value, b2, rng);
  init_uniform(fc2_b_.value, b2, rng);
  bn_ = nn::BatchNormState<T>("bn", spec_.embedding_dim, spec_.bn_eps);
  log_r_ = Parameter<T>("scale.log_r", {1});
}

template <typename T>
BasicTensor<T> EmbeddingModel<T>::forward(const BasicTensor<T>& onehot, Mode mode,
                                          ForwardCache<T>* cache) {
  if (onehot.rank() != 3 || onehot.dim(1) != spec_.alphabet_size ||
      onehot.dim(2) != spec_.input_len) {
    throw ShapeError("model input " + shape_string(onehot.shape()) + " does not match (B," +
                     std::to_string(spec_.alphabet_size) + "," + std::to_string(spec_.input_len) +
                     ")");
  }
  if (cache) cache->op_inputs.clear();
  BasicTensor<T> h = onehot;
  for (const Op& op : ops_) {
    BasicTensor<T> next;
    switch (op.kind) {
      case Op::kConv:
        next = nn::conv1d_forward(h, conv_w_[op.conv].value, conv_b_[op.conv].value);
        break;
      case Op::kRelu:
        next = nn::relu_forward(h);
        break;
      case Op::kPool:
        next = nn::avgpool1d_forward(h);
        break;
    }
    if (cache) {
      cache->op_inputs.push_back(std::move(h));
    }
    h = std::move(next);
  }
  const std::size_t batch = onehot.dim(0);
  h.reshape({batch, spec_.flat_features()});
  BasicTensor<T> pre = nn::linear_forward(h, fc1_w_.value, fc1_b_.value);
  BasicTensor<T> act = nn::relu_forward(pre);
  BasicTensor<T> out = nn::linear_forward(act, fc2_w_.value, fc2_b_.value);
  BasicTensor<T> y = nn::batchnorm1d_forward(out, bn_, mode, cache ? &cache->bn : nullptr);
  if (cache) {
    cache->flat = std::move(h);
    cache->fc1_pre = std::move(pre);
    cache->fc1_act = std::move(act);
    cache->fc2_out = std::move(out);
  }
  return y;
}

template <typename T>
void EmbeddingModel<T>::backward(const BasicTensor<T>& grad_out, ForwardCache<T>& cache) {
  BasicTensor<T> g = nn::batchnorm1d_backward(grad_out, cache.bn, bn_);
  BasicTensor<T> g_act;
  nn::linear_backward(cache.fc1_act, fc2_w_.value, g, &g_act, fc2_w_.grad, fc2_b_.grad);
  BasicTensor<T> g_pre = nn::relu_backward(cache.fc1_pre, g_act);
  BasicTensor<T> g_flat;
  nn::linear_backward(cache.flat, fc1_w_.value, g_pre, &g_flat, fc1_w_.grad, fc1_b_.grad);

  const std::size_t batch = g_flat.dim(0);
  g_flat.reshape({batch, spec_.channels(), spec_.pooled_len()});
  BasicTensor<T> h = std::move(g_flat);
  for (std::size_t k = ops_.size(); k-- > 0;) {
    const Op& op = ops_[k];
    const BasicTensor<T>& input = cache.op_inputs[k];
    switch (op.kind) {
      case Op::kConv: {
        BasicTensor<T> dx;
        // The one-hot input needs no gradient.
        nn::conv1d_backward(input, conv_w_[op.conv].value, h, k == 0 ? nullptr : &dx,
                            conv_w_[op.conv].grad, conv_b_[op.conv].grad);
        h = std::move(dx);
        break;
      }
      case Op::kRelu:
        h = nn::relu_backward(input, h);
        break;
      case Op::kPool:
        h = nn::avgpool1d_backward(input.shape(), h);
        break;
    }
  }
}

template <typename T>
BasicTensor<T> EmbeddingModel<T>::encode(std::span<const Sequence* const> batch) const {
  if (batch.empty()) throw ShapeError("cannot encode an empty batch");
  const std::size_t a = spec_.alphabet_size, len = spec_.input_len;
  BasicTensor<T> x({batch.size(), a, len});
  for (std::size_t n = 0; n < batch.size(); ++n) {
    if (batch[n]->codes.size() != len) {
      throw ShapeError("sequence has padded length " + std::to_string(batch[n]->codes.size()) +
                       ", model expects " + std::to_string(len));
    }
    one_hot_into<T>(*batch[n], a, x.data().subspan(n * a * len, a * len));
  }
  return x;
}

template <typename T>
BasicTensor<T> EmbeddingModel<T>::embed(std::span<const Sequence> batch, Mode mode) {
  std::vector<const Sequence*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s);
  return forward(encode(ptrs), mode);
}

template <typename T>
std::vector<Parameter<T>*> EmbeddingModel<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (std::size_t i = 0; i < conv_w_.size(); ++i) {
    out.push_back(&conv_w_[i]);
    out.push_back(&conv_b_[i]);
  }
  for (Parameter<T>* p : {&fc1_w_, &fc1_b_, &fc2_w_, &fc2_b_, &bn_.gamma, &bn_.beta, &log_r_}) {
    out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> EmbeddingModel<T>::parameters() const {
  auto mut = const_cast<EmbeddingModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename T>
void EmbeddingModel<T>::zero_grad() {
  for (Parameter<T>* p : parameters()) p->zero_grad();
}

template <typename T>
double EmbeddingModel<T>::scale() const {
  return std::exp(static_cast<double>(log_r_.value[0]));
}

template class EmbeddingModel<float>;
template class EmbeddingModel<double>;

}  // namespace levemb
