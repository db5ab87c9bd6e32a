#include "levemb/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "levemb/eval.hpp"

namespace levemb {

void TrainConfig::validate() const {
  loss.validate();
  if (batch_size < 2) throw UsageError("batch size must be at least 2 (batch norm)");
  if (!(adam.lr > 0.0)) throw UsageError("learning rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw UsageError("adam betas must lie in [0, 1)");
  }
}

namespace {

std::string dump_batch(std::span<const PairSample> batch, std::span<const double> dhat,
                       double scale) {
  std::ostringstream out;
  out << "scale r=" << scale << "; first pairs (d, dhat):";
  for (std::size_t i = 0; i < std::min<std::size_t>(batch.size(), 8); ++i) {
    out << " (" << batch[i].d << ", " << dhat[i] << ")";
  }
  return out.str();
}

}  // namespace

template <typename T>
double accumulate_pair_gradients(EmbeddingModel<T>& model, std::span<const PairSample> batch,
                                 const LossSpec& loss, Mode mode) {
  const std::size_t b = batch.size();
  if (b < 1) throw UsageError("empty training batch");
  const ArchitectureSpec& spec = model.spec();
  const Alphabet& alphabet = Alphabet::dna();

  std::vector<Sequence> padded;
  padded.reserve(2 * b);
  for (const auto& p : batch) padded.push_back(pad(p.s, spec.input_len, alphabet));
  for (const auto& p : batch) padded.push_back(pad(p.t, spec.input_len, alphabet));
  std::vector<const Sequence*> ptrs;
  for (const auto& s : padded) ptrs.push_back(&s);

  ForwardCache<T> cache;
  const BasicTensor<T> emb = model.forward(model.encode(ptrs), mode, &cache);
  const std::size_t n = spec.embedding_dim;
  const double r2 = model.scale() * model.scale();

  BasicTensor<T> grad_emb(emb.shape());
  std::vector<double> dhat(b);
  double total = 0.0;
  double grad_log_r = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const T* u = emb.ptr() + i * n;
    const T* v = emb.ptr() + (b + i) * n;
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double diff = static_cast<double>(u[j]) - static_cast<double>(v[j]);
      sq += diff * diff;
    }
    dhat[i] = r2 * sq;
    const LossValue lv = evaluate_loss(loss, dhat[i], batch[i].d);
    total += lv.value;
    const double g = lv.grad / static_cast<double>(b);
    // d dhat / d log_r = 2 dhat;  d dhat / du = 2 r^2 (u - v)
    grad_log_r += g * 2.0 * dhat[i];
    T* gu = grad_emb.ptr() + i * n;
    T* gv = grad_emb.ptr() + (b + i) * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double gj = g * 2.0 * r2 * (static_cast<double>(u[j]) - static_cast<double>(v[j]));
      gu[j] = static_cast<T>(gj);
      gv[j] = static_cast<T>(-gj);
    }
  }
  const double mean_loss = total / static_cast<double>(b);
  if (!std::isfinite(mean_loss)) {
    throw NumericError("non-finite " + loss.name() + " loss; " + dump_batch(batch, dhat, model.scale()));
  }
  model.log_scale().grad[0] += static_cast<T>(grad_log_r);
  model.backward(grad_emb, cache);
  return mean_loss;
}

template <typename T>
double train_step(EmbeddingModel<T>& model, std::span<const PairSample> batch,
                  const LossSpec& loss, nn::Adam<T>& optimizer) {
  if (batch.size() < 2) throw UsageError("training batches need at least 2 pairs");
  model.zero_grad();
  const double value = accumulate_pair_gradients(model, batch, loss, Mode::kTrain);
  auto params = model.parameters();
  try {
    optimizer.step(params);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " after " + loss.name() + " loss " +
                       std::to_string(value));
  }
  return value;
}

std::vector<EpochLog> train(EmbeddingModel<float>& model, std::span<const PairSample> train_set,
                            std::span<const PairSample> validation, const TrainConfig& cfg,
                            TrainState& state, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.size() < 2) throw DataError("training set needs at least 2 pairs");
  const auto val = validation.subspan(0, std::min(validation.size(), cfg.validation_pairs));

  nn::Adam<float> optimizer(cfg.adam, state.adam_steps);
  std::vector<EpochLog> logs;
  std::vector<std::size_t> order(train_set.size());
  std::vector<PairSample> batch;
  for (std::size_t epoch = state.epochs_completed; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(cfg.seed, Stream::kShuffle, epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < 2) break;
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);
      loss_sum += train_step(model, batch, cfg.loss, optimizer) * static_cast<double>(batch.size());
      loss_count += batch.size();
    }
    state.adam_steps = optimizer.steps();
    state.epochs_completed = epoch + 1;

    EpochLog log;
    log.epoch = epoch + 1;
    log.loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    log.scale = model.scale();
    if (!val.empty()) {
      const std::vector<double> dhat = predict_distances(model, val);
      log.ae_g = ae_global(dhat, val);
      const bool any_h = std::any_of(val.begin(), val.end(), [](const auto& p) { return p.homologous; });
      log.ae_h = any_h ? ae_homologous(dhat, val) : 0.0;
    }
    logs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return logs;
}

template double accumulate_pair_gradients<float>(EmbeddingModel<float>&, std::span<const PairSample>,
                                                 const LossSpec&, Mode);
template double accumulate_pair_gradients<double>(EmbeddingModel<double>&, std::span<const PairSample>,
                                                  const LossSpec&, Mode);
template double train_step<float>(EmbeddingModel<float>&, std::span<const PairSample>, const LossSpec&,
                                  nn::Adam<float>&);
template double train_step<double>(EmbeddingModel<double>&, std::span<const PairSample>,
                                   const LossSpec&, nn::Adam<double>&);

}  // namespace levemb
