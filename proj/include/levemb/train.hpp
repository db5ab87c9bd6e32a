#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "levemb/datagen.hpp"
#include "levemb/losses.hpp"
#include "levemb/model.hpp"
#include "levemb/nn/adam.hpp"

namespace levemb {

struct TrainConfig {
  LossSpec loss;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  nn::AdamConfig adam;
  std::uint64_t seed = 0;
  // Leading test pairs scored after every epoch.
  std::size_t validation_pairs = 512;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double ae_g = 0.0;
  double ae_h = 0.0;
  double scale = 0.0;
};

// Resumable optimizer position.
struct TrainState {
  std::int64_t adam_steps = 0;
  std::size_t epochs_completed = 0;
};

// Forward both sides of every pair through the shared model (as one batch
// of 2B sequences), evaluate the loss on d^ = r^2 |u - v|^2 and accumulate
// gradients of the mean loss into every parameter, log_r included.
// Sequences are padded to the model's input length on the fly.
// Returns the mean loss. Gradients are added to whatever is already stored.
template <typename T>
double accumulate_pair_gradients(EmbeddingModel<T>& model, std::span<const PairSample> batch,
                                 const LossSpec& loss, Mode mode = Mode::kTrain);

// zero_grad + accumulate_pair_gradients + one Adam step.
template <typename T>
double train_step(EmbeddingModel<T>& model, std::span<const PairSample> batch,
                  const LossSpec& loss, nn::Adam<T>& optimizer);

using EpochCallback = std::function<void(const EpochLog&)>;

// Runs epochs [state.epochs_completed, cfg.epochs). Each epoch shuffles with
// a stream derived from (seed, epoch), so a resumed run continues exactly as
// an uninterrupted one would.
std::vector<EpochLog> train(EmbeddingModel<float>& model, std::span<const PairSample> train_set,
                            std::span<const PairSample> validation, const TrainConfig& cfg,
                            TrainState& state, const EpochCallback& on_epoch = {});

}  // namespace levemb
