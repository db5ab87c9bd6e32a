#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "levemb/datagen.hpp"
#include "levemb/model.hpp"
#include "levemb/rng.hpp"
#include "levemb/tensor.hpp"
#include "levemb/train.hpp"

namespace levemb {

// Unbiased covariance of (u_i - u_j) / sqrt(2) over `sample_pairs` random
// ordered pairs i != j of rows of the (N, n) matrix.
TensorD diff_covariance(const TensorD& embeddings, std::size_t sample_pairs, Rng& rng);

struct EigenResult {
  std::vector<double> values;  // descending
  TensorD vectors;             // column j pairs with values[j]; empty unless requested
  int sweeps = 0;
};

// Cyclic Jacobi. Stops once the off-diagonal Frobenius norm drops below
// tol * |A|_F. Throws UsageError for a non-square or non-symmetric input.
EigenResult sym_eigen(const TensorD& a, double tol = 1e-12, bool vectors = false);

struct Spectrum {
  std::size_t dim = 0;
  std::vector<double> eigenvalues;  // descending
  std::size_t sample_count = 0;
};

Spectrum spectrum_of(const TensorD& embeddings, std::size_t sample_pairs, Rng& rng);

struct EsdOptions {
  double tau = 0.5;
  double slack = 0.1;

  void validate() const;
};

struct EsdDetection {
  std::vector<std::size_t> dims;
  std::vector<std::size_t> ranks;  // eigenvalues >= tau
  std::vector<bool> full_rank;
  std::vector<bool> a4_suspect;    // lambda_median / lambda_1 in (0.2, 0.8)
  std::size_t lower_bound = 0;     // last dim of the leading full-rank run; 0 if none
  std::optional<std::size_t> n0;   // empty means n0 >= max_dim
  std::size_t plateau_start = 0;   // first dim of the plateau run; 0 without n0
  std::size_t max_dim = 0;
  double tau = 0.5;
  double slack = 0.1;
};

// Spectra must have strictly ascending dims. A dim is full rank when its
// rank reaches ceil(dim (1 - slack)). The dims after the leading full-rank
// run form the tail. The plateau is the longest trailing run of tail dims
// (at least two when the tail has two) whose ranks all lie within
// max(1, slack m) of the run's lower median m; n0 = m.
EsdDetection detect_esd(std::span<const Spectrum> spectra, const EsdOptions& opt = {});

struct EsdScanConfig {
  ArchitectureSpec base;
  std::vector<std::size_t> dims;
  std::vector<std::uint64_t> seeds{0};
  TrainConfig train;
  EsdOptions esd;
  double mean_distance = 0.0;  // M, sets the initial scale
  std::size_t sample_pairs = 20000;
  std::size_t jobs = 1;

  void validate() const;
};

struct EsdSeedResult {
  std::uint64_t seed = 0;
  std::vector<Spectrum> spectra;
  std::vector<EpochLog> final_logs;  // last epoch per dim (empty for 0 epochs)
  EsdDetection detection;
};

struct EsdReport {
  std::vector<EsdSeedResult> seeds;
  double tau = 0.5;
};

// One member per cluster, padded to `len`.
std::vector<Sequence> probe_sequences(std::span<const Cluster> clusters, std::size_t len);

using EsdProgress = std::function<void(std::size_t dim, std::uint64_t seed, const Spectrum&)>;

// Trains one model per (dim, seed) with TrainConfig::seed replaced by the
// scan seed, embeds the probes in eval mode and collects the spectra.
EsdReport esd_scan(std::span<const PairSample> train_pairs, std::span<const PairSample> validation,
                   std::span<const Sequence> probes, const EsdScanConfig& cfg,
                   const EsdProgress& progress = {});

// Header `dim,index,eigenvalue`, eigenvalues descending within each dim.
void write_spectrum_csv(const std::filesystem::path& path, std::span<const Spectrum> spectra);

}  // namespace levemb
