#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "levemb/datagen.hpp"
#include "levemb/model.hpp"
#include "levemb/rng.hpp"

namespace levemb {

// Maps pair samples to predicted distances d^.
using Predictor = std::function<std::vector<double>(std::span<const PairSample>)>;

// Eval-mode predictions; sequences are padded on the fly.
template <typename T>
std::vector<double> predict_distances(EmbeddingModel<T>& model, std::span<const PairSample> pairs,
                                      std::size_t chunk = 256);

template <typename T>
Predictor model_predictor(EmbeddingModel<T>& model) {
  return [&model](std::span<const PairSample> pairs) { return predict_distances(model, pairs); };
}

// Eval-mode (or batch-statistics) embeddings as an (N, n) matrix.
template <typename T>
TensorD embed_sequences(EmbeddingModel<T>& model, std::span<const Sequence> seqs,
                        Mode mode = Mode::kEval, std::size_t chunk = 256);

// ---------------------------------------------------------------------------
// Approximation error

double ae_global(std::span<const double> dhat, std::span<const PairSample> samples);
double ae_homologous(std::span<const double> dhat, std::span<const PairSample> samples);
double ae_global(const Predictor& predictor, std::span<const PairSample> samples);
double ae_homologous(const Predictor& predictor, std::span<const PairSample> samples);

struct BucketStats {
  double mean_abs_error = 0.0;
  double dhat_mean = 0.0;
  double dhat_var = 0.0;  // unbiased; 0 for single-sample buckets
  std::size_t count = 0;
};

struct EvalReport {
  double ae_g = 0.0;
  double ae_h = 0.0;  // 0 when there are no homologous samples
  std::size_t samples = 0;
  std::size_t homologous = 0;
  std::map<int, BucketStats> buckets;
};

EvalReport evaluate(std::span<const double> dhat, std::span<const PairSample> samples);

// ---------------------------------------------------------------------------
// Variance law Var[d^] = 2 d M / n

double predicted_variance(double d, double mean_distance, std::size_t embedding_dim);

struct VarianceRow {
  int d = 0;
  std::size_t count = 0;
  double empirical_var = 0.0;
  double predicted_var = 0.0;
  double ratio = 0.0;
};

struct VarianceProfile {
  std::vector<VarianceRow> rows;
  std::vector<int> omitted;  // buckets with fewer than min_count samples
};

VarianceProfile variance_profile(std::span<const double> dhat, std::span<const PairSample> samples,
                                 double mean_distance, std::size_t embedding_dim,
                                 std::size_t min_count = 30);

// ---------------------------------------------------------------------------
// Distribution fits

// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);
double chi2_cdf(double x, double dof);
double normal_cdf(double x);

// Survival function of the asymptotic Kolmogorov distribution.
double kolmogorov_sf(double lambda);
// Asymptotic critical value of the one-sample KS statistic.
double ks_critical_value(std::size_t n, double alpha);
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

struct Chi2Fit {
  double ks_statistic = 0.0;
  double critical_value = 0.0;
  double dof = 0.0;
  std::size_t samples = 0;
  bool passed = false;
};

// KS test of {k d^} against chi^2(k d).
Chi2Fit chi2_fit(std::span<const double> dhat, double d, double k, double alpha = 0.01);

struct ElementStats {
  std::size_t element = 0;
  double mean = 0.0;
  double var = 0.0;
  double skew = 0.0;
  double ks = 0.0;  // KS distance to N(0,1)
  bool flagged = false;
};

// Per-column summaries of an (N, n) embedding matrix, first `first_m` columns.
std::vector<ElementStats> element_normality(const TensorD& embeddings, std::size_t first_m);

struct NormalityReport {
  std::vector<ElementStats> eval_mode;
  std::vector<ElementStats> batch_stats;
};

// Sequences must be padded to the model's input length.
NormalityReport element_normality(EmbeddingModel<float>& model, std::span<const Sequence> seqs,
                                  std::size_t first_m);

// ---------------------------------------------------------------------------
// Synthetic distribution harness under the independence assumptions.

// d^ for pairs of independent N(0, I_n) embeddings at scale r.
std::vector<double> sample_independent_distances(std::size_t n, double scale, std::size_t count,
                                                 Rng& rng);

// d^ for correlated pairs whose scaled difference is (y_1..y_m, 0..0) sqrt(M/n) P
// with m = n d / M (rounded) and P a fixed random orthogonal matrix.
std::vector<double> sample_correlated_distances(std::size_t n, double mean_distance, int d,
                                                std::size_t count, Rng& rng);

// ---------------------------------------------------------------------------
// Outlier scan

struct Edit {
  enum Kind { kSubstitution, kDeletion, kInsertion } kind;
  std::size_t position;
  Code symbol;
};

std::string describe(const Edit& e, const Alphabet& alphabet = Alphabet::dna());
Sequence apply_edit(const Sequence& s, const Edit& e);
// Every distinct single edit of `s` over the first `symbols.count` symbols.
std::vector<Edit> single_edits(const Sequence& s, const SymbolSet& symbols);
// True if the edit touches the first symbol of a run of length >= min_run.
bool edit_at_run_start(const Sequence& s, const Edit& e, std::size_t min_run = 3);

struct OutlierOptions {
  std::vector<int> d_values{1, 2, 3};
  std::size_t partners_per_d = 50;
  std::size_t top_k = 20;
  std::size_t bins = 40;
  std::size_t max_attempts = 200;
  SymbolSet symbols;
  std::uint64_t seed = 0;
};

struct OutlierEntry {
  std::string s;
  std::string t;
  int d = 0;
  double dhat = 0.0;
  double abs_error = 0.0;
  std::size_t homopolymer = 0;
  bool at_run_start = false;
  std::string edits;
};

struct MeanHistogram {
  int d = 0;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;   // last bin also collects values >= hi
  std::vector<double> mean_d;        // per scanned sequence
};

struct OutlierReport {
  std::size_t scanned = 0;
  std::vector<MeanHistogram> histograms;
  std::vector<OutlierEntry> worst;
};

OutlierReport outlier_scan(const Predictor& predictor, std::span<const Sequence> seqs,
                           const OutlierOptions& opt);

}  // namespace levemb
