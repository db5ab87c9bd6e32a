#include "levemb/esd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>

#include "levemb/errors.hpp"
#include "levemb/eval.hpp"
#include "levemb/parallel.hpp"

namespace levemb {

TensorD diff_covariance(const TensorD& embeddings, std::size_t sample_pairs, Rng& rng) {
  if (embeddings.rank() != 2) throw ShapeError("embedding matrix must be (N, n)");
  const std::size_t rows = embeddings.dim(0), n = embeddings.dim(1);
  if (rows < 2) throw DataError("difference covariance needs at least 2 embeddings");
  if (sample_pairs < 2) throw UsageError("difference covariance needs at least 2 sampled pairs");

  std::uniform_int_distribution<std::size_t> pick(0, rows - 1);
  std::uniform_int_distribution<std::size_t> other(0, rows - 2);
  std::vector<double> diffs(sample_pairs * n);
  std::vector<double> mean(n, 0.0);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (std::size_t k = 0; k < sample_pairs; ++k) {
    const std::size_t i = pick(rng);
    std::size_t j = other(rng);
    if (j >= i) ++j;
    const double* ui = embeddings.ptr() + i * n;
    const double* uj = embeddings.ptr() + j * n;
    double* dk = diffs.data() + k * n;
    for (std::size_t c = 0; c < n; ++c) {
      dk[c] = (ui[c] - uj[c]) * inv_sqrt2;
      mean[c] += dk[c];
    }
  }
  for (double& m : mean) m /= static_cast<double>(sample_pairs);

  TensorD cov({n, n});
  for (std::size_t k = 0; k < sample_pairs; ++k) {
    double* dk = diffs.data() + k * n;
    for (std::size_t c = 0; c < n; ++c) dk[c] -= mean[c];
    for (std::size_t a = 0; a < n; ++a) {
      const double da = dk[a];
      double* row = cov.ptr() + a * n;
      for (std::size_t b = a; b < n; ++b) row[b] += da * dk[b];
    }
  }
  const double denom = static_cast<double>(sample_pairs - 1);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      const double v = cov[a * n + b] / denom;
      cov[a * n + b] = v;
      cov[b * n + a] = v;
    }
  }
  return cov;
}

EigenResult sym_eigen(const TensorD& input, double tol, bool want_vectors) {
  if (input.rank() != 2 || input.dim(0) != input.dim(1)) {
    throw UsageError("eigendecomposition needs a square matrix, got " + shape_string(input.shape()));
  }
  const std::size_t n = input.dim(0);
  double norm = 0.0;
  for (double v : input.data()) norm += v * v;
  norm = std::sqrt(norm);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(input[i * n + j] - input[j * n + i]) > std::max(tol, 1e-12) * std::max(norm, 1.0)) {
        throw UsageError("matrix is not symmetric at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }

  TensorD a = input;
  std::vector<double> v;
  if (want_vectors) {
    v.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  }
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a[i * n + j] * a[i * n + j];
    }
    return std::sqrt(s);
  };

  EigenResult result;
  constexpr int kMaxSweeps = 100;
  while (off_norm() > tol * norm) {
    if (result.sweeps >= kMaxSweeps) throw NumericError("Jacobi iteration did not converge");
    ++result.sweeps;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // A <- J^T A J with the rotation acting on columns then rows p, q.
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        a[p * n + q] = 0.0;
        a[q * n + p] = 0.0;
        if (want_vectors) {
          for (std::size_t k = 0; k < n; ++k) {
            const double vkp = v[k * n + p], vkq = v[k * n + q];
            v[k * n + p] = c * vkp - s * vkq;
            v[k * n + q] = s * vkp + c * vkq;
          }
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a[x * n + x] > a[y * n + y]; });
  for (std::size_t i : order) result.values.push_back(a[i * n + i]);
  if (want_vectors) {
    result.vectors = TensorD({n, n});
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) result.vectors[k * n + j] = v[k * n + order[j]];
    }
  }
  return result;
}

Spectrum spectrum_of(const TensorD& embeddings, std::size_t sample_pairs, Rng& rng) {
  Spectrum s;
  s.dim = embeddings.dim(1);
  s.sample_count = sample_pairs;
  s.eigenvalues = sym_eigen(diff_covariance(embeddings, sample_pairs, rng), 1e-12).values;
  return s;
}

void EsdOptions::validate() const {
  if (!(tau > 0.0)) throw UsageError("ESD threshold tau must be positive");
  if (!(slack >= 0.0 && slack < 1.0)) throw UsageError("ESD slack must lie in [0, 1)");
}

EsdDetection detect_esd(std::span<const Spectrum> spectra, const EsdOptions& opt) {
  opt.validate();
  if (spectra.empty()) throw UsageError("ESD detection needs at least one spectrum");
  EsdDetection det;
  det.tau = opt.tau;
  det.slack = opt.slack;
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    const Spectrum& s = spectra[i];
    if (i > 0 && s.dim <= spectra[i - 1].dim) throw UsageError("spectra must have ascending dims");
    if (s.eigenvalues.size() != s.dim) throw ShapeError("spectrum length does not match its dim");
    const auto rank = static_cast<std::size_t>(
        std::count_if(s.eigenvalues.begin(), s.eigenvalues.end(), [&](double l) { return l >= opt.tau; }));
    det.dims.push_back(s.dim);
    det.ranks.push_back(rank);
    const auto need = static_cast<std::size_t>(std::ceil(static_cast<double>(s.dim) * (1.0 - opt.slack) - 1e-9));
    det.full_rank.push_back(rank >= need);
    bool suspect = false;
    if (!s.eigenvalues.empty() && s.eigenvalues.front() > 0.0) {
      const double median = s.eigenvalues[(s.dim - 1) / 2];
      const double ratio = median / s.eigenvalues.front();
      suspect = ratio > 0.2 && ratio < 0.8;
    }
    det.a4_suspect.push_back(suspect);
  }
  det.max_dim = det.dims.back();

  std::size_t first_tail = 0;
  while (first_tail < det.dims.size() && det.full_rank[first_tail]) {
    det.lower_bound = det.dims[first_tail];
    ++first_tail;
  }
  if (first_tail == det.dims.size()) return det;

  // Plateau: the longest trailing run of tail dims whose ranks all lie within
  // max(1, slack m) of the run's lower median m.
  const std::size_t tail_len = det.dims.size() - first_tail;
  const std::size_t min_run = std::min<std::size_t>(2, tail_len);
  for (std::size_t start = first_tail; det.dims.size() - start >= min_run; ++start) {
    std::vector<std::size_t> run(det.ranks.begin() + static_cast<std::ptrdiff_t>(start), det.ranks.end());
    std::sort(run.begin(), run.end());
    const std::size_t plateau = run[(run.size() - 1) / 2];
    const double band = std::max(1.0, opt.slack * static_cast<double>(plateau));
    const bool flat = std::all_of(run.begin(), run.end(), [&](std::size_t r) {
      return std::abs(static_cast<double>(r) - static_cast<double>(plateau)) <= band;
    });
    if (flat && plateau > 0) {
      det.n0 = plateau;
      det.plateau_start = det.dims[start];
      break;
    }
  }
  return det;
}

void EsdScanConfig::validate() const {
  base.validate();
  train.validate();
  esd.validate();
  if (dims.empty()) throw UsageError("ESD scan needs at least one dim");
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] == 0) throw UsageError("ESD dims must be positive");
    if (i > 0 && dims[i] <= dims[i - 1]) throw UsageError("ESD dims must be strictly ascending");
  }
  if (seeds.empty()) throw UsageError("ESD scan needs at least one seed");
  if (!(mean_distance > 0.0)) throw UsageError("ESD scan needs the mean distance M");
}

std::vector<Sequence> probe_sequences(std::span<const Cluster> clusters, std::size_t len) {
  std::vector<Sequence> out;
  out.reserve(clusters.size());
  for (const Cluster& c : clusters) out.push_back(pad(c.members().front(), len, Alphabet::dna()));
  return out;
}

EsdReport esd_scan(std::span<const PairSample> train_pairs, std::span<const PairSample> validation,
                   std::span<const Sequence> probes, const EsdScanConfig& cfg,
                   const EsdProgress& progress) {
  cfg.validate();
  if (probes.size() < 2) throw DataError("ESD scan needs at least 2 probe sequences");
  const std::size_t nd = cfg.dims.size(), ns = cfg.seeds.size();
  std::vector<Spectrum> spectra(nd * ns);
  std::vector<std::vector<EpochLog>> logs(nd * ns);
  std::mutex progress_mu;

  parallel_for(nd * ns, cfg.jobs, [&](std::size_t job) {
    const std::size_t si = job / nd, di = job % nd;
    const std::uint64_t seed = cfg.seeds[si];
    ArchitectureSpec spec = cfg.base;
    spec.embedding_dim = cfg.dims[di];
    EmbeddingModel<float> model(spec, seed);
    model.set_log_scale(init_scale(cfg.mean_distance, spec.embedding_dim));
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    TrainState state;
    logs[job] = train(model, train_pairs, validation, tc, state);
    const TensorD emb = embed_sequences(model, probes, Mode::kEval);
    Rng rng = make_rng(seed, Stream::kEsdPairs, spec.embedding_dim);
    spectra[job] = spectrum_of(emb, cfg.sample_pairs, rng);
    if (progress) {
      std::lock_guard<std::mutex> lock(progress_mu);
      progress(spec.embedding_dim, seed, spectra[job]);
    }
  });

  EsdReport report;
  report.tau = cfg.esd.tau;
  for (std::size_t si = 0; si < ns; ++si) {
    EsdSeedResult r;
    r.seed = cfg.seeds[si];
    for (std::size_t di = 0; di < nd; ++di) {
      r.spectra.push_back(std::move(spectra[si * nd + di]));
      if (!logs[si * nd + di].empty()) r.final_logs.push_back(logs[si * nd + di].back());
    }
    r.detection = detect_esd(r.spectra, cfg.esd);
    report.seeds.push_back(std::move(r));
  }
  return report;
}

void write_spectrum_csv(const std::filesystem::path& path, std::span<const Spectrum> spectra) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(10);
  out << "dim,index,eigenvalue\n";
  for (const Spectrum& s : spectra) {
    for (std::size_t i = 0; i < s.eigenvalues.size(); ++i) {
      out << s.dim << ',' << (i + 1) << ',' << s.eigenvalues[i] << '\n';
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace levemb
