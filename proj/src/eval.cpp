#include "levemb/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>

#include "levemb/errors.hpp"

namespace levemb {

// ---------------------------------------------------------------------------
// Predictions

template <typename T>
std::vector<double> predict_distances(EmbeddingModel<T>& model, std::span<const PairSample> pairs,
                                      std::size_t chunk) {
  const ArchitectureSpec& spec = model.spec();
  const Alphabet& alphabet = Alphabet::dna();
  const double scale = model.scale();
  std::vector<double> out;
  out.reserve(pairs.size());
  chunk = std::max<std::size_t>(chunk, 1);
  std::vector<Sequence> padded;
  std::vector<const Sequence*> ptrs;
  for (std::size_t start = 0; start < pairs.size(); start += chunk) {
    const std::size_t end = std::min(pairs.size(), start + chunk);
    const std::size_t b = end - start;
    padded.clear();
    ptrs.clear();
    for (std::size_t i = start; i < end; ++i) padded.push_back(pad(pairs[i].s, spec.input_len, alphabet));
    for (std::size_t i = start; i < end; ++i) padded.push_back(pad(pairs[i].t, spec.input_len, alphabet));
    for (const auto& s : padded) ptrs.push_back(&s);
    const BasicTensor<T> emb = model.forward(model.encode(ptrs), Mode::kEval);
    const std::size_t n = spec.embedding_dim;
    for (std::size_t i = 0; i < b; ++i) {
      out.push_back(predict_distance(std::span<const T>(emb.ptr() + i * n, n),
                                     std::span<const T>(emb.ptr() + (b + i) * n, n), scale));
    }
  }
  return out;
}

template <typename T>
TensorD embed_sequences(EmbeddingModel<T>& model, std::span<const Sequence> seqs, Mode mode,
                        std::size_t chunk) {
  if (seqs.empty()) throw UsageError("no sequences to embed");
  if (mode == Mode::kTrain) throw UsageError("embedding for analysis must not update batch-norm statistics");
  const std::size_t n = model.spec().embedding_dim;
  TensorD out({seqs.size(), n});
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t start = 0; start < seqs.size(); start += chunk) {
    const std::size_t end = std::min(seqs.size(), start + chunk);
    const BasicTensor<T> emb = model.embed(seqs.subspan(start, end - start), mode);
    std::copy(emb.data().begin(), emb.data().end(), out.ptr() + start * n);
  }
  return out;
}

template std::vector<double> predict_distances<float>(EmbeddingModel<float>&, std::span<const PairSample>, std::size_t);
template std::vector<double> predict_distances<double>(EmbeddingModel<double>&, std::span<const PairSample>, std::size_t);
template TensorD embed_sequences<float>(EmbeddingModel<float>&, std::span<const Sequence>, Mode, std::size_t);
template TensorD embed_sequences<double>(EmbeddingModel<double>&, std::span<const Sequence>, Mode, std::size_t);

// ---------------------------------------------------------------------------
// Approximation error

namespace {

void check_sizes(std::span<const double> dhat, std::span<const PairSample> samples) {
  if (dhat.size() != samples.size()) {
    throw ShapeError("prediction count " + std::to_string(dhat.size()) + " != sample count " +
                     std::to_string(samples.size()));
  }
}

}  // namespace

double ae_global(std::span<const double> dhat, std::span<const PairSample> samples) {
  check_sizes(dhat, samples);
  if (samples.empty()) throw DataError("AE_g over an empty sample set");
  double sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) sum += std::abs(dhat[i] - samples[i].d);
  return sum / static_cast<double>(samples.size());
}

double ae_homologous(std::span<const double> dhat, std::span<const PairSample> samples) {
  check_sizes(dhat, samples);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].homologous) continue;
    sum += std::abs(dhat[i] - samples[i].d);
    ++count;
  }
  if (count == 0) throw DataError("AE_h needs at least one homologous sample");
  return sum / static_cast<double>(count);
}

double ae_global(const Predictor& predictor, std::span<const PairSample> samples) {
  return ae_global(predictor(samples), samples);
}

double ae_homologous(const Predictor& predictor, std::span<const PairSample> samples) {
  return ae_homologous(predictor(samples), samples);
}

EvalReport evaluate(std::span<const double> dhat, std::span<const PairSample> samples) {
  check_sizes(dhat, samples);
  EvalReport report;
  report.samples = samples.size();
  report.ae_g = ae_global(dhat, samples);
  for (const auto& s : samples) report.homologous += s.homologous ? 1 : 0;
  if (report.homologous > 0) report.ae_h = ae_homologous(dhat, samples);

  std::map<int, std::vector<double>> by_d;
  for (std::size_t i = 0; i < samples.size(); ++i) by_d[samples[i].d].push_back(dhat[i]);
  for (const auto& [d, values] : by_d) {
    BucketStats b;
    b.count = values.size();
    double sum = 0.0, abs_err = 0.0;
    for (double v : values) {
      sum += v;
      abs_err += std::abs(v - d);
    }
    b.dhat_mean = sum / static_cast<double>(b.count);
    b.mean_abs_error = abs_err / static_cast<double>(b.count);
    if (b.count > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - b.dhat_mean) * (v - b.dhat_mean);
      b.dhat_var = ss / static_cast<double>(b.count - 1);
    }
    report.buckets.emplace(d, b);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Variance law

double predicted_variance(double d, double mean_distance, std::size_t embedding_dim) {
  if (embedding_dim == 0) throw UsageError("embedding dimension must be positive");
  return 2.0 * d * mean_distance / static_cast<double>(embedding_dim);
}

VarianceProfile variance_profile(std::span<const double> dhat, std::span<const PairSample> samples,
                                 double mean_distance, std::size_t embedding_dim,
                                 std::size_t min_count) {
  const EvalReport report = evaluate(dhat, samples);
  VarianceProfile profile;
  for (const auto& [d, b] : report.buckets) {
    if (b.count < std::max<std::size_t>(min_count, 2)) {
      profile.omitted.push_back(d);
      continue;
    }
    VarianceRow row;
    row.d = d;
    row.count = b.count;
    row.empirical_var = b.dhat_var;
    row.predicted_var = predicted_variance(d, mean_distance, embedding_dim);
    row.ratio = row.predicted_var > 0.0 ? row.empirical_var / row.predicted_var
                                        : std::numeric_limits<double>::infinity();
    profile.rows.push_back(row);
  }
  return profile;
}

// ---------------------------------------------------------------------------
// Special functions

double regularized_gamma_p(double a, double x) {
  if (!(a > 0.0)) throw UsageError("incomplete gamma needs a > 0");
  if (x < 0.0) throw UsageError("incomplete gamma needs x >= 0");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double log_prefix = -x + a * std::log(x) - std::lgamma(a);
  constexpr double kEps = 1e-16;
  constexpr int kMaxIter = 100000;
  if (x < a + 1.0) {
    // P(a,x) = e^-x x^a / Gamma(a+1) * sum_n x^n / ((a+1)...(a+n))
    double ap = a;
    double term = 1.0 / a;
    double sum = term;
    for (int i = 0; i < kMaxIter; ++i) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * kEps) return std::min(1.0, sum * std::exp(log_prefix));
    }
    throw NumericError("incomplete gamma series did not converge");
  }
  // Q(a,x) by the modified Lentz continued fraction.
  constexpr double kTiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) return std::max(0.0, 1.0 - std::exp(log_prefix) * h);
  }
  throw NumericError("incomplete gamma continued fraction did not converge");
}

double chi2_cdf(double x, double dof) {
  if (!(dof > 0.0)) throw UsageError("chi-squared degrees of freedom must be positive");
  if (x <= 0.0) return 0.0;
  return regularized_gamma_p(0.5 * dof, 0.5 * x);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.0) {
    // 1 - sqrt(2 pi)/lambda * sum_j exp(-(2j-1)^2 pi^2 / (8 lambda^2))
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double sum = 0.0;
    for (int j = 1; j <= 50; ++j) {
      const double k = 2.0 * j - 1.0;
      sum += std::exp(-k * k * pi2 / (8.0 * lambda * lambda));
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * sum, 0.0, 1.0);
  }
  // 2 sum_j (-1)^(j-1) exp(-2 j^2 lambda^2)
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1) ? term : -term;
    if (term < 1e-300) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_critical_value(std::size_t n, double alpha) {
  if (n == 0) throw UsageError("KS critical value needs samples");
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("significance level must lie in (0,1)");
  double lo = 0.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (kolmogorov_sf(mid) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi) / std::sqrt(static_cast<double>(n));
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw UsageError("KS statistic needs samples");
  std::sort(samples.begin(), samples.end());
  const auto n = static_cast<double>(samples.size());
  double stat = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    stat = std::max({stat, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return stat;
}

Chi2Fit chi2_fit(std::span<const double> dhat, double d, double k, double alpha) {
  if (dhat.size() < 200) {
    throw DataError("chi-squared fit needs at least 200 samples, got " + std::to_string(dhat.size()));
  }
  if (!(k > 0.0) || !(d > 0.0)) throw UsageError("chi-squared fit needs k > 0 and d > 0");
  Chi2Fit fit;
  fit.samples = dhat.size();
  fit.dof = k * d;
  std::vector<double> scaled(dhat.begin(), dhat.end());
  for (double& v : scaled) v *= k;
  const double dof = fit.dof;
  fit.ks_statistic = ks_statistic(std::move(scaled), [dof](double x) { return chi2_cdf(x, dof); });
  fit.critical_value = ks_critical_value(fit.samples, alpha);
  fit.passed = fit.ks_statistic < fit.critical_value;
  return fit;
}

std::vector<ElementStats> element_normality(const TensorD& embeddings, std::size_t first_m) {
  if (embeddings.rank() != 2) throw ShapeError("embedding matrix must be (N, n)");
  const std::size_t rows = embeddings.dim(0), cols = embeddings.dim(1);
  const std::size_t m = std::min(first_m, cols);
  std::vector<ElementStats> out;
  std::vector<double> column(rows);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < rows; ++i) column[i] = embeddings[i * cols + j];
    ElementStats s;
    s.element = j;
    double sum = 0.0;
    for (double v : column) sum += v;
    s.mean = sum / static_cast<double>(rows);
    double m2 = 0.0, m3 = 0.0;
    for (double v : column) {
      const double c = v - s.mean;
      m2 += c * c;
      m3 += c * c * c;
    }
    m2 /= static_cast<double>(rows);
    m3 /= static_cast<double>(rows);
    s.var = m2;
    s.skew = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
    s.ks = ks_statistic(column, normal_cdf);
    s.flagged = std::abs(s.mean) > 0.1 || std::abs(s.var - 1.0) > 0.2;
    out.push_back(s);
  }
  return out;
}

NormalityReport element_normality(EmbeddingModel<float>& model, std::span<const Sequence> seqs,
                                  std::size_t first_m) {
  if (seqs.size() < 1000) {
    throw DataError("element normality needs at least 1000 sequences, got " + std::to_string(seqs.size()));
  }
  NormalityReport report;
  report.eval_mode = element_normality(embed_sequences(model, seqs, Mode::kEval), first_m);
  report.batch_stats =
      element_normality(embed_sequences(model, seqs, Mode::kBatchStats, seqs.size()), first_m);
  return report;
}

// ---------------------------------------------------------------------------
// Synthetic harness

std::vector<double> sample_independent_distances(std::size_t n, double scale, std::size_t count,
                                                 Rng& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> u(n), v(n), out(count);
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = normal(rng);
      v[i] = normal(rng);
    }
    out[k] = predict_distance(std::span<const double>(u), std::span<const double>(v), scale);
  }
  return out;
}

namespace {

// Random orthogonal matrix (rows orthonormal) by modified Gram-Schmidt.
std::vector<double> random_orthogonal(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> q(n * n);
  for (double& v : q) v = normal(rng);
  for (std::size_t i = 0; i < n; ++i) {
    double* qi = q.data() + i * n;
    for (std::size_t j = 0; j < i; ++j) {
      const double* qj = q.data() + j * n;
      const double proj = std::inner_product(qi, qi + n, qj, 0.0);
      for (std::size_t c = 0; c < n; ++c) qi[c] -= proj * qj[c];
    }
    const double norm = std::sqrt(std::inner_product(qi, qi + n, qi, 0.0));
    for (std::size_t c = 0; c < n; ++c) qi[c] /= norm;
  }
  return q;
}

}  // namespace

std::vector<double> sample_correlated_distances(std::size_t n, double mean_distance, int d,
                                                std::size_t count, Rng& rng) {
  if (n == 0 || !(mean_distance > 0.0) || d < 0) throw UsageError("bad harness parameters");
  const auto m = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * d / mean_distance));
  if (m > n) throw UsageError("degrees of freedom n d / M exceed n");
  const std::vector<double> p = random_orthogonal(n, rng);
  const double r = std::sqrt(mean_distance / (2.0 * static_cast<double>(n)));
  const double amp = std::sqrt(mean_distance / static_cast<double>(n));
  std::normal_distribution<double> normal;
  std::vector<double> u(n), v(n), diff(n), out(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::fill(diff.begin(), diff.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double y = normal(rng) * amp;
      const double* row = p.data() + i * n;
      for (std::size_t c = 0; c < n; ++c) diff[c] += y * row[c];
    }
    // u_tilde - v_tilde = diff with u_tilde = r u.
    for (std::size_t c = 0; c < n; ++c) {
      u[c] = normal(rng);
      v[c] = u[c] - diff[c] / r;
    }
    out[k] = predict_distance(std::span<const double>(u), std::span<const double>(v), r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Outlier scan

std::string describe(const Edit& e, const Alphabet& alphabet) {
  switch (e.kind) {
    case Edit::kSubstitution:
      return "sub@" + std::to_string(e.position) + ":" + alphabet.symbol(e.symbol);
    case Edit::kDeletion:
      return "del@" + std::to_string(e.position);
    case Edit::kInsertion:
      return "ins@" + std::to_string(e.position) + ":" + alphabet.symbol(e.symbol);
  }
  return "?";
}

Sequence apply_edit(const Sequence& s, const Edit& e) {
  std::vector<Code> codes(s.content().begin(), s.content().end());
  const auto pos = static_cast<std::ptrdiff_t>(e.position);
  switch (e.kind) {
    case Edit::kSubstitution: codes.at(e.position) = e.symbol; break;
    case Edit::kDeletion: codes.erase(codes.begin() + pos); break;
    case Edit::kInsertion: codes.insert(codes.begin() + pos, e.symbol); break;
  }
  return make_sequence(std::move(codes));
}

std::vector<Edit> single_edits(const Sequence& s, const SymbolSet& symbols) {
  const auto content = s.content();
  std::vector<Edit> edits;
  std::set<std::vector<Code>> seen;
  auto add = [&](const Edit& e) {
    Sequence t = apply_edit(s, e);
    if (seen.insert(t.codes).second) edits.push_back(e);
  };
  for (std::size_t p = 0; p < content.size(); ++p) {
    for (std::size_t c = 0; c < symbols.count; ++c) {
      if (static_cast<Code>(c) != content[p]) add({Edit::kSubstitution, p, static_cast<Code>(c)});
    }
    add({Edit::kDeletion, p, 0});
  }
  for (std::size_t p = 0; p <= content.size(); ++p) {
    for (std::size_t c = 0; c < symbols.count; ++c) add({Edit::kInsertion, p, static_cast<Code>(c)});
  }
  return edits;
}

bool edit_at_run_start(const Sequence& s, const Edit& e, std::size_t min_run) {
  const auto content = s.content();
  const std::size_t p = e.position;
  if (p >= content.size()) return false;
  if (p > 0 && content[p - 1] == content[p]) return false;
  std::size_t run = 1;
  while (p + run < content.size() && content[p + run] == content[p]) ++run;
  return run >= min_run;
}

namespace {

Edit random_edit(const Sequence& s, const SymbolSet& symbols, Rng& rng) {
  const std::size_t len = s.length;
  std::uniform_int_distribution<int> kind_dist(0, len == 0 ? 0 : 2);
  std::uniform_int_distribution<std::size_t> sym(0, symbols.count - 1);
  const int kind = len == 0 ? 2 : kind_dist(rng);
  if (kind == 2) {
    std::uniform_int_distribution<std::size_t> pos(0, len);
    return {Edit::kInsertion, pos(rng), static_cast<Code>(sym(rng))};
  }
  std::uniform_int_distribution<std::size_t> pos(0, len - 1);
  const std::size_t p = pos(rng);
  if (kind == 1) return {Edit::kDeletion, p, 0};
  std::uniform_int_distribution<std::size_t> other(0, symbols.count - 2);
  auto c = static_cast<Code>(other(rng));
  if (c >= s.codes[p]) ++c;
  return {Edit::kSubstitution, p, c};
}

struct Partner {
  std::size_t source = 0;
  int d = 0;
  std::string edits;
  bool at_run_start = false;
};

}  // namespace

OutlierReport outlier_scan(const Predictor& predictor, std::span<const Sequence> seqs,
                           const OutlierOptions& opt) {
  opt.symbols.validate();
  const Alphabet& alphabet = *opt.symbols.alphabet;
  Rng rng = make_rng(opt.seed, Stream::kOutliers);

  std::vector<PairSample> pairs;
  std::vector<Partner> meta;
  for (std::size_t si = 0; si < seqs.size(); ++si) {
    Sequence s = seqs[si];
    s.codes.resize(s.length);
    for (int d : opt.d_values) {
      if (d < 1) throw UsageError("outlier scan distances must be positive");
      std::size_t found = 0;
      if (d == 1) {
        std::vector<Edit> edits = single_edits(s, opt.symbols);
        std::shuffle(edits.begin(), edits.end(), rng);
        if (edits.size() > opt.partners_per_d) edits.resize(opt.partners_per_d);
        for (const Edit& e : edits) {
          pairs.push_back({s, apply_edit(s, e), 1, true});
          meta.push_back({si, 1, describe(e, alphabet), edit_at_run_start(s, e)});
          ++found;
        }
      } else {
        for (std::size_t attempt = 0; attempt < opt.max_attempts && found < opt.partners_per_d;
             ++attempt) {
          Sequence t = s;
          std::string desc;
          bool run_start = false;
          for (int k = 0; k < d; ++k) {
            const Edit e = random_edit(t, opt.symbols, rng);
            run_start = run_start || edit_at_run_start(t, e);
            desc += (k ? ";" : "") + describe(e, alphabet);
            t = apply_edit(t, e);
          }
          if (levenshtein(s, t) != d) continue;
          pairs.push_back({s, std::move(t), d, true});
          meta.push_back({si, d, std::move(desc), run_start});
          ++found;
        }
      }
      if (found == 0) {
        throw DataError("could not generate a partner at distance " + std::to_string(d) +
                        " for sequence " + std::to_string(si));
      }
    }
  }

  const std::vector<double> dhat = pairs.empty() ? std::vector<double>{} : predictor(pairs);
  if (dhat.size() != pairs.size()) throw ShapeError("predictor returned the wrong number of values");

  OutlierReport report;
  report.scanned = seqs.size();
  for (int d : opt.d_values) {
    MeanHistogram h;
    h.d = d;
    h.lo = 0.0;
    h.hi = 4.0 * d;
    h.counts.assign(std::max<std::size_t>(opt.bins, 1), 0);
    std::vector<double> sum(seqs.size(), 0.0);
    std::vector<std::size_t> cnt(seqs.size(), 0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (meta[i].d != d) continue;
      sum[meta[i].source] += dhat[i];
      ++cnt[meta[i].source];
    }
    for (std::size_t si = 0; si < seqs.size(); ++si) {
      const double mean = sum[si] / static_cast<double>(cnt[si]);
      h.mean_d.push_back(mean);
      const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
      auto bin = static_cast<std::ptrdiff_t>(std::floor((mean - h.lo) / width));
      bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(h.counts.size()) - 1);
      ++h.counts[static_cast<std::size_t>(bin)];
    }
    report.histograms.push_back(std::move(h));
  }

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(dhat[a] - pairs[a].d) > std::abs(dhat[b] - pairs[b].d);
  });
  for (std::size_t k = 0; k < std::min(opt.top_k, order.size()); ++k) {
    const std::size_t i = order[k];
    OutlierEntry e;
    e.s = to_string(pairs[i].s, alphabet);
    e.t = to_string(pairs[i].t, alphabet);
    e.d = pairs[i].d;
    e.dhat = dhat[i];
    e.abs_error = std::abs(dhat[i] - pairs[i].d);
    e.homopolymer = longest_homopolymer(pairs[i].s);
    e.at_run_start = meta[i].at_run_start;
    e.edits = meta[i].edits;
    report.worst.push_back(std::move(e));
  }
  return report;
}

}  // namespace levemb
