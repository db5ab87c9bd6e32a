#include "levemb/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string_view>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <fmt/ostream.h>

#include "levemb/checkpoint.hpp"
#include "levemb/errors.hpp"
#include "levemb/losses.hpp"
#include "levemb/parallel.hpp"
#include "levemb/train.hpp"

namespace levemb {

using nlohmann::json;

namespace {

constexpr std::size_t kInputLen = 160;

// ---------------------------------------------------------------------------
// JSON helpers

template <typename T>
void read_key(const json& j, const char* key, T& value) {
  if (auto it = j.find(key); it != j.end()) it->get_to(value);
}

void read_key(const json& j, const char* key, fs::path& value) {
  if (auto it = j.find(key); it != j.end()) value = it->get<std::string>();
}

template <typename Config>
void reject_unknown_keys(const json& j) {
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  const json known = Config{};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw UsageError("unknown config key '" + key + "'");
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::ofstream open_csv(const fs::path& path, std::string_view header) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << header << '\n';
  return out;
}

void require_file(const fs::path& path, const char* what) {
  if (path.empty()) throw UsageError(std::string(what) + " path is required");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path.string());
}

void require_dataset(const fs::path& dir) {
  if (dir.empty()) throw UsageError("--data is required");
  for (const char* name : {"manifest.json", "clusters.tsv", "train_pairs.tsv", "test_pairs.tsv"}) {
    require_file(dir / name, "dataset file");
  }
}

void prepare_out(const fs::path& out) {
  if (out.empty()) throw UsageError("--out is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw DataError("cannot create output directory " + out.string());
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

ArchitectureSpec make_spec(const std::string& arch, std::size_t dim, double bn_eps = 1e-9) {
  ArchitectureSpec spec;
  spec.kind = parse_arch(arch);
  spec.embedding_dim = dim;
  spec.input_len = kInputLen;
  spec.alphabet_size = Alphabet::dna().size();
  spec.bn_eps = bn_eps;
  spec.validate();
  return spec;
}

std::span<const PairSample> limit(std::span<const PairSample> pairs, std::size_t max) {
  return max == 0 ? pairs : pairs.subspan(0, std::min(max, pairs.size()));
}

// Trains (or continues) a model and writes checkpoint.bin and train_log.csv.
struct TrainJob {
  ArchitectureSpec spec;
  TrainConfig train;
  std::size_t max_train_pairs = 0;
  fs::path out;
  fs::path resume;
  bool verbose = true;
};

TrainResult run_training(const Dataset& ds, const TrainJob& job) {
  job.train.validate();
  const auto train_set = limit(ds.train, job.max_train_pairs);
  const auto validation = limit(ds.test, job.train.validation_pairs);

  std::unique_ptr<EmbeddingModel<float>> model;
  TrainState state;
  if (!job.resume.empty()) {
    Checkpoint ck = load_checkpoint(job.resume);
    if (!(ck.model->spec() == job.spec)) throw UsageError("resume checkpoint has a different architecture");
    if (ck.meta.dataset_hash != ds.train_hash) throw UsageError("resume checkpoint was trained on other data");
    if (!(ck.meta.loss == job.train.loss) || ck.meta.seed != job.train.seed ||
        ck.meta.batch_size != job.train.batch_size) {
      throw UsageError("resume checkpoint has a different loss, seed or batch size");
    }
    state.adam_steps = ck.meta.adam_steps;
    state.epochs_completed = ck.meta.epochs_completed;
    model = std::move(ck.model);
  } else {
    model = std::make_unique<EmbeddingModel<float>>(job.spec, job.train.seed);
    model->set_log_scale(init_scale(ds.mean_distance, job.spec.embedding_dim));
  }

  TrainResult result;
  const bool any_h = std::any_of(validation.begin(), validation.end(), [](const auto& p) { return p.homologous; });
  if (any_h) result.untrained_ae_h = ae_homologous(predict_distances(*model, validation), validation);

  std::ofstream log = open_csv(job.out / "train_log.csv", "epoch,loss,ae_g,ae_h,scale");
  result.logs = train(*model, train_set, validation, job.train, state, [&](const EpochLog& e) {
    log << fmt::format("{},{},{},{},{}\n", e.epoch, e.loss, e.ae_g, e.ae_h, e.scale);
    log.flush();
    if (job.verbose) {
      fmt::print(stderr, "epoch {:>3}  loss {:.4f}  ae_g {:.3f}  ae_h {:.3f}\n", e.epoch, e.loss, e.ae_g, e.ae_h);
    }
  });

  CheckpointMeta meta;
  meta.loss = job.train.loss;
  meta.epochs = job.train.epochs;
  meta.epochs_completed = state.epochs_completed;
  meta.adam_steps = state.adam_steps;
  meta.batch_size = job.train.batch_size;
  meta.lr = job.train.adam.lr;
  meta.seed = job.train.seed;
  meta.dataset_hash = ds.train_hash;
  meta.mean_distance = ds.mean_distance;
  save_checkpoint(job.out / "checkpoint.bin", *model, meta);
  return result;
}

void write_errors_csv(const fs::path& path, const ArchitectureSpec& spec, const CheckpointMeta& meta,
                      const EvalReport& report) {
  std::ofstream out = open_csv(path, "arch,dim,loss,seed,ae_g,ae_h");
  out << fmt::format("{},{},{},{},{},{}\n", to_string(spec.kind), spec.embedding_dim, meta.loss.name(),
                     meta.seed, report.ae_g, report.ae_h);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config <-> JSON

void to_json(json& j, const GenDataConfig& c) {
  j = {{"out", c.out.string()},
       {"clusters", c.clusters},
       {"ref_len", c.ref_len},
       {"reads", c.reads},
       {"p_sub", c.p_sub},
       {"p_del", c.p_del},
       {"p_ins", c.p_ins},
       {"train_homologous", c.train_homologous},
       {"train_nonhomologous", c.train_nonhomologous},
       {"test_homologous", c.test_homologous},
       {"test_nonhomologous", c.test_nonhomologous},
       {"test_fraction", c.test_fraction},
       {"m_samples", c.m_samples},
       {"seed", c.seed},
       {"force", c.force}};
}

void from_json(const json& j, GenDataConfig& c) {
  reject_unknown_keys<GenDataConfig>(j);
  read_key(j, "out", c.out);
  read_key(j, "clusters", c.clusters);
  read_key(j, "ref_len", c.ref_len);
  read_key(j, "reads", c.reads);
  read_key(j, "p_sub", c.p_sub);
  read_key(j, "p_del", c.p_del);
  read_key(j, "p_ins", c.p_ins);
  read_key(j, "train_homologous", c.train_homologous);
  read_key(j, "train_nonhomologous", c.train_nonhomologous);
  read_key(j, "test_homologous", c.test_homologous);
  read_key(j, "test_nonhomologous", c.test_nonhomologous);
  read_key(j, "test_fraction", c.test_fraction);
  read_key(j, "m_samples", c.m_samples);
  read_key(j, "seed", c.seed);
  read_key(j, "force", c.force);
}

void to_json(json& j, const TrainCmdConfig& c) {
  j = {{"data", c.data.string()},   {"out", c.out.string()},
       {"arch", c.arch},            {"dim", c.dim},
       {"loss", c.loss},            {"epochs", c.epochs},
       {"batch", c.batch},          {"lr", c.lr},
       {"seed", c.seed},            {"validation_pairs", c.validation_pairs},
       {"max_train_pairs", c.max_train_pairs}, {"bn_eps", c.bn_eps},
       {"resume", c.resume.string()}};
}

void from_json(const json& j, TrainCmdConfig& c) {
  reject_unknown_keys<TrainCmdConfig>(j);
  read_key(j, "data", c.data);
  read_key(j, "out", c.out);
  read_key(j, "arch", c.arch);
  read_key(j, "dim", c.dim);
  read_key(j, "loss", c.loss);
  read_key(j, "epochs", c.epochs);
  read_key(j, "batch", c.batch);
  read_key(j, "lr", c.lr);
  read_key(j, "seed", c.seed);
  read_key(j, "validation_pairs", c.validation_pairs);
  read_key(j, "max_train_pairs", c.max_train_pairs);
  read_key(j, "bn_eps", c.bn_eps);
  read_key(j, "resume", c.resume);
}

void to_json(json& j, const EvalCmdConfig& c) {
  j = {{"data", c.data.string()},
       {"checkpoint", c.checkpoint.string()},
       {"out", c.out.string()},
       {"arch", c.arch},
       {"dim", c.dim},
       {"normality_sequences", c.normality_sequences},
       {"normality_elements", c.normality_elements},
       {"outlier_sequences", c.outlier_sequences},
       {"outlier_top_k", c.outlier_top_k},
       {"chi2_min_samples", c.chi2_min_samples},
       {"chi2_alpha", c.chi2_alpha},
       {"seed", c.seed}};
}

void from_json(const json& j, EvalCmdConfig& c) {
  reject_unknown_keys<EvalCmdConfig>(j);
  read_key(j, "data", c.data);
  read_key(j, "checkpoint", c.checkpoint);
  read_key(j, "out", c.out);
  read_key(j, "arch", c.arch);
  read_key(j, "dim", c.dim);
  read_key(j, "normality_sequences", c.normality_sequences);
  read_key(j, "normality_elements", c.normality_elements);
  read_key(j, "outlier_sequences", c.outlier_sequences);
  read_key(j, "outlier_top_k", c.outlier_top_k);
  read_key(j, "chi2_min_samples", c.chi2_min_samples);
  read_key(j, "chi2_alpha", c.chi2_alpha);
  read_key(j, "seed", c.seed);
}

void to_json(json& j, const EsdScanCmdConfig& c) {
  j = {{"data", c.data.string()},
       {"out", c.out.string()},
       {"arch", c.arch},
       {"dims", c.dims},
       {"seeds", c.seeds},
       {"loss", c.loss},
       {"epochs", c.epochs},
       {"batch", c.batch},
       {"lr", c.lr},
       {"max_train_pairs", c.max_train_pairs},
       {"tau", c.tau},
       {"slack", c.slack},
       {"sample_pairs", c.sample_pairs},
       {"jobs", c.jobs}};
}

void from_json(const json& j, EsdScanCmdConfig& c) {
  reject_unknown_keys<EsdScanCmdConfig>(j);
  read_key(j, "data", c.data);
  read_key(j, "out", c.out);
  read_key(j, "arch", c.arch);
  read_key(j, "dims", c.dims);
  read_key(j, "seeds", c.seeds);
  read_key(j, "loss", c.loss);
  read_key(j, "epochs", c.epochs);
  read_key(j, "batch", c.batch);
  read_key(j, "lr", c.lr);
  read_key(j, "max_train_pairs", c.max_train_pairs);
  read_key(j, "tau", c.tau);
  read_key(j, "slack", c.slack);
  read_key(j, "sample_pairs", c.sample_pairs);
  read_key(j, "jobs", c.jobs);
}

void to_json(json& j, const GridCmdConfig& c) {
  j = {{"data", c.data.string()},
       {"out", c.out.string()},
       {"archs", c.archs},
       {"dims", c.dims},
       {"losses", c.losses},
       {"seeds", c.seeds},
       {"epochs", c.epochs},
       {"batch", c.batch},
       {"lr", c.lr},
       {"max_train_pairs", c.max_train_pairs},
       {"jobs", c.jobs}};
}

void from_json(const json& j, GridCmdConfig& c) {
  reject_unknown_keys<GridCmdConfig>(j);
  read_key(j, "data", c.data);
  read_key(j, "out", c.out);
  read_key(j, "archs", c.archs);
  read_key(j, "dims", c.dims);
  read_key(j, "losses", c.losses);
  read_key(j, "seeds", c.seeds);
  read_key(j, "epochs", c.epochs);
  read_key(j, "batch", c.batch);
  read_key(j, "lr", c.lr);
  read_key(j, "max_train_pairs", c.max_train_pairs);
  read_key(j, "jobs", c.jobs);
}

// ---------------------------------------------------------------------------
// Dataset

Dataset load_dataset(const fs::path& dir, Verify verify) {
  require_dataset(dir);
  const json manifest = read_json(dir / "manifest.json");
  Dataset ds;
  try {
    ds.mean_distance = manifest.at("mean_distance").at("mean").get<double>();
    ds.test_cluster_ids = manifest.at("test_cluster_ids").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw DataError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (!(ds.mean_distance > 0.0)) throw DataError("manifest mean distance must be positive");
  ds.clusters = load_clusters(dir / "clusters.tsv");
  ds.train = load_pairs(dir / "train_pairs.tsv", verify);
  ds.test = load_pairs(dir / "test_pairs.tsv", verify);
  ds.train_hash = fnv1a_file(dir / "train_pairs.tsv");
  return ds;
}

// ---------------------------------------------------------------------------
// gen-data

GenDataResult cmd_gen_data(const GenDataConfig& cfg) {
  if (cfg.out.empty()) throw UsageError("--out is required");
  if (fs::exists(cfg.out) && !(fs::is_directory(cfg.out) && fs::is_empty(cfg.out)) && !cfg.force) {
    throw UsageError("output " + cfg.out.string() + " already exists (use --force to overwrite)");
  }
  EditChannelConfig channel{cfg.p_sub, cfg.p_del, cfg.p_ins, cfg.seed};
  channel.validate();
  if (cfg.clusters < 2) throw UsageError("need at least two clusters");
  if (cfg.ref_len == 0) throw UsageError("reference length must be positive");
  if (cfg.ref_len > kInputLen) throw UsageError("reference length exceeds the padded length " + std::to_string(kInputLen));
  prepare_out(cfg.out);
  write_json(cfg.out / "config.json", cfg);

  Rng cluster_rng = make_rng(cfg.seed, Stream::kClusters);
  const std::vector<Cluster> clusters = build_clusters(cfg.clusters, cfg.ref_len, cfg.reads, channel, cluster_rng);
  for (const auto& c : clusters) {
    for (const auto& s : c.members()) {
      if (s.length > kInputLen) {
        throw DataError("cluster " + std::to_string(c.id) + " has a read longer than " + std::to_string(kInputLen) +
                        "; lower p_ins or ref_len");
      }
    }
  }
  Rng split_rng = make_rng(cfg.seed, Stream::kSplit);
  const DatasetSplit split = split_by_cluster(clusters, cfg.test_fraction,
                                              {cfg.train_homologous, cfg.train_nonhomologous},
                                              {cfg.test_homologous, cfg.test_nonhomologous}, split_rng);
  Rng m_rng = make_rng(cfg.seed, Stream::kEstimateM);
  GenDataResult result;
  result.mean_distance = estimate_M(clusters, cfg.m_samples, m_rng);
  result.train_pairs = split.train.size();
  result.test_pairs = split.test.size();

  save_clusters(cfg.out / "clusters.tsv", clusters);
  save_pairs(cfg.out / "train_pairs.tsv", split.train);
  save_pairs(cfg.out / "test_pairs.tsv", split.test);

  std::size_t hom_train = 0, hom_test = 0;
  for (const auto& p : split.train) hom_train += p.homologous;
  for (const auto& p : split.test) hom_test += p.homologous;
  const json manifest = {
      {"seed", cfg.seed},
      {"channel", {{"p_sub", cfg.p_sub}, {"p_del", cfg.p_del}, {"p_ins", cfg.p_ins}}},
      {"clusters", cfg.clusters},
      {"ref_len", cfg.ref_len},
      {"padded_len", kInputLen},
      {"reads_per_cluster", cfg.reads},
      {"test_fraction", cfg.test_fraction},
      {"mean_distance",
       {{"mean", result.mean_distance.mean},
        {"std_error", result.mean_distance.std_error},
        {"samples", result.mean_distance.samples}}},
      {"train_pairs", {{"homologous", hom_train}, {"nonhomologous", split.train.size() - hom_train}}},
      {"test_pairs", {{"homologous", hom_test}, {"nonhomologous", split.test.size() - hom_test}}},
      {"train_cluster_ids", split.train_cluster_ids},
      {"test_cluster_ids", split.test_cluster_ids},
      {"train_pairs_fnv1a", fnv1a_file(cfg.out / "train_pairs.tsv")},
      {"files", {{"clusters", "clusters.tsv"}, {"train_pairs", "train_pairs.tsv"}, {"test_pairs", "test_pairs.tsv"}}}};
  write_json(cfg.out / "manifest.json", manifest);
  return result;
}

// ---------------------------------------------------------------------------
// train

TrainResult cmd_train(const TrainCmdConfig& cfg) {
  require_dataset(cfg.data);
  if (!cfg.resume.empty()) require_file(cfg.resume, "resume checkpoint");
  TrainJob job;
  job.spec = make_spec(cfg.arch, cfg.dim, cfg.bn_eps);
  job.train.loss = parse_loss(cfg.loss);
  job.train.epochs = cfg.epochs;
  job.train.batch_size = cfg.batch;
  job.train.adam.lr = cfg.lr;
  job.train.seed = cfg.seed;
  job.train.validation_pairs = cfg.validation_pairs;
  job.train.validate();
  job.max_train_pairs = cfg.max_train_pairs;
  job.out = cfg.out;
  job.resume = cfg.resume;
  prepare_out(cfg.out);
  write_json(cfg.out / "config.json", cfg);
  const Dataset ds = load_dataset(cfg.data);
  return run_training(ds, job);
}

// ---------------------------------------------------------------------------
// eval

EvalResult cmd_eval(const EvalCmdConfig& cfg) {
  require_dataset(cfg.data);
  require_file(cfg.checkpoint, "checkpoint");
  if (!(cfg.chi2_alpha > 0.0 && cfg.chi2_alpha < 1.0)) throw UsageError("chi2 alpha must lie in (0,1)");
  prepare_out(cfg.out);
  write_json(cfg.out / "config.json", cfg);

  Checkpoint ck = load_checkpoint(cfg.checkpoint);
  EmbeddingModel<float>& model = *ck.model;
  const ArchitectureSpec& spec = model.spec();
  if (!cfg.arch.empty() && parse_arch(cfg.arch) != spec.kind) {
    throw UsageError("checkpoint holds a " + to_string(spec.kind) + " model, not " + cfg.arch);
  }
  if (cfg.dim != 0 && cfg.dim != spec.embedding_dim) {
    throw UsageError("checkpoint has dim " + std::to_string(spec.embedding_dim) + ", not " + std::to_string(cfg.dim));
  }
  const Dataset ds = load_dataset(cfg.data);
  if (ds.test.empty()) throw DataError("test pair file is empty");

  EvalResult result;
  const std::vector<double> dhat = predict_distances(model, ds.test);
  result.report = evaluate(dhat, ds.test);
  write_errors_csv(cfg.out / "errors.csv", spec, ck.meta, result.report);

  result.variance = variance_profile(dhat, ds.test, ds.mean_distance, spec.embedding_dim);
  {
    std::ofstream out = open_csv(cfg.out / "variance_profile.csv", "d,count,empirical_var,predicted_var");
    for (const auto& r : result.variance.rows) {
      out << fmt::format("{},{},{},{}\n", r.d, r.count, r.empirical_var, r.predicted_var);
    }
  }
  bool monotone = true;
  for (std::size_t i = 1; i < result.variance.rows.size(); ++i) {
    monotone = monotone && result.variance.rows[i].empirical_var >= result.variance.rows[i - 1].empirical_var;
  }

  const double k = static_cast<double>(spec.embedding_dim) / ds.mean_distance;
  {
    std::ofstream out = open_csv(cfg.out / "chi2_fit.csv", "d,count,dof,ks_statistic,critical_value,passed");
    for (const auto& [d, bucket] : result.report.buckets) {
      if (d <= 0 || bucket.count < std::max<std::size_t>(cfg.chi2_min_samples, 200)) continue;
      std::vector<double> at_d;
      for (std::size_t i = 0; i < ds.test.size(); ++i) {
        if (ds.test[i].d == d) at_d.push_back(dhat[i]);
      }
      const Chi2Fit fit = chi2_fit(at_d, d, k, cfg.chi2_alpha);
      out << fmt::format("{},{},{},{},{},{}\n", d, fit.samples, fit.dof, fit.ks_statistic, fit.critical_value,
                         fit.passed ? 1 : 0);
      result.chi2.emplace_back(d, fit);
    }
  }

  const std::set<int> test_ids(ds.test_cluster_ids.begin(), ds.test_cluster_ids.end());
  std::vector<Sequence> test_seqs;
  for (const auto& c : ds.clusters) {
    if (!test_ids.count(c.id)) continue;
    for (const auto& s : c.members()) test_seqs.push_back(s);
  }

  json notes = json::array();
  json normality_summary = nullptr;
  const std::size_t n_norm = std::min(cfg.normality_sequences, test_seqs.size());
  if (cfg.normality_sequences == 0) {
    notes.push_back("normality report disabled");
  } else if (n_norm < 1000) {
    notes.push_back(fmt::format("normality report skipped: {} test sequences available, 1000 needed", n_norm));
  } else {
    std::vector<Sequence> padded;
    for (std::size_t i = 0; i < n_norm; ++i) padded.push_back(pad(test_seqs[i], spec.input_len, Alphabet::dna()));
    const NormalityReport norm = element_normality(model, padded, cfg.normality_elements);
    auto write = [&](const fs::path& path, const std::vector<ElementStats>& rows) {
      std::ofstream out = open_csv(path, "element,mean,var,skew,ks");
      std::size_t flagged = 0;
      for (const auto& r : rows) {
        out << fmt::format("{},{},{},{},{}\n", r.element, r.mean, r.var, r.skew, r.ks);
        flagged += r.flagged;
      }
      return flagged;
    };
    normality_summary = {{"sequences", n_norm},
                         {"flagged_eval_mode", write(cfg.out / "normality.csv", norm.eval_mode)},
                         {"flagged_batch_stats", write(cfg.out / "normality_batch_stats.csv", norm.batch_stats)}};
  }

  json outlier_summary = nullptr;
  if (cfg.outlier_sequences > 0) {
    OutlierOptions opt;
    opt.top_k = cfg.outlier_top_k;
    opt.seed = cfg.seed;
    const int max_d = *std::max_element(opt.d_values.begin(), opt.d_values.end());
    std::vector<Sequence> scan;
    for (const auto& s : test_seqs) {
      if (scan.size() >= cfg.outlier_sequences) break;
      if (s.length + static_cast<std::size_t>(max_d) <= spec.input_len) scan.push_back(s);
    }
    if (scan.empty()) {
      notes.push_back("outlier scan skipped: no test sequences");
    } else {
      const OutlierReport rep = outlier_scan(model_predictor(model), scan, opt);
      std::ofstream hist = open_csv(cfg.out / "outlier_histogram.csv", "d,bin,lo,hi,count");
      for (const auto& h : rep.histograms) {
        const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
          hist << fmt::format("{},{},{},{},{}\n", h.d, b, h.lo + width * b, h.lo + width * (b + 1), h.counts[b]);
        }
      }
      std::ofstream worst =
          open_csv(cfg.out / "outliers.csv", "rank,d,dhat,abs_error,homopolymer,at_run_start,edits,s,t");
      std::size_t run_start = 0;
      for (std::size_t i = 0; i < rep.worst.size(); ++i) {
        const auto& w = rep.worst[i];
        worst << fmt::format("{},{},{},{},{},{},{},{},{}\n", i + 1, w.d, w.dhat, w.abs_error, w.homopolymer,
                             w.at_run_start ? 1 : 0, w.edits, w.s, w.t);
        run_start += w.at_run_start;
      }
      outlier_summary = {{"scanned", rep.scanned}, {"top_k", rep.worst.size()}, {"at_run_start", run_start}};
    }
  }

  json chi2 = json::array();
  for (const auto& [d, fit] : result.chi2) {
    chi2.push_back({{"d", d}, {"ks_statistic", fit.ks_statistic}, {"critical_value", fit.critical_value},
                    {"passed", fit.passed}});
  }
  const json summary = {{"arch", to_string(spec.kind)},
                        {"dim", spec.embedding_dim},
                        {"loss", ck.meta.loss.name()},
                        {"seed", ck.meta.seed},
                        {"ae_g", result.report.ae_g},
                        {"ae_h", result.report.ae_h},
                        {"samples", result.report.samples},
                        {"homologous", result.report.homologous},
                        {"mean_distance", ds.mean_distance},
                        {"k", k},
                        {"variance_monotone", monotone},
                        {"variance_omitted_d", result.variance.omitted},
                        {"chi2", chi2},
                        {"normality", normality_summary},
                        {"outliers", outlier_summary},
                        {"notes", notes}};
  write_json(cfg.out / "eval_summary.json", summary);
  return result;
}

// ---------------------------------------------------------------------------
// esd-scan

EsdReport cmd_esd_scan(const EsdScanCmdConfig& cfg) {
  require_dataset(cfg.data);
  EsdScanConfig scan;
  scan.base = make_spec(cfg.arch, cfg.dims.empty() ? 1 : cfg.dims.front());
  scan.dims = cfg.dims;
  scan.seeds = cfg.seeds;
  scan.train.loss = parse_loss(cfg.loss);
  scan.train.epochs = cfg.epochs;
  scan.train.batch_size = cfg.batch;
  scan.train.adam.lr = cfg.lr;
  scan.train.validation_pairs = 0;
  scan.esd.tau = cfg.tau;
  scan.esd.slack = cfg.slack;
  scan.sample_pairs = cfg.sample_pairs;
  scan.jobs = cfg.jobs;
  scan.mean_distance = 1.0;
  scan.validate();
  prepare_out(cfg.out);
  write_json(cfg.out / "config.json", cfg);

  const Dataset ds = load_dataset(cfg.data);
  scan.mean_distance = ds.mean_distance;
  const std::vector<Sequence> probes = probe_sequences(ds.clusters, kInputLen);
  const EsdReport report = esd_scan(limit(ds.train, cfg.max_train_pairs), {}, probes, scan,
                                    [](std::size_t dim, std::uint64_t seed, const Spectrum& s) {
                                      fmt::print(stderr, "seed {} dim {:>4}: lambda_1 {:.3f} lambda_n {:.3g}\n", seed,
                                                 dim, s.eigenvalues.front(), s.eigenvalues.back());
                                    });

  json seeds = json::array();
  for (const auto& r : report.seeds) {
    write_spectrum_csv(cfg.out / fmt::format("spectrum_seed{}.csv", r.seed), r.spectra);
    const EsdDetection& det = r.detection;
    json dims = json::array();
    for (std::size_t i = 0; i < det.dims.size(); ++i) {
      json row = {{"dim", det.dims[i]},
                  {"rank", det.ranks[i]},
                  {"full_rank", static_cast<bool>(det.full_rank[i])},
                  {"a4_suspect", static_cast<bool>(det.a4_suspect[i])}};
      if (i < r.final_logs.size()) row["final_loss"] = r.final_logs[i].loss;
      dims.push_back(row);
    }
    seeds.push_back({{"seed", r.seed},
                     {"dims", dims},
                     {"lower_bound", det.lower_bound},
                     {"plateau_start", det.plateau_start},
                     {"n0", det.n0 ? json(*det.n0) : json(nullptr)},
                     {"n0_text", det.n0 ? std::to_string(*det.n0) : "n0 >= " + std::to_string(det.max_dim)},
                     {"spectrum_csv", fmt::format("spectrum_seed{}.csv", r.seed)}});
  }
  write_json(cfg.out / "esd_report.json",
             {{"tau", cfg.tau}, {"slack", cfg.slack}, {"probes", probes.size()}, {"sample_pairs", cfg.sample_pairs},
              {"mean_distance", ds.mean_distance}, {"seeds", seeds}});
  return report;
}

// ---------------------------------------------------------------------------
// grid

std::vector<GridCell> cmd_grid(const GridCmdConfig& cfg) {
  require_dataset(cfg.data);
  if (cfg.archs.empty() || cfg.dims.empty() || cfg.losses.empty() || cfg.seeds.empty()) {
    throw UsageError("grid needs at least one arch, dim, loss and seed");
  }
  std::vector<GridCell> cells;
  for (const auto& arch : cfg.archs) {
    for (std::size_t dim : cfg.dims) {
      for (const auto& loss : cfg.losses) {
        make_spec(arch, dim);
        GridCell cell;
        cell.arch = to_string(parse_arch(arch));
        cell.dim = dim;
        cell.loss = parse_loss(loss).name();
        cells.push_back(cell);
      }
    }
  }
  TrainConfig base;
  base.epochs = cfg.epochs;
  base.batch_size = cfg.batch;
  base.adam.lr = cfg.lr;
  base.validate();
  prepare_out(cfg.out);
  write_json(cfg.out / "config.json", cfg);
  const Dataset ds = load_dataset(cfg.data);

  struct Run {
    double ae_g = 0.0, ae_h = 0.0;
    std::string error;
  };
  const std::size_t ns = cfg.seeds.size();
  std::vector<Run> runs(cells.size() * ns);
  std::mutex log_mu;
  parallel_for(runs.size(), cfg.jobs, [&](std::size_t r) {
    const GridCell& cell = cells[r / ns];
    const std::uint64_t seed = cfg.seeds[r % ns];
    const fs::path dir = cfg.out / "cells" / fmt::format("{}_{}_{}_seed{}", cell.arch, cell.dim, cell.loss, seed);
    try {
      prepare_out(dir);
      TrainJob job;
      job.spec = make_spec(cell.arch, cell.dim);
      job.train = base;
      job.train.loss = parse_loss(cell.loss);
      job.train.seed = seed;
      job.max_train_pairs = cfg.max_train_pairs;
      job.out = dir;
      job.verbose = false;
      run_training(ds, job);
      Checkpoint ck = load_checkpoint(dir / "checkpoint.bin");
      const EvalReport rep = evaluate(predict_distances(*ck.model, ds.test), ds.test);
      write_errors_csv(dir / "errors.csv", ck.model->spec(), ck.meta, rep);
      runs[r].ae_g = rep.ae_g;
      runs[r].ae_h = rep.ae_h;
      std::lock_guard<std::mutex> lock(log_mu);
      fmt::print(stderr, "{} {} {} seed {}: ae_g {:.3f} ae_h {:.3f}\n", cell.arch, cell.dim, cell.loss, seed, rep.ae_g,
                 rep.ae_h);
    } catch (const std::exception& e) {
      runs[r].error = e.what();
      std::lock_guard<std::mutex> lock(log_mu);
      fmt::print(stderr, "{} {} {} seed {} failed: {}\n", cell.arch, cell.dim, cell.loss, seed, e.what());
    }
  });

  std::ofstream per_run = open_csv(cfg.out / "grid_runs.csv", "arch,dim,loss,seed,ae_g,ae_h,status");
  std::ofstream table = open_csv(cfg.out / "grid.csv",
                                 "arch,dim,loss,runs,failed,ae_g_mean,ae_g_std,ae_h_mean,ae_h_std,ae_g,ae_h");
  for (std::size_t c = 0; c < cells.size(); ++c) {
    GridCell& cell = cells[c];
    for (std::size_t s = 0; s < ns; ++s) {
      const Run& run = runs[c * ns + s];
      if (run.error.empty()) {
        cell.ae_g.push_back(run.ae_g);
        cell.ae_h.push_back(run.ae_h);
        per_run << fmt::format("{},{},{},{},{},{},ok\n", cell.arch, cell.dim, cell.loss, cfg.seeds[s], run.ae_g,
                               run.ae_h);
      } else {
        ++cell.failed;
        std::string msg = run.error;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        per_run << fmt::format("{},{},{},{},,,failed: {}\n", cell.arch, cell.dim, cell.loss, cfg.seeds[s], msg);
      }
    }
    if (cell.ae_g.empty()) {
      table << fmt::format("{},{},{},0,{},,,,,failed,failed\n", cell.arch, cell.dim, cell.loss, cell.failed);
      continue;
    }
    const double gm = mean_of(cell.ae_g), gs = std_of(cell.ae_g);
    const double hm = mean_of(cell.ae_h), hs = std_of(cell.ae_h);
    table << fmt::format("{},{},{},{},{},{},{},{},{},{:.2f}±{:.2f},{:.2f}±{:.2f}\n", cell.arch, cell.dim, cell.loss,
                         cell.ae_g.size(), cell.failed, gm, gs, hm, hs, gm, gs, hm, hs);
  }
  return cells;
}

// ---------------------------------------------------------------------------
// CLI

namespace {

// Value of --config (either `--config path` or `--config=path`), if any.
std::optional<fs::path> find_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string_view arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return fs::path(argv[i + 1]);
    if (arg.rfind("--config=", 0) == 0) return fs::path(std::string(arg.substr(9)));
  }
  return std::nullopt;
}

template <typename Config>
void load_config(const std::optional<fs::path>& path, Config& cfg) {
  if (!path) return;
  if (!fs::is_regular_file(*path)) throw UsageError("config file not found: " + path->string());
  std::ifstream in(*path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(path->string() + ": " + e.what());
  }
  try {
    j.get_to(cfg);
  } catch (const json::exception& e) {
    throw UsageError(path->string() + ": " + e.what());
  }
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Edit-distance embeddings: data generation, training, ESD scans and evaluation", "levemb"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "levemb 0.1.0");

  const std::string command = argc > 1 ? argv[1] : "";
  const auto config_path = find_config(argc, argv);

  GenDataConfig gen;
  TrainCmdConfig tr;
  EvalCmdConfig ev;
  EsdScanCmdConfig es;
  GridCmdConfig gr;
  if (command == "gen-data") load_config(config_path, gen);
  if (command == "train") load_config(config_path, tr);
  if (command == "eval") load_config(config_path, ev);
  if (command == "esd-scan") load_config(config_path, es);
  if (command == "grid") load_config(config_path, gr);

  std::string unused_config;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", unused_config, "JSON config file; flags override its values");
  };

  CLI::App* g = app.add_subcommand("gen-data", "Generate a synthetic cluster dataset and pair files");
  add_config(g);
  g->add_option("--out", gen.out, "Output directory");
  g->add_option("--clusters", gen.clusters, "Number of clusters")->capture_default_str();
  g->add_option("--ref-len", gen.ref_len, "Reference length")->capture_default_str();
  g->add_option("--reads", gen.reads, "Reads per cluster")->capture_default_str();
  g->add_option("--p-sub", gen.p_sub, "Per-position substitution probability")->capture_default_str();
  g->add_option("--p-del", gen.p_del, "Per-position deletion probability")->capture_default_str();
  g->add_option("--p-ins", gen.p_ins, "Per-slot insertion probability")->capture_default_str();
  g->add_option("--train-homologous", gen.train_homologous)->capture_default_str();
  g->add_option("--train-nonhomologous", gen.train_nonhomologous)->capture_default_str();
  g->add_option("--test-homologous", gen.test_homologous)->capture_default_str();
  g->add_option("--test-nonhomologous", gen.test_nonhomologous)->capture_default_str();
  g->add_option("--test-fraction", gen.test_fraction, "Fraction of clusters held out")->capture_default_str();
  g->add_option("--m-samples", gen.m_samples, "Pairs sampled to estimate M")->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_flag("--force", gen.force, "Overwrite an existing output directory");

  CLI::App* t = app.add_subcommand("train", "Train a siamese embedding model");
  add_config(t);
  t->add_option("--data", tr.data, "Dataset directory from gen-data");
  t->add_option("--out", tr.out, "Output directory");
  t->add_option("--arch", tr.arch, "cnn5 | cnn10 | cnn5w | cnn10w")->capture_default_str();
  t->add_option("--dim", tr.dim, "Embedding dimension")->capture_default_str();
  t->add_option("--loss", tr.loss, "mse | mae | rechi2 | pnll | gnll:<k>")->capture_default_str();
  t->add_option("--epochs", tr.epochs)->capture_default_str();
  t->add_option("--batch", tr.batch)->capture_default_str();
  t->add_option("--lr", tr.lr)->capture_default_str();
  t->add_option("--seed", tr.seed)->capture_default_str();
  t->add_option("--validation-pairs", tr.validation_pairs)->capture_default_str();
  t->add_option("--max-train-pairs", tr.max_train_pairs, "Use only the first N training pairs (0 = all)")
      ->capture_default_str();
  t->add_option("--bn-eps", tr.bn_eps)->capture_default_str();
  t->add_option("--resume", tr.resume, "Continue from this checkpoint");

  CLI::App* e = app.add_subcommand("eval", "Evaluate a checkpoint on the test pairs");
  add_config(e);
  e->add_option("--data", ev.data, "Dataset directory from gen-data");
  e->add_option("--checkpoint", ev.checkpoint);
  e->add_option("--out", ev.out, "Output directory");
  e->add_option("--arch", ev.arch, "Expected architecture (checked against the checkpoint)");
  e->add_option("--dim", ev.dim, "Expected embedding dimension (0 = any)");
  e->add_option("--normality-sequences", ev.normality_sequences)->capture_default_str();
  e->add_option("--normality-elements", ev.normality_elements)->capture_default_str();
  e->add_option("--outlier-sequences", ev.outlier_sequences)->capture_default_str();
  e->add_option("--outlier-top-k", ev.outlier_top_k)->capture_default_str();
  e->add_option("--chi2-min-samples", ev.chi2_min_samples)->capture_default_str();
  e->add_option("--chi2-alpha", ev.chi2_alpha)->capture_default_str();
  e->add_option("--seed", ev.seed)->capture_default_str();

  CLI::App* s = app.add_subcommand("esd-scan", "Scan embedding dimensions for the early-stopping dimension");
  add_config(s);
  s->add_option("--data", es.data, "Dataset directory from gen-data");
  s->add_option("--out", es.out, "Output directory");
  s->add_option("--arch", es.arch)->capture_default_str();
  s->add_option("--dims", es.dims, "Ascending embedding dimensions")->delimiter(',')->capture_default_str();
  s->add_option("--seeds", es.seeds)->delimiter(',')->capture_default_str();
  s->add_option("--loss", es.loss)->capture_default_str();
  s->add_option("--epochs", es.epochs)->capture_default_str();
  s->add_option("--batch", es.batch)->capture_default_str();
  s->add_option("--lr", es.lr)->capture_default_str();
  s->add_option("--max-train-pairs", es.max_train_pairs)->capture_default_str();
  s->add_option("--tau", es.tau, "Eigenvalue threshold")->capture_default_str();
  s->add_option("--slack", es.slack)->capture_default_str();
  s->add_option("--sample-pairs", es.sample_pairs)->capture_default_str();
  s->add_option("--jobs", es.jobs)->capture_default_str();

  CLI::App* r = app.add_subcommand("grid", "Train and evaluate every arch x dim x loss x seed cell");
  add_config(r);
  r->add_option("--data", gr.data, "Dataset directory from gen-data");
  r->add_option("--out", gr.out, "Output directory");
  r->add_option("--archs", gr.archs)->delimiter(',')->capture_default_str();
  r->add_option("--dims", gr.dims)->delimiter(',')->capture_default_str();
  r->add_option("--losses", gr.losses)->delimiter(',')->capture_default_str();
  r->add_option("--seeds", gr.seeds)->delimiter(',')->capture_default_str();
  r->add_option("--epochs", gr.epochs)->capture_default_str();
  r->add_option("--batch", gr.batch)->capture_default_str();
  r->add_option("--lr", gr.lr)->capture_default_str();
  r->add_option("--max-train-pairs", gr.max_train_pairs)->capture_default_str();
  r->add_option("--jobs", gr.jobs)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 1;
  }

  if (g->parsed()) {
    const GenDataResult res = cmd_gen_data(gen);
    fmt::print(stderr, "wrote {} train / {} test pairs, M = {:.3f} +- {:.3f}\n", res.train_pairs, res.test_pairs,
               res.mean_distance.mean, res.mean_distance.std_error);
  } else if (t->parsed()) {
    const TrainResult res = cmd_train(tr);
    if (!res.logs.empty()) {
      fmt::print(stderr, "untrained ae_h {:.3f} -> {:.3f}\n", res.untrained_ae_h, res.logs.back().ae_h);
    }
  } else if (e->parsed()) {
    const EvalResult res = cmd_eval(ev);
    fmt::print("ae_g {:.4f}  ae_h {:.4f}\n", res.report.ae_g, res.report.ae_h);
  } else if (s->parsed()) {
    const EsdReport rep = cmd_esd_scan(es);
    for (const auto& sr : rep.seeds) {
      fmt::print("seed {}: n0 = {}\n", sr.seed,
                 sr.detection.n0 ? std::to_string(*sr.detection.n0) : ">= " + std::to_string(sr.detection.max_dim));
    }
  } else if (r->parsed()) {
    for (const auto& cell : cmd_grid(gr)) {
      fmt::print("{} {} {}: ae_g {:.3f}±{:.3f} ae_h {:.3f}±{:.3f} ({} failed)\n", cell.arch, cell.dim, cell.loss,
                 mean_of(cell.ae_g), std_of(cell.ae_g), mean_of(cell.ae_h), std_of(cell.ae_h), cell.failed);
    }
  }
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const UsageError& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return 1;
  } catch (const NumericError& e) {
    fmt::print(stderr, "numeric failure: {}\n", e.what());
    return 3;
  } catch (const DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
}

}  // namespace levemb
