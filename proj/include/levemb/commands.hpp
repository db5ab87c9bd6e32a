#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "levemb/datagen.hpp"
#include "levemb/esd.hpp"
#include "levemb/eval.hpp"

namespace levemb {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Dataset directory written by gen-data

struct Dataset {
  std::vector<Cluster> clusters;
  std::vector<PairSample> train;
  std::vector<PairSample> test;
  std::vector<int> test_cluster_ids;
  double mean_distance = 0.0;
  std::string train_hash;
};

Dataset load_dataset(const fs::path& dir, Verify verify = Verify::kSpot);

// ---------------------------------------------------------------------------
// Command configs. Each converts to/from JSON; missing keys keep defaults.

struct GenDataConfig {
  fs::path out;
  std::size_t clusters = 2000;
  std::size_t ref_len = 150;
  std::size_t reads = 5;
  double p_sub = 0.01;
  double p_del = 0.01;
  double p_ins = 0.01;
  std::size_t train_homologous = 10000;
  std::size_t train_nonhomologous = 10000;
  std::size_t test_homologous = 2000;
  std::size_t test_nonhomologous = 2000;
  double test_fraction = 0.2;
  std::size_t m_samples = 2000;
  std::uint64_t seed = 0;
  bool force = false;
};

struct TrainCmdConfig {
  fs::path data;
  fs::path out;
  std::string arch = "cnn5";
  std::size_t dim = 80;
  std::string loss = "pnll";
  std::size_t epochs = 50;
  std::size_t batch = 128;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t validation_pairs = 512;
  std::size_t max_train_pairs = 0;  // 0 = all
  double bn_eps = 1e-9;
  fs::path resume;
};

struct EvalCmdConfig {
  fs::path data;
  fs::path checkpoint;
  fs::path out;
  std::string arch;  // optional expectations checked against the checkpoint
  std::size_t dim = 0;
  std::size_t normality_sequences = 1000;
  std::size_t normality_elements = 10;
  std::size_t outlier_sequences = 100;
  std::size_t outlier_top_k = 20;
  std::size_t chi2_min_samples = 200;
  double chi2_alpha = 0.01;
  std::uint64_t seed = 0;
};

struct EsdScanCmdConfig {
  fs::path data;
  fs::path out;
  std::string arch = "cnn5";
  std::vector<std::size_t> dims{20, 40, 60, 80, 100, 120, 160, 200};
  std::vector<std::uint64_t> seeds{0, 1};
  std::string loss = "pnll";
  std::size_t epochs = 50;
  std::size_t batch = 128;
  double lr = 1e-3;
  std::size_t max_train_pairs = 0;
  double tau = 0.5;
  double slack = 0.1;
  std::size_t sample_pairs = 20000;
  std::size_t jobs = 1;
};

struct GridCmdConfig {
  fs::path data;
  fs::path out;
  std::vector<std::string> archs{"cnn5"};
  std::vector<std::size_t> dims{80};
  std::vector<std::string> losses{"mse", "mae", "rechi2", "pnll"};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t epochs = 50;
  std::size_t batch = 128;
  double lr = 1e-3;
  std::size_t max_train_pairs = 0;
  std::size_t jobs = 1;
};

void to_json(nlohmann::json& j, const GenDataConfig& c);
void from_json(const nlohmann::json& j, GenDataConfig& c);
void to_json(nlohmann::json& j, const TrainCmdConfig& c);
void from_json(const nlohmann::json& j, TrainCmdConfig& c);
void to_json(nlohmann::json& j, const EvalCmdConfig& c);
void from_json(const nlohmann::json& j, EvalCmdConfig& c);
void to_json(nlohmann::json& j, const EsdScanCmdConfig& c);
void from_json(const nlohmann::json& j, EsdScanCmdConfig& c);
void to_json(nlohmann::json& j, const GridCmdConfig& c);
void from_json(const nlohmann::json& j, GridCmdConfig& c);

// ---------------------------------------------------------------------------
// Commands

struct GenDataResult {
  MeanEstimate mean_distance;
  std::size_t train_pairs = 0;
  std::size_t test_pairs = 0;
};

struct TrainResult {
  std::vector<EpochLog> logs;
  double untrained_ae_h = 0.0;  // on the validation slice, before any update
};

struct EvalResult {
  EvalReport report;
  VarianceProfile variance;
  std::vector<std::pair<int, Chi2Fit>> chi2;
};

struct GridCell {
  std::string arch;
  std::size_t dim = 0;
  std::string loss;
  std::vector<double> ae_g;  // per successful seed
  std::vector<double> ae_h;
  std::size_t failed = 0;
};

GenDataResult cmd_gen_data(const GenDataConfig& cfg);
TrainResult cmd_train(const TrainCmdConfig& cfg);
EvalResult cmd_eval(const EvalCmdConfig& cfg);
EsdReport cmd_esd_scan(const EsdScanCmdConfig& cfg);
std::vector<GridCell> cmd_grid(const GridCmdConfig& cfg);

// Parses `levemb <command> [flags]`, runs it and maps errors to exit codes:
// 0 success, 1 usage, 2 data, 3 numeric.
int run_cli(int argc, char** argv);

}  // namespace levemb
