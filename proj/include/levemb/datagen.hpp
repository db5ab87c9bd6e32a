#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <vector>

#include "levemb/rng.hpp"
#include "levemb/seqcore.hpp"

namespace levemb {

// Independent per-position substitution/deletion/insertion channel.
struct EditChannelConfig {
  double p_sub = 0.01;
  double p_del = 0.01;
  double p_ins = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

// Symbols the generator draws from: the first `count` content symbols of
// `alphabet` (for the DNA alphabet, 4 selects A, T, G, C).
struct SymbolSet {
  const Alphabet* alphabet = &Alphabet::dna();
  std::size_t count = 4;

  void validate() const;
};

struct Cluster {
  int id = 0;
  Sequence reference;
  std::vector<Sequence> reads;

  // Sequences eligible for pairing: the reads, or the reference alone when
  // the cluster has no reads.
  std::span<const Sequence> members() const;
};

struct PairSample {
  Sequence s;
  Sequence t;
  int d = 0;
  bool homologous = false;

  bool operator==(const PairSample&) const = default;
};

struct PairSet {
  std::vector<PairSample> samples;
  // Clusters that could not contribute homologous pairs (fewer than 2 members).
  std::size_t skipped_clusters = 0;
};

struct ClusterPartition {
  std::vector<Cluster> train;
  std::vector<Cluster> test;
};

struct DatasetSplit {
  std::vector<PairSample> train;
  std::vector<PairSample> test;
  std::set<int> train_cluster_ids;
  std::set<int> test_cluster_ids;
};

struct PairCounts {
  std::size_t homologous = 0;
  std::size_t nonhomologous = 0;
};

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

Sequence random_sequence(std::size_t length, const SymbolSet& symbols, Rng& rng);

Sequence mutate(const Sequence& ref, const EditChannelConfig& cfg, const SymbolSet& symbols,
                Rng& rng);

std::vector<Cluster> build_clusters(std::size_t n_clusters, std::size_t ref_len,
                                    std::size_t reads_per_cluster,
                                    const EditChannelConfig& cfg, Rng& rng,
                                    const SymbolSet& symbols = {});

PairSet make_pairs(std::span<const Cluster> clusters, std::size_t n_homologous,
                   std::size_t n_nonhomologous, Rng& rng);

ClusterPartition partition_clusters(std::span<const Cluster> clusters, double test_fraction,
                                    Rng& rng);

DatasetSplit split_by_cluster(std::span<const Cluster> clusters, double test_fraction,
                              PairCounts train_counts, PairCounts test_counts, Rng& rng);

// Monte-Carlo mean edit distance between members of distinct clusters.
MeanEstimate estimate_M(std::span<const Cluster> clusters, std::size_t n_samples, Rng& rng);

// Pair files: `s<TAB>t<TAB>d<TAB>homologous(0|1)` per line.
enum class Verify { kNone, kSpot, kAll };

void save_pairs(const std::filesystem::path& path, std::span<const PairSample> pairs,
                const Alphabet& alphabet = Alphabet::dna());
std::vector<PairSample> load_pairs(const std::filesystem::path& path,
                                   Verify verify = Verify::kNone,
                                   const Alphabet& alphabet = Alphabet::dna());

// Cluster files: `cluster_id<TAB>sequence`; the first line of each id is the
// reference, the following lines are its reads.
void save_clusters(const std::filesystem::path& path, std::span<const Cluster> clusters,
                   const Alphabet& alphabet = Alphabet::dna());
std::vector<Cluster> load_clusters(const std::filesystem::path& path,
                                   const Alphabet& alphabet = Alphabet::dna());

}  // namespace levemb
