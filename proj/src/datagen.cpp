#include "levemb/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

namespace levemb {

namespace {

bool in_unit_interval(double p) { return p >= 0.0 && p <= 1.0; }

Code draw_symbol(const SymbolSet& symbols, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, symbols.count - 1);
  return static_cast<Code>(pick(rng));
}

Code draw_other_symbol(Code current, const SymbolSet& symbols, Rng& rng) {
  if (current >= symbols.count) return draw_symbol(symbols, rng);
  std::uniform_int_distribution<std::size_t> pick(0, symbols.count - 2);
  auto c = static_cast<Code>(pick(rng));
  return c >= current ? static_cast<Code>(c + 1) : c;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

int parse_int(std::string_view field, const std::string& where) {
  if (field.empty()) throw DataError(where + ": empty integer field");
  int value = 0;
  for (char c : field) {
    if (c < '0' || c > '9') throw DataError(where + ": bad integer '" + std::string(field) + "'");
    value = value * 10 + (c - '0');
  }
  return value;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

void EditChannelConfig::validate() const {
  if (!in_unit_interval(p_sub) || !in_unit_interval(p_del) || !in_unit_interval(p_ins)) {
    throw UsageError("edit channel probabilities must lie in [0, 1]");
  }
  if (p_sub + p_del + p_ins > 1.0 + 1e-12) {
    throw UsageError("edit channel probabilities must sum to at most 1");
  }
}

void SymbolSet::validate() const {
  if (alphabet == nullptr) throw UsageError("symbol set has no alphabet");
  if (count < 2 || count > alphabet->content_size()) {
    throw UsageError("symbol set must draw from 2.." +
                     std::to_string(alphabet->content_size()) + " symbols");
  }
}

std::span<const Sequence> Cluster::members() const {
  if (reads.empty()) return {&reference, 1};
  return reads;
}

Sequence random_sequence(std::size_t length, const SymbolSet& symbols, Rng& rng) {
  std::vector<Code> codes(length);
  for (auto& c : codes) c = draw_symbol(symbols, rng);
  return make_sequence(std::move(codes));
}

Sequence mutate(const Sequence& ref, const EditChannelConfig& cfg, const SymbolSet& symbols,
                Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double sub_end = cfg.p_sub;
  const double del_end = sub_end + cfg.p_del;
  const double ins_end = del_end + cfg.p_ins;

  std::vector<Code> out;
  out.reserve(ref.length + 8);
  for (Code c : ref.content()) {
    const double u = unit(rng);
    if (u < sub_end) {
      out.push_back(draw_other_symbol(c, symbols, rng));
    } else if (u < del_end) {
      // deleted
    } else if (u < ins_end) {
      out.push_back(draw_symbol(symbols, rng));
      out.push_back(c);
    } else {
      out.push_back(c);
    }
  }
  if (unit(rng) < cfg.p_ins) out.push_back(draw_symbol(symbols, rng));
  return make_sequence(std::move(out));
}

std::vector<Cluster> build_clusters(std::size_t n_clusters, std::size_t ref_len,
                                    std::size_t reads_per_cluster,
                                    const EditChannelConfig& cfg, Rng& rng,
                                    const SymbolSet& symbols) {
  cfg.validate();
  symbols.validate();
  if (n_clusters == 0 || ref_len == 0) {
    throw UsageError("cluster count and reference length must be positive");
  }
  std::vector<Cluster> clusters(n_clusters);
  for (std::size_t i = 0; i < n_clusters; ++i) {
    Cluster& c = clusters[i];
    c.id = static_cast<int>(i);
    c.reference = random_sequence(ref_len, symbols, rng);
    c.reads.reserve(reads_per_cluster);
    for (std::size_t r = 0; r < reads_per_cluster; ++r) {
      c.reads.push_back(mutate(c.reference, cfg, symbols, rng));
    }
  }
  return clusters;
}

PairSet make_pairs(std::span<const Cluster> clusters, std::size_t n_homologous,
                   std::size_t n_nonhomologous, Rng& rng) {
  PairSet out;
  out.samples.reserve(n_homologous + n_nonhomologous);

  if (n_homologous > 0) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      if (clusters[i].members().size() >= 2) {
        eligible.push_back(i);
      } else {
        ++out.skipped_clusters;
      }
    }
    if (eligible.empty()) throw DataError("no cluster has two members to pair");
    std::uniform_int_distribution<std::size_t> pick_cluster(0, eligible.size() - 1);
    for (std::size_t k = 0; k < n_homologous; ++k) {
      const auto members = clusters[eligible[pick_cluster(rng)]].members();
      std::uniform_int_distribution<std::size_t> pick_a(0, members.size() - 1);
      std::uniform_int_distribution<std::size_t> pick_b(0, members.size() - 2);
      const std::size_t a = pick_a(rng);
      std::size_t b = pick_b(rng);
      if (b >= a) ++b;
      out.samples.push_back({members[a], members[b], 0, true});
    }
  }

  if (n_nonhomologous > 0) {
    if (clusters.size() < 2) throw DataError("non-homologous pairs need at least two clusters");
    std::uniform_int_distribution<std::size_t> pick_a(0, clusters.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_b(0, clusters.size() - 2);
    for (std::size_t k = 0; k < n_nonhomologous; ++k) {
      const std::size_t a = pick_a(rng);
      std::size_t b = pick_b(rng);
      if (b >= a) ++b;
      const auto ma = clusters[a].members();
      const auto mb = clusters[b].members();
      std::uniform_int_distribution<std::size_t> ia(0, ma.size() - 1);
      std::uniform_int_distribution<std::size_t> ib(0, mb.size() - 1);
      const Sequence& s = ma[ia(rng)];
      const Sequence& t = mb[ib(rng)];
      out.samples.push_back({s, t, 0, false});
    }
  }

  std::shuffle(out.samples.begin(), out.samples.end(), rng);
  for (auto& sample : out.samples) sample.d = levenshtein(sample.s, sample.t);
  return out;
}

ClusterPartition partition_clusters(std::span<const Cluster> clusters, double test_fraction,
                                    Rng& rng) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw UsageError("test fraction must lie strictly between 0 and 1");
  }
  if (clusters.size() < 2) throw DataError("splitting needs at least two clusters");
  std::vector<std::size_t> order(clusters.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  auto n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(clusters.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, clusters.size() - 1);

  // Each side keeps input order.
  std::vector<std::size_t> test_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  ClusterPartition part;
  for (std::size_t i : train_idx) part.train.push_back(clusters[i]);
  for (std::size_t i : test_idx) part.test.push_back(clusters[i]);
  return part;
}

DatasetSplit split_by_cluster(std::span<const Cluster> clusters, double test_fraction,
                              PairCounts train_counts, PairCounts test_counts, Rng& rng) {
  std::set<int> ids;
  for (const auto& c : clusters) {
    if (!ids.insert(c.id).second) throw DataError("duplicate cluster id " + std::to_string(c.id));
  }
  const ClusterPartition part = partition_clusters(clusters, test_fraction, rng);
  DatasetSplit split;
  for (const auto& c : part.train) split.train_cluster_ids.insert(c.id);
  for (const auto& c : part.test) split.test_cluster_ids.insert(c.id);
  split.train = make_pairs(part.train, train_counts.homologous, train_counts.nonhomologous, rng).samples;
  split.test = make_pairs(part.test, test_counts.homologous, test_counts.nonhomologous, rng).samples;
  return split;
}

MeanEstimate estimate_M(std::span<const Cluster> clusters, std::size_t n_samples, Rng& rng) {
  if (clusters.size() < 2) throw DataError("estimating M needs at least two clusters");
  if (n_samples < 100) throw UsageError("estimating M needs at least 100 samples");
  const PairSet pairs = make_pairs(clusters, 0, n_samples, rng);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (const auto& p : pairs.samples) {
    sum += p.d;
    sum_sq += static_cast<double>(p.d) * p.d;
  }
  const auto n = static_cast<double>(n_samples);
  MeanEstimate est;
  est.samples = n_samples;
  est.mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * est.mean * est.mean) / (n - 1.0));
  est.std_error = std::sqrt(var / n);
  if (!(est.mean > 0.0)) throw DataError("dataset is degenerate: independent pairs have mean distance 0");
  return est;
}

void save_pairs(const std::filesystem::path& path, std::span<const PairSample> pairs,
                const Alphabet& alphabet) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& p : pairs) {
    out << to_string(p.s, alphabet) << '\t' << to_string(p.t, alphabet) << '\t' << p.d << '\t'
        << (p.homologous ? 1 : 0) << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<PairSample> load_pairs(const std::filesystem::path& path, Verify verify,
                                   const Alphabet& alphabet) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<PairSample> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw DataError(where + ": expected 4 tab-separated fields, got " +
                      std::to_string(fields.size()));
    }
    PairSample p;
    try {
      p.s = parse_sequence(fields[0], alphabet);
      p.t = parse_sequence(fields[1], alphabet);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    p.d = parse_int(fields[2], where);
    if (fields[3] != "0" && fields[3] != "1") {
      throw DataError(where + ": homologous flag must be 0 or 1");
    }
    p.homologous = fields[3] == "1";
    const bool check = verify == Verify::kAll || (verify == Verify::kSpot && pairs.size() % 100 == 0);
    if (check) {
      const int actual = levenshtein(p.s, p.t);
      if (actual != p.d) {
        throw DataError(where + ": stored distance " + std::to_string(p.d) +
                        " but sequences are at distance " + std::to_string(actual));
      }
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void save_clusters(const std::filesystem::path& path, std::span<const Cluster> clusters,
                   const Alphabet& alphabet) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& c : clusters) {
    out << c.id << '\t' << to_string(c.reference, alphabet) << '\n';
    for (const auto& r : c.reads) out << c.id << '\t' << to_string(r, alphabet) << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<Cluster> load_clusters(const std::filesystem::path& path, const Alphabet& alphabet) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<Cluster> clusters;
  std::map<int, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto fields = split_tabs(line);
    if (fields.size() != 2) throw DataError(where + ": expected cluster_id<TAB>sequence");
    const int id = parse_int(fields[0], where);
    Sequence seq;
    try {
      seq = parse_sequence(fields[1], alphabet);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    auto it = index.find(id);
    if (it == index.end()) {
      index.emplace(id, clusters.size());
      clusters.push_back(Cluster{id, std::move(seq), {}});
    } else {
      if (it->second + 1 != clusters.size()) {
        throw DataError(where + ": lines of cluster " + std::to_string(id) + " are not contiguous");
      }
      clusters.back().reads.push_back(std::move(seq));
    }
  }
  return clusters;
}

}  // namespace levemb
