#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

#include "levemb/datagen.hpp"
#include "unit/helpers.hpp"

using namespace levemb;

TEST_CASE("channel validation") {
  CHECK_THROWS_AS((EditChannelConfig{1.5, 0, 0, 0}.validate()), UsageError);
  CHECK_THROWS_AS((EditChannelConfig{0, -0.1, 0, 0}.validate()), UsageError);
  CHECK_NOTHROW((EditChannelConfig{0, 0, 1, 0}.validate()));
}

TEST_CASE("mutate edge cases") {
  Rng rng(1);
  const Sequence ref = random_sequence(120, {}, rng);
  CHECK(ref.length == 120);
  for (Code c : ref.content()) CHECK(c < 4);

  CHECK(mutate(ref, {0, 0, 0, 0}, {}, rng) == ref);

  const Sequence all_sub = mutate(ref, {1, 0, 0, 0}, {}, rng);
  CHECK(all_sub.length == ref.length);
  for (std::size_t i = 0; i < ref.length; ++i) CHECK(all_sub.codes[i] != ref.codes[i]);
  CHECK(levenshtein(all_sub, ref) <= 120);
  CHECK(levenshtein(all_sub, ref) > 0);

  CHECK(mutate(ref, {0, 1, 0, 0}, {}, rng).length == 0);
  // Insertion before every position plus the trailing slot.
  CHECK(mutate(ref, {0, 0, 1, 0}, {}, rng).length == 241);
}

TEST_CASE("mutation rate matches the channel") {
  Rng rng(2);
  const Sequence ref = random_sequence(150, {}, rng);
  double total = 0.0;
  const int trials = 400;
  for (int i = 0; i < trials; ++i) total += levenshtein(mutate(ref, {0.01, 0.01, 0.01, 0}, {}, rng), ref);
  // 150 * 0.02 + 151 * 0.01 = 4.51 edits per read; alignment can only merge edits.
  const double mean = total / trials;
  CHECK(mean > 3.9);
  CHECK(mean < 4.7);
}

TEST_CASE("clusters are deterministic under the seed") {
  Rng a(5), b(5), c(6);
  const auto x = build_clusters(20, 50, 3, {}, a);
  const auto y = build_clusters(20, 50, 3, {}, b);
  const auto z = build_clusters(20, 50, 3, {}, c);
  REQUIRE(x.size() == 20);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x[i].id == static_cast<int>(i));
    CHECK(x[i].reads.size() == 3);
    CHECK(x[i].reference == y[i].reference);
    CHECK(x[i].reads == y[i].reads);
  }
  CHECK_FALSE(x[0].reference == z[0].reference);
}

TEST_CASE("members fall back to the reference") {
  Rng rng(3);
  const auto clusters = build_clusters(4, 30, 0, {}, rng);
  CHECK(clusters[0].members().size() == 1);
  CHECK(clusters[0].members()[0] == clusters[0].reference);
  CHECK(make_pairs(clusters, 0, 5, rng).samples.size() == 5);
}

TEST_CASE("pairs carry oracle labels and flags") {
  Rng rng(4);
  const auto clusters = build_clusters(30, 60, 4, {0.02, 0.02, 0.02, 0}, rng);
  const PairSet ps = make_pairs(clusters, 200, 150, rng);
  REQUIRE(ps.samples.size() == 350);
  std::size_t hom = 0;
  std::map<std::vector<Code>, int> owner;
  for (const auto& c : clusters) {
    for (const auto& r : c.reads) owner[r.codes] = c.id;
  }
  for (const auto& p : ps.samples) {
    CHECK(p.d == levenshtein(p.s, p.t));
    hom += p.homologous;
    if (p.homologous) {
      CHECK(owner.at(p.s.codes) == owner.at(p.t.codes));
    } else {
      CHECK(owner.at(p.s.codes) != owner.at(p.t.codes));
    }
  }
  CHECK(hom == 200);
}

TEST_CASE("no homologous pairs from single-member clusters") {
  Rng rng(5);
  const auto lonely = build_clusters(5, 20, 1, {}, rng);
  CHECK_THROWS_AS(make_pairs(lonely, 3, 0, rng), DataError);
  const PairSet only_non = make_pairs(lonely, 0, 10, rng);
  CHECK(only_non.samples.size() == 10);
}

TEST_CASE("split has no leakage") {
  Rng rng(6);
  const auto clusters = build_clusters(50, 40, 4, {}, rng);
  const DatasetSplit split = split_by_cluster(clusters, 0.2, {100, 100}, {40, 40}, rng);
  CHECK(split.test_cluster_ids.size() == 10);
  CHECK(split.train_cluster_ids.size() == 40);
  for (int id : split.test_cluster_ids) CHECK(split.train_cluster_ids.count(id) == 0);
  std::set<std::vector<Code>> train_seqs;
  for (const auto& p : split.train) {
    train_seqs.insert(p.s.codes);
    train_seqs.insert(p.t.codes);
  }
  for (const auto& p : split.test) {
    CHECK(train_seqs.count(p.s.codes) == 0);
    CHECK(train_seqs.count(p.t.codes) == 0);
  }
  CHECK_THROWS_AS(partition_clusters(clusters, 1.0, rng), UsageError);
}

TEST_CASE("mean distance estimate") {
  Rng rng(7);
  const auto clusters = build_clusters(200, 150, 2, {}, rng);
  const MeanEstimate m = estimate_M(clusters, 1000, rng);
  // Random length-150 strings over 4 symbols sit near 0.52 n apart.
  CHECK(m.mean > 70.0);
  CHECK(m.mean < 90.0);
  CHECK(m.std_error > 0.0);
  CHECK(m.std_error < 1.0);
  CHECK_THROWS_AS(estimate_M(clusters, 10, rng), UsageError);
}

TEST_CASE("pair and cluster files round trip") {
  testing::TempDir dir("datagen");
  Rng rng(8);
  const auto clusters = build_clusters(6, 25, 2, {}, rng);
  const PairSet ps = make_pairs(clusters, 7, 7, rng);
  save_pairs(dir.path / "p.tsv", ps.samples);
  CHECK(load_pairs(dir.path / "p.tsv", Verify::kAll) == ps.samples);
  save_clusters(dir.path / "c.tsv", clusters);
  const auto back = load_clusters(dir.path / "c.tsv");
  REQUIRE(back.size() == clusters.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == clusters[i].id);
    CHECK(back[i].reference == clusters[i].reference);
    CHECK(back[i].reads == clusters[i].reads);
  }
}

TEST_CASE("corrupt pair files are rejected with a line number") {
  testing::TempDir dir("datagen_bad");
  {
    std::ofstream out(dir.path / "bad.tsv");
    out << "ACGT\tACGA\t1\t1\n";
    out << "ACGT\tTTTT\t1\t0\n";
  }
  CHECK_NOTHROW(load_pairs(dir.path / "bad.tsv", Verify::kNone));
  try {
    load_pairs(dir.path / "bad.tsv", Verify::kAll);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  {
    std::ofstream out(dir.path / "fields.tsv");
    out << "ACGT\tACGA\t1\n";
  }
  CHECK_THROWS_AS(load_pairs(dir.path / "fields.tsv"), DataError);
  {
    std::ofstream out(dir.path / "chars.tsv");
    out << "ACXT\tACGA\t1\t1\n";
  }
  CHECK_THROWS_AS(load_pairs(dir.path / "chars.tsv"), DataError);
}
