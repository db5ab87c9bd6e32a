#include <doctest.h>

#include <cmath>
#include <random>

#include "levemb/nn/gradcheck.hpp"
#include "levemb/train.hpp"
#include "unit/helpers.hpp"

using namespace levemb;

namespace {

ArchitectureSpec small_spec(ArchKind kind = ArchKind::kCnn5, std::size_t dim = 6) {
  ArchitectureSpec s;
  s.kind = kind;
  s.embedding_dim = dim;
  s.input_len = 32;
  s.hidden = 8;
  return s;
}

std::vector<PairSample> random_pairs(std::size_t count, std::size_t max_len, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(max_len / 2, max_len);
  std::vector<PairSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    PairSample p;
    p.s = testing::random_dna(len(rng), rng);
    p.t = testing::random_dna(len(rng), rng);
    p.d = levenshtein(p.s, p.t);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Sequence> padded(const std::vector<PairSample>& pairs, bool first, std::size_t len) {
  std::vector<Sequence> out;
  for (const auto& p : pairs) out.push_back(pad(first ? p.s : p.t, len, Alphabet::dna()));
  return out;
}

}  // namespace

TEST_CASE("architectures produce embeddings of the requested width") {
  std::mt19937_64 rng(1);
  for (ArchKind kind : {ArchKind::kCnn5, ArchKind::kCnn10, ArchKind::kCnn5Wide, ArchKind::kCnn10Wide}) {
    ArchitectureSpec spec;
    spec.kind = kind;
    spec.embedding_dim = 12;
    spec.hidden = 16;
    EmbeddingModel<float> model(spec, 3);
    std::vector<Sequence> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(pad(testing::random_dna(150, rng), 160, Alphabet::dna()));
    const BasicTensor<float> emb = model.embed(batch, Mode::kEval);
    CHECK(emb.shape() == Shape{3, 12});
    CHECK(parse_arch(to_string(kind)) == kind);
  }
  CHECK(ArchitectureSpec{}.flat_features() == 64 * 5);
  CHECK_THROWS_AS(parse_arch("cnn7"), UsageError);
  ArchitectureSpec bad = small_spec();
  bad.input_len = 16;
  CHECK_THROWS_AS(EmbeddingModel<float>(bad, 0), UsageError);
}

TEST_CASE("init scale matches the mean distance at initialization") {
  CHECK(std::exp(init_scale(80.0, 40)) == doctest::Approx(1.0));
  CHECK(std::exp(2 * init_scale(82.0, 80)) == doctest::Approx(82.0 / 160.0));
  const double u[] = {1.0, 2.0, 3.0}, v[] = {0.0, 0.0, 1.0};
  CHECK(predict_distance(std::span<const double>(u), std::span<const double>(v), 0.5) ==
        doctest::Approx(0.25 * 9.0));
}

TEST_CASE("whole-model pair gradients match central differences") {
  std::mt19937_64 rng(2);
  ArchitectureSpec spec = small_spec();
  spec.input_len = 64;
  spec.hidden = 32;
  EmbeddingModel<double> model(spec, 11);
  model.set_log_scale(0.3);
  const auto pairs = random_pairs(8, 60, rng);
  const auto left = padded(pairs, true, spec.input_len);
  const auto right = padded(pairs, false, spec.input_len);

  // Independent objective: mean of dhat - d ln dhat.
  auto objective = [&] {
    std::vector<Sequence> both = left;
    both.insert(both.end(), right.begin(), right.end());
    const TensorD e = model.embed(both, Mode::kBatchStats);
    const double r2 = std::exp(2.0 * model.log_scale().value[0]);
    double total = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < spec.embedding_dim; ++j) {
        const double diff = e[i * spec.embedding_dim + j] - e[(pairs.size() + i) * spec.embedding_dim + j];
        sq += diff * diff;
      }
      const double dhat = r2 * sq;
      total += dhat - pairs[i].d * std::log(dhat);
    }
    return total / static_cast<double>(pairs.size());
  };

  model.zero_grad();
  const double value = accumulate_pair_gradients<double>(model, pairs, parse_loss("pnll"), Mode::kBatchStats);
  CHECK(value == doctest::Approx(objective()).epsilon(1e-12));

  auto params = model.parameters();
  nn::GradCheckOptions opt;
  opt.max_coords = 24;
  opt.h = 1e-6;
  // Biases feeding batch normalization through always-active units have an
  // exact zero gradient; their finite differences are pure rounding noise.
  double largest = 0.0;
  for (const auto* p : params)
    for (double g : p->grad.data()) largest = std::max(largest, std::abs(g));
  opt.abs_floor = 1e-4 * largest;
  const auto rep = nn::grad_check(objective, params, opt);
  CHECK_MESSAGE(rep.passed, rep.worst, " rel ", rep.max_rel_error);
  CHECK(rep.checked > 100);
}

TEST_CASE("training is deterministic and zero epochs leave the model unchanged") {
  std::mt19937_64 rng(3);
  const ArchitectureSpec spec = small_spec(ArchKind::kCnn5, 4);
  const auto train_set = random_pairs(40, 30, rng);
  const auto val = random_pairs(8, 30, rng);

  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 8;
  EmbeddingModel<float> untouched(spec, 5);
  EmbeddingModel<float> reference(spec, 5);
  TrainState state;
  CHECK(train(untouched, train_set, val, cfg, state).empty());
  const auto a = untouched.parameters();
  const auto b = reference.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::equal(a[i]->value.data().begin(), a[i]->value.data().end(), b[i]->value.data().begin()));
  }

  cfg.epochs = 2;
  EmbeddingModel<float> m1(spec, 5), m2(spec, 5);
  TrainState s1, s2;
  const auto l1 = train(m1, train_set, val, cfg, s1);
  const auto l2 = train(m2, train_set, val, cfg, s2);
  REQUIRE(l1.size() == 2);
  CHECK(l1[1].loss == l2[1].loss);
  CHECK(l1[1].ae_h == l2[1].ae_h);
  CHECK(s1.epochs_completed == 2);
  CHECK(s1.adam_steps == 10);
  const auto p1 = m1.parameters();
  const auto p2 = m2.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(std::equal(p1[i]->value.data().begin(), p1[i]->value.data().end(), p2[i]->value.data().begin()));
  }
}

TEST_CASE("resuming matches an uninterrupted run") {
  std::mt19937_64 rng(4);
  const ArchitectureSpec spec = small_spec(ArchKind::kCnn5, 4);
  const auto train_set = random_pairs(24, 30, rng);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 3;
  EmbeddingModel<float> full(spec, 7), split(spec, 7);
  TrainState s_full, s_split;
  train(full, train_set, {}, cfg, s_full);
  cfg.epochs = 1;
  train(split, train_set, {}, cfg, s_split);
  cfg.epochs = 3;
  train(split, train_set, {}, cfg, s_split);
  const auto a = full.parameters();
  const auto b = split.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::equal(a[i]->value.data().begin(), a[i]->value.data().end(), b[i]->value.data().begin()));
  }
}

TEST_CASE("copy_to preserves embeddings across precisions") {
  std::mt19937_64 rng(5);
  const ArchitectureSpec spec = small_spec();
  EmbeddingModel<float> f(spec, 9);
  EmbeddingModel<double> d(spec, 1);
  f.copy_to(d);
  std::vector<Sequence> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(pad(testing::random_dna(25, rng), 32, Alphabet::dna()));
  const BasicTensor<float> ef = f.embed(batch, Mode::kEval);
  const TensorD ed = d.embed(batch, Mode::kEval);
  for (std::size_t i = 0; i < ef.size(); ++i) CHECK(ed[i] == doctest::Approx(ef[i]).epsilon(1e-4).scale(1e-3));
  EmbeddingModel<double> other(small_spec(ArchKind::kCnn10), 0);
  CHECK_THROWS_AS(f.copy_to(other), ShapeError);
}
