#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "synres/datagen.hpp"
#include "synres/errors.hpp"

using namespace synres;
namespace fs = std::filesystem;

namespace {

TaskSpec copy_spec(std::size_t payload, std::size_t samples) {
  TaskSpec s;
  s.kind = TaskKind::copy;
  s.seq_len = 2 * payload + 2;
  s.samples = samples;
  return s;
}

TaskSpec kv_spec(std::size_t n, std::size_t m, std::vector<std::size_t> dist, std::size_t samples) {
  TaskSpec s;
  s.kind = TaskKind::kv_recall;
  s.seq_len = n;
  s.pairs = m;
  s.distances = std::move(dist);
  s.samples = samples;
  return s;
}

fs::path temp_file(const std::string& name, const std::string& content) {
  const fs::path p = fs::temp_directory_path() / ("synres_test_" + name);
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

}  // namespace

TEST(VocabLayout, SyntheticAndBytes) {
  const auto l = VocabLayout::synthetic(64, 16);
  EXPECT_NO_THROW(l.validate());
  EXPECT_EQ(l.keys.lo, 5);
  EXPECT_EQ(l.values, (TokenRange{48, 64}));
  EXPECT_EQ(l.symbols(), (TokenRange{5, 64}));
  const auto b = VocabLayout::bytes();
  EXPECT_EQ(b.vocab_size, 261u);
  EXPECT_TRUE(b.is_special(256));
  EXPECT_FALSE(b.is_special('a'));
  EXPECT_THROW(VocabLayout::synthetic(8, 8).validate(), ConfigError);
}

TEST(GenCopy, SmallestInstance) {
  const auto spec = copy_spec(1, 1);
  const auto layout = spec.layout();
  Rng rng(1);
  const auto d = gen_copy(spec, layout, rng, 1);
  const auto& b = d.data;
  ASSERT_EQ(b.seq_len, 4u);
  const std::int32_t a = b.tokens[1];
  EXPECT_EQ(b.tokens, (std::vector<std::int32_t>{layout.bos, a, layout.sep, a}));
  // Row t predicts token t + 1, so the final `a` is the target at position 2.
  EXPECT_EQ(b.mask, (std::vector<std::uint8_t>{0, 0, 1, 0}));
  EXPECT_EQ(b.targets[2], a);
  EXPECT_EQ(b.masked_count(), 1u);
}

TEST(GenCopy, ScanOfTenThousandRows) {
  const auto spec = copy_spec(16, 10000);
  const auto layout = spec.layout();
  Rng rng(2);
  const auto d = gen_copy(spec, layout, rng, 10000);
  const auto& b = d.data;
  ASSERT_NO_THROW(b.validate(layout.vocab_size));
  const std::size_t n = b.seq_len, k = 16;
  for (std::size_t r = 0; r < b.rows; ++r) {
    auto row = b.row_tokens(r);
    ASSERT_EQ(row[0], layout.bos);
    ASSERT_EQ(row[k + 1], layout.sep);
    for (std::size_t i = 1; i <= k; ++i) {
      ASSERT_FALSE(layout.is_special(row[i]));
      ASSERT_EQ(row[i], row[k + 1 + i]);
    }
    for (std::size_t t = 0; t < n; ++t) {
      const bool scored = b.mask[r * n + t] != 0;
      ASSERT_EQ(scored, t >= k + 1 && t < 2 * k + 1);
      if (scored) ASSERT_EQ(b.targets[r * n + t], row[t + 1]);
    }
  }
}

TEST(GenCopy, Deterministic) {
  const auto spec = copy_spec(8, 50);
  Rng a(3), b(3);
  EXPECT_EQ(gen_copy(spec, spec.layout(), a, 50).data, gen_copy(spec, spec.layout(), b, 50).data);
  TaskSpec odd = spec;
  odd.seq_len = 9;
  EXPECT_THROW(odd.validate(), ConfigError);
}

TEST(GenKvRecall, SmallestInstance) {
  const auto spec = kv_spec(4, 1, {2}, 1);
  const auto layout = spec.layout();
  Rng rng(4);
  const auto d = gen_kv_recall(spec, layout, rng, 1);
  const auto& t = d.data.tokens;
  EXPECT_TRUE(layout.keys.contains(t[0]));
  EXPECT_TRUE(layout.values.contains(t[1]));
  EXPECT_EQ(t[2], layout.query);
  EXPECT_EQ(t[3], t[0]);
  EXPECT_EQ(d.data.targets[3], t[1]);
  EXPECT_EQ(d.data.mask, (std::vector<std::uint8_t>{0, 0, 0, 1}));
  EXPECT_EQ(d.data.distance[0], 2);
}

TEST(GenKvRecall, AnswerConsistencyAndDistanceHistogram) {
  const std::vector<std::size_t> dist{16, 32, 64};
  const auto spec = kv_spec(80, 4, dist, 3000);
  const auto layout = spec.layout();
  Rng rng(5);
  const auto d = gen_kv_recall(spec, layout, rng, 3000);
  const auto& b = d.data;
  ASSERT_NO_THROW(b.validate(layout.vocab_size));
  EXPECT_EQ(d.answers, layout.values);
  const std::size_t n = b.seq_len;
  std::map<std::int32_t, std::size_t> hist;
  std::set<std::size_t> queried_slot;
  for (std::size_t r = 0; r < b.rows; ++r) {
    auto row = b.row_tokens(r);
    ++hist[b.distance[r]];
    ASSERT_EQ(row[n - 2], layout.query);
    const std::int32_t key = row[n - 1];
    ASSERT_TRUE(layout.keys.contains(key));
    // The only earlier occurrence of the key is followed by the answer, which
    // sits `distance` positions before the final token.
    std::size_t occurrences = 0;
    std::set<std::int32_t> keys;
    for (std::size_t t = 0; t + 2 < n; ++t) {
      if (layout.keys.contains(row[t])) {
        ASSERT_TRUE(keys.insert(row[t]).second) << "duplicate key in row " << r;
        ASSERT_TRUE(layout.values.contains(row[t + 1]));
      }
      if (row[t] == key) {
        ++occurrences;
        ASSERT_EQ(row[t + 1], b.targets[r * n + n - 1]);
        ASSERT_EQ(static_cast<std::int32_t>(n - 1 - (t + 1)), b.distance[r]);
      }
    }
    ASSERT_EQ(occurrences, 1u);
    ASSERT_EQ(keys.size(), 4u);
    ASSERT_TRUE(layout.values.contains(b.targets[r * n + n - 1]));
    for (std::size_t t = 0; t + 1 < n; ++t) ASSERT_EQ(b.mask[r * n + t], 0);
  }
  EXPECT_EQ(hist, (std::map<std::int32_t, std::size_t>{{16, 1000}, {32, 1000}, {64, 1000}}));
}

TEST(GenKvRecall, IncompatibleDistancesRejected) {
  EXPECT_THROW(kv_spec(40, 4, {36}, 10).validate(), ConfigError);
  EXPECT_THROW(kv_spec(40, 4, {4}, 10).validate(), ConfigError);
  EXPECT_NO_THROW(kv_spec(40, 4, {8, 32}, 10).validate());
}

TEST(Corpus, SmallestFile) {
  const auto p = temp_file("ab", "ab");
  const auto layout = VocabLayout::bytes();
  const auto split = load_corpus(p, 1.0, 0.0, layout);
  const auto d = corpus_windows(split.train, 1, layout);
  ASSERT_EQ(d.data.rows, 1u);
  EXPECT_EQ(d.data.tokens[0], 'a');
  EXPECT_EQ(d.data.targets[0], 'b');
  EXPECT_EQ(d.data.mask[0], 1);
  EXPECT_THROW(corpus_windows(split.train, 2, layout), DimensionError);
}

TEST(Corpus, SplitAndRoundTrip) {
  std::string content;
  for (int i = 0; i < 1000; ++i) content.push_back(static_cast<char>((i * 37 + 11) % 256));
  const auto p = temp_file("k", content);
  const auto split = load_corpus(p, 0.9, 0.1, VocabLayout::bytes());
  EXPECT_EQ(split.train.size(), 900u);
  EXPECT_EQ(split.validation.size(), 100u);
  EXPECT_EQ(detokenize(split.train) + detokenize(split.validation), content);
}

TEST(Corpus, Errors) {
  EXPECT_THROW(load_corpus("/nonexistent/corpus.txt", 0.9, 0.1, VocabLayout::bytes()), IoError);
  const auto empty = temp_file("empty", "");
  EXPECT_THROW(load_corpus(empty, 0.9, 0.1, VocabLayout::bytes()), IoError);
}

TEST(Noise, ZeroAndFullReplacement) {
  const auto spec = kv_spec(40, 3, {8, 16}, 200);
  const auto layout = spec.layout();
  Rng g(6);
  const auto d = gen_kv_recall(spec, layout, g, 200);
  Rng r0(1);
  EXPECT_EQ(inject_noise(d.data, 0.0, layout, r0), d.data);

  Rng r1(2);
  NoiseStats stats;
  const auto noisy = inject_noise(d.data, 1.0, layout, r1, &stats);
  EXPECT_EQ(stats.replaced, stats.eligible);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < noisy.tokens.size(); ++i) {
    if (d.data.protect[i]) {
      ASSERT_EQ(noisy.tokens[i], d.data.tokens[i]);
    } else {
      ASSERT_FALSE(layout.is_special(noisy.tokens[i]));
      differing += noisy.tokens[i] != d.data.tokens[i];
    }
  }
  EXPECT_GT(differing, stats.eligible / 2);
  EXPECT_EQ(noisy.targets, d.data.targets);
  EXPECT_EQ(noisy.mask, d.data.mask);
  EXPECT_EQ(noisy.distance, d.data.distance);
  EXPECT_EQ(noisy.protect, d.data.protect);
}

TEST(Noise, ReplacementFractionMonteCarlo) {
  const auto spec = copy_spec(48, 1000);  // 98 positions per row
  const auto layout = spec.layout();
  Rng g(7);
  const auto d = gen_copy(spec, layout, g, 1100);
  Rng r(8);
  NoiseStats stats;
  inject_noise(d.data, 0.2, layout, r, &stats);
  ASSERT_GE(stats.eligible, 100000u);
  EXPECT_NEAR(double(stats.replaced) / double(stats.eligible), 0.2, 0.005);
}

TEST(Noise, Deterministic) {
  const auto spec = copy_spec(8, 20);
  Rng g(9);
  const auto d = gen_copy(spec, spec.layout(), g, 20);
  Rng a(10), b(10);
  EXPECT_EQ(inject_noise(d.data, 0.3, spec.layout(), a), inject_noise(d.data, 0.3, spec.layout(), b));
}

TEST(Batches, GroupingAndShuffle) {
  const auto spec = copy_spec(2, 10);
  Rng g(11);
  const auto d = gen_copy(spec, spec.layout(), g, 10);
  Rng r(1);
  const auto plain = batches(d.data, 3, r, false);
  ASSERT_EQ(plain.size(), 4u);
  EXPECT_EQ(plain[0].rows, 3u);
  EXPECT_EQ(plain[3].rows, 1u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_TRUE(std::equal(plain[i / 3].row_tokens(i % 3).begin(), plain[i / 3].row_tokens(i % 3).end(),
                           d.data.row_tokens(i).begin()));
  }
  Rng s1(5), s2(5);
  const auto a = batches(d.data, 4, s1, true);
  const auto b = batches(d.data, 4, s2, true);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  Rng e(1);
  EXPECT_THROW(batches(Batch(), 4, e, false), std::invalid_argument);
  EXPECT_THROW(batches(d.data, 0, e, false), std::invalid_argument);
}

TEST(MakeDatasets, DisjointSeedsAndPurity) {
  auto spec = kv_spec(48, 2, {8, 16}, 64);
  spec.val_samples = 32;
  const auto a = make_datasets(spec);
  const auto b = make_datasets(spec);
  EXPECT_EQ(a.train.data, b.train.data);
  EXPECT_EQ(a.validation.data.rows, 32u);
  EXPECT_NE(a.train.data.digest(), a.validation.data.digest());
}
