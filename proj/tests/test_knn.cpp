#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sslprobe/knn.hpp"

using namespace sslprobe;

TEST(Knn, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 30 + rng() % 120, d = 2 + rng() % 20;
    const auto train = oracle::random_features(n, d, 6, rng());
    const auto query = oracle::random_features(25, d, 6, rng());
    for (std::size_t k : {1u, 5u, 20u})
      for (bool weighted : {true, false}) {
        KnnConfig cfg;
        cfg.k = k;
        cfg.voting = weighted ? Voting::weighted : Voting::uniform;
        EXPECT_EQ(knn_predict(train, query, cfg), oracle::knn(train, query, k, 0.07, weighted))
            << "trial " << trial << " k " << k;
      }
  }
}

TEST(Knn, DuplicatedTrainingRowsBreakTiesByIndex) {
  // Identical rows with different labels: the lower index wins a k=1 tie.
  auto train = make_features(3, 2, {1, 0, 1, 0, 0, 1}, std::vector<std::uint32_t>{2, 1, 0});
  auto query = make_features(1, 2, {1, 0});
  KnnConfig cfg;
  cfg.k = 1;
  EXPECT_EQ(knn_predict(train, query, cfg)[0], 2u);
  cfg.k = 2;
  cfg.voting = Voting::uniform;
  // one vote each for classes 2 and 1: lowest class index wins
  EXPECT_EQ(knn_predict(train, query, cfg)[0], 1u);
}

TEST(Knn, InvariantToPositiveRowScaling) {
  auto train = oracle::random_features(80, 6, 4, 5);
  auto query = oracle::random_features(20, 6, 4, 6);
  auto scaled = query;
  for (std::size_t i = 0; i < scaled.n_rows; ++i)
    for (auto& v : scaled.row(i)) v *= 8.0f;  // power of two: exact in float
  KnnConfig cfg;
  cfg.k = 5;
  EXPECT_EQ(knn_predict(train, query, cfg), knn_predict(train, scaled, cfg));
}

TEST(Knn, QueryOrderDoesNotMatter) {
  auto train = oracle::random_features(60, 5, 3, 8);
  auto query = oracle::random_features(10, 5, 3, 9);
  auto reversed = query;
  for (std::size_t i = 0; i < query.n_rows; ++i) {
    auto src = query.row(query.n_rows - 1 - i);
    std::copy(src.begin(), src.end(), reversed.row(i).begin());
  }
  const auto a = knn_predict(train, query);
  const auto b = knn_predict(train, reversed);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[a.size() - 1 - i]);
}

TEST(Knn, ThreadCountDoesNotChangePredictions) {
  auto train = oracle::random_features(100, 8, 5, 1);
  auto query = oracle::random_features(40, 8, 5, 2);
  KnnConfig one, four;
  four.threads = 4;
  EXPECT_EQ(knn_predict(train, query, one), knn_predict(train, query, four));
}

TEST(Knn, SweepAgreesWithSingleRuns) {
  auto train = oracle::random_features(90, 6, 3, 21);
  auto test = oracle::random_features(30, 6, 3, 22);
  const std::size_t ks[] = {20, 1, 5};
  const auto sweep = knn_sweep(train, test, ks);
  ASSERT_EQ(sweep.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(sweep[i].k, ks[i]);
    KnnConfig cfg;
    cfg.k = ks[i];
    EXPECT_DOUBLE_EQ(sweep[i].accuracy, knn_accuracy(train, test, cfg));
  }
}

TEST(Knn, SeparatedClustersAreClassifiedPerfectly) {
  std::vector<float> tr, q;
  std::vector<std::uint32_t> labels, qlabels;
  for (int i = 0; i < 30; ++i) {
    const std::uint32_t c = i % 3;
    tr.insert(tr.end(), {c == 0 ? 1.0f : 0.01f * i, c == 1 ? 1.0f : 0.0f, c == 2 ? 1.0f : 0.0f});
    labels.push_back(c);
  }
  for (std::uint32_t c = 0; c < 3; ++c) {
    q.insert(q.end(), {c == 0 ? 2.0f : 0.0f, c == 1 ? 2.0f : 0.0f, c == 2 ? 2.0f : 0.0f});
    qlabels.push_back(c);
  }
  auto train = make_features(30, 3, tr, labels);
  auto test = make_features(3, 3, q, qlabels);
  KnnConfig cfg;
  cfg.k = 5;
  EXPECT_DOUBLE_EQ(knn_accuracy(train, test, cfg), 1.0);
}

TEST(Knn, ErrorsAreTyped) {
  auto train = oracle::random_features(5, 3, 2, 1);
  auto query = oracle::random_features(2, 4, 2, 1);
  try {
    knn_predict(train, query);
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.kind() == ErrorKind::shape || e.kind() == ErrorKind::config);
  }
  auto ok_query = oracle::random_features(2, 3, 2, 1);
  KnnConfig cfg;
  cfg.k = 6;
  try {
    knn_predict(train, ok_query, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
  auto unlabeled = make_features(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_THROW(knn_predict(unlabeled, ok_query), Error);
}

TEST(Knn, ParseVoting) {
  EXPECT_EQ(parse_voting("uniform"), Voting::uniform);
  EXPECT_EQ(parse_voting("weighted"), Voting::weighted);
  EXPECT_THROW(parse_voting("majority"), Error);
}
