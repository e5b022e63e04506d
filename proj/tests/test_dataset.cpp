#include <aknn/dataset.hpp>
#include <aknn/random.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace {

using aknn::DataError;
using aknn::LabeledDataset;

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("aknn_test_" + name)).string();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream(path, std::ios::binary) << content;
}

template <class Fn>
void expect_data_error(Fn fn, const std::string& fragment) {
  try {
    fn();
    FAIL() << "expected DataError containing '" << fragment << "'";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(Csv, ThreeRowsTwoFeatures) {
  const auto path = temp_path("three.csv");
  write_file(path, "u,v,label\n1.5,2,a\n-3,4e-1,b\n0,0,a\n");
  const auto ds = aknn::load_csv(path, "label");
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.dim(), 2u);
  EXPECT_EQ(ds.alphabet(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(std::vector<aknn::LabelId>(ds.labels().begin(), ds.labels().end()), (std::vector<aknn::LabelId>{0, 1, 0}));
  EXPECT_DOUBLE_EQ(ds.row(1)[0], -3.0);
  EXPECT_DOUBLE_EQ(ds.row(1)[1], 0.4);
  EXPECT_EQ(ds.feature_names(), (std::vector<std::string>{"u", "v"}));
}

TEST(Csv, LabelColumnMayBeAnywhere) {
  const auto ds = aknn::parse_csv("y,f\n b , 1\na,2\n", "y");
  EXPECT_EQ(ds.alphabet(), (std::vector<std::string>{"b", "a"}));
  EXPECT_DOUBLE_EQ(ds.row(0)[0], 1.0);
}

TEST(Csv, LabelOnlyFileHasNoFeatureColumns) {
  expect_data_error([] { aknn::parse_csv("label\na\nb\n", "label"); }, "no feature columns");
}

TEST(Csv, NanCellIsNonFinite) {
  expect_data_error([] { aknn::parse_csv("x,label\nNaN,a\n", "label"); }, "non-finite feature");
  expect_data_error([] { aknn::parse_csv("x,label\ninf,a\n", "label"); }, "non-finite feature");
  expect_data_error([] { aknn::parse_csv("x,label\n1e999,a\n", "label"); }, "non-finite feature");
}

TEST(Csv, ErrorPaths) {
  expect_data_error([] { aknn::load_csv(temp_path("does_not_exist.csv"), "label"); }, "cannot open");
  expect_data_error([] { aknn::parse_csv("", "label"); }, "missing header");
  expect_data_error([] { aknn::parse_csv("x,x,label\n1,2,a\n", "label"); }, "duplicate header");
  expect_data_error([] { aknn::parse_csv("x,y\n1,2\n", "label"); }, "not found");
  expect_data_error([] { aknn::parse_csv("x,label\nabc,a\n", "label"); }, "non-numeric");
  expect_data_error([] { aknn::parse_csv("x,label\n", "label"); }, "empty dataset");
  expect_data_error([] { aknn::parse_csv("x,label\n1,a,3\n", "label"); }, "cells");
}

TEST(Csv, RoundTripIsIdentity) {
  aknn::Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(40), dim = 1 + rng.below(4), labels = 1 + rng.below(4);
    std::vector<double> f(n * dim);
    for (auto& v : f) v = (rng.uniform() - 0.5) * std::pow(10.0, static_cast<double>(rng.below(20)) - 10.0);
    std::vector<aknn::LabelId> y(n);
    for (auto& v : y) v = static_cast<aknn::LabelId>(rng.below(labels));
    // Relabel so the alphabet is in first-appearance order, as a parser sees it.
    std::vector<std::string> alphabet;
    std::vector<aknn::LabelId> map(labels, 99);
    for (auto& v : y) {
      if (map[v] == 99) {
        map[v] = static_cast<aknn::LabelId>(alphabet.size());
        alphabet.push_back("L" + std::to_string(v));
      }
      v = map[v];
    }
    const LabeledDataset ds(f, dim, y, alphabet);
    const auto back = aknn::parse_csv(aknn::to_csv(ds, "label"), "label");
    ASSERT_EQ(back, ds) << "trial " << trial;
  }
}

TEST(Binary, RoundTripKeepsAlphabet) {
  const LabeledDataset ds({0.5, -1, 2, 3.25}, 2, {1, 0}, {"neg", "pos"});
  const auto path = temp_path("ds.bin");
  aknn::save_binary(ds, path);
  const auto back = aknn::load_binary(path);
  EXPECT_EQ(back.alphabet(), ds.alphabet());
  EXPECT_EQ(std::vector<double>(back.features().begin(), back.features().end()),
            std::vector<double>(ds.features().begin(), ds.features().end()));
  EXPECT_EQ(std::vector<aknn::LabelId>(back.labels().begin(), back.labels().end()),
            (std::vector<aknn::LabelId>{1, 0}));
}

TEST(Binary, WithoutTrailerAlphabetIsNumeric) {
  auto bytes = aknn::to_binary(LabeledDataset({1, 2, 3}, 1, {0, 2, 1}, {"a", "b", "c"}));
  // Drop the trailer: count, then three (length, byte) entries.
  bytes.resize(bytes.size() - (4 + 3 * 5));
  const auto ds = aknn::parse_binary(bytes);
  EXPECT_EQ(ds.alphabet(), (std::vector<std::string>{"0", "1", "2"}));
}

TEST(Binary, RejectsCorruptInput) {
  EXPECT_THROW(aknn::parse_binary("NOTMAGIC"), DataError);
  auto bytes = aknn::to_binary(LabeledDataset({1, 2}, 1, {0, 1}, {"a", "b"}));
  EXPECT_THROW(aknn::parse_binary(bytes.substr(0, bytes.size() - 1)), DataError);
  EXPECT_THROW(aknn::parse_binary(bytes + "x"), DataError);
}

TEST(Dataset, ConstructorInvariants) {
  EXPECT_THROW(LabeledDataset({}, 1, {}, {"a"}), DataError);
  EXPECT_THROW(LabeledDataset({1, 2}, 0, {0, 0}, {"a"}), DataError);
  EXPECT_THROW(LabeledDataset({1, 2, 3}, 2, {0, 0}, {"a"}), DataError);
  EXPECT_THROW(LabeledDataset({1}, 1, {1}, {"a"}), DataError);
  EXPECT_THROW(LabeledDataset({1}, 1, {0}, {"a", "a"}), DataError);
}

LabeledDataset binary_block(std::size_t n, std::uint64_t seed) {
  aknn::Rng rng(seed);
  std::vector<double> f(n);
  std::vector<aknn::LabelId> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = rng.uniform();
    y[i] = static_cast<aknn::LabelId>(rng.below(2));
  }
  return LabeledDataset(f, 1, y, {"+1", "-1"});
}

TEST(Noise, ZeroProbabilityIsIdentity) {
  const auto ds = binary_block(500, 3);
  EXPECT_EQ(aknn::inject_label_noise(ds, {0.0, 11}), ds);
}

TEST(Noise, ProbabilityOneFlipsEveryBinaryLabel) {
  const auto ds = binary_block(500, 4);
  const auto noisy = aknn::inject_label_noise(ds, {1.0, 11});
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_NE(noisy.label(i), ds.label(i));
}

TEST(Noise, FlipFractionConcentrates) {
  const auto ds = binary_block(10000, 5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto noisy = aknn::inject_label_noise(ds, {0.2, seed});
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) flipped += noisy.label(i) != ds.label(i);
    const double frac = static_cast<double>(flipped) / 10000.0;
    EXPECT_GE(frac, 0.18);
    EXPECT_LE(frac, 0.22);
  }
}

TEST(Noise, FlipsToUniformOtherLabel) {
  std::vector<double> f(30000, 0.0);
  std::vector<aknn::LabelId> y(30000, 0);
  const LabeledDataset ds(f, 1, y, {"a", "b", "c", "d"});
  const auto noisy = aknn::inject_label_noise(ds, {1.0, 9});
  std::vector<std::size_t> hist(4, 0);
  for (auto v : noisy.labels()) ++hist[v];
  EXPECT_EQ(hist[0], 0u);
  for (int k = 1; k < 4; ++k) EXPECT_NEAR(hist[k] / 30000.0, 1.0 / 3.0, 0.015);
}

TEST(Noise, DeterministicAndPreservesStructure) {
  aknn::Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(100), labels = 2 + rng.below(4);
    std::vector<double> f(n * 2);
    for (auto& v : f) v = rng.uniform();
    std::vector<aknn::LabelId> y(n);
    for (auto& v : y) v = static_cast<aknn::LabelId>(rng.below(labels));
    std::vector<std::string> alphabet;
    for (std::size_t i = 0; i < labels; ++i) alphabet.push_back(std::to_string(i));
    const LabeledDataset ds(f, 2, y, alphabet);
    const aknn::NoiseSpec spec{rng.uniform(), rng.next_u64()};
    const auto a = aknn::inject_label_noise(ds, spec);
    ASSERT_EQ(a, aknn::inject_label_noise(ds, spec));
    ASSERT_EQ(a.size(), ds.size());
    ASSERT_EQ(a.dim(), ds.dim());
    ASSERT_EQ(a.alphabet(), ds.alphabet());
    ASSERT_TRUE(std::equal(a.features().begin(), a.features().end(), ds.features().begin()));
  }
}

TEST(Noise, RejectsBadInput) {
  const auto ds = binary_block(10, 1);
  EXPECT_THROW(aknn::inject_label_noise(ds, {1.5, 0}), std::invalid_argument);
  EXPECT_THROW(aknn::inject_label_noise(LabeledDataset({1}, 1, {0}, {"a"}), {0.1, 0}), std::invalid_argument);
}

TEST(Split, Sizes) {
  const auto ten = binary_block(10, 1);
  const auto s = aknn::split(ten, 0.3, 42);
  EXPECT_EQ(s.train.size(), 7u);
  EXPECT_EQ(s.test.size(), 3u);
  const auto two = aknn::split(binary_block(2, 1), 0.5, 42);
  EXPECT_EQ(two.train.size(), 1u);
  EXPECT_EQ(two.test.size(), 1u);
  EXPECT_THROW(aknn::split(ten, 0.01, 1), std::invalid_argument);
  EXPECT_THROW(aknn::split(ten, 0.99, 1), std::invalid_argument);
  EXPECT_THROW(aknn::split(ten, 0.0, 1), std::invalid_argument);
}

TEST(Split, SameSeedSamePartition) {
  const auto ds = binary_block(50, 2);
  const auto a = aknn::split(ds, 0.4, 5), b = aknn::split(ds, 0.4, 5);
  EXPECT_EQ(a.train_rows, b.train_rows);
  EXPECT_EQ(a.test, b.test);
}

TEST(Split, PartitionsRows) {
  aknn::Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(200);
    const auto ds = binary_block(n, trial);
    const double frac = 0.05 + 0.9 * rng.uniform();
    const auto n_test = std::llround(n * frac);
    if (n_test == 0 || n_test >= static_cast<long long>(n)) continue;
    const auto s = aknn::split(ds, frac, rng.next_u64());
    std::vector<std::size_t> all = s.train_rows;
    all.insert(all.end(), s.test_rows.begin(), s.test_rows.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(n);
    std::iota(expected.begin(), expected.end(), 0);
    ASSERT_EQ(all, expected);
    for (std::size_t i = 0; i < s.test_rows.size(); ++i) ASSERT_EQ(s.test.label(i), ds.label(s.test_rows[i]));
    ASSERT_EQ(s.train.alphabet(), ds.alphabet());
    ASSERT_EQ(s.test.alphabet(), ds.alphabet());
  }
}

}  // namespace
