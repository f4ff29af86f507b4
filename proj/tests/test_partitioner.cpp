// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#include "cachefed/partitioner.hpp"

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <set>

#include "cachefed/error.hpp"
#include "test_util.hpp"

namespace cachefed {
namespace {

// Labels-only dataset; partitioning never reads features.
FeatureDataset labelled(std::vector<Label> labels) {
  FeatureDataset ds;
  ds.features = Matrix(labels.size(), 2);
  ds.labels = std::move(labels);
  return ds;
}

FeatureDataset per_class(std::size_t classes, std::size_t each) {
  std::vector<Label> l;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < each; ++i) l.push_back(static_cast<Label>(c));
  return labelled(std::move(l));
}

PartitionSpec spec_of(PartitionScheme s, std::uint32_t clients, std::uint64_t seed = 0,
                      double alpha = 0.1) {
  PartitionSpec p;
  p.scheme = s;
  p.num_clients = clients;
  p.seed = seed;
  p.dirichlet_alpha = alpha;
  return p;
}

TEST(Scheme, TagsRoundTrip) {
  for (auto s : {PartitionScheme::kIid, PartitionScheme::kDirichlet,
                 PartitionScheme::kPathological})
    EXPECT_EQ(parse_scheme(scheme_tag(s)), s);
  EXPECT_EQ(parse_scheme("dirichlet"), PartitionScheme::kDirichlet);
  EXPECT_THROW(parse_scheme("zipf"), ValidationError);
}

TEST(Pathological, HundredClassesTenClients) {
  const auto ds = per_class(100, 3);
  const auto p = partition(ds, 100, spec_of(PartitionScheme::kPathological, 10));
  const auto rep = heterogeneity_report(p, ds, 100);
  std::set<std::size_t> all;
  for (const auto& h : rep.histograms) {
    std::size_t held = 0;
    for (std::size_t c = 0; c < 100; ++c) {
      if (h[c] == 0) continue;
      ++held;
      EXPECT_EQ(h[c], 3u);
      EXPECT_TRUE(all.insert(c).second) << "class " << c << " shared";
    }
    EXPECT_EQ(held, 10u);
  }
  EXPECT_EQ(all.size(), 100u);
}

TEST(Pathological, RemainderGoesToLowestClients) {
  const auto ds = per_class(7, 1);
  const auto p = partition(ds, 7, spec_of(PartitionScheme::kPathological, 3));
  EXPECT_EQ(p.sizes(), (std::vector<std::size_t>{3, 2, 2}));
  EXPECT_EQ(p.shards[0], (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Pathological, MoreClientsThanClassesIsInfeasible) {
  EXPECT_THROW(partition(per_class(5, 2), 5, spec_of(PartitionScheme::kPathological, 10)),
               InfeasibleError);
}

TEST(Iid, SixteenShotsOverTenClients) {
  const auto ds = per_class(10, 16);
  const auto p = partition(ds, 10, spec_of(PartitionScheme::kIid, 10));
  const auto rep = heterogeneity_report(p, ds, 10);
  for (std::size_t k = 0; k < 10; ++k)
    for (std::size_t c = 0; c < 10; ++c) EXPECT_EQ(rep.histograms[k][c], k < 4 ? 1u : 2u);
}

TEST(AnyScheme, SingleClientHoldsEverything) {
  const auto ds = per_class(4, 5);
  for (auto s : {PartitionScheme::kIid, PartitionScheme::kDirichlet,
                 PartitionScheme::kPathological}) {
    const auto p = partition(ds, 4, spec_of(s, 1, 3));
    ASSERT_EQ(p.num_clients(), 1u);
    EXPECT_EQ(p.client_size(0), 20u);
    EXPECT_EQ(heterogeneity_report(p, ds, 4).max_emd, 0.0);
  }
}

TEST(AnyScheme, FuzzedDisjointCover) {
  Rng rng(1);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t classes = 1 + rng.below(12), n = 1 + rng.below(200);
    std::vector<Label> l(n);
    for (auto& v : l) v = static_cast<Label>(rng.below(classes));
    const auto ds = labelled(l);
    const auto scheme = static_cast<PartitionScheme>(rng.below(3));
    const auto clients = static_cast<std::uint32_t>(
        1 + rng.below(scheme == PartitionScheme::kPathological ? classes : 15));
    const auto spec = spec_of(scheme, clients, rng.next_u64(), 0.01 + rng.uniform() * 5.0);
    const auto p = partition(ds, classes, spec);
    ASSERT_EQ(p.num_clients(), clients);
    ASSERT_NO_THROW(check_disjoint_cover(p, n)) << "rep " << rep;
    ASSERT_EQ(p.total(), n);
    const auto hr = heterogeneity_report(p, ds, classes);
    for (std::size_t k = 0; k < clients; ++k) {
      std::size_t s = 0;
      for (auto v : hr.histograms[k]) s += v;
      ASSERT_EQ(s, p.client_size(k));
    }
    ASSERT_EQ(partition(ds, classes, spec), p);
  }
}

TEST(CheckDisjointCover, DetectsViolations) {
  Partition dup{{{0, 1}, {1}}};
  EXPECT_THROW(check_disjoint_cover(dup, 2), ValidationError);
  Partition missing{{{0}, {}}};
  EXPECT_THROW(check_disjoint_cover(missing, 2), ValidationError);
  Partition outside{{{0, 5}}};
  EXPECT_THROW(check_disjoint_cover(outside, 2), ValidationError);
}

TEST(Dirichlet, LargeConcentrationApproachesIid) {
  const auto ds = per_class(10, 1000);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = partition(ds, 10, spec_of(PartitionScheme::kDirichlet, 10, seed, 1e6));
    const auto rep = heterogeneity_report(p, ds, 10);
    for (const auto& h : rep.histograms)
      for (auto v : h) EXPECT_LE(std::fabs(v / 1000.0 - 0.1), 0.05);
  }
}

TEST(Dirichlet, SeedDeterminesShards) {
  const auto ds = per_class(10, 30);
  const auto a = partition(ds, 10, spec_of(PartitionScheme::kDirichlet, 10, 4));
  EXPECT_EQ(a, partition(ds, 10, spec_of(PartitionScheme::kDirichlet, 10, 4)));
  EXPECT_NE(a, partition(ds, 10, spec_of(PartitionScheme::kDirichlet, 10, 5)));
}

TEST(Heterogeneity, IidBelowDirichletOverSeeds) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const World w = generate_world(testing::small_world(seed));
    const auto iid = partition(w.real_train, 10, spec_of(PartitionScheme::kIid, 10, seed));
    const auto dir = partition(w.real_train, 10, spec_of(PartitionScheme::kDirichlet, 10, seed));
    EXPECT_LT(heterogeneity_report(iid, w.real_train, 10).max_emd,
              heterogeneity_report(dir, w.real_train, 10).max_emd)
        << "seed " << seed;
  }
}

TEST(Heterogeneity, TotalVariationByHand) {
  // Global {0: 2, 1: 2}; client 0 holds {0, 0}, client 1 holds {1, 1}.
  const auto ds = labelled({0, 1, 0, 1});
  Partition p{{{0, 2}, {1, 3}}};
  const auto rep = heterogeneity_report(p, ds, 2);
  EXPECT_DOUBLE_EQ(rep.emd[0], 0.5);
  EXPECT_DOUBLE_EQ(rep.emd[1], 0.5);
  EXPECT_DOUBLE_EQ(rep.max_emd, 0.5);
}

TEST(Serialization, TextRoundTripAndSidecar) {
  Partition p{{{0, 3, 7}, {}, {1, 2}}};
  const auto text = format_partition(p);
  EXPECT_EQ(text, "0: 0,3,7\n1:\n2: 1,2\n");
  EXPECT_EQ(parse_partition(text), p);
  EXPECT_THROW(parse_partition("1: 0\n"), ValidationError);
  EXPECT_THROW(parse_partition("0 0\n"), ValidationError);
  const auto j = nlohmann::json::parse(
      partition_sidecar_json(p, spec_of(PartitionScheme::kDirichlet, 3)));
  EXPECT_EQ(j["n_k"], (std::vector<std::size_t>{3, 0, 2}));
  EXPECT_EQ(j["n"], 5);
  EXPECT_EQ(j["scheme"], "dir");
}

TEST(Partition, RejectsBadInput) {
  EXPECT_THROW(partition(labelled({}), 2, spec_of(PartitionScheme::kIid, 2)),
               DegenerateInputError);
  EXPECT_THROW(partition(labelled({0, 3}), 2, spec_of(PartitionScheme::kIid, 2)), LabelError);
  EXPECT_THROW(partition(labelled({0}), 2, spec_of(PartitionScheme::kIid, 0)), ValidationError);
  EXPECT_THROW(partition(labelled({0}), 2, spec_of(PartitionScheme::kDirichlet, 2, 0, 0.0)),
               ValidationError);
}

}  // namespace
}  // namespace cachefed
