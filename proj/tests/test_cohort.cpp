#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "rvmaudit/manifest.hpp"
#include "rvmaudit/pixel_stats.hpp"
#include "rvmaudit/split.hpp"
#include "rvmaudit/welch.hpp"
#include "support.hpp"

using namespace rvm;

namespace {

Manifest parse(const std::string& text) {
  std::istringstream in(text);
  return parse_manifest(in, "m.csv");
}

std::string manifest_error(const std::string& text) {
  try {
    parse(text);
  } catch (const ManifestError& e) {
    return e.what();
  }
  return "";
}

Manifest synthetic_manifest(int black, int white) {
  Manifest m;
  auto add = [&](const std::string& group, int n, int& next) {
    for (int i = 0; i < n; ++i, ++next) {
      SubjectRecord s;
      s.subject_id = "S" + std::to_string(next);
      s.group = group;
      s.bw = 1000;
      s.ga = 27;
      s.pma = 34;
      s.image_paths = {s.subject_id + "_0.pgm", s.subject_id + "_1.pgm"};
      m.subjects.push_back(s);
    }
  };
  int next = 0;
  add("Black", black, next);
  add("White", white, next);
  return m;
}

}  // namespace

TEST(Manifest, GroupsRowsBySubject) {
  const auto m = parse(
      "subject_id,group,bw_g,ga_wk,pma_wk,image_path\n"
      "A,Black,900,26.5,33,a0.pgm\n"
      "B,White,1200,28,35.5,b0.pgm\n"
      "A,Black,900,26.5,33,a1.pgm\n");
  ASSERT_EQ(m.subjects.size(), 2u);
  EXPECT_EQ(m.subjects[0].image_paths, (std::vector<std::string>{"a0.pgm", "a1.pgm"}));
  EXPECT_EQ(m.image_count(), 3u);
  EXPECT_EQ(m.label_of(m.subjects[0]), 1);
  EXPECT_EQ(m.label_of(m.subjects[1]), 0);
}

TEST(Manifest, ColumnOrderIsFree) {
  const auto m = parse("image_path,group,subject_id,extra,pma_wk,ga_wk,bw_g\nx.pgm,White,Q,zz,40,30,1500\n");
  EXPECT_EQ(m.subjects[0].subject_id, "Q");
  EXPECT_DOUBLE_EQ(m.subjects[0].bw, 1500);
}

TEST(Manifest, ErrorsNameTheProblem) {
  const std::string h = "subject_id,group,bw_g,ga_wk,pma_wk,image_path\n";
  EXPECT_NE(manifest_error("subject_id,group,bw_g,ga_wk,image_path\n").find("pma_wk"), std::string::npos);
  EXPECT_NE(manifest_error(h + "A,Asian,900,26,33,a.pgm\n").find("unknown group"), std::string::npos);
  EXPECT_NE(manifest_error(h + "A,Black,heavy,26,33,a.pgm\n").find("bw_g"), std::string::npos);
  EXPECT_NE(manifest_error(h + "A,Black,900,26,20,a.pgm\n").find("pma_wk"), std::string::npos);
  EXPECT_NE(manifest_error(h + "A,Black,900,26,33,a.pgm\nA,Black,901,26,33,b.pgm\n").find("conflicting"),
            std::string::npos);
  EXPECT_NE(manifest_error(h).find("no rows"), std::string::npos);
  EXPECT_NE(manifest_error(h + "A,Black,900\n").find("m.csv:2"), std::string::npos);
}

TEST(Manifest, WriteThenParseRoundTrips) {
  const auto m = synthetic_manifest(3, 4);
  std::ostringstream out;
  write_manifest(m, out);
  const auto back = parse(out.str());
  ASSERT_EQ(back.subjects.size(), m.subjects.size());
  for (std::size_t i = 0; i < m.subjects.size(); ++i) {
    EXPECT_EQ(back.subjects[i].subject_id, m.subjects[i].subject_id);
    EXPECT_EQ(back.subjects[i].image_paths, m.subjects[i].image_paths);
  }
}

TEST(Split, LargestRemainderCounts) {
  EXPECT_EQ(apportion(94, {0.5, 0.2, 0.3}), (std::array<int, 3>{47, 19, 28}));
  EXPECT_EQ(apportion(151, {0.5, 0.2, 0.3}), (std::array<int, 3>{76, 30, 45}));
  EXPECT_EQ(apportion(3, {0.5, 0.2, 0.3}), (std::array<int, 3>{1, 1, 1}));
  for (int n = 0; n < 300; ++n) {
    const auto c = apportion(n, {0.5, 0.2, 0.3});
    EXPECT_EQ(c[0] + c[1] + c[2], n);
  }
}

TEST(Split, StratifiedAndSubjectExclusive) {
  const auto m = synthetic_manifest(94, 151);
  const auto s = split(m, {0.5, 0.2, 0.3}, 7);
  std::map<std::pair<std::string, Partition>, int> counts;
  for (const auto& subj : m.subjects) ++counts[{subj.group, s.at(subj.subject_id)}];
  EXPECT_EQ((counts[{"Black", Partition::Train}]), 47);
  EXPECT_EQ((counts[{"Black", Partition::Validation}]), 19);
  EXPECT_EQ((counts[{"Black", Partition::Test}]), 28);
  EXPECT_EQ((counts[{"White", Partition::Train}]), 76);
  EXPECT_EQ((counts[{"White", Partition::Validation}]), 30);
  EXPECT_EQ((counts[{"White", Partition::Test}]), 45);
  // One partition per subject, so its images cannot straddle partitions.
  EXPECT_EQ(s.partition_of.size(), m.subjects.size());
}

TEST(Split, DeterministicAndSeedSensitive) {
  const auto m = synthetic_manifest(30, 30);
  const auto a = split(m, {0.5, 0.2, 0.3}, 11);
  const auto b = split(m, {0.5, 0.2, 0.3}, 11);
  const auto c = split(m, {0.5, 0.2, 0.3}, 12);
  EXPECT_EQ(a.partition_of, b.partition_of);
  EXPECT_NE(a.partition_of, c.partition_of);
}

TEST(Split, IndependentOfManifestRowOrder) {
  auto m = synthetic_manifest(20, 25);
  const auto a = split(m, {0.5, 0.2, 0.3}, 3);
  std::reverse(m.subjects.begin(), m.subjects.end());
  EXPECT_EQ(split(m, {0.5, 0.2, 0.3}, 3).partition_of, a.partition_of);
}

TEST(Split, RejectsBadInput) {
  const auto m = synthetic_manifest(2, 10);
  EXPECT_THROW(split(m, {0.5, 0.2, 0.3}, 0), Error);
  const auto ok = synthetic_manifest(5, 5);
  EXPECT_THROW(split(ok, {0.5, 0.5, 0.5}, 0), Error);
  EXPECT_THROW(split(ok, {1.0, 0.0, 0.0}, 0), Error);
}

TEST(Split, FileRoundTrip) {
  const auto dir = oracle::scratch_dir("split");
  const auto m = synthetic_manifest(6, 6);
  const auto s = split(m, {0.5, 0.2, 0.3}, 5);
  write_split(s, m, dir / "split.csv");
  EXPECT_EQ(read_split(dir / "split.csv").partition_of, s.partition_of);
}

TEST(Welch, TextbookExample) {
  const std::vector<double> a = {1, 2, 3, 4, 5};
  const std::vector<double> b = {2, 3, 4, 5, 6};
  const auto r = welch_t(a, b);
  EXPECT_DOUBLE_EQ(r.t, -1.0);
  EXPECT_DOUBLE_EQ(r.df, 8.0);
  EXPECT_NEAR(r.p, oracle::t_two_sided_quadrature(-1.0, 8.0), 1e-10);
}

TEST(Welch, MatchesQuadratureOracle) {
  Rng rng(99);
  for (int i = 0; i < 60; ++i) {
    std::vector<double> a(rng.uniform_int(2, 30));
    std::vector<double> b(rng.uniform_int(2, 30));
    const double shift = rng.uniform(-2, 2);
    for (auto& v : a) v = rng.normal(0, rng.uniform(0.5, 2));
    for (auto& v : b) v = rng.normal(shift, 1);
    const auto r = welch_t(a, b);
    EXPECT_NEAR(r.p, oracle::t_two_sided_quadrature(r.t, r.df), 1e-6) << "t=" << r.t << " df=" << r.df;
  }
}

TEST(Welch, AntisymmetryAndShiftInvarianceAreExact) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a(rng.uniform_int(2, 20));
    std::vector<double> b(rng.uniform_int(2, 20));
    // Values on a dyadic grid so that shifts are exact in binary.
    for (auto& v : a) v = static_cast<double>(rng.uniform_int(-400, 400)) / 8.0;
    for (auto& v : b) v = static_cast<double>(rng.uniform_int(-400, 400)) / 8.0;
    const auto ab = welch_t(a, b);
    const auto ba = welch_t(b, a);
    EXPECT_EQ(ab.t, -ba.t);
    EXPECT_EQ(ab.df, ba.df);
    EXPECT_EQ(ab.p, ba.p);
    const double c = static_cast<double>(rng.uniform_int(-1000, 1000)) / 4.0;
    auto as = a;
    auto bs = b;
    for (auto& v : as) v += c;
    for (auto& v : bs) v += c;
    const auto sh = welch_t(as, bs);
    EXPECT_EQ(sh.t, ab.t);
    EXPECT_EQ(sh.df, ab.df);
    EXPECT_EQ(sh.p, ab.p);
  }
}

TEST(Welch, DegenerateSamples) {
  const std::vector<double> same = {3, 3, 3};
  const std::vector<double> other = {4, 4};
  EXPECT_EQ(welch_t(same, same).p, 1.0);
  EXPECT_EQ(welch_t(same, other).p, 0.0);
  EXPECT_TRUE(std::isinf(welch_t(same, other).t));
  const std::vector<double> one = {1};
  EXPECT_THROW(welch_t(one, same), SampleTooSmallError);
}

TEST(Welch, IncompleteBetaKnownValues) {
  EXPECT_NEAR(special::incomplete_beta(0.5, 2, 2), 0.5, 1e-14);
  // I_x(1, b) = 1 - (1 - x)^b
  EXPECT_NEAR(special::incomplete_beta(0.3, 1, 4), 1 - std::pow(0.7, 4), 1e-14);
  EXPECT_THROW(special::incomplete_beta(0.5, 0, 1), std::domain_error);
}

TEST(PixelStats, CountsAndSummaries) {
  std::vector<LabeledImage> imgs;
  for (int k = 1; k <= 3; ++k) {
    GrayImage g(4, 4);
    for (int i = 0; i < k; ++i) g.pixels[i] = 9;
    imgs.push_back({"A", g});
  }
  GrayImage full(4, 4, 1);
  imgs.push_back({"B", full});
  imgs.push_back({"B", full});
  const auto s = pixel_count_stats(imgs, 4);
  EXPECT_EQ(s.counts.at("A"), (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_DOUBLE_EQ(s.summary.at("A").mean, 2.0);
  EXPECT_DOUBLE_EQ(s.summary.at("A").sd, 1.0);
  EXPECT_DOUBLE_EQ(s.summary.at("B").sd, 0.0);
  EXPECT_EQ(s.total_images(), 5u);
  EXPECT_EQ(s.histogram.at("B").back(), 2u);
  std::uint64_t total = 0;
  for (auto c : s.histogram.at("A")) total += c;
  EXPECT_EQ(total, 3u);
  EXPECT_THROW(pixel_count_stats({}), Error);
}
