#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "eatcl/data.hpp"

using namespace eatcl;

namespace {

std::map<int, std::size_t> class_counts(const Dataset& d) {
  std::map<int, std::size_t> m;
  for (int y : d.y) ++m[y];
  return m;
}

std::vector<std::vector<double>> row_multiset(const Dataset& d) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::vector<double> r(d.x.row(i).begin(), d.x.row(i).end());
    r.push_back(d.y[i]);
    rows.push_back(std::move(r));
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

TEST(Crescent, NoiselessPointsLieOnArcs) {
  for (double rot : {0.0, 45.0, 130.0}) {
    const CrescentGeometry geo{0.7, 0.6, 0.2, rot};
    const Dataset d = gen_crescent(300, 0.0, 4, geo);
    ASSERT_EQ(d.size(), 600u);
    const double th = rot * std::numbers::pi / 180.0;
    const double cx = std::cos(th) * geo.x_offset - std::sin(th) * geo.y_offset;
    const double cy = std::sin(th) * geo.x_offset + std::cos(th) * geo.y_offset;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double ox = d.y[i] == 0 ? 0.0 : cx, oy = d.y[i] == 0 ? 0.0 : cy;
      EXPECT_NEAR(std::hypot(d.x(i, 0) - ox, d.x(i, 1) - oy), geo.radius, 1e-9);
    }
  }
}

TEST(Crescent, UpperAndLowerArcs) {
  const Dataset d = gen_crescent(200, 0.0, 1);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.y[i] == 0) {
      EXPECT_GE(d.x(i, 1), -1e-12);
    } else {
      EXPECT_LE(d.x(i, 1), 0.5 + 1e-12);
    }
  }
}

TEST(Crescent, BalancedAndDeterministic) {
  const Dataset a = gen_crescent(1000, 0.1, 9);
  EXPECT_EQ(class_counts(a), (std::map<int, std::size_t>{{0, 1000}, {1, 1000}}));
  EXPECT_EQ(a, gen_crescent(1000, 0.1, 9));
  EXPECT_NE(a.x, gen_crescent(1000, 0.1, 10).x);
  EXPECT_THROW(gen_crescent(0, 0.1, 1), ArgumentError);
  EXPECT_THROW(gen_crescent(5, -0.1, 1), ArgumentError);
}

TEST(Imbalance, FullFractionsKeepEverything) {
  const Dataset d = gen_crescent(100, 0.1, 2);
  EXPECT_EQ(imbalance_subsample(d, {{0, 1.0}, {1, 1.0}}, 3), d);
}

TEST(Imbalance, NineToOne) {
  const Dataset d = gen_crescent(1000, 0.1, 2);
  const Dataset imb = imbalance_subsample(d, {{1, 1.0 / 9.0}}, 3);
  const auto c = class_counts(imb);
  EXPECT_EQ(c.at(0), 1000u);
  EXPECT_EQ(c.at(1), 111u);
  EXPECT_NEAR(static_cast<double>(c.at(0)) / c.at(1), 9.0, 0.01);
}

TEST(Imbalance, CountsFollowRounding) {
  Rng rng(6);
  for (int t = 0; t < 30; ++t) {
    std::vector<int> y;
    std::map<int, std::size_t> n;
    for (int c = 0; c < 4; ++c) {
      const std::size_t k = 1 + rng.below(50);
      n[c] = k;
      y.insert(y.end(), k, c);
    }
    const Dataset d = make_dataset(Matrix(y.size(), 1), y);
    std::map<int, double> f;
    for (int c = 0; c < 4; ++c) f[c] = rng.uniform(0.5, 1.0);
    const auto got = class_counts(imbalance_subsample(d, f, t));
    for (int c = 0; c < 4; ++c)
      EXPECT_EQ(got.at(c), static_cast<std::size_t>(std::llround(f[c] * static_cast<double>(n[c]))));
  }
}

TEST(Imbalance, Errors) {
  const Dataset d = make_dataset(Matrix(3, 1), {0, 0, 1});
  EXPECT_THROW(imbalance_subsample(d, {{1, 0.1}}, 1), ArgumentError);
  EXPECT_THROW(imbalance_subsample(d, {{1, 1.5}}, 1), ArgumentError);
}

TEST(Split, TenClassesTwoPerTask) {
  std::vector<int> y;
  for (int c = 0; c < 10; ++c) y.insert(y.end(), 3, c);
  const Dataset d = make_dataset(Matrix(y.size(), 2), y);
  const TaskStream s = split_by_classes(d, 2);
  ASSERT_EQ(s.size(), 5u);
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_EQ(s.tasks[t].index, t);
    EXPECT_EQ(s.tasks[t].class_set, (std::vector<int>{int(2 * t), int(2 * t + 1)}));
  }
  EXPECT_EQ(split_by_classes(d, 1).size(), 10u);
  EXPECT_THROW(split_by_classes(d, 3), ArgumentError);
}

TEST(Split, PreservesRowMultiset) {
  BlobSpec spec;
  spec.n_per_class = 20;
  const TaskStream s = gen_blob_stream(spec, 4);
  Dataset joined = s.joined();
  const TaskStream again = split_by_classes(joined, 1);
  EXPECT_EQ(row_multiset(joined), row_multiset(again.joined()));
  EXPECT_EQ(joined.size(), 200u);
}

TEST(Blobs, StreamShape) {
  BlobSpec spec;
  const StreamPair sp = gen_blob_streams(spec, 50, 3);
  ASSERT_EQ(sp.train.size(), 5u);
  EXPECT_EQ(sp.train.dim(), 16u);
  EXPECT_EQ(sp.train.num_classes(), 10u);
  EXPECT_EQ(sp.train.all_classes(), (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
  EXPECT_NO_THROW(sp.train.validate());
  for (const auto& t : sp.train.tasks) EXPECT_EQ(t.data.size(), 1000u);
  for (const auto& t : sp.test.tasks) EXPECT_EQ(t.data.size(), 100u);
  const Dataset all = sp.train.joined();
  for (double v : all.x.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(gen_blob_stream(spec, 3).joined(), sp.train.joined());
}

TEST(Blobs, CentresRespectSeparation) {
  BlobSpec spec;
  spec.separation = 0.9;
  Rng rng(1);
  const Matrix c = blob_centers(spec, rng);
  for (std::size_t i = 0; i < c.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      double d2 = 0;
      for (std::size_t k = 0; k < c.cols(); ++k) d2 += (c(i, k) - c(j, k)) * (c(i, k) - c(j, k));
      EXPECT_GE(std::sqrt(d2), 0.9);
    }
  spec.separation = 100.0;
  EXPECT_THROW(blob_centers(spec, rng), GenerationError);
}

TEST(Csv, ThreeLines) {
  std::istringstream in("0.5,1.5,0\n2,3,1\n-1,4e-3,1\n");
  const Dataset d = parse_csv(in);
  EXPECT_EQ(d.x.rows(), 3u);
  EXPECT_EQ(d.x.cols(), 2u);
  EXPECT_EQ(d.y, (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(d.x(2, 1), 4e-3);
}

TEST(Csv, HeaderAndBlankLines) {
  std::istringstream in("a,b,label\n\n1,2,0\n  \n3,4,1\n");
  const Dataset d = parse_csv(in);
  EXPECT_EQ(d.size(), 2u);
}

TEST(Csv, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) {
    std::istringstream in(text);
    try {
      parse_csv(in);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(line_of(""), 1u);
  EXPECT_EQ(line_of("1,2,0\n1,2\n"), 2u);
  EXPECT_EQ(line_of("1,2,0\n1,x,1\n"), 2u);
  EXPECT_EQ(line_of("1,2,0\n\n1,2,0.5\n"), 3u);
  EXPECT_EQ(line_of("1,2,0\n1,2,-1\n"), 2u);
  EXPECT_EQ(line_of("1,2,0\n1,2,\n"), 2u);
}

TEST(Csv, RoundTrip) {
  const Dataset d = gen_crescent(50, 0.3, 8);
  std::stringstream s;
  write_csv(s, d);
  const Dataset back = parse_csv(s);
  EXPECT_EQ(back.y, d.y);
  EXPECT_LE(max_abs_diff(back.x, d.x), 1e-12);
}
