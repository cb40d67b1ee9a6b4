#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tg2g/sampling.hpp"

using namespace tg2g;

namespace {

Snapshot chain(std::size_t n) {
  Snapshot s(0, n, false);
  for (std::size_t i = 0; i + 1 < n; ++i) s.add_edge(i, i + 1);
  return s;
}

Snapshot random_snapshot(std::size_t n, double p, Rng& rng) {
  Snapshot s(0, n, false);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (unit(rng) < p) s.add_edge(i, j);
  return s;
}

}  // namespace

TEST_CASE("chain of 5: every triple obeys the distance ordering") {
  Snapshot s = chain(5);
  Rng rng = make_rng(1);
  auto b = sample_triplets(s, {}, rng);
  CHECK(!b.triples.empty());
  CHECK(validate_batch(b, s));
  for (const auto& tr : b.triples) {
    auto d = hop_distance(s, tr.anchor);
    CHECK(d[tr.near] == 1);
    bool far_ok = d[tr.far] == kUnreachable || d[tr.far] >= 2;
    CHECK(far_ok);
  }
}

TEST_CASE("complete graph yields no triples (no far nodes exist)") {
  Snapshot s(0, 4, false);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) s.add_edge(i, j);
  Rng rng = make_rng(2);
  auto b = sample_triplets(s, {}, rng);
  CHECK(b.triples.empty());
  CHECK(validate_batch(b, s));
}

TEST_CASE("two disconnected components: far partners come from the other side") {
  Snapshot s(0, 4, false);
  s.add_edge(0, 1);
  s.add_edge(2, 3);
  Rng rng = make_rng(3);
  auto b = sample_triplets(s, {}, rng);
  CHECK(!b.triples.empty());
  CHECK(validate_batch(b, s));
  for (const auto& tr : b.triples) {
    // components are {0,1} and {2,3}; far must cross
    bool anchor_low = tr.anchor < 2;
    CHECK((tr.far < 2) != anchor_low);
    CHECK((tr.near < 2) == anchor_low);
  }
}

TEST_CASE("star graph: leaves see each other as far") {
  Snapshot s(0, 6, false);
  for (std::size_t leaf = 1; leaf < 6; ++leaf) s.add_edge(0, leaf);
  Rng rng = make_rng(4);
  auto b = sample_triplets(s, {.k_per_anchor = 2}, rng);
  CHECK(validate_batch(b, s));
  for (const auto& tr : b.triples) {
    if (tr.anchor == 0) continue;  // hub has no far nodes, never emitted
    CHECK(tr.near == 0);
    CHECK(tr.far != 0);
  }
  // hub anchor produced nothing: everyone is 1 hop away
  for (const auto& tr : b.triples) CHECK(tr.anchor != 0);
}

TEST_CASE("k_per_anchor and snapshot cap are respected") {
  Snapshot s = chain(10);
  Rng rng = make_rng(5);
  auto b = sample_triplets(s, {.k_per_anchor = 4}, rng);
  CHECK(b.triples.size() <= 4 * 10);
  std::vector<std::size_t> count(10, 0);
  for (const auto& tr : b.triples) ++count[tr.anchor];
  for (auto c : count) CHECK(c <= 4);

  Rng rng2 = make_rng(5);
  auto capped = sample_triplets(s, {.k_per_anchor = 4, .max_per_snapshot_factor = 1}, rng2);
  CHECK(capped.triples.size() == 10);  // 1 * |V_t|
}

TEST_CASE("max_anchors subsamples the anchor set") {
  Snapshot s = chain(20);
  Rng rng = make_rng(6);
  auto b = sample_triplets(s, {.k_per_anchor = 1, .max_anchors = 5}, rng);
  std::vector<std::size_t> anchors;
  for (const auto& tr : b.triples) anchors.push_back(tr.anchor);
  std::sort(anchors.begin(), anchors.end());
  anchors.erase(std::unique(anchors.begin(), anchors.end()), anchors.end());
  CHECK(anchors.size() <= 5);
  CHECK(validate_batch(b, s));
}

TEST_CASE("sampling is deterministic under the same rng stream") {
  Snapshot s = chain(15);
  Rng a = make_rng(9, 1);
  Rng b = make_rng(9, 1);
  auto ba = sample_triplets(s, {}, a);
  auto bb = sample_triplets(s, {}, b);
  REQUIRE(ba.triples.size() == bb.triples.size());
  for (std::size_t i = 0; i < ba.triples.size(); ++i) {
    CHECK(ba.triples[i].anchor == bb.triples[i].anchor);
    CHECK(ba.triples[i].near == bb.triples[i].near);
    CHECK(ba.triples[i].far == bb.triples[i].far);
  }
  Rng c = make_rng(9, 2);
  auto bc = sample_triplets(s, {}, c);
  bool same = ba.triples.size() == bc.triples.size();
  if (same)
    for (std::size_t i = 0; i < ba.triples.size(); ++i)
      same = same && ba.triples[i].near == bc.triples[i].near &&
             ba.triples[i].far == bc.triples[i].far;
  CHECK(!same);
}

TEST_CASE("empty snapshot is an error") {
  Snapshot s(0, 5, false);
  Rng rng = make_rng(7);
  CHECK_THROWS_AS(sample_triplets(s, {}, rng), graph_error);
}

TEST_CASE("validate_batch rejects corrupted triples") {
  Snapshot s = chain(5);
  Rng rng = make_rng(8);
  auto b = sample_triplets(s, {}, rng);
  REQUIRE(!b.triples.empty());

  auto bad = b;
  std::swap(bad.triples[0].near, bad.triples[0].far);  // ordering now violated
  CHECK(!validate_batch(bad, s));

  auto oob = b;
  oob.triples[0].far = 99;
  CHECK(!validate_batch(oob, s));

  auto wrong_t = b;
  wrong_t.t = 3;
  CHECK(!validate_batch(wrong_t, s));
}

TEST_CASE("100% validity over random graphs") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (double p : {0.1, 0.3}) {
      Rng g_rng = make_rng(seed, 0x111, static_cast<std::uint64_t>(p * 10));
      Snapshot s = random_snapshot(10 + seed % 41, p, g_rng);
      if (s.n_edges() == 0) continue;
      Rng rng = make_rng(seed, 0x222);
      auto b = sample_triplets(s, {}, rng);
      CHECK(validate_batch(b, s));
    }
  }
}
