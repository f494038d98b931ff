#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "animpref/preference_data.hpp"
#include "animpref/tensor.hpp"

using namespace animpref;
using namespace animpref::prefs;

namespace {

using Key = std::pair<std::string, std::string>;

CandidateScore cand(const std::string& id, double r) { return {id, r, r}; }

PreferenceGroup group_of(const std::vector<std::pair<std::string, double>>& rewards) {
  PreferenceGroup g{"cond", {}};
  for (const auto& [id, r] : rewards) g.candidates.push_back(cand(id, r));
  return g;
}

std::set<Key> keys(const std::vector<PreferencePair>& pairs) {
  std::set<Key> s;
  for (const auto& p : pairs) s.emplace(p.winner_id, p.loser_id);
  return s;
}

bool subset(const std::set<Key>& a, const std::set<Key>& b) { return std::includes(b.begin(), b.end(), a.begin(), a.end()); }

// Brute force over all ordered pairs, filtered by the strategy's role rules.
std::set<Key> oracle(const std::vector<std::pair<std::string, double>>& rw, PairStrategy s, double min_margin) {
  auto extreme = [&](bool top) {
    std::string id;
    double best = top ? -1e9 : 1e9;
    for (const auto& [i, r] : rw)
      if ((top ? r > best : r < best) || (r == best && i < id)) {
        best = r;
        id = i;
      }
    return id;
  };
  const std::string hi = extreme(true), lo = extreme(false);
  std::set<Key> out;
  for (const auto& [wi, wr] : rw)
    for (const auto& [li, lr] : rw) {
      if (!(wr > lr) || wr - lr < min_margin) continue;
      const bool ok = s == PairStrategy::kBetterVsWorse || (s == PairStrategy::kBestVsWorse && wi == hi) ||
                      (s == PairStrategy::kBetterVsWorst && li == lo) ||
                      (s == PairStrategy::kBestVsWorst && wi == hi && li == lo);
      if (ok) out.emplace(wi, li);
    }
  return out;
}

std::vector<std::pair<std::string, double>> random_rewards(Rng& rng, int n, bool coarse) {
  std::uniform_real_distribution<double> u(1.0, 5.0);
  std::uniform_int_distribution<int> grid(0, 8);
  std::vector<std::pair<std::string, double>> rw;
  for (int i = 0; i < n; ++i) rw.emplace_back("s" + std::to_string(i), coarse ? 1.0 + 0.5 * grid(rng) : u(rng));
  std::shuffle(rw.begin(), rw.end(), rng);
  return rw;
}

}  // namespace

TEST_CASE("composite reward averages the two scores") {
  CHECK(composite_reward(5, 3) == 4.0);
  CHECK(composite_reward(1, 1) == 1.0);
  CHECK_THROWS_AS(composite_reward(0.5, 3), Error);
  CHECK_THROWS_AS(composite_reward(3, 5.5), Error);
}

TEST_CASE("best_vs_worst picks the extreme pair") {
  const PreferenceGroup g = group_of({{"a", 4.5}, {"b", 3.0}, {"c", 2.0}});
  const auto pairs = build_pairs(g, PairStrategy::kBestVsWorst, 0.5);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0] == PreferencePair{"cond", "a", "c", 2.5});
}

TEST_CASE("five distinct candidates give the combinatorial counts") {
  const PreferenceGroup g = group_of({{"a", 1.2}, {"b", 4.9}, {"c", 3.3}, {"d", 2.0}, {"e", 4.1}});
  CHECK(build_pairs(g, PairStrategy::kBetterVsWorse, 0).size() == 10);
  CHECK(build_pairs(g, PairStrategy::kBestVsWorse, 0).size() == 4);
  CHECK(build_pairs(g, PairStrategy::kBetterVsWorst, 0).size() == 4);
  CHECK(build_pairs(g, PairStrategy::kBestVsWorst, 0).size() == 1);
  CHECK(dataset_stats(build_pairs(g, PairStrategy::kBetterVsWorse, 0)).count == 10);
}

TEST_CASE("equal rewards produce no pairs") {
  const PreferenceGroup g = group_of({{"a", 3}, {"b", 3}, {"c", 3}});
  for (PairStrategy s : kAllPairStrategies) CHECK(build_pairs(g, s, 0).empty());
}

TEST_CASE("pairs agree with a brute-force oracle on random groups") {
  Rng rng(17);
  std::uniform_int_distribution<int> sizes(2, 9);
  std::uniform_real_distribution<double> margins(0.0, 1.5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto rw = random_rewards(rng, sizes(rng), trial % 2 == 0);
    const double mm = trial % 3 == 0 ? 0.0 : margins(rng);
    const PreferenceGroup g = group_of(rw);
    std::map<PairStrategy, std::set<Key>> got;
    for (PairStrategy s : kAllPairStrategies) {
      const auto pairs = build_pairs(g, s, mm);
      got[s] = keys(pairs);
      CHECK(got[s] == oracle(rw, s, mm));
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(pairs[i].margin >= mm);
        CHECK(pairs[i].margin > 0);
        if (i > 0) {
          const auto& a = pairs[i - 1];
          const auto& b = pairs[i];
          CHECK(std::tie(b.margin, a.winner_id, a.loser_id) <= std::tie(a.margin, b.winner_id, b.loser_id));
        }
      }
      CHECK(pairs == build_pairs(g, s, mm));
    }
    CHECK(subset(got[PairStrategy::kBestVsWorst], got[PairStrategy::kBestVsWorse]));
    CHECK(subset(got[PairStrategy::kBestVsWorse], got[PairStrategy::kBetterVsWorse]));
    CHECK(subset(got[PairStrategy::kBestVsWorst], got[PairStrategy::kBetterVsWorst]));
    CHECK(subset(got[PairStrategy::kBetterVsWorst], got[PairStrategy::kBetterVsWorse]));
  }
}

TEST_CASE("distinct rewards give n(n-1)/2, n-1, n-1 and 1 pairs") {
  Rng rng(5);
  for (int n = 2; n <= 12; ++n) {
    const PreferenceGroup g = group_of(random_rewards(rng, n, false));
    CHECK(build_pairs(g, PairStrategy::kBetterVsWorse, 0).size() == std::size_t(n * (n - 1) / 2));
    CHECK(build_pairs(g, PairStrategy::kBestVsWorse, 0).size() == std::size_t(n - 1));
    CHECK(build_pairs(g, PairStrategy::kBetterVsWorst, 0).size() == std::size_t(n - 1));
    CHECK(build_pairs(g, PairStrategy::kBestVsWorst, 0).size() == 1);
  }
}

TEST_CASE("monotone relabeling keeps pair membership") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    auto rw = random_rewards(rng, 6, true);
    auto mapped = rw;
    for (auto& [id, r] : mapped) r = std::exp(r) / 30.0;  // strictly increasing
    for (PairStrategy s : kAllPairStrategies)
      CHECK(keys(build_pairs_from_rewards("c", rw, s, 0)) == keys(build_pairs_from_rewards("c", mapped, s, 0)));
  }
}

TEST_CASE("ties at the extremes go to the smallest id") {
  const std::vector<std::pair<std::string, double>> rw{{"z", 5}, {"m", 5}, {"q", 1}, {"b", 1}, {"k", 3}};
  const auto pairs = build_pairs_from_rewards("c", rw, PairStrategy::kBestVsWorst, 0);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].winner_id == "m");
  CHECK(pairs[0].loser_id == "b");
}

TEST_CASE("invalid groups are rejected") {
  CHECK_THROWS_AS(validate(group_of({{"a", 3}})), Error);
  CHECK_THROWS_AS(validate(group_of({{"a", 3}, {"a", 4}})), Error);
  PreferenceGroup g = group_of({{"a", 3}, {"b", 4}});
  g.candidates[1].r_fidelity = 6;
  CHECK_THROWS_AS(build_pairs(g, PairStrategy::kBestVsWorst), Error);
  CHECK_THROWS_AS(pair_strategy_from_string("best_vs_all"), Error);
}

TEST_CASE("dataset statistics") {
  const DatasetStats empty = dataset_stats({});
  CHECK(empty.count == 0);
  CHECK(empty.per_condition.empty());
  const DatasetStats one = dataset_stats({{"c", "a", "b", 2.5}});
  CHECK(one.count == 1);
  CHECK(one.min_margin == 2.5);
  CHECK(one.max_margin == 2.5);
  CHECK(one.mean_margin == 2.5);
  CHECK(one.histogram[5] == 1);
  const DatasetStats two = dataset_stats({{"c", "a", "b", 1.0}, {"d", "a", "b", 4.0}});
  CHECK(two.mean_margin == 2.5);
  CHECK(two.per_condition.at("d") == 1);
  CHECK(two.histogram.back() == 1);
}

TEST_CASE("groups and pairs round trip through JSONL") {
  const auto dir = std::filesystem::temp_directory_path() / "animpref_pref_io";
  std::filesystem::create_directories(dir);
  std::vector<PreferenceGroup> groups{group_of({{"x/s0", 4.25}, {"x/s1", 1.5}}), group_of({{"y", 2}, {"w", 3}})};
  groups[1].condition_id = "other";
  write_groups(dir / "g.jsonl", groups);
  const auto back = read_groups(dir / "g.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[1].condition_id == "other");
  CHECK(back[0].candidates[0].sample_id == "x/s0");
  CHECK(back[0].candidates[0].r_align == 4.25);

  const auto pairs = build_pairs(groups[0], PairStrategy::kBetterVsWorse, 0);
  write_pairs(dir / "p.jsonl", pairs);
  CHECK(read_pairs(dir / "p.jsonl") == pairs);
  std::filesystem::remove_all(dir);
}
