#pragma once

// Composite Likert rewards and preference-pair construction.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace animpref::prefs {

inline constexpr double kLikertMin = 1.0;
inline constexpr double kLikertMax = 5.0;
inline constexpr double kDefaultMinMargin = 0.5;

struct CandidateScore {
  std::string sample_id;
  double r_align = 0.0;
  double r_fidelity = 0.0;
};

struct PreferenceGroup {
  std::string condition_id;
  std::vector<CandidateScore> candidates;
};

struct PreferencePair {
  std::string condition_id;
  std::string winner_id;
  std::string loser_id;
  double margin = 0.0;

  bool operator==(const PreferencePair&) const = default;
};

enum class PairStrategy { kBetterVsWorse, kBestVsWorse, kBetterVsWorst, kBestVsWorst };
const char* to_string(PairStrategy s);
PairStrategy pair_strategy_from_string(const std::string& s);
inline constexpr PairStrategy kAllPairStrategies[] = {PairStrategy::kBetterVsWorse, PairStrategy::kBestVsWorse,
                                                      PairStrategy::kBetterVsWorst, PairStrategy::kBestVsWorst};

/// (r_align + r_fidelity) / 2; both scores must lie in [1, 5].
double composite_reward(double r_align, double r_fidelity);

void validate(const PreferenceGroup& group);

/// Pairs from already-aggregated rewards. Ties at the extremes go to the
/// lexicographically smallest id; output is ordered by descending margin,
/// then winner_id, then loser_id.
std::vector<PreferencePair> build_pairs_from_rewards(const std::string& condition_id,
                                                     const std::vector<std::pair<std::string, double>>& rewards,
                                                     PairStrategy strategy, double min_margin);

std::vector<PreferencePair> build_pairs(const PreferenceGroup& group, PairStrategy strategy,
                                        double min_margin = kDefaultMinMargin);

struct DatasetStats {
  std::size_t count = 0;
  double min_margin = 0.0;
  double max_margin = 0.0;
  double mean_margin = 0.0;
  double histogram_bin_width = 0.5;
  std::vector<std::size_t> histogram;  // bins [k w, (k+1) w) over [0, 4]
  std::map<std::string, std::size_t> per_condition;
};

DatasetStats dataset_stats(const std::vector<PreferencePair>& pairs);

nlohmann::ordered_json to_json(const CandidateScore& c);
nlohmann::ordered_json to_json(const PreferenceGroup& g);
nlohmann::ordered_json to_json(const PreferencePair& p);
nlohmann::ordered_json to_json(const DatasetStats& s);
PreferenceGroup group_from_json(const nlohmann::json& j);
PreferencePair pair_from_json(const nlohmann::json& j);

std::vector<PreferenceGroup> read_groups(const std::filesystem::path& path);
void write_groups(const std::filesystem::path& path, const std::vector<PreferenceGroup>& groups);
std::vector<PreferencePair> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs);

}  // namespace animpref::prefs
