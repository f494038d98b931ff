#include "animpref/preference_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "animpref/tensor.hpp"

namespace animpref::prefs {

namespace {

void require_likert(double v, const char* what) {
  if (!(v >= kLikertMin && v <= kLikertMax)) {
    std::ostringstream os;
    os << what << " score " << v << " outside [1, 5]";
    throw Error(ErrorKind::kOutOfRange, os.str());
  }
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      std::ostringstream os;
      os << path.string() << ":" << lineno << ": " << e.what();
      throw Error(ErrorKind::kIo, os.str());
    }
  }
  return out;
}

}  // namespace

const char* to_string(PairStrategy s) {
  switch (s) {
    case PairStrategy::kBetterVsWorse: return "better_vs_worse";
    case PairStrategy::kBestVsWorse: return "best_vs_worse";
    case PairStrategy::kBetterVsWorst: return "better_vs_worst";
    case PairStrategy::kBestVsWorst: return "best_vs_worst";
  }
  return "unknown";
}

PairStrategy pair_strategy_from_string(const std::string& s) {
  for (PairStrategy p : kAllPairStrategies)
    if (s == to_string(p)) return p;
  throw Error(ErrorKind::kInvalidConfig, "unknown pairing strategy: " + s);
}

double composite_reward(double r_align, double r_fidelity) {
  require_likert(r_align, "r_align");
  require_likert(r_fidelity, "r_fidelity");
  return 0.5 * (r_align + r_fidelity);
}

void validate(const PreferenceGroup& group) {
  if (group.candidates.size() < 2) throw Error(ErrorKind::kInvalidConfig, "group " + group.condition_id + ": fewer than 2 candidates");
  std::set<std::string> ids;
  for (const auto& c : group.candidates) {
    if (!ids.insert(c.sample_id).second)
      throw Error(ErrorKind::kInvalidConfig, "group " + group.condition_id + ": duplicate sample_id " + c.sample_id);
    require_likert(c.r_align, "r_align");
    require_likert(c.r_fidelity, "r_fidelity");
  }
}

std::vector<PreferencePair> build_pairs_from_rewards(const std::string& condition_id,
                                                     const std::vector<std::pair<std::string, double>>& rewards,
                                                     PairStrategy strategy, double min_margin) {
  std::vector<PreferencePair> out;
  if (rewards.size() < 2) return out;
  std::size_t best = 0, worst = 0;
  for (std::size_t i = 1; i < rewards.size(); ++i) {
    const auto& [id, r] = rewards[i];
    if (r > rewards[best].second || (r == rewards[best].second && id < rewards[best].first)) best = i;
    if (r < rewards[worst].second || (r == rewards[worst].second && id < rewards[worst].first)) worst = i;
  }
  const auto emit = [&](std::size_t w, std::size_t l) {
    if (!(rewards[w].second > rewards[l].second)) return;
    const double margin = rewards[w].second - rewards[l].second;
    if (margin < min_margin) return;
    out.push_back({condition_id, rewards[w].first, rewards[l].first, margin});
  };
  switch (strategy) {
    case PairStrategy::kBetterVsWorse:
      for (std::size_t i = 0; i < rewards.size(); ++i)
        for (std::size_t j = 0; j < rewards.size(); ++j) emit(i, j);
      break;
    case PairStrategy::kBestVsWorse:
      for (std::size_t j = 0; j < rewards.size(); ++j) emit(best, j);
      break;
    case PairStrategy::kBetterVsWorst:
      for (std::size_t i = 0; i < rewards.size(); ++i) emit(i, worst);
      break;
    case PairStrategy::kBestVsWorst:
      emit(best, worst);
      break;
  }
  std::sort(out.begin(), out.end(), [](const PreferencePair& a, const PreferencePair& b) {
    if (a.margin != b.margin) return a.margin > b.margin;
    if (a.winner_id != b.winner_id) return a.winner_id < b.winner_id;
    return a.loser_id < b.loser_id;
  });
  return out;
}

std::vector<PreferencePair> build_pairs(const PreferenceGroup& group, PairStrategy strategy, double min_margin) {
  validate(group);
  std::vector<std::pair<std::string, double>> rewards;
  rewards.reserve(group.candidates.size());
  for (const auto& c : group.candidates) rewards.emplace_back(c.sample_id, composite_reward(c.r_align, c.r_fidelity));
  return build_pairs_from_rewards(group.condition_id, rewards, strategy, min_margin);
}

DatasetStats dataset_stats(const std::vector<PreferencePair>& pairs) {
  DatasetStats s;
  s.histogram.assign(8, 0);
  s.count = pairs.size();
  if (pairs.empty()) return s;
  s.min_margin = pairs.front().margin;
  s.max_margin = pairs.front().margin;
  double total = 0;
  for (const auto& p : pairs) {
    s.min_margin = std::min(s.min_margin, p.margin);
    s.max_margin = std::max(s.max_margin, p.margin);
    total += p.margin;
    const auto bin = std::min<std::size_t>(s.histogram.size() - 1, std::size_t(std::floor(p.margin / s.histogram_bin_width)));
    ++s.histogram[bin];
    ++s.per_condition[p.condition_id];
  }
  s.mean_margin = total / double(pairs.size());
  return s;
}

nlohmann::ordered_json to_json(const CandidateScore& c) {
  nlohmann::ordered_json j;
  j["sample_id"] = c.sample_id;
  j["r_align"] = c.r_align;
  j["r_fidelity"] = c.r_fidelity;
  return j;
}

nlohmann::ordered_json to_json(const PreferenceGroup& g) {
  nlohmann::ordered_json j;
  j["condition_id"] = g.condition_id;
  j["candidates"] = nlohmann::ordered_json::array();
  for (const auto& c : g.candidates) j["candidates"].push_back(to_json(c));
  return j;
}

nlohmann::ordered_json to_json(const PreferencePair& p) {
  nlohmann::ordered_json j;
  j["condition_id"] = p.condition_id;
  j["winner_id"] = p.winner_id;
  j["loser_id"] = p.loser_id;
  j["margin"] = p.margin;
  return j;
}

nlohmann::ordered_json to_json(const DatasetStats& s) {
  nlohmann::ordered_json j;
  j["count"] = s.count;
  j["min_margin"] = s.min_margin;
  j["max_margin"] = s.max_margin;
  j["mean_margin"] = s.mean_margin;
  j["histogram_bin_width"] = s.histogram_bin_width;
  j["histogram"] = s.histogram;
  j["conditions_covered"] = s.per_condition.size();
  j["per_condition"] = s.per_condition;
  return j;
}

PreferenceGroup group_from_json(const nlohmann::json& j) {
  PreferenceGroup g;
  try {
    g.condition_id = j.at("condition_id").get<std::string>();
    for (const auto& c : j.at("candidates"))
      g.candidates.push_back({c.at("sample_id").get<std::string>(), c.at("r_align").get<double>(), c.at("r_fidelity").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, std::string("malformed preference group: ") + e.what());
  }
  validate(g);
  return g;
}

PreferencePair pair_from_json(const nlohmann::json& j) {
  try {
    return {j.at("condition_id").get<std::string>(), j.at("winner_id").get<std::string>(),
            j.at("loser_id").get<std::string>(), j.at("margin").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, std::string("malformed preference pair: ") + e.what());
  }
}

std::vector<PreferenceGroup> read_groups(const std::filesystem::path& path) {
  std::vector<PreferenceGroup> out;
  for (const auto& j : read_jsonl(path)) out.push_back(group_from_json(j));
  return out;
}

void write_groups(const std::filesystem::path& path, const std::vector<PreferenceGroup>& groups) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& g : groups) os << to_json(g).dump() << '\n';
}

std::vector<PreferencePair> read_pairs(const std::filesystem::path& path) {
  std::vector<PreferencePair> out;
  for (const auto& j : read_jsonl(path)) out.push_back(pair_from_json(j));
  return out;
}

void write_pairs(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& p : pairs) os << to_json(p).dump() << '\n';
}

}  // namespace animpref::prefs
