#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "flusense/common/errors.hpp"
#include "flusense/datagen/cohort.hpp"
#include "flusense/datagen/splits.hpp"

using namespace flusense;
using namespace flusense::datagen;

namespace {

CohortConfig Small(int users = 12, int days = 40) {
  CohortConfig c;
  c.user_count = users;
  c.days_per_user = days;
  c.season_midpoint_day = days / 2;
  c.seed = 5;
  return c;
}

std::string Slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cohort size and label bookkeeping") {
  auto c = Small(50, 120);
  const auto cohort = GenerateCohort(c);
  CHECK(cohort.users.size() == 50);
  CHECK(cohort.labels.size() == 50 * 120);
  for (const auto& u : cohort.users) CHECK(u.streams.minutes() == 120 * 1440);
  for (std::size_t u = 0; u < 50; ++u) {
    for (int d = 1; d <= 120; ++d) {
      const auto& l = cohort.label(u, d);
      CHECK(l.user_id == cohort.users[u].user_id);
      CHECK(l.day_index == d);
    }
  }
  for (const auto& e : cohort.events) {
    if (!e.tested_positive_day) continue;
    CHECK(*e.tested_positive_day >= e.onset_day);
    CHECK(*e.tested_positive_day < e.onset_day + e.duration_days);
    double peak = 0.0;
    std::size_t arg = 0;
    for (std::size_t k = 0; k < e.severity.size(); ++k) {
      CHECK(e.severity[k] >= 0.0);
      CHECK(e.severity[k] <= 1.0);
      if (e.severity[k] > peak) {
        peak = e.severity[k];
        arg = k;
      }
    }
    CHECK(arg > 0);
    CHECK(arg + 1 < e.severity.size());
  }
}

TEST_CASE("flu symptoms require at least two mild symptoms, severe implies mild") {
  const auto cohort = GenerateCohort(Small(40, 120));
  std::size_t symptoms = 0;
  for (const auto& l : cohort.labels) {
    symptoms += l.flu_symptoms;
    // Two severe symptoms are also two mild ones.
    if (l.severe_fever + l.severe_cough + l.severe_fatigue >= 2) CHECK(l.flu_symptoms == 1);
  }
  CHECK(symptoms > 0);
}

TEST_CASE("missing-day fraction and flu-positivity balance match their targets") {
  const auto big = GenerateCohort(CohortConfig{});
  const auto s = Summarize(big);
  CHECK(std::abs(s.missing_day_fraction - 0.93) < 0.05);
  const double realized = static_cast<double>(s.positives[0]) / static_cast<double>(s.labeled_days);
  CHECK(realized > (1.0 / 300.0) / 2.0);
  CHECK(realized < (1.0 / 300.0) * 2.0);

  auto c = Small(50, 60);
  c.missing_day_fraction = 0.6;
  c.whole_day_dropout = 0.1;
  CHECK(std::abs(Summarize(GenerateCohort(c)).missing_day_fraction - 0.6) < 0.05);
}

TEST_CASE("generation is deterministic and thread-count independent") {
  const auto c = Small();
  const auto a = GenerateCohort(c, 1);
  const auto b = GenerateCohort(c, 3);
  for (std::size_t u = 0; u < a.users.size(); ++u) CHECK(a.users[u].streams.values == b.users[u].streams.values);
  const auto dir = std::filesystem::temp_directory_path() / "flusense_datagen_test";
  std::filesystem::remove_all(dir);
  WriteCohort(a, dir / "a");
  WriteCohort(b, dir / "b");
  for (const auto* f : {"minutes.csv", "labels.csv", "profile.csv", "events.csv", "manifest.json"}) {
    CHECK(Slurp(dir / "a" / f) == Slurp(dir / "b" / f));
  }
  auto other = c;
  other.seed = 6;
  CHECK(GenerateCohort(other).users[0].streams.values != a.users[0].streams.values);

  const auto back = ReadCohort(dir / "a");
  REQUIRE(back.users.size() == a.users.size());
  for (std::size_t u = 0; u < a.users.size(); ++u) {
    CHECK(back.users[u].streams.values == a.users[u].streams.values);
    CHECK(back.users[u].bmr == a.users[u].bmr);
  }
  CHECK(back.labels.size() == a.labels.size());
  CHECK(back.events.size() == a.events.size());
  std::filesystem::remove_all(dir);
}

TEST_CASE("zero amplitude removes every illness response from the streams") {
  auto c = Small(10, 60);
  c.illness.amplitude = 0.0;
  auto d = c;
  d.illness.hr_elevation = 0.5;
  d.illness.activity_suppression = 1.0;
  d.illness.sleep_increase = 1.0;
  d.illness.missing_boost = 3.0;
  const auto a = GenerateCohort(c);
  const auto b = GenerateCohort(d);
  for (std::size_t u = 0; u < a.users.size(); ++u) CHECK(a.users[u].streams.values == b.users[u].streams.values);
  std::size_t positives = 0;
  for (const auto& l : a.labels) positives += l.flu_symptoms;
  CHECK(positives > 0);
}

TEST_CASE("windows end the day before the label day") {
  const auto cohort = GenerateCohort(Small());
  const auto windows = ExtractWindows(cohort, 7);
  CHECK(windows.size() == 12u * (40 - 7));
  CHECK(windows.front().label_day == 8);
  const auto& w = windows.front();
  CHECK(FirstWindowMinute(w, 7) == 0);
  const auto view = WindowView(cohort, w, 7);
  CHECK(view.minutes() == 10080);
  CHECK(view.streams[0].data() == cohort.users[0].streams.values[0].data());
  for (const auto& ref : windows) {
    const auto v = WindowView(cohort, ref, 7);
    const auto offset = v.streams[0].data() - cohort.users[ref.user_index].streams.values[0].data();
    const auto last_minute = offset + static_cast<std::ptrdiff_t>(v.minutes()) - 1;
    CHECK(last_minute < static_cast<std::ptrdiff_t>(ref.label_day - 1) * 1440);
  }
  CHECK(ExtractWindows(cohort, 7, 7, 7).empty());
}

TEST_CASE("temporal split boundaries and train-only statistics") {
  const auto cohort = GenerateCohort(Small(6, 120));
  const auto split = SplitTemporal(cohort, 60);
  int lo = 1000, hi = 0;
  for (const auto& w : split.train) {
    lo = std::min(lo, w.label_day);
    hi = std::max(hi, w.label_day);
    CHECK(w.label_day - 1 < 60);
  }
  CHECK(lo == 8);
  CHECK(hi == 59);
  lo = 1000;
  hi = 0;
  for (const auto& w : split.test) {
    lo = std::min(lo, w.label_day);
    hi = std::max(hi, w.label_day);
  }
  CHECK(lo == 60);
  CHECK(hi == 120);
  std::set<std::int64_t> train_users, test_users;
  for (const auto& w : split.train) train_users.insert(w.user_id);
  for (const auto& w : split.test) test_users.insert(w.user_id);
  CHECK(train_users == test_users);

  // Statistics equal a direct pass over days 1..58.
  StreamStats::Accumulator acc;
  for (std::size_t u = 0; u < cohort.users.size(); ++u) acc.Add(cohort.Days(u, 1, 58));
  const auto direct = acc.Finish();
  for (int s = 0; s < kStreamCount; ++s) {
    CHECK(split.stats.mean[s] == direct.mean[s]);
    CHECK(split.stats.stddev[s] == direct.stddev[s]);
  }
  CHECK_THROWS_AS(SplitTemporal(cohort, 8), DataError);
  CHECK_THROWS_AS(SplitTemporal(cohort, 500), ConfigError);
}

TEST_CASE("positive-user folds") {
  auto c = CohortConfig{};
  c.user_count = 120;
  c.rates.flu_positive = 1.0 / 60.0;
  const auto cohort = GenerateCohort(c);
  const auto folds = FoldSplitPositiveUsers(cohort, 20, Rng(3));
  std::set<std::int64_t> seen;
  std::size_t lo = 1000, hi = 0;
  for (const auto& f : folds.folds) {
    lo = std::min(lo, f.size());
    hi = std::max(hi, f.size());
    for (const auto u : f) CHECK(seen.insert(u).second);
  }
  CHECK(hi - lo <= 1);
  std::set<std::int64_t> positive;
  for (const auto& l : cohort.labels) {
    if (l.flu_positive) positive.insert(l.user_id);
  }
  CHECK(seen == positive);
  for (const auto u : folds.pretrain_pool) CHECK(!positive.contains(u));
  CHECK(folds.pretrain_pool.size() + positive.size() == 120);
  CHECK(FoldSplitPositiveUsers(cohort, 20, Rng(3)).folds == folds.folds);
  CHECK_THROWS_AS(FoldSplitPositiveUsers(cohort, 500, Rng(3)), DataError);
}

TEST_CASE("transfer cohort") {
  const auto t = GenerateCohort(TransferCohortConfig());
  CHECK(t.users.size() == 32);
  CHECK(t.labels.size() == 1472);
  std::set<std::int64_t> ids;
  for (const auto& u : t.users) ids.insert(u.user_id);
  const auto primary = GenerateCohort(Small());
  for (const auto& u : primary.users) CHECK(!ids.contains(u.user_id));
  std::size_t positives = 0;
  for (const auto& l : t.labels) {
    if (l.flu_positive) {
      ++positives;
      CHECK(l.day_index >= 8);
    }
  }
  CHECK(positives == 32);
}

TEST_CASE("config validation and JSON round trip") {
  auto c = Small();
  c.illness.amplitude = 0.3;
  CHECK(ToJson(CohortConfigFromJson(ToJson(c))) == ToJson(c));
  auto bad = Small();
  bad.days_per_user = 10;
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
  bad = Small();
  bad.rates.flu_positive = 1.5;
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
  bad = Small();
  bad.rates.flu_positive = 0.4;
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
  CHECK_THROWS_AS(CohortConfigFromJson(nlohmann::json{{"users", 3}}), ConfigError);
  CHECK_THROWS_AS(ParseTask("covid"), ConfigError);
  CHECK(ParseTask("severe_cough") == Task::kSevereCough);
}
