#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "flusense/common/errors.hpp"
#include "flusense/datagen/cohort.hpp"

namespace flusense::datagen {
namespace {

void AppendInt(std::string& out, std::int64_t v) {
  char buf[24];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, r.ptr);
}

std::ofstream OpenOut(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::ifstream OpenIn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return in;
}

// Splits a CSV line on commas; empty fields are kept.
std::vector<std::string_view> Fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::int64_t ParseInt(std::string_view field, const std::string& where) {
  std::int64_t v = 0;
  const auto r = std::from_chars(field.data(), field.data() + field.size(), v);
  if (r.ec != std::errc() || r.ptr != field.data() + field.size()) {
    throw DataError(where + ": bad integer '" + std::string(field) + "'");
  }
  return v;
}

double ParseDouble(std::string_view field, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(std::string(field), &used);
    if (used != field.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": bad number '" + std::string(field) + "'");
  }
}

void ExpectHeader(std::istream& in, const std::string& header, const std::string& file) {
  std::string line;
  if (!std::getline(in, line) || line != header) throw DataError(file + ": unexpected header");
}

}  // namespace

void WriteCohort(const Cohort& cohort, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = OpenOut(dir / "minutes.csv");
    out << "user_id,minute_index,heart_rate,steps,sleep,awake,in_bed\n";
    std::string buf;
    for (const auto& user : cohort.users) {
      const auto& v = user.streams.values;
      for (std::size_t t = 0; t < user.streams.minutes(); ++t) {
        bool any = false;
        for (const auto& s : v) any = any || s[t] != kMissing;
        if (!any) continue;  // absent rows mean every stream is missing
        AppendInt(buf, user.user_id);
        buf.push_back(',');
        AppendInt(buf, static_cast<std::int64_t>(t));
        for (const auto& s : v) {
          buf.push_back(',');
          if (s[t] != kMissing) AppendInt(buf, s[t]);
        }
        buf.push_back('\n');
        if (buf.size() > (1u << 20)) {
          out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
          buf.clear();
        }
      }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  {
    auto out = OpenOut(dir / "labels.csv");
    out << "user_id,day_index,flu_positive,severe_fever,severe_cough,severe_fatigue,flu_symptoms\n";
    for (const auto& l : cohort.labels) {
      out << l.user_id << ',' << l.day_index << ',' << int{l.flu_positive} << ','
          << int{l.severe_fever} << ',' << int{l.severe_cough} << ',' << int{l.severe_fatigue}
          << ',' << int{l.flu_symptoms} << '\n';
    }
  }
  {
    auto out = OpenOut(dir / "profile.csv");
    out.precision(6);
    out << "user_id,bmr\n";
    for (const auto& u : cohort.users) out << u.user_id << ',' << u.bmr << '\n';
  }
  {
    auto out = OpenOut(dir / "events.csv");
    out.precision(6);
    out << "user_id,onset_day,duration_days,peak_days,strength,flu,tested_positive_day\n";
    for (const auto& e : cohort.events) {
      out << e.user_id << ',' << e.onset_day << ',' << e.duration_days << ',' << e.peak_days << ','
          << e.strength << ',' << int{e.flu} << ',';
      if (e.tested_positive_day) out << *e.tested_positive_day;
      out << '\n';
    }
  }
  nlohmann::ordered_json manifest;
  manifest["format"] = "flusense-cohort";
  manifest["version"] = 1;
  manifest["seed"] = cohort.config.seed;
  manifest["config"] = ToJson(cohort.config);
  auto out = OpenOut(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

Cohort ReadCohort(const std::filesystem::path& dir) {
  Cohort cohort;
  {
    auto in = OpenIn(dir / "manifest.json");
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("manifest.json: ") + e.what());
    }
    if (manifest.value("format", "") != "flusense-cohort") throw DataError("manifest.json: wrong format");
    cohort.config = CohortConfigFromJson(manifest.at("config"));
  }
  const auto& c = cohort.config;
  const std::size_t minutes = static_cast<std::size_t>(c.days_per_user) * kMinutesPerDay;
  std::map<std::int64_t, std::size_t> index;
  {
    auto in = OpenIn(dir / "profile.csv");
    ExpectHeader(in, "user_id,bmr", "profile.csv");
    std::string line;
    while (std::getline(in, line)) {
      const auto f = Fields(line);
      if (f.size() != 2) throw DataError("profile.csv: bad row");
      UserData u;
      u.user_id = ParseInt(f[0], "profile.csv");
      u.bmr = ParseDouble(f[1], "profile.csv");
      u.streams = StreamSet(minutes);
      index[u.user_id] = cohort.users.size();
      cohort.users.push_back(std::move(u));
    }
  }
  {
    auto in = OpenIn(dir / "minutes.csv");
    ExpectHeader(in, "user_id,minute_index,heart_rate,steps,sleep,awake,in_bed", "minutes.csv");
    std::string line;
    while (std::getline(in, line)) {
      const auto f = Fields(line);
      if (f.size() != 7) throw DataError("minutes.csv: bad row");
      const auto it = index.find(ParseInt(f[0], "minutes.csv"));
      if (it == index.end()) throw DataError("minutes.csv: unknown user");
      const auto t = ParseInt(f[1], "minutes.csv");
      if (t < 0 || static_cast<std::size_t>(t) >= minutes) throw DataError("minutes.csv: minute out of range");
      auto& v = cohort.users[it->second].streams.values;
      for (int s = 0; s < kStreamCount; ++s) {
        if (f[2 + s].empty()) continue;
        const auto x = ParseInt(f[2 + s], "minutes.csv");
        if (x < 0 || x >= kMissing) throw DataError("minutes.csv: value out of range");
        v[s][static_cast<std::size_t>(t)] = static_cast<std::uint8_t>(x);
      }
    }
  }
  {
    auto in = OpenIn(dir / "labels.csv");
    ExpectHeader(in, "user_id,day_index,flu_positive,severe_fever,severe_cough,severe_fatigue,flu_symptoms",
                 "labels.csv");
    std::string line;
    while (std::getline(in, line)) {
      const auto f = Fields(line);
      if (f.size() != 7) throw DataError("labels.csv: bad row");
      LabeledDay l;
      l.user_id = ParseInt(f[0], "labels.csv");
      l.day_index = static_cast<int>(ParseInt(f[1], "labels.csv"));
      l.flu_positive = static_cast<std::uint8_t>(ParseInt(f[2], "labels.csv"));
      l.severe_fever = static_cast<std::uint8_t>(ParseInt(f[3], "labels.csv"));
      l.severe_cough = static_cast<std::uint8_t>(ParseInt(f[4], "labels.csv"));
      l.severe_fatigue = static_cast<std::uint8_t>(ParseInt(f[5], "labels.csv"));
      l.flu_symptoms = static_cast<std::uint8_t>(ParseInt(f[6], "labels.csv"));
      cohort.labels.push_back(l);
    }
    if (cohort.labels.size() != cohort.users.size() * static_cast<std::size_t>(c.days_per_user)) {
      throw DataError("labels.csv: expected one row per user-day");
    }
  }
  {
    auto in = OpenIn(dir / "events.csv");
    ExpectHeader(in, "user_id,onset_day,duration_days,peak_days,strength,flu,tested_positive_day",
                 "events.csv");
    std::string line;
    while (std::getline(in, line)) {
      const auto f = Fields(line);
      if (f.size() != 7) throw DataError("events.csv: bad row");
      IllnessEvent e;
      e.user_id = ParseInt(f[0], "events.csv");
      e.onset_day = static_cast<int>(ParseInt(f[1], "events.csv"));
      e.duration_days = static_cast<int>(ParseInt(f[2], "events.csv"));
      e.peak_days = ParseDouble(f[3], "events.csv");
      e.strength = ParseDouble(f[4], "events.csv");
      e.flu = ParseInt(f[5], "events.csv") != 0;
      if (!f[6].empty()) e.tested_positive_day = static_cast<int>(ParseInt(f[6], "events.csv"));
      cohort.events.push_back(std::move(e));
    }
  }
  return cohort;
}

}  // namespace flusense::datagen
