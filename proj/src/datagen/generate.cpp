#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include "flusense/common/errors.hpp"
#include "flusense/common/rng.hpp"
#include "flusense/datagen/cohort.hpp"

namespace flusense::datagen {
namespace {

constexpr int kSymptomCount = 3;  // fever, cough, fatigue
constexpr double kMaxSeverity = 1.5;

struct Profile {
  double base_hr = 64.0;
  double circadian_amplitude = 4.0;
  double circadian_phase = 0.65;  // fraction of the day at the HR peak
  double sleep_hr_drop = 8.0;
  double bedtime = 1380.0;  // minute of day
  double sleep_minutes = 450.0;
  double active_on = 0.03;
  double active_off = 0.15;
  double step_intensity = 90.0;
  double hr_per_step = 0.15;
  double nap_probability = 0.1;
  double hr_noise = 2.5;
  double bmr = 1600.0;
};

struct UserPlan {
  std::int64_t user_id = 0;
  Profile profile;
  std::vector<IllnessEvent> events;
  // Symptom latents per day, [day][symptom].
  std::vector<std::array<double, kSymptomCount>> latents;
};

// Severity of an event `t` days after the start of its onset day.
double Curve(const IllnessEvent& e, double t) {
  const double d = e.duration_days;
  if (t <= 0.0 || t >= d) return 0.0;
  if (t < e.peak_days) return t / e.peak_days;
  return (d - t) / (d - e.peak_days);
}

Profile DrawProfile(const CohortConfig& c, Rng& r) {
  Profile p;
  p.base_hr = std::clamp(r.Normal(64.0, c.between_user_hr_sd), 42.0, 95.0);
  p.circadian_amplitude = r.Uniform(2.0, 6.0);
  p.circadian_phase = r.Uniform(0.55, 0.75);
  p.sleep_hr_drop = r.Uniform(5.0, 12.0);
  p.bedtime = std::clamp(r.Normal(1380.0, 50.0), 1260.0, 1530.0);
  p.sleep_minutes = std::clamp(r.Normal(450.0, 35.0), 330.0, 570.0);
  p.active_on = r.Uniform(0.015, 0.05);
  p.active_off = r.Uniform(0.08, 0.25);
  p.step_intensity = std::clamp(r.Normal(90.0, 15.0), 50.0, 140.0);
  p.hr_per_step = r.Uniform(0.1, 0.2);
  p.nap_probability = r.Uniform(0.03, 0.2);
  p.hr_noise = r.Uniform(2.0, 3.5);
  p.bmr = std::round(std::clamp(r.Normal(1600.0, 220.0), 1100.0, 2400.0));
  return p;
}

IllnessEvent DrawEvent(const CohortConfig& c, std::int64_t user_id, int onset, bool flu, Rng& r) {
  const auto& m = c.illness;
  IllnessEvent e;
  e.user_id = user_id;
  e.onset_day = onset;
  e.duration_days = static_cast<int>(r.UniformInt(m.min_duration_days, m.max_duration_days));
  e.peak_days = r.Uniform(m.min_peak_days, m.max_peak_days);
  e.strength = r.Uniform(0.6, 1.4);
  e.flu = flu;
  for (int k = 0; k < e.duration_days; ++k) e.severity.push_back(Curve(e, k + 0.5));
  if (flu) {
    const int day = std::min(onset + e.duration_days - 1,
                             onset + static_cast<int>(std::ceil(e.peak_days)) + static_cast<int>(r.UniformInt(0, 1)));
    if (day >= 1 && day <= c.days_per_user) e.tested_positive_day = day;
  }
  return e;
}

UserPlan PlanUser(const CohortConfig& c, std::int64_t user_id, const Rng& user_rng) {
  UserPlan plan;
  plan.user_id = user_id;
  Rng profile_rng = user_rng.Split("profile");
  plan.profile = DrawProfile(c, profile_rng);

  Rng event_rng = user_rng.Split("events");
  const auto& m = c.illness;
  if (c.one_event_per_user) {
    const int onset = static_cast<int>(event_rng.UniformInt(9, c.days_per_user - m.max_duration_days));
    plan.events.push_back(DrawEvent(c, user_id, onset, true, event_rng));
  } else {
    const double rate = c.rates.flu_positive / m.flu_fraction;
    // Onsets before the season let early days start mid-illness.
    for (int day = 2 - m.max_duration_days; day <= c.days_per_user; ++day) {
      const auto count = event_rng.Poisson(rate);
      for (std::int64_t k = 0; k < count; ++k) {
        const bool flu = event_rng.Bernoulli(m.flu_fraction);
        plan.events.push_back(DrawEvent(c, user_id, day, flu, event_rng));
      }
    }
  }

  Rng symptom_rng = user_rng.Split("symptoms");
  std::vector<std::array<double, kSymptomCount>> weights;
  for (std::size_t i = 0; i < plan.events.size(); ++i) {
    std::array<double, kSymptomCount> w{};
    for (auto& x : w) x = symptom_rng.Uniform(0.5, 1.2);
    if (!plan.events[i].flu) w[0] *= 0.6;  // fever is a stronger flu marker
    weights.push_back(w);
  }
  plan.latents.resize(static_cast<std::size_t>(c.days_per_user));
  for (int day = 1; day <= c.days_per_user; ++day) {
    auto& latent = plan.latents[static_cast<std::size_t>(day - 1)];
    for (int s = 0; s < kSymptomCount; ++s) latent[s] = symptom_rng.Normal(0.0, m.symptom_noise);
    for (std::size_t i = 0; i < plan.events.size(); ++i) {
      const auto& e = plan.events[i];
      const double sev = e.strength * Curve(e, day - e.onset_day + 0.5);
      for (int s = 0; s < kSymptomCount; ++s) latent[s] += weights[i][s] * sev;
    }
  }
  return plan;
}

struct Thresholds {
  double mild = 0.0;
  std::array<double, kSymptomCount> severe{};
};

// Value v such that exactly round(rate * n) entries exceed v (ties aside).
double UpperQuantile(std::vector<double> values, double rate) {
  std::sort(values.begin(), values.end(), std::greater<>());
  const auto k = static_cast<std::size_t>(std::llround(rate * static_cast<double>(values.size())));
  if (k == 0) return values.front();
  if (k >= values.size()) return values.back() - 1.0;
  return 0.5 * (values[k - 1] + values[k]);
}

Thresholds Calibrate(const CohortConfig& c, const std::vector<UserPlan>& plans) {
  std::array<std::vector<double>, kSymptomCount> all;
  for (const auto& p : plans) {
    for (const auto& l : p.latents) {
      for (int s = 0; s < kSymptomCount; ++s) all[s].push_back(l[s]);
    }
  }
  const double n = static_cast<double>(all[0].size());
  auto symptom_rate = [&](double threshold) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < all[0].size(); ++i) {
      int above = 0;
      for (int s = 0; s < kSymptomCount; ++s) above += all[s][i] > threshold;
      hits += above >= 2;
    }
    return static_cast<double>(hits) / n;
  };
  double lo = -10.0, hi = 10.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (symptom_rate(mid) > c.rates.flu_symptoms ? lo : hi) = mid;
  }
  Thresholds t;
  t.mild = hi;
  const std::array<double, kSymptomCount> rates = {c.rates.severe_fever, c.rates.severe_cough,
                                                   c.rates.severe_fatigue};
  for (int s = 0; s < kSymptomCount; ++s) {
    t.severe[s] = std::max(UpperQuantile(all[s], rates[s]), t.mild);
  }
  return t;
}

void Paint(std::vector<std::uint8_t>& v, std::int64_t from, std::int64_t to, std::uint8_t value) {
  from = std::max<std::int64_t>(from, 0);
  to = std::min<std::int64_t>(to, static_cast<std::int64_t>(v.size()));
  for (std::int64_t i = from; i < to; ++i) v[static_cast<std::size_t>(i)] = value;
}

UserData Simulate(const CohortConfig& c, const UserPlan& plan, const Rng& user_rng) {
  const auto& p = plan.profile;
  const auto& m = c.illness;
  const int days = c.days_per_user;
  const std::size_t minutes = static_cast<std::size_t>(days) * kMinutesPerDay;

  // Physiological severity per minute, scaled by the master amplitude.
  std::vector<float> effect(minutes, 0.0f);
  if (m.amplitude > 0.0) {
    for (const auto& e : plan.events) {
      const double start = (e.onset_day - 1 - m.physiology_lead_days) * kMinutesPerDay;
      const auto first = static_cast<std::int64_t>(std::max(0.0, std::floor(start)));
      const auto last = std::min<std::int64_t>(
          static_cast<std::int64_t>(std::ceil(start + e.duration_days * kMinutesPerDay)),
          static_cast<std::int64_t>(minutes));
      for (std::int64_t t = first; t < last; ++t) {
        const double sev = e.strength * Curve(e, (t - start) / kMinutesPerDay);
        auto& slot = effect[static_cast<std::size_t>(t)];
        slot = static_cast<float>(std::min(kMaxSeverity, slot + m.amplitude * sev));
      }
    }
  }
  std::vector<double> day_effect(static_cast<std::size_t>(days), 0.0);
  for (std::size_t t = 0; t < minutes; ++t) day_effect[t / kMinutesPerDay] += effect[t];
  for (auto& e : day_effect) e /= kMinutesPerDay;

  std::vector<std::uint8_t> asleep(minutes, 0), in_bed(minutes, 0);
  Rng sleep_rng = user_rng.Split("sleep");
  for (int night = 0; night <= days; ++night) {
    const double eff = day_effect[static_cast<std::size_t>(std::clamp(night, 1, days) - 1)];
    const double bed = (night - 1) * kMinutesPerDay + p.bedtime + sleep_rng.Normal(0.0, 30.0) - 30.0 * eff;
    const double length = p.sleep_minutes * (1.0 + m.sleep_increase * eff) + sleep_rng.Normal(0.0, 25.0);
    const auto b = static_cast<std::int64_t>(bed);
    const auto w = static_cast<std::int64_t>(bed + std::max(120.0, length));
    Paint(in_bed, b - 10, w + 10, 1);
    Paint(asleep, b, w, 1);
    for (std::int64_t t = b; t < w; ++t) {
      if (sleep_rng.Bernoulli(0.01)) {
        const auto gap = sleep_rng.Geometric(0.25);
        Paint(asleep, t, std::min<std::int64_t>(t + gap, w), 0);
        t += gap;
      }
    }
  }
  for (int day = 1; day <= days; ++day) {
    const double eff = day_effect[static_cast<std::size_t>(day - 1)];
    if (sleep_rng.Bernoulli(std::min(0.9, p.nap_probability * (1.0 + 2.0 * eff)))) {
      const auto start = (day - 1) * static_cast<std::int64_t>(kMinutesPerDay) + 780 + sleep_rng.UniformInt(0, 180);
      const auto length = static_cast<std::int64_t>(sleep_rng.UniformInt(20, 70) * (1.0 + eff));
      Paint(in_bed, start, start + length, 1);
      Paint(asleep, start, start + length, 1);
    }
  }

  UserData user;
  user.user_id = plan.user_id;
  user.bmr = p.bmr;
  user.streams = StreamSet(minutes);
  auto& hr = user.streams.values[Index(Stream::kHeartRate)];
  auto& steps = user.streams.values[Index(Stream::kSteps)];
  Rng activity_rng = user_rng.Split("activity");
  bool active = false;
  double recent_steps = 0.0;
  for (std::size_t t = 0; t < minutes; ++t) {
    const double eff = effect[t];
    const double minute_of_day = static_cast<double>(t % kMinutesPerDay);
    int s = 0;
    if (in_bed[t] == 0) {
      const double hour = minute_of_day / 60.0;
      const double daytime = hour < 6.0 ? 0.2 : 1.0;
      const double suppress = std::max(0.0, 1.0 - m.activity_suppression * eff);
      if (active) {
        active = !activity_rng.Bernoulli(std::min(1.0, p.active_off * (1.0 + m.activity_suppression * eff)));
      } else {
        active = activity_rng.Bernoulli(p.active_on * daytime * suppress);
      }
      if (active) {
        const double mean = p.step_intensity * (1.0 - 0.5 * m.activity_suppression * std::min(1.0, eff));
        s = static_cast<int>(std::clamp(std::round(activity_rng.Normal(mean, 15.0)), 0.0, 250.0));
      } else if (activity_rng.Bernoulli(0.12)) {
        s = static_cast<int>(activity_rng.UniformInt(1, 20));
      }
    } else {
      active = false;
    }
    steps[t] = static_cast<std::uint8_t>(s);
    recent_steps += 0.2 * (s - recent_steps);
    const double circadian =
        p.circadian_amplitude *
        std::sin(2.0 * std::numbers::pi * (minute_of_day / kMinutesPerDay - p.circadian_phase + 0.25));
    double value = p.base_hr * (1.0 + m.hr_elevation * eff) + circadian +
                   (asleep[t] ? -p.sleep_hr_drop : 0.0) + p.hr_per_step * recent_steps +
                   activity_rng.Normal(0.0, p.hr_noise);
    hr[t] = static_cast<std::uint8_t>(std::clamp(std::round(value), 35.0, 220.0));
  }
  auto& sleep = user.streams.values[Index(Stream::kSleep)];
  auto& awake = user.streams.values[Index(Stream::kAwake)];
  auto& bed = user.streams.values[Index(Stream::kInBed)];
  for (std::size_t t = 0; t < minutes; ++t) {
    sleep[t] = asleep[t];
    awake[t] = static_cast<std::uint8_t>(1 - asleep[t]);
    bed[t] = in_bed[t];
  }

  Rng missing_rng = user_rng.Split("missing");
  const double blocks = c.DeviceOffBlocksPerDay();
  for (int day = 1; day <= days; ++day) {
    const auto day_start = static_cast<std::int64_t>(day - 1) * kMinutesPerDay;
    if (missing_rng.Bernoulli(c.whole_day_dropout)) {
      for (auto& v : user.streams.values) Paint(v, day_start, day_start + kMinutesPerDay, kMissing);
      continue;
    }
    const double eff = std::min(1.0, day_effect[static_cast<std::size_t>(day - 1)]);
    const auto count = missing_rng.Poisson(blocks * (1.0 + m.missing_boost * eff));
    for (std::int64_t k = 0; k < count; ++k) {
      const auto length = std::min<std::int64_t>(
          kMinutesPerDay, 60 + missing_rng.Geometric(1.0 / c.device_off_extra_minutes));
      const auto start = day_start + missing_rng.UniformInt(0, kMinutesPerDay - length);
      for (auto& v : user.streams.values) Paint(v, start, start + length, kMissing);
    }
    // Short optical-sensor gaps affect heart rate only.
    const auto gaps = missing_rng.Poisson(2.0);
    for (std::int64_t k = 0; k < gaps; ++k) {
      const auto length = missing_rng.Geometric(0.2);
      const auto start = day_start + missing_rng.UniformInt(0, kMinutesPerDay - 1);
      Paint(hr, start, std::min(start + length, day_start + kMinutesPerDay), kMissing);
    }
  }
  return user;
}

template <typename F>
void ParallelFor(std::size_t n, int threads, F&& body) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

Cohort GenerateCohort(const CohortConfig& config, int threads) {
  config.Validate();
  const Rng master = Rng(config.seed).Split(config.name);
  const auto n = static_cast<std::size_t>(config.user_count);
  std::vector<UserPlan> plans(n);
  for (std::size_t u = 0; u < n; ++u) {
    const std::int64_t id = config.first_user_id + static_cast<std::int64_t>(u);
    plans[u] = PlanUser(config, id, master.Split(static_cast<std::uint64_t>(id)));
  }
  const Thresholds thresholds = Calibrate(config, plans);

  Cohort cohort;
  cohort.config = config;
  cohort.users.resize(n);
  ParallelFor(n, threads, [&](std::size_t u) {
    cohort.users[u] = Simulate(config, plans[u], master.Split(static_cast<std::uint64_t>(plans[u].user_id)));
  });

  for (const auto& plan : plans) {
    std::vector<std::uint8_t> positive(static_cast<std::size_t>(config.days_per_user), 0);
    for (const auto& e : plan.events) {
      if (e.tested_positive_day) positive[static_cast<std::size_t>(*e.tested_positive_day - 1)] = 1;
      cohort.events.push_back(e);
    }
    for (int day = 1; day <= config.days_per_user; ++day) {
      const auto& l = plan.latents[static_cast<std::size_t>(day - 1)];
      LabeledDay row;
      row.user_id = plan.user_id;
      row.day_index = day;
      row.flu_positive = positive[static_cast<std::size_t>(day - 1)];
      row.severe_fever = l[0] > thresholds.severe[0];
      row.severe_cough = l[1] > thresholds.severe[1];
      row.severe_fatigue = l[2] > thresholds.severe[2];
      int mild = 0;
      for (const double x : l) mild += x > thresholds.mild;
      row.flu_symptoms = mild >= 2;
      cohort.labels.push_back(row);
    }
  }
  return cohort;
}

}  // namespace flusense::datagen
