#include "flusense/pretrain/pairs.hpp"

#include <algorithm>
#include <map>

#include "flusense/common/errors.hpp"

namespace flusense::pretrain {

std::vector<WindowPair> SamplePairs(const WindowDataset& data, std::size_t count, Rng& rng) {
  // Windows grouped by user, in dataset order.
  std::map<std::int64_t, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < data.size(); ++i) by_user[data.ref(i).user_id].push_back(i);
  std::vector<std::vector<std::size_t>> users;
  for (auto& [id, idx] : by_user) users.push_back(std::move(idx));
  if (users.size() < 2) throw DataError("pair sampling needs at least two users");

  const int span = data.window_days();
  auto disjoint = [&](std::size_t a, std::size_t b) {
    return std::abs(data.ref(a).label_day - data.ref(b).label_day) >= span;
  };
  std::vector<std::size_t> eligible;
  for (std::size_t u = 0; u < users.size(); ++u) {
    const auto [lo, hi] = std::minmax_element(users[u].begin(), users[u].end(), [&](std::size_t a, std::size_t b) {
      return data.ref(a).label_day < data.ref(b).label_day;
    });
    if (disjoint(*lo, *hi)) eligible.push_back(u);
  }
  if (eligible.empty()) throw DataError("no user has two non-overlapping windows");

  auto pick = [&](const std::vector<std::size_t>& v) {
    return v[static_cast<std::size_t>(rng.UniformInt(0, static_cast<std::int64_t>(v.size()) - 1))];
  };
  std::vector<WindowPair> pairs;
  pairs.reserve(count);
  const std::size_t positives = (count + 1) / 2;
  for (std::size_t i = 0; i < positives; ++i) {
    const auto& windows = users[pick(eligible)];
    const std::size_t a = pick(windows);
    std::vector<std::size_t> partners;
    for (std::size_t w : windows) {
      if (disjoint(a, w)) partners.push_back(w);
    }
    // The earliest or latest window always has a partner; resample otherwise.
    if (partners.empty()) {
      --i;
      continue;
    }
    pairs.push_back({a, pick(partners), 1});
  }
  for (std::size_t i = positives; i < count; ++i) {
    const auto ua = static_cast<std::size_t>(rng.UniformInt(0, static_cast<std::int64_t>(users.size()) - 1));
    auto ub = static_cast<std::size_t>(rng.UniformInt(0, static_cast<std::int64_t>(users.size()) - 2));
    if (ub >= ua) ++ub;
    pairs.push_back({pick(users[ua]), pick(users[ub]), 0});
  }
  rng.Shuffle(pairs);
  return pairs;
}

}  // namespace flusense::pretrain
