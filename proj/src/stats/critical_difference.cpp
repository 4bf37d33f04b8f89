#include "flusense/stats/critical_difference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "flusense/common/errors.hpp"

namespace flusense::stats {

void TaskResultMatrix::Validate() const {
  if (values.size() != models.size()) throw DataError("result matrix: one row per model required");
  for (const auto& row : values) {
    if (row.size() != tasks.size()) throw DataError("result matrix has holes");
    for (double v : row) {
      if (!std::isfinite(v)) throw DataError("result matrix has a non-finite value");
    }
  }
  if (!positives.empty()) {
    if (positives.size() != models.size()) throw DataError("result matrix: positives shape mismatch");
    for (const auto& row : positives) {
      if (row.size() != tasks.size()) throw DataError("result matrix: positives shape mismatch");
    }
  }
}

bool CriticalDifference::Significant(int a, int b) const {
  for (const auto& p : pairs) {
    if ((p.a == a && p.b == b) || (p.a == b && p.b == a)) return p.significant;
  }
  return false;
}

CriticalDifference ComputeCriticalDifference(const TaskResultMatrix& m, double alpha) {
  m.Validate();
  CriticalDifference cd;
  cd.alpha = alpha;
  cd.friedman = FriedmanTest(m.values);
  cd.gated = !(cd.friedman.p < alpha);

  const int k = static_cast<int>(m.models.size());
  cd.order.resize(k);
  std::iota(cd.order.begin(), cd.order.end(), 0);
  std::stable_sort(cd.order.begin(), cd.order.end(), [&](int a, int b) {
    return cd.friedman.average_ranks[a] < cd.friedman.average_ranks[b];
  });

  std::vector<double> raw;
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      PairwiseComparison pc{.a = a, .b = b};
      try {
        const auto w = WilcoxonSignedRank(m.values[a], m.values[b]);
        pc.w = w.w;
        pc.p = w.p;
      } catch (const DataError&) {
        // Identical results on every task.
        pc.p = 1.0;
      }
      raw.push_back(pc.p);
      cd.pairs.push_back(pc);
    }
  }
  const auto adjusted = HolmAdjust(raw);
  for (std::size_t i = 0; i < cd.pairs.size(); ++i) {
    cd.pairs[i].p_holm = adjusted[i];
    cd.pairs[i].significant = !cd.gated && adjusted[i] < alpha;
  }

  // For each start position, extend while every pair inside stays
  // non-significant; keep runs not contained in an earlier one.
  int covered_to = -1;
  for (int i = 0; i < k; ++i) {
    int j = i;
    while (j + 1 < k) {
      bool ok = true;
      for (int t = i; t <= j && ok; ++t) ok = !cd.Significant(cd.order[t], cd.order[j + 1]);
      if (!ok) break;
      ++j;
    }
    if (j > covered_to) {
      cd.cliques.emplace_back(cd.order.begin() + i, cd.order.begin() + j + 1);
      covered_to = j;
    }
  }
  return cd;
}

namespace {

std::string Fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string Escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string RenderText(const TaskResultMatrix& m, const CriticalDifference& cd) {
  std::ostringstream out;
  out << "metric " << m.metric << ", " << m.tasks.size() << " tasks\n";
  out << "friedman chi2=" << Fixed(cd.friedman.chi2, 4) << " p=" << Fixed(cd.friedman.p, 4)
      << (cd.gated ? " (not significant at alpha=" : " (significant at alpha=") << Fixed(cd.alpha, 2) << ")\n";
  out << "rank    model\n";
  for (int idx : cd.order) {
    out << Fixed(cd.friedman.average_ranks[idx], 2) << "    " << m.models[idx] << "\n";
  }
  out << "cliques\n";
  for (const auto& clique : cd.cliques) {
    out << "  [";
    for (std::size_t i = 0; i < clique.size(); ++i) out << (i ? ", " : "") << m.models[clique[i]];
    out << "]\n";
  }
  out << "pairwise wilcoxon (holm)\n";
  for (const auto& p : cd.pairs) {
    out << "  " << m.models[p.a] << " vs " << m.models[p.b] << ": p=" << Fixed(p.p, 4)
        << " holm=" << Fixed(p.p_holm, 4) << (p.significant ? " *" : "") << "\n";
  }
  return out.str();
}

std::string RenderSvg(const TaskResultMatrix& m, const CriticalDifference& cd) {
  const int k = static_cast<int>(m.models.size());
  const double left = 160, right = 160, axis_width = 400, top = 40;
  const double width = left + axis_width + right;
  const int half = (k + 1) / 2;
  const double clique_top = top + 20;
  const double label_top = clique_top + 12.0 * static_cast<double>(cd.cliques.size()) + 20;
  const double height = label_top + 22.0 * half + 20;
  auto x_of = [&](double rank) { return left + axis_width * (rank - 1) / std::max(1, k - 1); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << Fixed(width, 0) << "\" height=\""
    << Fixed(height, 0) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<line x1=\"" << Fixed(x_of(1), 1) << "\" y1=\"" << top << "\" x2=\"" << Fixed(x_of(k), 1) << "\" y2=\"" << top
    << "\" stroke=\"black\"/>\n";
  for (int r = 1; r <= k; ++r) {
    s << "<line x1=\"" << Fixed(x_of(r), 1) << "\" y1=\"" << top - 5 << "\" x2=\"" << Fixed(x_of(r), 1)
      << "\" y2=\"" << top << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << Fixed(x_of(r), 1) << "\" y=\"" << top - 9 << "\" text-anchor=\"middle\">" << r
      << "</text>\n";
  }
  for (std::size_t c = 0; c < cd.cliques.size(); ++c) {
    const auto& clique = cd.cliques[c];
    if (clique.size() < 2) continue;
    const double y = clique_top + 12.0 * static_cast<double>(c);
    s << "<line x1=\"" << Fixed(x_of(cd.friedman.average_ranks[clique.front()]) - 3, 1) << "\" y1=\"" << y
      << "\" x2=\"" << Fixed(x_of(cd.friedman.average_ranks[clique.back()]) + 3, 1) << "\" y2=\"" << y
      << "\" stroke=\"black\" stroke-width=\"4\"/>\n";
  }
  for (int i = 0; i < k; ++i) {
    const int idx = cd.order[i];
    const double rank = cd.friedman.average_ranks[idx];
    const bool on_left = i < half;
    const double y = label_top + 22.0 * (on_left ? i : k - 1 - i);
    const double x_end = on_left ? left - 10 : left + axis_width + 10;
    s << "<polyline fill=\"none\" stroke=\"gray\" points=\"" << Fixed(x_of(rank), 1) << "," << top << " "
      << Fixed(x_of(rank), 1) << "," << Fixed(y, 1) << " " << Fixed(x_end, 1) << "," << Fixed(y, 1) << "\"/>\n";
    s << "<text x=\"" << Fixed(on_left ? x_end - 4 : x_end + 4, 1) << "\" y=\"" << Fixed(y + 4, 1)
      << "\" text-anchor=\"" << (on_left ? "end" : "start") << "\">" << Escape(m.models[idx]) << " ("
      << Fixed(rank, 2) << ")</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

nlohmann::json ToJson(const TaskResultMatrix& m) {
  nlohmann::json j;
  j["metric"] = m.metric;
  j["models"] = m.models;
  j["tasks"] = m.tasks;
  j["values"] = m.values;
  if (!m.positives.empty()) j["positives"] = m.positives;
  return j;
}

nlohmann::json ToJson(const TaskResultMatrix& m, const CriticalDifference& cd) {
  nlohmann::json j;
  j["metric"] = m.metric;
  j["alpha"] = cd.alpha;
  j["friedman"] = {{"chi2", cd.friedman.chi2}, {"p", cd.friedman.p}, {"gated", cd.gated}};
  nlohmann::json ranks = nlohmann::json::object();
  for (std::size_t i = 0; i < m.models.size(); ++i) ranks[m.models[i]] = cd.friedman.average_ranks[i];
  j["average_ranks"] = ranks;
  nlohmann::json order = nlohmann::json::array();
  for (int idx : cd.order) order.push_back(m.models[idx]);
  j["order"] = order;
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : cd.pairs) {
    pairs.push_back({{"a", m.models[p.a]},
                     {"b", m.models[p.b]},
                     {"w", p.w},
                     {"p", p.p},
                     {"p_holm", p.p_holm},
                     {"significant", p.significant}});
  }
  j["pairwise"] = pairs;
  nlohmann::json cliques = nlohmann::json::array();
  for (const auto& c : cd.cliques) {
    nlohmann::json names = nlohmann::json::array();
    for (int idx : c) names.push_back(m.models[idx]);
    cliques.push_back(names);
  }
  j["cliques"] = cliques;
  return j;
}

}  // namespace flusense::stats
