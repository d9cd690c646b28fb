#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vat/error.hpp"
#include "vat/metrics.hpp"
#include "vat/robustness.hpp"
#include "vat/svg.hpp"
#include "vat/taxonomy.hpp"

namespace vat {

enum class FigureKind { kHeatmap, kRadar, kChord, kCircumplex, kPareto, kAmplification };

inline std::string_view to_string(FigureKind k) {
  switch (k) {
    case FigureKind::kHeatmap: return "heatmap";
    case FigureKind::kRadar: return "radar";
    case FigureKind::kChord: return "chord";
    case FigureKind::kCircumplex: return "circumplex";
    case FigureKind::kPareto: return "pareto";
    case FigureKind::kAmplification: return "amplification";
  }
  return "heatmap";
}

inline FigureKind parse_figure_kind(std::string_view s) {
  for (auto k : {FigureKind::kHeatmap, FigureKind::kRadar, FigureKind::kChord, FigureKind::kCircumplex,
                 FigureKind::kPareto, FigureKind::kAmplification}) {
    if (to_string(k) == s) return k;
  }
  throw InputError("cli", "unknown figure kind: " + std::string(s));
}

struct FigureBundle {
  FigureKind kind = FigureKind::kHeatmap;
  nlohmann::ordered_json data;
  std::optional<std::string> svg;
};

/// A report with the label of its alignment configuration.
struct LabeledReport {
  std::string label;
  TaxReport report;
};

struct FigureOptions {
  int top_k = 10;
  bool render_svg = true;         // heatmap and radar
  bool render_all_svg = false;    // also chord, circumplex, pareto, amplification
  double hub_quantile = 0.75;
  double hub_persistence = 0.75;
};

// --- Data -------------------------------------------------------------------------

inline nlohmann::ordered_json radar_data(const TaxReport& rep) {
  nlohmann::ordered_json j;
  j["kind"] = "radar";
  j["values"] = rep.coupling.values;
  j["vat"] = rep.vat_profile;
  j["nvat"] = rep.nvat;
  j["degenerate"] = rep.nvat == 0.0;
  if (rep.nvat == 0.0) {
    j["normalized"] = nullptr;
  } else {
    std::vector<double> norm;
    for (double v : rep.vat_profile) norm.push_back(v / rep.nvat);
    j["normalized"] = norm;
  }
  return j;
}

/// Strongest non-zero couplings, by |R| then by value ids.
inline nlohmann::ordered_json chord_data(const TaxReport& rep, int top_k) {
  if (top_k < 1) throw InputError("cli", "chord top-k must be >= 1");
  const auto& R = rep.coupling;
  struct Edge {
    std::size_t i, j;
    double r;
  };
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < R.size(); ++i) {
    for (std::size_t j = i + 1; j < R.size(); ++j) {
      if (R.at(i, j) != 0.0) edges.push_back({i, j, R.at(i, j)});
    }
  }
  std::stable_sort(edges.begin(), edges.end(), [&](const Edge& a, const Edge& b) {
    if (std::abs(a.r) != std::abs(b.r)) return std::abs(a.r) > std::abs(b.r);
    return std::tie(R.values[a.i], R.values[a.j]) < std::tie(R.values[b.i], R.values[b.j]);
  });
  if (edges.size() > static_cast<std::size_t>(top_k)) edges.resize(static_cast<std::size_t>(top_k));
  nlohmann::ordered_json j;
  j["kind"] = "chord";
  j["values"] = R.values;
  j["top_k"] = top_k;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : edges) {
    nlohmann::ordered_json x;
    x["u"] = R.values[e.i];
    x["w"] = R.values[e.j];
    x["r"] = e.r;
    x["sign"] = e.r > 0 ? 1 : -1;
    arr.push_back(x);
  }
  j["edges"] = arr;
  return j;
}

inline nlohmann::ordered_json heatmap_data(const TaxReport& rep) {
  const auto& R = rep.coupling;
  double max_abs = 0.0;
  auto matrix = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < R.size(); ++i) {
    std::vector<double> row;
    for (std::size_t k = 0; k < R.size(); ++k) {
      row.push_back(R.at(i, k));
      max_abs = std::max(max_abs, std::abs(R.at(i, k)));
    }
    matrix.push_back(row);
  }
  nlohmann::ordered_json j;
  j["kind"] = "heatmap";
  j["values"] = R.values;
  j["matrix"] = matrix;
  j["diagonal_omitted"] = true;
  j["color_bound"] = std::max(0.2, max_abs);
  return j;
}

/// Projection onto the circumplex. Stability is the spread of VAT(v) across
/// the supplied configurations and appears only with two or more of them.
inline nlohmann::ordered_json circumplex_data(const TaxReport& rep, const Taxonomy& t,
                                              const std::vector<LabeledReport>& configurations = {}) {
  nlohmann::ordered_json j;
  j["kind"] = "circumplex";
  auto points = nlohmann::ordered_json::array();
  for (const auto& id : circumplex_order(t)) {
    const auto& R = rep.coupling;
    const auto it = std::find(R.values.begin(), R.values.end(), id);
    if (it == R.values.end()) continue;
    const double vat = rep.vat_profile[static_cast<std::size_t>(it - R.values.begin())];
    const double angle = t.values()[t.value_index(id)].circumplex_angle;
    const double rad = angle * std::acos(-1.0) / 180.0;
    nlohmann::ordered_json p;
    p["value"] = id;
    p["angle_deg"] = angle;
    p["vat"] = vat;
    p["x"] = vat * std::cos(rad);
    p["y"] = vat * std::sin(rad);
    if (configurations.size() >= 2) {
      std::vector<double> across;
      for (const auto& c : configurations) {
        const auto& vals = c.report.coupling.values;
        const auto k = std::find(vals.begin(), vals.end(), id);
        if (k == vals.end()) throw InputError("cli", "configuration " + c.label + " lacks value " + id);
        across.push_back(c.report.vat_profile[static_cast<std::size_t>(k - vals.begin())]);
      }
      p["stability"] = mean_and_std(across).second;
    }
    points.push_back(p);
  }
  j["points"] = points;
  return j;
}

/// Gain against nVAT across configurations. Gain is oriented so that larger
/// is better for suppress targets too; a point is dominated when another has
/// at least its oriented gain and at most its nVAT, strictly better in one.
inline nlohmann::ordered_json pareto_data(const std::vector<LabeledReport>& reports) {
  if (reports.empty()) throw InputError("cli", "pareto needs at least one report");
  std::vector<double> g, n;
  for (const auto& r : reports) {
    const bool suppress = r.report.direction && *r.report.direction == Direction::kSuppress;
    g.push_back(suppress ? -r.report.gain : r.report.gain);
    n.push_back(r.report.nvat);
  }
  nlohmann::ordered_json j;
  j["kind"] = "pareto";
  auto points = nlohmann::ordered_json::array();
  for (std::size_t a = 0; a < reports.size(); ++a) {
    bool dominated = false;
    for (std::size_t b = 0; b < reports.size() && !dominated; ++b) {
      dominated = b != a && g[b] >= g[a] && n[b] <= n[a] && (g[b] > g[a] || n[b] < n[a]);
    }
    nlohmann::ordered_json p;
    p["label"] = reports[a].label;
    p["target"] = reports[a].report.target;
    p["gain"] = reports[a].report.gain;
    p["oriented_gain"] = g[a];
    p["nvat"] = n[a];
    p["dominated"] = dominated;
    points.push_back(p);
  }
  j["points"] = points;
  return j;
}

inline nlohmann::ordered_json amplification_data(const std::vector<LabeledReport>& reports, double q,
                                                 double persistence) {
  if (reports.empty()) throw InputError("cli", "amplification needs at least one report");
  std::vector<VatProfile> profiles;
  for (const auto& r : reports) profiles.push_back(r.report.profile(r.label));
  const auto hubs = identify_hubs(profiles, q, persistence);
  nlohmann::ordered_json j;
  j["kind"] = "amplification";
  j["quantile"] = q;
  j["persistence"] = persistence;
  j["hubs"] = hubs;
  auto profs = nlohmann::ordered_json::array();
  for (const auto& p : profiles) {
    nlohmann::ordered_json x;
    x["label"] = p.label;
    x["values"] = p.values;
    x["vat"] = p.vat;
    profs.push_back(x);
  }
  j["profiles"] = profs;
  const auto stats = [](const GroupStats& s) {
    nlohmann::ordered_json x;
    x["count"] = s.count;
    x["mean"] = s.mean;
    x["median"] = s.median;
    x["q1"] = s.q1;
    x["q3"] = s.q3;
    x["min"] = s.min;
    x["max"] = s.max;
    return x;
  };
  if (hubs.empty() || hubs.size() == profiles.front().values.size()) {
    j["comparison"] = nullptr;
    j["diagnostic"] = hubs.empty() ? "no hubs at this quantile and persistence" : "every value is a hub";
    return j;
  }
  const auto rep = amplification_report(profiles, hubs);
  nlohmann::ordered_json c;
  c["hub"] = stats(rep.hub_stats);
  c["non_hub"] = stats(rep.non_hub_stats);
  c["rank_sum_u"] = rep.rank_sum_u;
  c["null_midpoint"] = rep.null_midpoint;
  c["effect_size"] = rep.effect_size;
  j["comparison"] = c;
  return j;
}

// --- Rendering (from data alone) --------------------------------------------------------

inline std::string render_heatmap(const nlohmann::ordered_json& d) {
  const auto values = d.at("values").get<std::vector<std::string>>();
  const double bound = d.at("color_bound").get<double>();
  const double cell = 36, left = 110, top = 20;
  const auto n = static_cast<double>(values.size());
  svg::Document doc(left + cell * n + 20, top + cell * n + 110);
  for (std::size_t i = 0; i < values.size(); ++i) {
    doc.text(left - 6, top + cell * (static_cast<double>(i) + 0.6), values[i], 10, "end");
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double x = left + cell * static_cast<double>(k);
      const double y = top + cell * static_cast<double>(i);
      if (i == k) {
        doc.rect(x, y, cell, cell, "#dddddd");
        continue;
      }
      const double r = d.at("matrix").at(i).at(k).get<double>();
      doc.rect(x, y, cell, cell, svg::diverging(r, bound));
      doc.text(x + cell / 2, y + cell * 0.6, svg::num(r).substr(0, r < 0 ? 5 : 4), 8, "middle");
    }
  }
  for (std::size_t k = 0; k < values.size(); ++k) {
    doc.text(left + cell * (static_cast<double>(k) + 0.5), top + cell * n + 14, values[k], 8, "middle");
  }
  doc.text(left, top + cell * n + 40, "color scale: -" + svg::num(bound) + " to " + svg::num(bound), 10);
  return doc.str();
}

inline std::string render_radar(const nlohmann::ordered_json& d) {
  const auto values = d.at("values").get<std::vector<std::string>>();
  const bool degenerate = d.at("degenerate").get<bool>();
  std::vector<double> r;
  if (!degenerate) r = d.at("normalized").get<std::vector<double>>();
  const double cx = 220, cy = 220, radius = 150;
  double top = 0.0;
  for (double v : r) top = std::max(top, v);
  svg::Document doc(440, 460);
  const auto n = values.size();
  const double pi = std::acos(-1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2 * pi * static_cast<double>(i) / static_cast<double>(n) - pi / 2;
    doc.line(cx, cy, cx + radius * std::cos(a), cy + radius * std::sin(a), "#bbbbbb", 0.5);
    doc.text(cx + (radius + 14) * std::cos(a), cy + (radius + 14) * std::sin(a), values[i], 9, "middle");
  }
  if (degenerate) {
    doc.text(cx, 440, "nVAT = 0: profile not normalized", 11, "middle");
    return doc.str();
  }
  std::string pts;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2 * pi * static_cast<double>(i) / static_cast<double>(n) - pi / 2;
    const double len = top > 0 ? radius * r[i] / top : 0.0;
    if (!pts.empty()) pts += ' ';
    pts += svg::num(cx + len * std::cos(a)) + "," + svg::num(cy + len * std::sin(a));
  }
  doc.polygon(pts, "#b2182b", "fill-opacity=\"0.35\" stroke=\"#b2182b\"");
  doc.text(cx, 440, "VAT(v)/nVAT, outer ring = " + svg::num(top), 11, "middle");
  return doc.str();
}

inline std::string render_chord(const nlohmann::ordered_json& d) {
  const auto values = d.at("values").get<std::vector<std::string>>();
  const double cx = 220, cy = 220, radius = 160;
  const double pi = std::acos(-1.0);
  svg::Document doc(440, 440);
  const auto pos = [&](const std::string& id) {
    const auto i = static_cast<double>(std::find(values.begin(), values.end(), id) - values.begin());
    const double a = 2 * pi * i / static_cast<double>(values.size()) - pi / 2;
    return std::pair{cx + radius * std::cos(a), cy + radius * std::sin(a)};
  };
  for (const auto& e : d.at("edges")) {
    const auto [x1, y1] = pos(e.at("u").get<std::string>());
    const auto [x2, y2] = pos(e.at("w").get<std::string>());
    const double r = e.at("r").get<double>();
    doc.line(x1, y1, x2, y2, r > 0 ? "#b2182b" : "#2166ac", 1 + 8 * std::abs(r), "stroke-opacity=\"0.7\"");
  }
  for (const auto& v : values) {
    const auto [x, y] = pos(v);
    doc.circle(x, y, 5, "#333333");
    doc.text(x, y - 9, v, 9, "middle");
  }
  return doc.str();
}

inline std::string render_circumplex(const nlohmann::ordered_json& d) {
  const double cx = 220, cy = 220, radius = 160;
  double top = 0.0, spread = 0.0;
  for (const auto& p : d.at("points")) {
    top = std::max(top, p.at("vat").get<double>());
    if (p.contains("stability")) spread = std::max(spread, p.at("stability").get<double>());
  }
  svg::Document doc(440, 440);
  doc.circle(cx, cy, radius, "none", "stroke=\"#bbbbbb\"");
  for (const auto& p : d.at("points")) {
    const double scale = top > 0 ? radius / top : 0.0;
    const double x = cx + scale * p.at("x").get<double>();
    const double y = cy - scale * p.at("y").get<double>();
    double opacity = 1.0;
    if (p.contains("stability") && spread > 0) opacity = 1.0 - 0.7 * p.at("stability").get<double>() / spread;
    doc.line(cx, cy, x, y, "#888888", 0.5);
    doc.circle(x, y, 6, "#2166ac", "fill-opacity=\"" + svg::num(opacity) + "\"");
    doc.text(x, y - 9, p.at("value").get<std::string>(), 9, "middle");
  }
  return doc.str();
}

inline std::string render_pareto(const nlohmann::ordered_json& d) {
  const double left = 60, top = 20, w = 360, h = 300;
  double gmin = 0, gmax = 0, nmax = 0;
  for (const auto& p : d.at("points")) {
    gmin = std::min(gmin, p.at("oriented_gain").get<double>());
    gmax = std::max(gmax, p.at("oriented_gain").get<double>());
    nmax = std::max(nmax, p.at("nvat").get<double>());
  }
  if (gmax == gmin) gmax = gmin + 1;
  if (nmax == 0) nmax = 1;
  svg::Document doc(left + w + 20, top + h + 50);
  doc.line(left, top + h, left + w, top + h, "#333333", 1);
  doc.line(left, top, left, top + h, "#333333", 1);
  doc.text(left + w / 2, top + h + 35, "oriented gain", 11, "middle");
  doc.text(12, top + h / 2, "nVAT", 11);
  for (const auto& p : d.at("points")) {
    const double x = left + w * (p.at("oriented_gain").get<double>() - gmin) / (gmax - gmin);
    const double y = top + h - h * p.at("nvat").get<double>() / nmax;
    doc.circle(x, y, 5, p.at("dominated").get<bool>() ? "#aaaaaa" : "#b2182b");
    doc.text(x + 7, y - 4, p.at("label").get<std::string>(), 9);
  }
  return doc.str();
}

inline std::string render_amplification(const nlohmann::ordered_json& d) {
  svg::Document doc(420, 260);
  if (d.at("comparison").is_null()) {
    doc.text(210, 130, d.value("diagnostic", std::string("no comparison")), 11, "middle");
    return doc.str();
  }
  const auto& c = d.at("comparison");
  double top = 0.0;
  for (const char* g : {"hub", "non_hub"}) top = std::max(top, c.at(g).at("max").get<double>());
  if (top == 0) top = 1;
  const double base = 220, h = 180;
  int slot = 0;
  for (const char* g : {"hub", "non_hub"}) {
    const auto& s = c.at(g);
    const double x = 110 + 170 * slot++;
    const auto y = [&](const char* k) { return base - h * s.at(k).get<double>() / top; };
    doc.line(x, y("min"), x, y("max"), "#333333", 1);
    doc.rect(x - 30, y("q3"), 60, std::max(0.5, y("q1") - y("q3")), "#92c5de", "stroke=\"#333333\"");
    doc.line(x - 30, y("median"), x + 30, y("median"), "#b2182b", 2);
    doc.text(x, base + 20, std::string(g) == "hub" ? "hubs" : "non-hubs", 11, "middle");
  }
  return doc.str();
}

inline std::string render(const nlohmann::ordered_json& data) {
  switch (parse_figure_kind(data.at("kind").get<std::string>())) {
    case FigureKind::kHeatmap: return render_heatmap(data);
    case FigureKind::kRadar: return render_radar(data);
    case FigureKind::kChord: return render_chord(data);
    case FigureKind::kCircumplex: return render_circumplex(data);
    case FigureKind::kPareto: return render_pareto(data);
    case FigureKind::kAmplification: return render_amplification(data);
  }
  return {};
}

/// All six bundles for a primary report. `configurations` feeds the
/// cross-configuration figures and defaults to the primary report alone.
inline std::vector<FigureBundle> make_figures(const LabeledReport& primary, const Taxonomy& t,
                                              std::vector<LabeledReport> configurations,
                                              const FigureOptions& options = {}) {
  if (configurations.empty()) configurations.push_back(primary);
  std::vector<FigureBundle> out;
  const auto add = [&](FigureKind k, nlohmann::ordered_json data) {
    FigureBundle b{k, std::move(data), std::nullopt};
    const bool basic = k == FigureKind::kHeatmap || k == FigureKind::kRadar;
    if (options.render_svg && (basic || options.render_all_svg)) b.svg = render(b.data);
    out.push_back(std::move(b));
  };
  add(FigureKind::kHeatmap, heatmap_data(primary.report));
  add(FigureKind::kRadar, radar_data(primary.report));
  add(FigureKind::kChord, chord_data(primary.report, options.top_k));
  add(FigureKind::kCircumplex, circumplex_data(primary.report, t, configurations));
  add(FigureKind::kPareto, pareto_data(configurations));
  add(FigureKind::kAmplification, amplification_data(configurations, options.hub_quantile, options.hub_persistence));
  return out;
}

}  // namespace vat
