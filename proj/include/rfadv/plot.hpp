#pragma once

// Results CSV -> self-contained SVG line chart.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rfadv/eval.hpp"

namespace rfadv::plot {

inline const std::vector<std::string> &columns() {
  static const std::vector<std::string> cols = {"attack", "m", "pnr_db", "rho", "rayleigh_var", "trials", "accuracy",
                                                "ci95"};
  return cols;
}

inline bool is_column(const std::string &c) {
  const auto &cs = columns();
  return std::find(cs.begin(), cs.end(), c) != cs.end();
}

inline double numeric(const eval::ResultRow &r, const std::string &col) {
  if (col == "m") return static_cast<double>(r.m);
  if (col == "pnr_db") return r.pnr_db;
  if (col == "rho") return r.rho;
  if (col == "rayleigh_var") return r.rayleigh_var;
  if (col == "trials") return static_cast<double>(r.trials);
  if (col == "accuracy") return r.accuracy;
  if (col == "ci95") return r.ci95;
  throw ConfigError("column '" + col + "' is not numeric");
}

inline std::string text(const eval::ResultRow &r, const std::string &col) {
  if (col == "attack") return std::string(attack::kind_name(r.kind));
  return eval::format_number(numeric(r, col));
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
    case '&': out += "&amp;"; break;
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '"': out += "&quot;"; break;
    case '\'': out += "&apos;"; break;
    default: out += c;
    }
  }
  return out;
}

struct Options {
  std::string x = "pnr_db";
  std::string y = "accuracy";
  std::vector<std::string> series{"attack"};
  std::string title;
};

struct Series {
  std::string label;
  std::vector<const eval::ResultRow *> rows;
};

/// Rows grouped by the series key, each group sorted by x. Group order is
/// first appearance in the CSV.
inline std::vector<Series> group(std::span<const eval::ResultRow> rows, const Options &opt) {
  std::vector<Series> out;
  std::map<std::string, std::size_t> index;
  for (const auto &r : rows) {
    std::string key;
    for (const auto &c : opt.series) {
      if (!key.empty()) key += " ";
      key += opt.series.size() > 1 && c != "attack" ? c + "=" + text(r, c) : text(r, c);
    }
    auto [it, fresh] = index.try_emplace(key, out.size());
    if (fresh) out.push_back({key, {}});
    out[it->second].rows.push_back(&r);
  }
  for (auto &s : out)
    std::stable_sort(s.rows.begin(), s.rows.end(),
                     [&](auto *a, auto *b) { return numeric(*a, opt.x) < numeric(*b, opt.x); });
  return out;
}

inline std::string fmt(double v, const char *spec = "%.4g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string render_svg(std::span<const eval::ResultRow> rows, const Options &opt) {
  if (rows.empty()) throw FormatError("no rows to plot");
  for (const auto &c : {opt.x, opt.y})
    if (!is_column(c) || c == "attack") throw ConfigError("--x/--y need a numeric column, got '" + c + "'");
  for (const auto &c : opt.series)
    if (!is_column(c)) throw ConfigError("unknown --series column '" + c + "'");

  const bool whiskers = opt.y == "accuracy";
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto &r : rows) {
    const double x = numeric(r, opt.x), y = numeric(r, opt.y), e = whiskers ? r.ci95 : 0.0;
    if (!std::isfinite(x) || !std::isfinite(y)) continue;
    x0 = std::min(x0, x), x1 = std::max(x1, x);
    y0 = std::min(y0, y - e), y1 = std::max(y1, y + e);
  }
  if (!std::isfinite(x0)) throw FormatError("no finite points to plot");
  if (whiskers) y0 = std::min(y0, 0.0), y1 = std::max(y1, 1.0);
  if (x1 == x0) x0 -= 1, x1 += 1;
  if (y1 == y0) y0 -= 1, y1 += 1;

  const double W = 720, H = 460, L = 70, R = 180, T = 40, B = 60;
  const double pw = W - L - R, ph = H - T - B;
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return T + (y1 - y) / (y1 - y0) * ph; };
  static const char *palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(W) + "\" height=\"" + fmt(H) + "\" viewBox=\"0 0 " +
       fmt(W) + " " + fmt(H) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + fmt(W) + "\" height=\"" + fmt(H) + "\" fill=\"white\"/>\n";
  if (!opt.title.empty())
    s += "<text x=\"" + fmt(L + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         xml_escape(opt.title) + "</text>\n";

  // axes, ticks, labels
  s += "<g stroke=\"black\" fill=\"none\">\n";
  s += "<line x1=\"" + fmt(L) + "\" y1=\"" + fmt(T + ph) + "\" x2=\"" + fmt(L + pw) + "\" y2=\"" + fmt(T + ph) + "\"/>\n";
  s += "<line x1=\"" + fmt(L) + "\" y1=\"" + fmt(T) + "\" x2=\"" + fmt(L) + "\" y2=\"" + fmt(T + ph) + "\"/>\n";
  s += "</g>\n<g fill=\"black\">\n";
  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double xv = x0 + (x1 - x0) * i / ticks, yv = y0 + (y1 - y0) * i / ticks;
    s += "<text x=\"" + fmt(sx(xv)) + "\" y=\"" + fmt(T + ph + 18) + "\" text-anchor=\"middle\">" + fmt(xv, "%.3g") +
         "</text>\n";
    s += "<text x=\"" + fmt(L - 8) + "\" y=\"" + fmt(sy(yv) + 4) + "\" text-anchor=\"end\">" + fmt(yv, "%.3g") +
         "</text>\n";
  }
  s += "<text x=\"" + fmt(L + pw / 2) + "\" y=\"" + fmt(H - 15) + "\" text-anchor=\"middle\">" + xml_escape(opt.x) +
       "</text>\n";
  s += "<text x=\"18\" y=\"" + fmt(T + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
       fmt(T + ph / 2) + ")\">" + xml_escape(opt.y) + "</text>\n";
  s += "</g>\n";

  const auto groups = group(rows, opt);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::string color = palette[g % std::size(palette)];
    std::string pts;
    for (auto *r : groups[g].rows) {
      const double x = numeric(*r, opt.x), y = numeric(*r, opt.y);
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (!pts.empty()) pts += ' ';
      pts += fmt(sx(x), "%.2f") + "," + fmt(sy(y), "%.2f");
    }
    s += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    if (whiskers) {
      s += "<g stroke=\"" + color + "\">\n";
      for (auto *r : groups[g].rows) {
        const double x = numeric(*r, opt.x), y = r->accuracy;
        if (!std::isfinite(x)) continue;
        const double ya = sy(y - r->ci95), yb = sy(y + r->ci95), xc = sx(x);
        s += "<line x1=\"" + fmt(xc, "%.2f") + "\" y1=\"" + fmt(ya, "%.2f") + "\" x2=\"" + fmt(xc, "%.2f") +
             "\" y2=\"" + fmt(yb, "%.2f") + "\"/>\n";
        for (double yy : {ya, yb})
          s += "<line x1=\"" + fmt(xc - 4, "%.2f") + "\" y1=\"" + fmt(yy, "%.2f") + "\" x2=\"" + fmt(xc + 4, "%.2f") +
               "\" y2=\"" + fmt(yy, "%.2f") + "\"/>\n";
      }
      s += "</g>\n";
    }
    const double ly = T + 10 + 18.0 * static_cast<double>(g);
    s += "<line x1=\"" + fmt(L + pw + 15) + "\" y1=\"" + fmt(ly) + "\" x2=\"" + fmt(L + pw + 40) + "\" y2=\"" +
         fmt(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + fmt(L + pw + 46) + "\" y=\"" + fmt(ly + 4) + "\">" + xml_escape(groups[g].label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

} // namespace rfadv::plot
