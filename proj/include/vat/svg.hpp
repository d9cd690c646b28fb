#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>

namespace vat::svg {

/// Fixed three-decimal coordinates keep the output byte-stable.
inline std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", x);
  std::string s = buf;
  if (s == "-0.000") s = "0.000";
  return s;
}

inline std::string escape(std::string_view s) {
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

/// Diverging blue-white-red color for v in [-bound, bound].
inline std::string diverging(double v, double bound) {
  const double t = bound > 0.0 ? std::clamp(v / bound, -1.0, 1.0) : 0.0;
  const auto mix = [&](int from, int to, double a) { return static_cast<int>(std::lround(from + (to - from) * a)); };
  int r = 255, g = 255, b = 255;
  if (t > 0) {
    r = mix(255, 178, t);
    g = mix(255, 24, t);
    b = mix(255, 43, t);
  } else if (t < 0) {
    r = mix(255, 33, -t);
    g = mix(255, 102, -t);
    b = mix(255, 172, -t);
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

class Document {
 public:
  Document(double width, double height) {
    out_ = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) +
           "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\" font-family=\"sans-serif\">\n";
  }

  Document& rect(double x, double y, double w, double h, std::string_view fill, std::string_view extra = {}) {
    out_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" + num(h) +
            "\" fill=\"" + std::string(fill) + "\"" + attrs(extra) + "/>\n";
    return *this;
  }

  Document& line(double x1, double y1, double x2, double y2, std::string_view stroke, double width,
                 std::string_view extra = {}) {
    out_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
            "\" stroke=\"" + std::string(stroke) + "\" stroke-width=\"" + num(width) + "\"" + attrs(extra) + "/>\n";
    return *this;
  }

  Document& circle(double cx, double cy, double r, std::string_view fill, std::string_view extra = {}) {
    out_ += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(r) + "\" fill=\"" +
            std::string(fill) + "\"" + attrs(extra) + "/>\n";
    return *this;
  }

  Document& polygon(const std::string& points, std::string_view fill, std::string_view extra = {}) {
    out_ += "<polygon points=\"" + points + "\" fill=\"" + std::string(fill) + "\"" + attrs(extra) + "/>\n";
    return *this;
  }

  Document& text(double x, double y, std::string_view s, double size = 10, std::string_view anchor = "start") {
    out_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + num(size) + "\" text-anchor=\"" +
            std::string(anchor) + "\">" + escape(s) + "</text>\n";
    return *this;
  }

  std::string str() const { return out_ + "</svg>\n"; }

 private:
  static std::string attrs(std::string_view extra) { return extra.empty() ? "" : " " + std::string(extra); }

  std::string out_;
};

}  // namespace vat::svg
