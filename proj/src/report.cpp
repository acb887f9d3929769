#include "eal/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace eal {

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

// Roughly five round tick values covering [lo, hi].
std::vector<double> ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) out.push_back(t);
  return out;
}

}  // namespace

CsvWriter::CsvWriter(const std::string& path, std::string config_hash, std::uint64_t seed,
                     const std::vector<std::string>& columns)
    : out_(path, std::ios::binary), hash_(std::move(config_hash)), seed_(seed), width_(columns.size()) {
  if (!out_) throw std::runtime_error("cannot write " + path);
  std::vector<std::string> header{"config_hash", "seed"};
  header.insert(header.end(), columns.begin(), columns.end());
  line(header);
}

void CsvWriter::row(const std::vector<Cell>& cells) {
  if (cells.size() != width_) throw std::logic_error("csv row width does not match the header");
  std::vector<std::string> fields{hash_, std::to_string(seed_)};
  for (const auto& c : cells) {
    if (const auto* s = std::get_if<std::string>(&c)) {
      fields.push_back(*s);
    } else if (const auto* d = std::get_if<double>(&c)) {
      fields.push_back(format_real(*d));
    } else if (const auto* i = std::get_if<std::int64_t>(&c)) {
      fields.push_back(std::to_string(*i));
    } else {
      fields.push_back(std::to_string(std::get<std::uint64_t>(c)));
    }
  }
  line(fields);
}

void CsvWriter::line(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << quote(fields[i]);
  }
  out_ << "\r\n";
}

void write_svg(const std::string& path, const std::string& title, const std::vector<Panel>& panels,
               std::size_t columns, const std::string& config_hash, std::uint64_t seed) {
  const double pw = 420, ph = 300, ml = 62, mr = 16, mt = 34, mb = 46, header = 40;
  columns = std::max<std::size_t>(1, std::min(columns, panels.size()));
  const std::size_t rows = (panels.size() + columns - 1) / columns;
  const double width = pw * static_cast<double>(columns), height = header + ph * static_cast<double>(rows);

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<!-- config_hash=" << config_hash << " seed=" << seed << " -->\n";
  s << "<desc>config_hash=" << config_hash << " seed=" << seed << "</desc>\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << num(width / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape_xml(title)
    << "</text>\n";

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& panel = panels[p];
    const double ox = pw * static_cast<double>(p % columns), oy = header + ph * static_cast<double>(p / columns);
    const double x0 = ox + ml, x1 = ox + pw - mr, y0 = oy + mt, y1 = oy + ph - mb;

    double xl = std::numeric_limits<double>::infinity(), xh = -xl, yl = xl, yh = -xl;
    for (const auto& ser : panel.series) {
      for (std::size_t i = 0; i < std::min(ser.x.size(), ser.y.size()); ++i) {
        if (!std::isfinite(ser.x[i]) || !std::isfinite(ser.y[i])) continue;
        xl = std::min(xl, ser.x[i]);
        xh = std::max(xh, ser.x[i]);
        yl = std::min(yl, ser.y[i]);
        yh = std::max(yh, ser.y[i]);
      }
    }
    if (!(xl <= xh)) xl = 0, xh = 1;
    if (!(yl <= yh)) yl = 0, yh = 1;
    if (xh - xl < 1e-12) xl -= 0.5, xh += 0.5;
    if (yh - yl < 1e-12) yl -= 0.5, yh += 0.5;
    const double pad = 0.05 * (yh - yl);
    yl -= pad;
    yh += pad;
    auto sx = [&](double v) { return x0 + (v - xl) / (xh - xl) * (x1 - x0); };
    auto sy = [&](double v) { return y1 - (v - yl) / (yh - yl) * (y1 - y0); };

    s << "<g>\n<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(oy + 22)
      << "\" text-anchor=\"middle\" font-size=\"12\">" << escape_xml(panel.title) << "</text>\n";
    s << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\"" << num(x1 - x0) << "\" height=\""
      << num(y1 - y0) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (double t : ticks(xl, xh)) {
      s << "<line x1=\"" << num(sx(t)) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(sx(t)) << "\" y2=\""
        << num(y1 + 4) << "\" stroke=\"#444\"/><text x=\"" << num(sx(t)) << "\" y=\"" << num(y1 + 15)
        << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
    }
    for (double t : ticks(yl, yh)) {
      s << "<line x1=\"" << num(x0 - 4) << "\" y1=\"" << num(sy(t)) << "\" x2=\"" << num(x0) << "\" y2=\""
        << num(sy(t)) << "\" stroke=\"#444\"/><text x=\"" << num(x0 - 6) << "\" y=\"" << num(sy(t) + 4)
        << "\" text-anchor=\"end\">" << tick_label(t) << "</text>\n";
    }
    s << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(y1 + 32) << "\" text-anchor=\"middle\">"
      << escape_xml(panel.x_label) << "</text>\n";
    s << "<text transform=\"translate(" << num(ox + 14) << "," << num((y0 + y1) / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape_xml(panel.y_label) << "</text>\n";

    for (const auto& ser : panel.series) {
      const auto n = std::min(ser.x.size(), ser.y.size());
      if (ser.scatter) {
        for (std::size_t i = 0; i < n; ++i) {
          if (!std::isfinite(ser.x[i]) || !std::isfinite(ser.y[i])) continue;
          s << "<circle cx=\"" << num(sx(ser.x[i])) << "\" cy=\"" << num(sy(ser.y[i])) << "\" r=\"2\" fill=\""
            << ser.color << "\" fill-opacity=\"0.7\"/>\n";
        }
        continue;
      }
      s << "<polyline fill=\"none\" stroke=\"" << ser.color << "\" stroke-width=\"" << num(ser.width)
        << "\" points=\"";
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(ser.x[i]) || !std::isfinite(ser.y[i])) continue;
        s << num(sx(ser.x[i])) << ',' << num(sy(ser.y[i])) << ' ';
      }
      s << "\"/>\n";
    }
    double ly = y0 + 12;
    for (const auto& ser : panel.series) {
      if (ser.label.empty()) continue;
      s << "<rect x=\"" << num(x1 - 110) << "\" y=\"" << num(ly - 8) << "\" width=\"10\" height=\"10\" fill=\""
        << ser.color << "\"/><text x=\"" << num(x1 - 96) << "\" y=\"" << num(ly + 1) << "\">"
        << escape_xml(ser.label) << "</text>\n";
      ly += 14;
    }
    s << "</g>\n";
  }
  s << "</svg>\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << s.str();
}

}  // namespace eal
