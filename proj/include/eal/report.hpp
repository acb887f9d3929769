#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

namespace eal {

// Shortest text that round-trips a double (17 significant digits).
std::string format_real(double v);

// RFC 4180 CSV (CRLF line ends, quoted only when needed). Every row starts
// with the config hash and seed.
class CsvWriter {
 public:
  using Cell = std::variant<std::string, double, std::int64_t, std::uint64_t>;

  CsvWriter(const std::string& path, std::string config_hash, std::uint64_t seed,
            const std::vector<std::string>& columns);
  void row(const std::vector<Cell>& cells);

 private:
  void line(const std::vector<std::string>& fields);

  std::ofstream out_;
  std::string hash_;
  std::uint64_t seed_;
  std::size_t width_;
};

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::string color = "#000000";
  bool scatter = false;
  double width = 1.2;
};

struct Panel {
  std::string title, x_label, y_label;
  std::vector<Series> series;
};

// Grid of line/scatter panels written as a standalone SVG.
void write_svg(const std::string& path, const std::string& title, const std::vector<Panel>& panels,
               std::size_t columns, const std::string& config_hash, std::uint64_t seed);

}  // namespace eal
