#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "studa/core/errors.hpp"

namespace studa {

struct LossRecord {
  long iteration;
  std::string name;
  double value;
  bool operator==(const LossRecord&) const = default;
};

// Long-format loss curve: one row per (iteration, loss).
class LossLog {
 public:
  void add(long iteration, const std::string& name, double value) { rows_.push_back({iteration, name, value}); }
  const std::vector<LossRecord>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }

  // Last logged value of `name`, NaN when absent.
  double last(const std::string& name) const {
    for (auto it = rows_.rbegin(); it != rows_.rend(); ++it)
      if (it->name == name) return it->value;
    return std::nan("");
  }

  void write_csv(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path.string());
    f << "iteration,loss_name,value\n";
    f.precision(9);
    for (const auto& r : rows_) f << r.iteration << ',' << r.name << ',' << r.value << '\n';
  }

  static LossLog read_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot read " + path.string());
    LossLog log;
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
      const auto a = line.find(','), b = line.rfind(',');
      if (a == std::string::npos || a == b) throw Error("malformed loss log line in " + path.string());
      log.add(std::stol(line.substr(0, a)), line.substr(a + 1, b - a - 1), std::stod(line.substr(b + 1)));
    }
    return log;
  }

 private:
  std::vector<LossRecord> rows_;
};

// Throws NumericalError naming the loss when `value` is not finite.
inline void check_finite(const std::string& loss_name, double value) {
  if (!std::isfinite(value)) throw NumericalError(loss_name, "value is not finite");
}

}  // namespace studa
