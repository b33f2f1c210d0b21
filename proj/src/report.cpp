#include "t2lc/report.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "t2lc/errors.hpp"

namespace t2lc::report {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string clean(std::string s) {
  for (char& c : s) {
    if (c == ',') c = ';';
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

double to_real(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IngestError("CSV line " + std::to_string(line) + ": cannot parse number '" + s + "'");
  }
}

std::uint64_t to_count(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IngestError("CSV line " + std::to_string(line) + ": cannot parse count '" + s + "'");
  }
}

// Reads the header (which must equal `header`) and returns each data row split
// into exactly `columns` cells.
std::vector<std::vector<std::string>> read_rows(std::istream& is, const std::string& header) {
  std::string line;
  while (std::getline(is, line) && !line.empty() && line.front() == '#') {
  }
  if (line != header) {
    throw IngestError("CSV header mismatch: expected '" + header + "'");
  }
  const std::size_t columns = split(header).size();
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    auto cells = split(line);
    if (cells.size() != columns) {
      throw IngestError("CSV line " + std::to_string(lineno) + ": expected " +
                        std::to_string(columns) + " fields, got " + std::to_string(cells.size()));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

const std::string kHistoryHeader = "epoch,lr,train_loss,train_accuracy,test_accuracy,wall_seconds";
const std::string kCompareHeader =
    "variant,groups,seed,final_train_loss,final_train_accuracy,final_test_accuracy,status";
const std::string kSummaryHeader = "variant,groups,runs,mean_train_loss,mean_test_accuracy";
const std::string kParamHeader = "layer,role,total,per_processor";

}  // namespace

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_sig(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

void write_history_csv(std::ostream& os, const train::History& history) {
  os << kHistoryHeader << '\n';
  for (const auto& e : history.epochs) {
    os << e.epoch << ',' << format_real(e.lr) << ',' << format_real(e.train_loss) << ','
       << format_real(e.train_accuracy) << ',' << format_real(e.test_accuracy) << ','
       << format_real(e.wall_seconds) << '\n';
  }
}

std::vector<train::EpochRecord> read_history_csv(std::istream& is) {
  std::vector<train::EpochRecord> out;
  std::size_t line = 1;
  for (const auto& c : read_rows(is, kHistoryHeader)) {
    ++line;
    out.push_back({to_count(c[0], line), to_real(c[1], line), to_real(c[2], line),
                   to_real(c[3], line), to_real(c[4], line), to_real(c[5], line)});
  }
  return out;
}

void write_compare_csv(std::ostream& os, const std::vector<train::CompareRow>& rows) {
  os << kCompareHeader << '\n';
  for (const auto& r : rows) {
    os << clean(r.variant) << ',' << r.groups << ',' << r.seed << ','
       << format_real(r.final_train_loss) << ',' << format_real(r.final_train_accuracy) << ','
       << format_real(r.final_test_accuracy) << ',' << clean(r.status) << '\n';
  }
}

std::vector<train::CompareRow> read_compare_csv(std::istream& is) {
  std::vector<train::CompareRow> out;
  std::size_t line = 1;
  for (const auto& c : read_rows(is, kCompareHeader)) {
    ++line;
    out.push_back({c[0], to_count(c[1], line), to_count(c[2], line), to_real(c[3], line),
                   to_real(c[4], line), to_real(c[5], line), c[6]});
  }
  return out;
}

void write_summary_csv(std::ostream& os, const std::vector<train::CompareSummary>& summary) {
  os << kSummaryHeader << '\n';
  for (const auto& s : summary) {
    os << clean(s.variant) << ',' << s.groups << ',' << s.runs << ','
       << format_real(s.mean_train_loss) << ',' << format_real(s.mean_test_accuracy) << '\n';
  }
}

void write_paramcount_csv(std::ostream& os, const zoo::ParamCount& count) {
  os << kParamHeader << '\n';
  for (const auto& c : count.breakdown) {
    os << clean(c.layer) << ',' << clean(c.role) << ',' << c.total << ','
       << format_real(c.per_processor) << '\n';
  }
}

std::vector<zoo::LayerCount> read_paramcount_csv(std::istream& is) {
  std::vector<zoo::LayerCount> out;
  std::size_t line = 1;
  for (const auto& c : read_rows(is, kParamHeader)) {
    ++line;
    out.push_back({c[0], c[1], to_count(c[2], line), to_real(c[3], line)});
  }
  return out;
}

}  // namespace t2lc::report
