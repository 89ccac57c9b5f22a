#pragma once

#include <Eigen/Dense>
#include <boost/tokenizer.hpp>

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "crtbayes/error.hpp"

namespace crtbayes {

/// One randomized cluster: its arm, individual covariate rows and outcomes.
/// Cluster-level covariates are carried replicated on every row.
struct ClusterRecord {
  std::string id;
  int treatment = 0;
  Eigen::MatrixXd covariates;  // size() x q
  Eigen::VectorXd outcomes;

  std::size_t size() const { return static_cast<std::size_t>(outcomes.size()); }
};

enum class ArmRequirement { both, any };

class TrialDataset {
 public:
  TrialDataset() = default;

  TrialDataset(std::vector<ClusterRecord> clusters, double assignment_probability,
               std::vector<std::string> covariate_names,
               ArmRequirement arms = ArmRequirement::both)
      : clusters_(std::move(clusters)),
        pi_(assignment_probability),
        covariate_names_(std::move(covariate_names)) {
    validate(arms);
  }

  const std::vector<ClusterRecord>& clusters() const { return clusters_; }
  const ClusterRecord& cluster(std::size_t i) const { return clusters_[i]; }
  double assignment_probability() const { return pi_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  std::size_t num_clusters() const { return clusters_.size(); }
  std::size_t num_covariates() const { return covariate_names_.size(); }
  std::size_t num_individuals() const {
    std::size_t n = 0;
    for (const auto& c : clusters_) n += c.size();
    return n;
  }

  std::size_t arm_count(int a) const {
    std::size_t n = 0;
    for (const auto& c : clusters_) n += (c.treatment == a);
    return n;
  }
  bool has_both_arms() const { return arm_count(0) > 0 && arm_count(1) > 0; }

 private:
  void validate(ArmRequirement arms) const {
    if (!(pi_ > 0.0 && pi_ < 1.0))
      throw DataError("assignment probability must lie strictly inside (0,1)");
    if (clusters_.empty()) throw DataError("dataset has no clusters");
    const auto q = static_cast<Eigen::Index>(covariate_names_.size());
    for (const auto& c : clusters_) {
      if (c.treatment != 0 && c.treatment != 1)
        throw DataError("cluster '" + c.id + "': treatment must be 0 or 1");
      if (c.size() == 0) throw DataError("cluster '" + c.id + "' is empty");
      if (c.covariates.rows() != c.outcomes.size())
        throw DataError("cluster '" + c.id + "': covariate rows != outcome count");
      if (c.covariates.cols() != q)
        throw DataError("cluster '" + c.id + "': covariate width differs from header");
      if (!c.outcomes.allFinite() || !c.covariates.allFinite())
        throw DataError("cluster '" + c.id + "': non-finite value");
    }
    if (arms == ArmRequirement::both && !has_both_arms())
      throw ArmMissingError("dataset must contain at least one cluster in each arm");
  }

  std::vector<ClusterRecord> clusters_;
  double pi_ = 0.5;
  std::vector<std::string> covariate_names_;
};

/// Per-cluster aggregates used by every estimator.
struct ClusterSummary {
  double mean_outcome = 0.0;  // Ybar_i
  double sum_outcome = 0.0;   // Y_{i+}
  std::size_t size = 0;       // N_i
  int treatment = 0;          // A_i
  Eigen::VectorXd covariate_mean;
  const ClusterRecord* record = nullptr;
};

inline ClusterSummary summarize_cluster(const ClusterRecord& c) {
  ClusterSummary s;
  // Row order, so the total does not depend on vectorized reduction order.
  for (Eigen::Index j = 0; j < c.outcomes.size(); ++j) s.sum_outcome += c.outcomes(j);
  s.size = c.size();
  s.mean_outcome = s.sum_outcome / static_cast<double>(s.size);
  s.treatment = c.treatment;
  s.covariate_mean = c.covariates.colwise().mean().transpose();
  s.record = &c;
  return s;
}

inline std::vector<ClusterSummary> cluster_summaries(const TrialDataset& d) {
  std::vector<ClusterSummary> out;
  out.reserve(d.num_clusters());
  for (const auto& c : d.clusters()) out.push_back(summarize_cluster(c));
  return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvSchema {
  std::string cluster_column;
  std::string treatment_column;
  std::string outcome_column;
  std::vector<std::string> covariate_columns;
  char delimiter = ',';
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line, char delim) {
  using Sep = boost::escaped_list_separator<char>;
  boost::tokenizer<Sep> tok(line, Sep('\\', delim, '"'));
  return {tok.begin(), tok.end()};
}

inline double parse_number(std::string_view cell, std::size_t row, const std::string& column) {
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r'))
    cell.remove_suffix(1);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
    throw ParseError("row " + std::to_string(row) + ", column '" + column +
                     "': cannot parse '" + std::string(cell) + "' as a finite number");
  return v;
}

inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Load a long-format CSV (one row per individual). Rows of a cluster need
/// not be contiguous; clusters keep first-appearance order and rows keep file
/// order within their cluster. Row indices in errors count data rows from 1.
inline TrialDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema,
                             double pi) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("'" + path.string() + "' has no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line, schema.delimiter);

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < header.size(); ++j) index.emplace(header[j], j);
  auto column = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw SchemaError("missing column '" + name + "'");
    return it->second;
  };
  const std::size_t cid_col = column(schema.cluster_column);
  const std::size_t trt_col = column(schema.treatment_column);
  const std::size_t y_col = column(schema.outcome_column);
  std::vector<std::size_t> x_cols;
  for (const auto& name : schema.covariate_columns) x_cols.push_back(column(name));

  struct Building {
    std::string id;
    int treatment;
    std::vector<double> y;
    std::vector<std::vector<double>> x;
  };
  std::vector<Building> building;
  std::unordered_map<std::string, std::size_t> position;

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const auto cells = detail::split_csv_line(line, schema.delimiter);
    if (cells.size() != header.size())
      throw ParseError("row " + std::to_string(row) + ": expected " +
                       std::to_string(header.size()) + " fields, found " +
                       std::to_string(cells.size()));
    const double a = detail::parse_number(cells[trt_col], row, schema.treatment_column);
    if (a != 0.0 && a != 1.0)
      throw DataError("row " + std::to_string(row) + ": treatment must be 0 or 1");
    const std::string& id = cells[cid_col];
    auto [it, inserted] = position.emplace(id, building.size());
    if (inserted) building.push_back({id, static_cast<int>(a), {}, {}});
    auto& b = building[it->second];
    if (b.treatment != static_cast<int>(a))
      throw DataError("row " + std::to_string(row) + ": cluster '" + id +
                      "' has inconsistent treatment values");
    b.y.push_back(detail::parse_number(cells[y_col], row, schema.outcome_column));
    std::vector<double> xr;
    xr.reserve(x_cols.size());
    for (std::size_t k = 0; k < x_cols.size(); ++k)
      xr.push_back(detail::parse_number(cells[x_cols[k]], row, schema.covariate_columns[k]));
    b.x.push_back(std::move(xr));
  }

  std::vector<ClusterRecord> clusters;
  clusters.reserve(building.size());
  const auto q = static_cast<Eigen::Index>(x_cols.size());
  for (auto& b : building) {
    ClusterRecord rec;
    rec.id = b.id;
    rec.treatment = b.treatment;
    const auto n = static_cast<Eigen::Index>(b.y.size());
    rec.outcomes = Eigen::Map<const Eigen::VectorXd>(b.y.data(), n);
    rec.covariates.resize(n, q);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index k = 0; k < q; ++k) rec.covariates(r, k) = b.x[r][k];
    clusters.push_back(std::move(rec));
  }
  return TrialDataset(std::move(clusters), pi, schema.covariate_columns);
}

/// Schema matching what write_csv emits for a dataset.
inline CsvSchema default_schema(const TrialDataset& d) {
  return {"cluster", "treatment", "outcome", d.covariate_names(), ','};
}

/// Write one row per individual. Numbers use the shortest representation that
/// parses back to the same double, so write/load round-trips exactly.
inline void write_csv(const TrialDataset& d, const std::filesystem::path& path,
                      const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  const char sep = schema.delimiter;
  out << schema.cluster_column << sep << schema.treatment_column << sep << schema.outcome_column;
  for (const auto& name : schema.covariate_columns) out << sep << name;
  out << '\n';
  for (const auto& c : d.clusters()) {
    for (std::size_t r = 0; r < c.size(); ++r) {
      out << c.id << sep << c.treatment << sep
          << detail::format_number(c.outcomes(static_cast<Eigen::Index>(r)));
      for (Eigen::Index k = 0; k < c.covariates.cols(); ++k)
        out << sep << detail::format_number(c.covariates(static_cast<Eigen::Index>(r), k));
      out << '\n';
    }
  }
}

inline void write_csv(const TrialDataset& d, const std::filesystem::path& path) {
  write_csv(d, path, default_schema(d));
}

}  // namespace crtbayes
