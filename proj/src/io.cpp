#include "uotkit/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace uot {

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", value == 0.0 ? 0.0 : value);  // folds -0 into 0
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& field, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != field.size()) {
    throw std::invalid_argument("csv line " + std::to_string(line) + ": '" + field + "' is not a number");
  }
  return v;
}

}  // namespace

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(pos, end - pos));
    if (!line.empty()) {
      std::vector<std::string> fields;
      std::size_t fpos = 0;
      while (true) {
        const auto comma = line.find(',', fpos);
        fields.emplace_back(trim(line.substr(fpos, comma == std::string_view::npos ? line.npos : comma - fpos)));
        if (comma == std::string_view::npos) break;
        fpos = comma + 1;
      }
      rows.push_back(std::move(fields));
    }
    pos = end + 1;
  }
  return rows;
}

std::string measure_csv(const DiscreteMeasure& measure, std::span<const int> labels) {
  if (!labels.empty() && labels.size() != measure.size()) throw std::invalid_argument("measure_csv: label count mismatch");
  std::string out;
  for (int k = 0; k < measure.dim(); ++k) out += "x" + std::to_string(k) + ",";
  out += "weight,label\n";
  for (Eigen::Index i = 0; i < measure.points.rows(); ++i) {
    for (Eigen::Index k = 0; k < measure.points.cols(); ++k) out += format_number(measure.points(i, k)) + ",";
    out += format_number(measure.weights[i]) + ",";
    out += std::to_string(labels.empty() ? 0 : labels[static_cast<std::size_t>(i)]) + "\n";
  }
  return out;
}

LabeledMeasure parse_measure_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty()) throw std::invalid_argument("measure csv: empty document");
  const auto& header = rows.front();
  int dim = 0;
  int weight_col = -1;
  int label_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "x" + std::to_string(dim) && static_cast<int>(c) == dim) {
      ++dim;
    } else if (header[c] == "weight") {
      weight_col = static_cast<int>(c);
    } else if (header[c] == "label") {
      label_col = static_cast<int>(c);
    } else {
      throw std::invalid_argument("measure csv: unexpected column '" + header[c] + "'");
    }
  }
  if (dim == 0) throw std::invalid_argument("measure csv: no coordinate columns (expected x0, x1, ...)");
  if (rows.size() < 2) throw std::invalid_argument("measure csv: no points");

  Matrix pts(static_cast<Eigen::Index>(rows.size() - 1), dim);
  Vector w(pts.rows());
  std::vector<int> labels;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      throw std::invalid_argument("measure csv line " + std::to_string(r + 1) + ": expected " +
                                  std::to_string(header.size()) + " fields");
    }
    const auto i = static_cast<Eigen::Index>(r - 1);
    for (int k = 0; k < dim; ++k) pts(i, k) = to_double(row[static_cast<std::size_t>(k)], r + 1);
    if (weight_col >= 0) w[i] = to_double(row[static_cast<std::size_t>(weight_col)], r + 1);
    labels.push_back(label_col >= 0 ? static_cast<int>(to_double(row[static_cast<std::size_t>(label_col)], r + 1)) : 0);
  }
  LabeledMeasure out;
  out.measure = weight_col >= 0 ? make_measure(std::move(pts), std::move(w)) : make_measure(std::move(pts));
  out.labels = std::move(labels);
  return out;
}

std::string plan_csv(const Matrix& plan) {
  std::string out;
  for (Eigen::Index j = 0; j < plan.cols(); ++j) out += (j ? ",t" : "t") + std::to_string(j);
  out += "\n";
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    for (Eigen::Index j = 0; j < plan.cols(); ++j) out += (j ? "," : "") + format_number(plan(i, j));
    out += "\n";
  }
  return out;
}

Matrix parse_plan_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.size() < 2) throw std::invalid_argument("plan csv: expected a header and at least one row");
  const auto cols = rows.front().size();
  Matrix plan(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw std::invalid_argument("plan csv: ragged row " + std::to_string(r + 1));
    for (std::size_t c = 0; c < cols; ++c) {
      plan(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c)) = to_double(rows[r][c], r + 1);
    }
  }
  return plan;
}

namespace {
std::string join(const Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? " " : "") + format_number(v[i]);
  return out;
}
}  // namespace

std::string plan_diagnostics(const TransportPlan& plan) {
  std::ostringstream ss;
  ss << "iterations = " << plan.iterations_used << "\n"
     << "converged = " << (plan.converged ? "true" : "false") << "\n"
     << "final_residual = " << format_number(plan.final_residual) << "\n"
     << "epsilon = " << format_number(plan.epsilon) << "\n"
     << "lambda1 = " << format_number(plan.lambda1) << "\n"
     << "lambda2 = " << format_number(plan.lambda2) << "\n"
     << "total_mass = " << format_number(plan.total_mass()) << "\n"
     << "transported_cost = " << format_number(plan.transported_cost) << "\n"
     << "row_marginal = " << join(plan.row_marginal) << "\n"
     << "col_marginal = " << join(plan.col_marginal) << "\n";
  return ss.str();
}

std::string loss_history_csv(std::span<const double> losses) {
  std::string out = "iter,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out += std::to_string(i) + "," + format_number(losses[i]) + "\n";
  return out;
}

std::string trajectory_csv(const std::vector<Matrix>& states) {
  if (states.empty()) throw std::invalid_argument("trajectory_csv: no states");
  std::string out = "point_id,t";
  for (Eigen::Index k = 0; k < states.front().cols(); ++k) out += ",x" + std::to_string(k);
  out += "\n";
  const double steps = static_cast<double>(states.size() - 1);
  for (Eigen::Index p = 0; p < states.front().rows(); ++p) {
    for (std::size_t s = 0; s < states.size(); ++s) {
      out += std::to_string(p) + "," + format_number(steps > 0 ? static_cast<double>(s) / steps : 0.0);
      for (Eigen::Index k = 0; k < states[s].cols(); ++k) out += "," + format_number(states[s](p, k));
      out += "\n";
    }
  }
  return out;
}

std::string reports_csv(const std::vector<EvalReport>& reports) {
  std::vector<std::string> names;
  for (const auto& r : reports) {
    for (const auto& [name, value] : r.metrics) {
      if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
    }
  }
  std::string out = "dataset,estimator,mode,tau,seed";
  for (const auto& n : names) out += "," + n;
  out += "\n";
  for (const auto& r : reports) {
    out += r.dataset + "," + r.estimator + "," + r.mode + "," + format_number(r.tau) + "," + std::to_string(r.seed);
    for (const auto& n : names) {
      out += ",";
      if (const auto v = r.get(n)) out += format_number(*v);
    }
    out += "\n";
  }
  return out;
}

}  // namespace uot
