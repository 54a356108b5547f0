#include "atbp/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "atbp/version.hpp"

namespace atbp::io {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& what) { throw invalid_input(what); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write '" + path + "'");
  out << content;
  if (!out) fail("write failed for '" + path + "'");
}

// RFC 4180 parser; '#' comment lines outside quoted fields are skipped.
std::vector<std::vector<std::string>> parse_csv(const std::string& text,
                                                const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool line_start = true;
  bool comment = false;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&] {
    if (!comment && (!row.empty() || !field.empty())) {
      end_field();
      rows.push_back(std::move(row));
    }
    row.clear();
    field.clear();
    comment = false;
    line_start = true;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (comment) {
      if (c == '\n') end_row();
      continue;
    }
    if (line_start && c == '#' && !quoted) {
      comment = true;
      continue;
    }
    line_start = false;
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        break;
      default:
        field.push_back(c);
    }
  }
  if (quoted) fail(path + ": unterminated quoted field");
  if (!field.empty() || !row.empty()) end_row();
  return rows;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0;
  const char* begin = s.data();
  const char* end = begin + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) fail(where + ": cannot parse number '" + s + "'");
  return v;
}

std::string meta_comment(const FileMeta& meta) {
  std::ostringstream os;
  os << "# atbp " << meta.tool_version << " config=" << meta.config_hash
     << " seed=" << meta.seed << "\n";
  return os.str();
}

json meta_json(const FileMeta& meta) {
  return json{{"tool_version", meta.tool_version},
              {"config_hash", meta.config_hash},
              {"seed", meta.seed}};
}

}  // namespace

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = digits[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return buf;
}

std::string format_double(double v) {
  char buf[40];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw internal_error("format_double failed");
  return std::string(buf, ptr);
}

FinitePopulation read_population_csv(const std::string& path) {
  const auto rows = parse_csv(read_file(path), path);
  if (rows.empty()) fail(path + ": empty file");
  const auto& header = rows.front();

  auto col = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    fail(path + ": missing required column '" + name + "'");
  };
  const std::size_t c_area = col("area_id");
  const std::size_t c_unit = col("unit_id");
  const std::size_t c_sampled = col("sampled");
  const std::size_t c_y = col("y");
  std::vector<std::size_t> c_x;
  for (std::size_t p = 1;; ++p) {
    const std::string name = "x_" + std::to_string(p);
    bool found = false;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) {
        c_x.push_back(i);
        found = true;
        break;
      }
    }
    if (!found) break;
  }
  if (c_x.empty()) fail(path + ": missing covariate columns x_1..x_p");
  const Eigen::Index p = static_cast<Eigen::Index>(c_x.size());

  struct RawArea {
    std::vector<std::string> unit_ids;
    std::vector<std::uint8_t> sampled;
    std::vector<double> y;
    std::vector<double> x;  // row-major
  };
  std::vector<std::string> order;
  std::map<std::string, RawArea> areas;

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = path + " row " + std::to_string(r + 1);
    if (row.size() < header.size()) fail(where + ": expected " +
                                         std::to_string(header.size()) + " fields, got " +
                                         std::to_string(row.size()));
    const std::string& area_id = row[c_area];
    if (area_id.empty()) fail(where + ": empty area_id");
    auto [it, fresh] = areas.try_emplace(area_id);
    if (fresh) order.push_back(area_id);
    RawArea& area = it->second;

    area.unit_ids.push_back(row[c_unit]);
    const std::string& sampled_s = row[c_sampled];
    if (sampled_s != "0" && sampled_s != "1") {
      fail(where + ": column 'sampled' must be 0 or 1, got '" + sampled_s + "'");
    }
    const bool is_sampled = sampled_s == "1";
    area.sampled.push_back(is_sampled ? 1 : 0);
    if (is_sampled) {
      if (row[c_y].empty()) fail(where + ": column 'y' empty for a sampled unit");
      area.y.push_back(parse_double(row[c_y], where + " column 'y'"));
    } else if (!row[c_y].empty()) {
      fail(where + ": column 'y' must be empty when sampled=0");
    }
    for (std::size_t k = 0; k < c_x.size(); ++k) {
      area.x.push_back(parse_double(row[c_x[k]], where + " column 'x_" +
                                                     std::to_string(k + 1) + "'"));
    }
  }
  if (order.empty()) fail(path + ": no data rows");

  FinitePopulation pop;
  for (const auto& id : order) {
    RawArea& raw = areas[id];
    AreaPopulation area;
    area.id = id;
    const Eigen::Index N = static_cast<Eigen::Index>(raw.sampled.size());
    area.X.resize(N, p);
    for (Eigen::Index j = 0; j < N; ++j) {
      for (Eigen::Index k = 0; k < p; ++k) {
        area.X(j, k) = raw.x[static_cast<std::size_t>(j * p + k)];
      }
    }
    area.sampled = std::move(raw.sampled);
    area.y = Eigen::Map<Eigen::VectorXd>(raw.y.data(),
                                         static_cast<Eigen::Index>(raw.y.size()));
    area.unit_ids = std::move(raw.unit_ids);
    pop.areas.push_back(std::move(area));
  }
  pop.check();
  return pop;
}

void write_population_csv(const FinitePopulation& pop, const std::string& path,
                          const FileMeta& meta) {
  std::ostringstream os;
  os << meta_comment(meta);
  os << "area_id,unit_id,sampled,y";
  for (Eigen::Index k = 0; k < pop.p(); ++k) os << ",x_" << (k + 1);
  os << "\n";
  for (const auto& area : pop.areas) {
    Eigen::Index r = 0;
    for (Eigen::Index j = 0; j < area.size(); ++j) {
      const bool s = area.sampled[static_cast<std::size_t>(j)] != 0;
      os << csv_quote(area.id) << ",";
      if (!area.unit_ids.empty()) {
        os << csv_quote(area.unit_ids[static_cast<std::size_t>(j)]);
      } else {
        os << "u" << (j + 1);
      }
      os << "," << (s ? 1 : 0) << ",";
      if (s) os << format_double(area.y[r++]);
      for (Eigen::Index k = 0; k < pop.p(); ++k) os << "," << format_double(area.X(j, k));
      os << "\n";
    }
  }
  write_file(path, os.str());
}

void write_fit_json(const FitArtifact& artifact, const std::string& path) {
  const FittedModel& m = artifact.model;
  json j;
  j["schema"] = "atbp-fit/1";
  j["meta"] = meta_json({kVersion, artifact.config_hash, artifact.seed});
  j["family"] = std::string(to_string(m.family.id()));
  j["eps_lambda"] = m.family.eps_lambda();
  j["transform_params"] = m.params.transform.values;
  j["beta"] = std::vector<double>(m.params.beta.data(),
                                  m.params.beta.data() + m.params.beta.size());
  j["tau2"] = m.params.tau2;
  j["sigma2"] = m.params.sigma2;
  j["loglik"] = m.loglik;
  j["aic"] = m.aic;
  j["bic"] = m.bic;
  j["aic_per_unit"] = m.aic / static_cast<double>(m.total_n);
  j["bic_per_unit"] = m.bic / static_cast<double>(m.total_n);
  j["se"] = std::vector<double>(m.se.data(), m.se.data() + m.se.size());
  {
    std::vector<std::vector<double>> fisher;
    for (Eigen::Index r = 0; r < m.fisher.rows(); ++r) {
      fisher.emplace_back(m.fisher.row(r).begin(), m.fisher.row(r).end());
    }
    j["fisher"] = fisher;
  }
  j["fisher_rcond"] = m.fisher_rcond;
  j["m"] = m.m;
  j["total_n"] = m.total_n;
  j["p"] = m.p;
  j["q"] = m.q;
  j["convergence"] = {{"converged", m.convergence.converged},
                      {"outer_evaluations", m.convergence.outer_evaluations},
                      {"outer_bracket", m.convergence.outer_bracket},
                      {"inner_rounds", m.convergence.inner_rounds},
                      {"inner_evaluations", m.convergence.inner_evaluations},
                      {"grid_guard_restart", m.convergence.grid_guard_restart},
                      {"stage", m.convergence.stage}};
  if (!artifact.residuals_file.empty()) j["residuals_file"] = artifact.residuals_file;
  write_file(path, j.dump(2) + "\n");
}

FitArtifact read_fit_json(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(path + ": " + e.what());
  }
  if (j.value("schema", "") != "atbp-fit/1") {
    fail(path + ": unsupported schema '" + j.value("schema", "") + "'");
  }
  FitArtifact artifact;
  try {
    FittedModel& m = artifact.model;
    m.family = TransformFamily::make(j.at("family").get<std::string>(),
                                     j.value("eps_lambda", TransformFamily::kDefaultEpsLambda));
    m.params.transform = TransformParams(j.at("transform_params").get<std::vector<double>>());
    const auto beta = j.at("beta").get<std::vector<double>>();
    m.params.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(),
                                                      static_cast<Eigen::Index>(beta.size()));
    m.params.tau2 = j.at("tau2").get<double>();
    m.params.sigma2 = j.at("sigma2").get<double>();
    m.loglik = j.at("loglik").get<double>();
    m.aic = j.at("aic").get<double>();
    m.bic = j.at("bic").get<double>();
    const auto se = j.at("se").get<std::vector<double>>();
    m.se = Eigen::Map<const Eigen::VectorXd>(se.data(), static_cast<Eigen::Index>(se.size()));
    const auto fisher = j.at("fisher").get<std::vector<std::vector<double>>>();
    m.fisher.resize(static_cast<Eigen::Index>(fisher.size()),
                    static_cast<Eigen::Index>(fisher.empty() ? 0 : fisher[0].size()));
    for (Eigen::Index r = 0; r < m.fisher.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.fisher.cols(); ++c) {
        m.fisher(r, c) = fisher[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      }
    }
    m.fisher_rcond = j.value("fisher_rcond", 0.0);
    m.m = j.at("m").get<int>();
    m.total_n = j.at("total_n").get<long>();
    m.p = j.at("p").get<Eigen::Index>();
    m.q = j.at("q").get<Eigen::Index>();
    m.convergence.converged = j.at("convergence").at("converged").get<bool>();
    artifact.seed = j.at("meta").value("seed", 0ull);
    artifact.config_hash = j.at("meta").value("config_hash", "");
    artifact.residuals_file = j.value("residuals_file", "");
  } catch (const json::exception& e) {
    fail(path + ": " + e.what());
  }
  return artifact;
}

void write_residuals_csv(std::span<const Residual> residuals, const std::string& path,
                         const FileMeta& meta) {
  std::ostringstream os;
  os << meta_comment(meta) << "area_id,unit,r\n";
  for (const auto& r : residuals) {
    os << csv_quote(r.area_id) << "," << r.unit << "," << format_double(r.r) << "\n";
  }
  write_file(path, os.str());
}

void write_predictions_csv(std::span<const AreaPrediction> predictions,
                           const std::string& path, const FileMeta& meta) {
  std::ostringstream os;
  os << meta_comment(meta) << "area_id,n_i,N_i,mu_hat,mc_se\n";
  for (const auto& p : predictions) {
    os << csv_quote(p.area_id) << "," << p.n << "," << p.N << ","
       << format_double(p.mu_hat) << "," << format_double(p.mc_se) << "\n";
  }
  write_file(path, os.str());
}

void write_intervals_csv(std::span<const IntervalResult> intervals,
                         const std::string& path, const FileMeta& meta) {
  std::ostringstream os;
  os << meta_comment(meta) << "area_id,method,lower,upper,a_star\n";
  for (const auto& r : intervals) {
    os << csv_quote(r.area_id) << ","
       << (r.method == IntervalResult::Method::naive ? "naive" : "calibrated") << ","
       << format_double(r.lower) << "," << format_double(r.upper) << ",";
    if (r.a_star) os << format_double(*r.a_star);
    os << "\n";
  }
  write_file(path, os.str());
}

void write_study_csv(const StudyReport& report, const std::string& path,
                     const FileMeta& meta) {
  std::ostringstream os;
  os << meta_comment(meta);
  if (report.study == "prediction") {
    os << "group_n";
    for (const auto& m : report.methods) os << "," << m;
    os << "\n";
    for (std::size_t g = 0; g < report.group_sizes.size(); ++g) {
      os << report.group_sizes[g];
      for (Eigen::Index k = 0; k < report.rmse_by_group.cols(); ++k) {
        os << "," << format_double(report.rmse_by_group(static_cast<Eigen::Index>(g), k));
      }
      os << "\n";
    }
  } else {
    os << "area_id,n_i";
    for (const auto& m : report.methods) os << ",cp_" << m;
    for (const auto& m : report.methods) os << ",al_" << m;
    os << "\n";
    for (std::size_t i = 0; i < report.area_ids.size(); ++i) {
      os << csv_quote(report.area_ids[i]) << "," << report.area_n[i];
      const Eigen::Index r = static_cast<Eigen::Index>(i);
      for (Eigen::Index k = 0; k < report.cp_by_area.cols(); ++k) {
        os << "," << format_double(report.cp_by_area(r, k));
      }
      for (Eigen::Index k = 0; k < report.al_by_area.cols(); ++k) {
        os << "," << format_double(report.al_by_area(r, k));
      }
      os << "\n";
    }
  }
  write_file(path, os.str());
}

void write_study_json(const StudyReport& report, const std::string& path,
                      const FileMeta& meta) {
  json j;
  j["meta"] = meta_json(meta);
  j["study"] = report.study;
  j["R"] = report.R;
  j["seed"] = report.seed;
  j["runtime_seconds"] = report.runtime_seconds;
  j["methods"] = report.methods;
  if (report.study == "prediction") {
    j["group_sizes"] = report.group_sizes;
    std::vector<std::vector<double>> rmse;
    for (Eigen::Index g = 0; g < report.rmse_by_group.rows(); ++g) {
      rmse.emplace_back(report.rmse_by_group.row(g).begin(),
                        report.rmse_by_group.row(g).end());
    }
    j["rmse_by_group"] = rmse;
  } else {
    j["area_ids"] = report.area_ids;
    j["area_n"] = report.area_n;
    std::vector<std::vector<double>> cp;
    std::vector<std::vector<double>> al;
    for (Eigen::Index i = 0; i < report.cp_by_area.rows(); ++i) {
      cp.emplace_back(report.cp_by_area.row(i).begin(), report.cp_by_area.row(i).end());
      al.emplace_back(report.al_by_area.row(i).begin(), report.al_by_area.row(i).end());
    }
    j["cp_by_area"] = cp;
    j["al_by_area"] = al;
  }
  write_file(path, j.dump(2) + "\n");
}

}  // namespace atbp::io
