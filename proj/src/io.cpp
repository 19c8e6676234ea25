#include "orthobayes/io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "orthobayes/digest.hpp"
#include "orthobayes/error.hpp"

#ifndef ORTHOBAYES_VERSION
#define ORTHOBAYES_VERSION "0.0.0"
#endif

namespace orthobayes {

using nlohmann::json;

namespace {

constexpr std::array<char, 8> kDrawsMagic = {'O', 'B', 'D', 'R', 'A', 'W', 'S', '1'};

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& cell) {
  const std::string c = lower(cell);
  return c.empty() || c == "na" || c == "nan" || c == "?";
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& column, const std::string& what) {
  throw ParseError("line " + std::to_string(line) + ", column '" + column + "': " + what);
}

json real_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double json_real(const json& v) {
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return v.get<double>();
}

std::vector<std::string> sorted_levels(const std::vector<std::string>& labels) {
  std::vector<std::string> lv(labels.begin(), labels.end());
  std::sort(lv.begin(), lv.end());
  lv.erase(std::unique(lv.begin(), lv.end()), lv.end());
  bool numeric = true;
  double tmp = 0.0;
  for (const auto& l : lv) numeric = numeric && parse_double(l, tmp);
  if (numeric) {
    std::stable_sort(lv.begin(), lv.end(), [](const std::string& a, const std::string& b) {
      double x = 0.0;
      double y = 0.0;
      parse_double(a, x);
      parse_double(b, y);
      return x < y;
    });
  }
  return lv;
}

const std::vector<std::string> kReportColumns = {
    "method", "theta0",   "n",        "d",       "coverage", "mc_se",
    "length", "bias",     "reps",     "failures", "wall_ms", "signed_bias"};

const std::vector<std::string> kIntervalColumns = {"label", "point", "se",
                                                   "lower", "upper", "level"};

void require_header(const std::string& line, const std::vector<std::string>& expected) {
  if (split_csv_line(line) != expected) throw ParseError("unexpected header: " + line);
}

double field_real(const std::string& s, std::size_t line) {
  double v = 0.0;
  if (lower(s) == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (!parse_double(s, v)) throw ParseError("line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

long field_int(const std::string& s, std::size_t line) {
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("line " + std::to_string(line) + ": bad integer '" + s + "'");
  }
  return v;
}

// Reject keys not in `allowed`.
void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + where + "." + key + "'");
    }
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("'" + where + "." + key + "': " + e.what());
  }
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

const char* route_label(GaussianRoute r) {
  switch (r) {
    case GaussianRoute::precision:
      return "precision";
    case GaussianRoute::low_rank:
      return "low_rank";
    case GaussianRoute::automatic:
      break;
  }
  return "automatic";
}

GaussianRoute parse_route(const std::string& s) {
  if (s == "automatic") return GaussianRoute::automatic;
  if (s == "precision") return GaussianRoute::precision;
  if (s == "low_rank") return GaussianRoute::low_rank;
  throw ConfigError("unknown chain.route '" + s + "'");
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError("unterminated quote");
  out.push_back(trim(cur));
  return out;
}

IngestResult ingest_csv(const std::filesystem::path& path, const IngestOptions& opts) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return ingest_csv(in, opts);
}

IngestResult ingest_csv(std::istream& in, const IngestOptions& opts) {
  IngestResult res;
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError("empty input, no header row");
  try {
    res.header = split_csv_line(line);
  } catch (const ParseError&) {
    parse_fail(lineno, "", "unterminated quote in header");
  }
  const std::size_t ncol = res.header.size();
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < ncol; ++c) {
    if (res.header[c].empty()) parse_fail(lineno, "", "empty column name");
    if (!index.emplace(res.header[c], c).second) parse_fail(lineno, res.header[c], "duplicate column");
  }
  auto find = [&](const std::string& name, const char* role) {
    const auto it = index.find(name);
    if (it == index.end()) throw ParseError(std::string(role) + " column '" + name + "' not found");
    return it->second;
  };
  const std::size_t t_col = find(opts.treatment, "treatment");
  const std::size_t y_col = find(opts.outcome, "outcome");
  if (t_col == y_col) throw DomainError("treatment and outcome must be different columns");
  std::set<std::string> cat(opts.categorical.begin(), opts.categorical.end());
  for (const auto& c : cat) find(c, "categorical");
  if (cat.count(opts.outcome)) throw DomainError("the outcome cannot be categorical");

  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    try {
      cells = split_csv_line(line);
    } catch (const ParseError&) {
      parse_fail(lineno, "", "unterminated quote");
    }
    if (cells.size() != ncol) {
      parse_fail(lineno, "", "expected " + std::to_string(ncol) + " fields, found " +
                                 std::to_string(cells.size()));
    }
    if (std::any_of(cells.begin(), cells.end(), is_missing)) {
      ++res.dropped_rows;
      continue;
    }
    double v = 0.0;
    if (!parse_double(cells[y_col], v)) parse_fail(lineno, opts.outcome, "not a number: '" + cells[y_col] + "'");
    if (v != 0.0 && v != 1.0) {
      throw NonBinaryOutcome("line " + std::to_string(lineno) + ": outcome value '" + cells[y_col] +
                             "' is not 0 or 1");
    }
    if (!parse_double(cells[t_col], v) || v != std::floor(v) || std::fabs(v) > 1e9) {
      parse_fail(lineno, opts.treatment, "treatment must be an integer code, got '" + cells[t_col] + "'");
    }
    for (std::size_t c = 0; c < ncol; ++c) {
      if (c == t_col || c == y_col || cat.count(res.header[c])) continue;
      if (!parse_double(cells[c], v) || !std::isfinite(v)) {
        parse_fail(lineno, res.header[c], "not a number: '" + cells[c] + "'");
      }
    }
    res.rows.push_back(std::move(cells));
  }
  if (res.dropped_rows > 0) {
    res.warnings.push_back("dropped " + std::to_string(res.dropped_rows) +
                           " row(s) with missing values");
  }
  const auto n = static_cast<Eigen::Index>(res.rows.size());
  if (n == 0) throw EmptyInput("no complete rows");

  Dataset& data = res.data;
  data.y.resize(n);
  data.x.resize(n);
  std::set<long> codes;
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = 0.0;
    parse_double(res.rows[static_cast<std::size_t>(i)][y_col], v);
    data.y[i] = v;
    parse_double(res.rows[static_cast<std::size_t>(i)][t_col], v);
    codes.insert(static_cast<long>(v));
  }
  if (codes.size() < 2) throw DomainError("treatment takes a single value");
  res.treatment_codes.assign(codes.begin(), codes.end());
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = 0.0;
    parse_double(res.rows[static_cast<std::size_t>(i)][t_col], v);
    const auto it = std::lower_bound(res.treatment_codes.begin(), res.treatment_codes.end(),
                                     static_cast<long>(v));
    data.x[i] = static_cast<int>(it - res.treatment_codes.begin());
  }
  data.levels = static_cast<int>(codes.size()) - 1;

  std::vector<Eigen::VectorXd> zcols;
  for (std::size_t c = 0; c < ncol; ++c) {
    if (c == t_col || c == y_col) continue;
    CovariateColumn col;
    col.name = res.header[c];
    col.categorical = cat.count(col.name) > 0;
    if (col.categorical) {
      std::vector<std::string> labels;
      for (const auto& r : res.rows) labels.push_back(r[c]);
      col.levels = sorted_levels(labels);
      if (col.levels.size() < 2) {
        res.warnings.push_back("constant column '" + col.name + "' dropped");
        continue;
      }
      for (std::size_t k = 1; k < col.levels.size(); ++k) {
        Eigen::VectorXd dummy(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          dummy[i] = res.rows[static_cast<std::size_t>(i)][c] == col.levels[k] ? 1.0 : 0.0;
        }
        zcols.push_back(std::move(dummy));
        res.z_names.push_back(col.name + "=" + col.levels[k]);
      }
    } else {
      Eigen::VectorXd v(n);
      for (Eigen::Index i = 0; i < n; ++i) parse_double(res.rows[static_cast<std::size_t>(i)][c], v[i]);
      if (v.maxCoeff() == v.minCoeff()) {
        res.warnings.push_back("constant column '" + col.name + "' dropped");
        continue;
      }
      col.mean = v.mean();
      col.sd = std::sqrt((v.array() - col.mean).square().mean());
      zcols.push_back((v.array() - col.mean) / col.sd);
      res.z_names.push_back(col.name);
    }
    res.columns.push_back(std::move(col));
  }
  data.z.resize(n, static_cast<Eigen::Index>(zcols.size()));
  for (std::size_t j = 0; j < zcols.size(); ++j) data.z.col(static_cast<Eigen::Index>(j)) = zcols[j];
  data.validate();
  return res;
}

void write_standardized_csv(std::ostream& out, const IngestResult& ingest,
                            const IngestOptions& opts) {
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < ingest.header.size(); ++c) index[ingest.header[c]] = c;
  out << csv_quote(opts.outcome) << ',' << csv_quote(opts.treatment);
  for (const auto& col : ingest.columns) out << ',' << csv_quote(col.name);
  out << '\n';
  const auto n = ingest.data.n();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = ingest.rows[static_cast<std::size_t>(i)];
    out << fmt17(ingest.data.y[i]) << ','
        << ingest.treatment_codes[static_cast<std::size_t>(ingest.data.x[i])];
    for (const auto& col : ingest.columns) {
      const std::string& cell = row[index.at(col.name)];
      if (col.categorical) {
        out << ',' << csv_quote(cell);
      } else {
        double v = 0.0;
        parse_double(cell, v);
        out << ',' << fmt17((v - col.mean) / col.sd);
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing standardized table");
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "csv") return ReportFormat::csv;
  if (name == "jsonl" || name == "json-lines") return ReportFormat::jsonl;
  throw ConfigError("unknown report format '" + std::string(name) + "'");
}

void emit_report(std::span<const McRow> rows, ReportFormat fmt, std::ostream& out) {
  if (rows.empty()) throw EmptyInput("report has no rows");
  if (fmt == ReportFormat::csv) {
    for (std::size_t k = 0; k < kReportColumns.size(); ++k) {
      out << (k ? "," : "") << kReportColumns[k];
    }
    out << '\n';
    for (const auto& r : rows) {
      out << csv_quote(r.method) << ',' << fmt17(r.theta0) << ',' << r.n << ',' << r.d << ','
          << fmt17(r.coverage) << ',' << fmt17(r.mc_se) << ',' << fmt17(r.length) << ','
          << fmt17(r.bias) << ',' << r.reps << ',' << r.failures << ',' << fmt17(r.wall_ms) << ','
          << fmt17(r.signed_bias) << '\n';
    }
  } else {
    for (const auto& r : rows) {
      json j = json::object();
      j["method"] = r.method;
      j["theta0"] = real_json(r.theta0);
      j["n"] = r.n;
      j["d"] = r.d;
      j["coverage"] = real_json(r.coverage);
      j["mc_se"] = real_json(r.mc_se);
      j["length"] = real_json(r.length);
      j["bias"] = real_json(r.bias);
      j["reps"] = r.reps;
      j["failures"] = r.failures;
      j["wall_ms"] = real_json(r.wall_ms);
      j["signed_bias"] = real_json(r.signed_bias);
      out << j.dump() << '\n';
    }
  }
  if (!out) throw IoError("failed writing report");
}

std::vector<McRow> parse_report(std::istream& in, ReportFormat fmt) {
  std::vector<McRow> rows;
  std::string line;
  std::size_t lineno = 0;
  if (fmt == ReportFormat::csv) {
    if (!std::getline(in, line)) throw ParseError("empty report");
    ++lineno;
    require_header(line, kReportColumns);
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    McRow r;
    if (fmt == ReportFormat::csv) {
      const auto f = split_csv_line(line);
      if (f.size() != kReportColumns.size()) throw ParseError("line " + std::to_string(lineno) + ": wrong field count");
      r.method = f[0];
      r.theta0 = field_real(f[1], lineno);
      r.n = field_int(f[2], lineno);
      r.d = field_int(f[3], lineno);
      r.coverage = field_real(f[4], lineno);
      r.mc_se = field_real(f[5], lineno);
      r.length = field_real(f[6], lineno);
      r.bias = field_real(f[7], lineno);
      r.reps = field_int(f[8], lineno);
      r.failures = field_int(f[9], lineno);
      r.wall_ms = field_real(f[10], lineno);
      r.signed_bias = field_real(f[11], lineno);
    } else {
      try {
        const json j = json::parse(line);
        r.method = j.at("method").get<std::string>();
        r.theta0 = json_real(j.at("theta0"));
        r.n = j.at("n").get<long>();
        r.d = j.at("d").get<long>();
        r.coverage = json_real(j.at("coverage"));
        r.mc_se = json_real(j.at("mc_se"));
        r.length = json_real(j.at("length"));
        r.bias = json_real(j.at("bias"));
        r.reps = j.at("reps").get<long>();
        r.failures = j.at("failures").get<long>();
        r.wall_ms = json_real(j.at("wall_ms"));
        r.signed_bias = json_real(j.at("signed_bias"));
      } catch (const json::exception& e) {
        throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void emit_intervals(std::span<const LabeledInterval> rows, ReportFormat fmt, std::ostream& out) {
  if (rows.empty()) throw EmptyInput("no intervals to emit");
  if (fmt == ReportFormat::csv) {
    out << "label,point,se,lower,upper,level\n";
    for (const auto& r : rows) {
      const auto& iv = r.interval;
      out << csv_quote(r.label) << ',' << fmt17(iv.point) << ',' << fmt17(iv.se) << ','
          << fmt17(iv.lower) << ',' << fmt17(iv.upper) << ',' << fmt17(iv.level) << '\n';
    }
  } else {
    for (const auto& r : rows) {
      const auto& iv = r.interval;
      json j = {{"label", r.label},          {"point", real_json(iv.point)},
                {"se", real_json(iv.se)},    {"lower", real_json(iv.lower)},
                {"upper", real_json(iv.upper)}, {"level", real_json(iv.level)}};
      out << j.dump() << '\n';
    }
  }
  if (!out) throw IoError("failed writing intervals");
}

std::vector<LabeledInterval> parse_intervals(std::istream& in, ReportFormat fmt) {
  std::vector<LabeledInterval> rows;
  std::string line;
  std::size_t lineno = 0;
  if (fmt == ReportFormat::csv) {
    if (!std::getline(in, line)) throw ParseError("empty interval file");
    ++lineno;
    require_header(line, kIntervalColumns);
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    LabeledInterval r;
    if (fmt == ReportFormat::csv) {
      const auto f = split_csv_line(line);
      if (f.size() != kIntervalColumns.size()) throw ParseError("line " + std::to_string(lineno) + ": wrong field count");
      r.label = f[0];
      r.interval = {field_real(f[1], lineno), field_real(f[2], lineno), field_real(f[3], lineno),
                    field_real(f[4], lineno), field_real(f[5], lineno)};
    } else {
      try {
        const json j = json::parse(line);
        r.label = j.at("label").get<std::string>();
        r.interval = {json_real(j.at("point")), json_real(j.at("se")), json_real(j.at("lower")),
                      json_real(j.at("upper")), json_real(j.at("level"))};
      } catch (const json::exception& e) {
        throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void emit_replicates(std::span<const ReplicateResult> rows, std::ostream& out) {
  out << "cell,method,rep,ok,point,se,lower,upper,error\n";
  for (const auto& r : rows) {
    out << r.cell << ',' << method_name(r.method) << ',' << r.rep << ',' << (r.ok ? 1 : 0) << ','
        << fmt17(r.ok ? r.interval.point : std::nan("")) << ','
        << fmt17(r.ok ? r.interval.se : std::nan("")) << ','
        << fmt17(r.ok ? r.interval.lower : std::nan("")) << ','
        << fmt17(r.ok ? r.interval.upper : std::nan("")) << ',' << csv_quote(r.error) << '\n';
  }
  if (!out) throw IoError("failed writing replicates");
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.close();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_draws(const std::filesystem::path& path, std::span<const double> draws) {
  std::string buf(kDrawsMagic.begin(), kDrawsMagic.end());
  auto put_u64 = [&buf](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) buf.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
  };
  put_u64(draws.size());
  for (double d : draws) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &d, sizeof bits);
    put_u64(bits);
  }
  write_text_file(path, buf);
}

std::vector<double> read_draws(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 16 || !std::equal(kDrawsMagic.begin(), kDrawsMagic.end(), buf.begin())) {
    throw ParseError("'" + path.string() + "' is not a draws file");
  }
  auto get_u64 = [&buf](std::size_t at) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + static_cast<std::size_t>(b)]))
           << (8 * b);
    }
    return v;
  };
  const std::uint64_t count = get_u64(8);
  if (count > (buf.size() - 16) / 8 || buf.size() != 16 + 8 * count) {
    throw ParseError("'" + path.string() + "': size does not match draw count");
  }
  std::vector<double> out(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint64_t bits = get_u64(16 + 8 * k);
    std::memcpy(&out[k], &bits, sizeof bits);
  }
  return out;
}

std::vector<DgpConfig> StudyConfig::cells() const {
  std::vector<DgpConfig> out;
  for (const auto& [n, d] : sizes) {
    for (double t : theta0) {
      DgpConfig c;
      c.n = n;
      c.d = d;
      c.theta0 = t;
      c.beta0 = beta0;
      c.gamma0 = gamma0;
      c.rho = rho;
      c.seed = seed;
      c.validate();
      out.push_back(c);
    }
  }
  return out;
}

McOptions StudyConfig::mc_options(int jobs) const {
  McOptions o;
  o.methods = methods;
  o.reps = reps;
  o.chain = chain;
  o.chain.seed = seed;
  o.theta_prior = theta_prior;
  o.alpha = alpha;
  o.jobs = jobs;
  o.lasso = lasso;
  return o;
}

json StudyConfig::to_json() const {
  json j;
  json ns = json::array();
  json ds = json::array();
  for (const auto& [n, d] : sizes) {
    ns.push_back(n);
    ds.push_back(d);
  }
  j["dgp"] = {{"n", ns},           {"d", ds},     {"theta0", theta0},
              {"beta0", to_std(beta0)}, {"gamma0", to_std(gamma0)}, {"rho", rho},
              {"seed", seed}};
  j["chain"] = {{"iterations", chain.iterations},
                {"burn_in", chain.burn_in},
                {"thin", chain.thin},
                {"route", route_label(chain.route)},
                {"propensity_first", chain.propensity_first}};
  j["priors"] = {{"lambda", theta_prior.lambda}};
  json names = json::array();
  for (auto m : methods) names.push_back(std::string(method_name(m)));
  j["methods"] = {{"run", names},
                  {"reps", reps},
                  {"alpha", alpha},
                  {"naive_selection", lasso.selection == PenaltySelection::cv ? "cv" : "bic"},
                  {"lasso_grid_size", lasso.grid_size},
                  {"lasso_min_ratio", lasso.min_ratio},
                  {"cv_folds", lasso.folds}};
  json fmts = json::array();
  for (auto f : formats) fmts.push_back(f == ReportFormat::csv ? "csv" : "jsonl");
  j["output"] = {{"formats", fmts}, {"replicates", replicates}};
  return j;
}

std::string StudyConfig::digest() const { return fnv1a_hex(to_json().dump()); }

StudyConfig parse_study_config(const json& j) {
  StudyConfig c;
  check_keys(j, "config", {"dgp", "chain", "priors", "methods", "output"});

  if (j.contains("dgp")) {
    const json& g = j["dgp"];
    check_keys(g, "dgp", {"n", "d", "theta0", "beta0", "gamma0", "rho", "seed"});
    auto as_list = [&](const char* key, std::vector<long> fallback) {
      if (!g.contains(key)) return fallback;
      try {
        return g[key].is_array() ? g[key].get<std::vector<long>>() : std::vector<long>{g[key].get<long>()};
      } catch (const json::exception& e) {
        throw ConfigError(std::string("'dgp.") + key + "': " + e.what());
      }
    };
    const auto ns = as_list("n", {400});
    const auto ds = as_list("d", {500});
    if (ns.size() != ds.size()) throw ConfigError("dgp.n and dgp.d must have the same length");
    c.sizes.clear();
    for (std::size_t k = 0; k < ns.size(); ++k) c.sizes.emplace_back(ns[k], ds[k]);
    if (g.contains("theta0")) {
      try {
        c.theta0 = g["theta0"].is_array() ? g["theta0"].get<std::vector<double>>()
                                          : std::vector<double>{g["theta0"].get<double>()};
      } catch (const json::exception& e) {
        throw ConfigError(std::string("'dgp.theta0': ") + e.what());
      }
      if (c.theta0.empty()) throw ConfigError("dgp.theta0 must not be empty");
    }
    c.beta0 = to_vector(get_or(g, "beta0", to_std(c.beta0), "dgp"));
    c.gamma0 = to_vector(get_or(g, "gamma0", to_std(c.gamma0), "dgp"));
    c.rho = get_or(g, "rho", c.rho, "dgp");
    c.seed = get_or<std::uint64_t>(g, "seed", c.seed, "dgp");
  }
  if (j.contains("chain")) {
    const json& ch = j["chain"];
    check_keys(ch, "chain", {"iterations", "burn_in", "thin", "route", "propensity_first"});
    c.chain.iterations = get_or(ch, "iterations", c.chain.iterations, "chain");
    c.chain.burn_in = get_or(ch, "burn_in", c.chain.burn_in, "chain");
    c.chain.thin = get_or(ch, "thin", c.chain.thin, "chain");
    c.chain.route = parse_route(get_or<std::string>(ch, "route", "automatic", "chain"));
    c.chain.propensity_first = get_or(ch, "propensity_first", c.chain.propensity_first, "chain");
  }
  if (j.contains("priors")) {
    const json& p = j["priors"];
    check_keys(p, "priors", {"lambda"});
    c.theta_prior.lambda = get_or(p, "lambda", c.theta_prior.lambda, "priors");
  }
  if (j.contains("methods")) {
    const json& m = j["methods"];
    check_keys(m, "methods", {"run", "reps", "alpha", "naive_selection", "lasso_grid_size",
                              "lasso_min_ratio", "cv_folds"});
    if (m.contains("run")) {
      c.methods.clear();
      for (const auto& name : get_or<std::vector<std::string>>(m, "run", {}, "methods")) {
        c.methods.push_back(parse_method(name));
      }
      if (c.methods.empty()) throw ConfigError("methods.run must not be empty");
    }
    c.reps = get_or(m, "reps", c.reps, "methods");
    c.alpha = get_or(m, "alpha", c.alpha, "methods");
    const auto sel = get_or<std::string>(m, "naive_selection", "bic", "methods");
    if (sel == "bic") {
      c.lasso.selection = PenaltySelection::bic;
    } else if (sel == "cv") {
      c.lasso.selection = PenaltySelection::cv;
    } else {
      throw ConfigError("methods.naive_selection must be 'bic' or 'cv'");
    }
    c.lasso.grid_size = get_or(m, "lasso_grid_size", c.lasso.grid_size, "methods");
    c.lasso.min_ratio = get_or(m, "lasso_min_ratio", c.lasso.min_ratio, "methods");
    c.lasso.folds = get_or(m, "cv_folds", c.lasso.folds, "methods");
  }
  if (j.contains("output")) {
    const json& o = j["output"];
    check_keys(o, "output", {"formats", "replicates"});
    if (o.contains("formats")) {
      c.formats.clear();
      for (const auto& f : get_or<std::vector<std::string>>(o, "formats", {}, "output")) {
        c.formats.push_back(parse_report_format(f));
      }
    }
    c.replicates = get_or(o, "replicates", c.replicates, "output");
  }

  if (c.reps < 1) throw ConfigError("methods.reps must be at least 1");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("methods.alpha must lie in (0, 1)");
  if (c.lasso.grid_size < 1) throw ConfigError("methods.lasso_grid_size must be at least 1");
  if (c.lasso.folds < 2) throw ConfigError("methods.cv_folds must be at least 2");
  try {
    c.chain.validate();
    c.theta_prior.validate();
    (void)c.cells();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

StudyConfig load_study_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path.string() + "': " + e.what());
  }
  return parse_study_config(j);
}

void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    std::uint64_t seed, const std::string& digest, const json& settings) {
  const json m = {{"version", version()},
                  {"command", command},
                  {"seed", seed},
                  {"config_digest", digest},
                  {"settings", settings}};
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

std::string version() { return ORTHOBAYES_VERSION; }

}  // namespace orthobayes
