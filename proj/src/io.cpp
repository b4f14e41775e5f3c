#include "metavrft/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "metavrft/errors.hpp"

namespace metavrft {
namespace fs = std::filesystem;
namespace {

std::vector<double> to_vector(const Json& j, const char* field) {
  if (!j.contains(field) || !j[field].is_array()) {
    throw IoError(std::string("missing array field '") + field + "'");
  }
  return j[field].get<std::vector<double>>();
}

double parse_number(const std::string& s) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && *begin == ' ') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw IoError("malformed number '" + s + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

std::string format_number(double x) {
  if (!std::isfinite(x)) return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_json(const fs::path& path, const Json& j) {
  write_text(path, j.dump(2) + "\n");
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw IoError("invalid JSON in '" + path.string() + "': " + e.what());
  }
}

Json tf_to_json(const TransferFunction& tf) {
  return Json{{"num", tf.num()}, {"den", tf.den()}, {"ts", tf.ts()}};
}

TransferFunction tf_from_json(const Json& j) {
  return TransferFunction(to_vector(j, "num"), to_vector(j, "den"),
                          j.value("ts", 1.0));
}

Json controller_to_json(const ControllerParams& c) {
  return Json{{"basis", c.basis}, {"theta", c.theta}, {"ts", c.ts}};
}

ControllerParams controller_from_json(const Json& j) {
  ControllerParams c;
  c.basis = j.value("basis", std::string("pi"));
  c.theta = to_vector(j, "theta");
  c.ts = j.value("ts", 1.0);
  if (c.theta.size() != basis_by_name(c.basis, c.ts).size()) {
    throw IoError("controller theta length does not match basis '" + c.basis + "'");
  }
  return c;
}

Json dataset_meta_json(const Dataset& d) {
  Json j{{"ts", d.ts},
         {"noise_std", d.noise_std},
         {"seed", d.seed},
         {"kind", d.kind == DatasetKind::kOpenLoop ? "open_loop" : "closed_loop"},
         {"samples", d.size()}};
  if (d.kind == DatasetKind::kClosedLoop) j["unstable"] = d.unstable;
  return j;
}

void write_dataset(const fs::path& csv_path, const Dataset& d) {
  d.validate();
  const bool closed = d.kind == DatasetKind::kClosedLoop;
  std::string text = closed ? "t,u,y,r\n" : "t,u,y\n";
  for (std::size_t t = 0; t < d.size(); ++t) {
    text += std::to_string(t) + "," + format_number(d.u[t]) + "," + format_number(d.y[t]);
    if (closed) text += "," + format_number(d.reference[t]);
    text += "\n";
  }
  write_text(csv_path, text);
  fs::path side = csv_path;
  side.replace_extension(".json");
  write_json(side, dataset_meta_json(d));
}

Dataset read_dataset(const fs::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot read '" + csv_path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  const bool has_r = header.size() == 4 && header[3] == "r";
  if (header.size() < 3 || header[0] != "t" || header[1] != "u" || header[2] != "y" ||
      (header.size() == 4 && !has_r) || header.size() > 4) {
    throw IoError("dataset header must be t,u,y[,r]");
  }
  Dataset d;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) throw IoError("ragged dataset row");
    d.u.push_back(parse_number(f[1]));
    d.y.push_back(parse_number(f[2]));
    if (has_r) d.reference.push_back(parse_number(f[3]));
  }
  fs::path side = csv_path;
  side.replace_extension(".json");
  if (fs::exists(side)) {
    const Json j = read_json(side);
    d.ts = j.value("ts", 1.0);
    d.noise_std = j.value("noise_std", 0.0);
    d.seed = j.value("seed", std::uint64_t{0});
    d.kind = j.value("kind", std::string("open_loop")) == "closed_loop"
                 ? DatasetKind::kClosedLoop
                 : DatasetKind::kOpenLoop;
    d.unstable = j.value("unstable", false);
  } else {
    d.kind = has_r ? DatasetKind::kClosedLoop : DatasetKind::kOpenLoop;
  }
  try {
    d.validate();
  } catch (const UsageError& e) {
    throw IoError(std::string("invalid dataset: ") + e.what());
  }
  return d;
}

void write_meta_dataset(const fs::path& dir, const MetaDataset& meta) {
  Json index{{"n", meta.size()}, {"entries", Json::array()}};
  for (std::size_t k = 0; k < meta.size(); ++k) {
    const auto& e = meta.entries[k];
    const std::string id = std::to_string(k);
    const fs::path ctrl = fs::path("controllers") / ("c" + id + ".json");
    const fs::path open = fs::path("datasets") / ("open" + id + ".csv");
    const fs::path closed = fs::path("datasets") / ("closed" + id + ".csv");
    write_json(dir / ctrl, controller_to_json(e.controller));
    write_dataset(dir / open, e.open_loop);
    write_dataset(dir / closed, e.closed_loop);
    index["entries"].push_back(Json{{"controller", ctrl.generic_string()},
                                    {"open_loop", open.generic_string()},
                                    {"closed_loop", closed.generic_string()},
                                    {"delta_k", e.delta_k}});
  }
  write_json(dir / "meta.json", index);
}

MetaDataset read_meta_dataset(const fs::path& dir) {
  const Json index = read_json(dir / "meta.json");
  if (!index.contains("entries") || !index["entries"].is_array()) {
    throw IoError("meta.json lacks an entries array");
  }
  MetaDataset meta;
  for (const auto& e : index["entries"]) {
    MetaEntry entry;
    entry.controller = controller_from_json(read_json(dir / e.at("controller").get<std::string>()));
    entry.open_loop = read_dataset(dir / e.at("open_loop").get<std::string>());
    entry.closed_loop = read_dataset(dir / e.at("closed_loop").get<std::string>());
    entry.delta_k = e.value("delta_k", 0.5);
    meta.entries.push_back(std::move(entry));
  }
  return meta;
}

Json solution_to_json(const MetaSolution& sol) {
  Json timings = Json::object();
  for (const auto& [k, v] : sol.report.timings_ms) timings[k] = v;
  Json j{{"alpha", sol.alpha},
         {"objective", sol.report.objective},
         {"ell", sol.report.ell},
         {"active_constraints", sol.report.active_constraints},
         {"kkt_stationarity", sol.report.kkt_stationarity},
         {"primal_infeasibility", sol.report.primal_infeasibility},
         {"timings_ms", timings}};
  if (std::isfinite(sol.report.delta_hat)) {
    j["delta_hat"] = sol.report.delta_hat;
  } else {
    j["delta_hat"] = nullptr;
  }
  return j;
}

void write_spectral_diagnostic(const fs::path& csv_path,
                               const StabilityModel& model,
                               const Eigen::VectorXd& alpha) {
  const Eigen::VectorXcd z = model.b + model.A * alpha.cast<Complex>();
  std::string text = "omega,abs_phi_ue,phi_u\n";
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    text += format_number(model.grid.frequency(i)) + "," + format_number(std::abs(z(i))) +
            "," + format_number(model.phi_u(i)) + "\n";
  }
  write_text(csv_path, text);
}

}  // namespace metavrft
