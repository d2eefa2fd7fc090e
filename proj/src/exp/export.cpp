#include <openssl/evp.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>

#include "json.hpp"
#include "qctrl/experiment.hpp"

namespace qctrl::exp {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kHeader = "x,I,Q,mag,phase";

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing: " + std::strerror(errno));
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw Error("write to " + path.string() + " failed");
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + ": " + std::strerror(errno));
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream s(line);
  while (std::getline(s, cur, sep)) out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE) throw Error(where + ": bad number '" + s + "'");
  return v;
}

std::string shots_csv(const ResultSet& r) {
  std::string out = "point,shot,I,Q\n";
  for (std::size_t p = 0; p < r.shots.size(); ++p) {
    for (std::size_t s = 0; s < r.shots[p].size(); ++s) {
      out += std::to_string(p) + "," + std::to_string(s) + "," + g17(r.shots[p][s].real()) + "," +
             g17(r.shots[p][s].imag()) + "\n";
    }
  }
  return out;
}

json fit_json(const fit::FitResult& f) {
  return {{"model", f.model},         {"names", f.names},         {"params", f.params},
          {"errors", f.errors},       {"residual_norm", f.residual_norm}, {"converged", f.converged},
          {"evaluations", f.evaluations}, {"status", f.status}};
}

fit::FitResult fit_from(const json& j) {
  fit::FitResult f;
  f.model = j.at("model").get<std::string>();
  f.names = j.at("names").get<std::vector<std::string>>();
  f.params = j.at("params").get<std::vector<double>>();
  f.errors = j.at("errors").get<std::vector<double>>();
  f.residual_norm = j.at("residual_norm").get<double>();
  f.converged = j.at("converged").get<bool>();
  f.evaluations = j.at("evaluations").get<int>();
  f.status = j.at("status").get<std::string>();
  return f;
}

}  // namespace

std::string git_blob_sha1(std::string_view data) {
  const std::string head = "blob " + std::to_string(data.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) &&
                  EVP_DigestUpdate(ctx, head.data(), head.size()) &&
                  EVP_DigestUpdate(ctx, data.data(), data.size()) && EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("SHA-1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char b : std::span<const unsigned char>(md, len)) {
    out += hex[b >> 4];
    out += hex[b & 15];
  }
  return out;
}

std::string results_csv(const ResultSet& r) {
  if (r.i.size() != r.x.size() || r.q.size() != r.x.size()) throw Error("result set columns differ in length");
  std::string out = std::string(kHeader) + "\n";
  for (std::size_t k = 0; k < r.x.size(); ++k) {
    out += g17(r.x[k]) + "," + g17(r.i[k]) + "," + g17(r.q[k]) + "," + g17(std::hypot(r.i[k], r.q[k])) + "," +
           g17(std::atan2(r.q[k], r.i[k])) + "\n";
  }
  return out;
}

void export_results(const ResultSet& r, const std::string& dir) {
  const fs::path d(dir);
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw Error("cannot create " + d.string() + ": " + ec.message());
  const auto data = results_csv(r);
  write_file(d / "data.csv", data);
  json m;
  m["kind"] = std::string(kind_name(r.kind));
  m["seed"] = r.seed;
  m["points"] = r.size();
  m["config"] = r.config;
  m["data_file"] = "data.csv";
  m["data_sha1"] = git_blob_sha1(data);
  if (!r.shots.empty()) {
    const auto shots = shots_csv(r);
    write_file(d / "shots.csv", shots);
    m["shots_file"] = "shots.csv";
    m["shots_sha1"] = git_blob_sha1(shots);
  }
  m["underruns"] = r.underruns;
  json fits = json::array();
  for (const auto& f : r.fits) fits.push_back(fit_json(f));
  m["fits"] = fits;
  m["derived"] = r.derived;
  write_file(d / "manifest.json", m.dump(2) + "\n");
}

ResultSet import_results(const std::string& dir) {
  const fs::path d(dir);
  const auto mpath = d / "manifest.json";
  json m;
  try {
    m = json::parse(read_file(mpath));
  } catch (const json::exception& e) {
    throw Error(mpath.string() + ": " + e.what());
  }
  ResultSet r;
  try {
    const auto kind = parse_kind(m.at("kind").get<std::string>());
    if (!kind) throw Error(mpath.string() + ": unknown kind");
    r.kind = *kind;
    r.seed = m.at("seed").get<std::uint64_t>();
    r.config = m.at("config").get<std::map<std::string, std::string>>();
    r.underruns = m.at("underruns").get<std::uint64_t>();
    for (const auto& f : m.at("fits")) r.fits.push_back(fit_from(f));
    r.derived = m.at("derived").get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    throw Error(mpath.string() + ": " + e.what());
  }

  const auto dpath = d / m.value("data_file", std::string("data.csv"));
  const auto data = read_file(dpath);
  if (git_blob_sha1(data) != m.value("data_sha1", std::string())) {
    throw Error(dpath.string() + ": content hash does not match the manifest");
  }
  std::istringstream s(data);
  std::string line;
  if (!std::getline(s, line) || line != kHeader) throw Error(dpath.string() + ": expected header '" + kHeader + "'");
  int n = 1;
  while (std::getline(s, line)) {
    ++n;
    const auto cols = split(line, ',');
    const auto where = dpath.string() + ":" + std::to_string(n);
    if (cols.size() != 5) throw Error(where + ": expected 5 columns");
    r.x.push_back(parse_double(cols[0], where));
    r.i.push_back(parse_double(cols[1], where));
    r.q.push_back(parse_double(cols[2], where));
  }
  if (m.contains("shots_file")) {
    const auto spath = d / m["shots_file"].get<std::string>();
    const auto shots = read_file(spath);
    if (git_blob_sha1(shots) != m.value("shots_sha1", std::string())) {
      throw Error(spath.string() + ": content hash does not match the manifest");
    }
    std::istringstream ss(shots);
    std::getline(ss, line);
    n = 1;
    while (std::getline(ss, line)) {
      ++n;
      const auto cols = split(line, ',');
      const auto where = spath.string() + ":" + std::to_string(n);
      if (cols.size() != 4) throw Error(where + ": expected 4 columns");
      const auto p = static_cast<std::size_t>(parse_double(cols[0], where));
      if (p >= r.shots.size()) r.shots.resize(p + 1);
      r.shots[p].emplace_back(parse_double(cols[2], where), parse_double(cols[3], where));
    }
  }
  return r;
}

}  // namespace qctrl::exp
