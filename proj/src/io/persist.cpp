// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "catkd/io/persist.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "catkd/error.hpp"

namespace fs = std::filesystem;

namespace catkd::io {

namespace {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Commas and newlines inside free-text fields would break the row structure;
// diagnostics are for humans, so flatten them.
std::string sanitize_note(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ' ';
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::Schema, what);
}

}  // namespace

void atomic_write(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open '" + tmp.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) fail(ErrorKind::Io, "short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::Io, "rename '" + tmp.string() + "' -> '" + path.string() +
                                  "': " + ec.message());
}

// ------------------------------------------------------------ checkpoints --

namespace {
constexpr char kCkptMagic[4] = {'C', 'K', 'P', 'D'};
constexpr std::uint32_t kCkptVersion = 1;
}  // namespace

void save_model(const fs::path& path, nn::Model& model) {
  const nn::BackboneSpec& spec = model.spec();
  json header{{"schema_version", kCkptVersion},
              {"family", spec.family},
              {"depth", spec.depth},
              {"width", spec.width},
              {"in_channels", spec.in_channels},
              {"in_h", spec.in_h},
              {"in_w", spec.in_w},
              {"categories", model.num_categories()},
              {"head_bias", model.head().bias.has_value()},
              {"producer", model.producer()}};
  json params = json::array();
  for (const auto& p : model.params())
    params.push_back({{"name", p.name}, {"size", p.value->size()}});
  json buffers = json::array();
  for (const auto& b : model.buffers())
    buffers.push_back({{"name", b.name}, {"size", b.value->size()}});
  header["params"] = params;
  header["buffers"] = buffers;

  const std::string head_text = header.dump();
  std::string blob;
  blob.reserve(head_text.size() + 1024);
  blob.append(kCkptMagic, sizeof(kCkptMagic));
  const std::uint32_t version = kCkptVersion;
  const std::uint32_t head_len = static_cast<std::uint32_t>(head_text.size());
  blob.append(reinterpret_cast<const char*>(&version), sizeof(version));
  blob.append(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
  blob.append(head_text);
  for (const auto& p : model.params())
    blob.append(reinterpret_cast<const char*>(p.value->data()),
                p.value->size() * sizeof(float));
  for (const auto& b : model.buffers())
    blob.append(reinterpret_cast<const char*>(b.value->data()),
                b.value->size() * sizeof(float));
  atomic_write(path, blob);
}

nn::Model load_model(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "checkpoint '" + path.string() + "' not readable");

  char magic[4];
  std::uint32_t version = 0, head_len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
  if (!in || std::memcmp(magic, kCkptMagic, sizeof(kCkptMagic)) != 0)
    fail(ErrorKind::Schema, "checkpoint '" + path.string() + "': bad magic");
  if (version != kCkptVersion)
    fail(ErrorKind::Schema, "checkpoint '" + path.string() + "': unsupported version " +
                                std::to_string(version));

  std::string head_text(head_len, '\0');
  in.read(head_text.data(), head_len);
  if (!in) fail(ErrorKind::Io, "checkpoint '" + path.string() + "': truncated header");
  json header;
  try {
    header = json::parse(head_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Schema, "checkpoint '" + path.string() + "': " + e.what());
  }

  nn::BackboneSpec spec;
  spec.family = header.at("family").get<std::string>();
  spec.depth = header.at("depth").get<int>();
  spec.width = header.at("width").get<int>();
  spec.in_channels = header.at("in_channels").get<int>();
  spec.in_h = header.at("in_h").get<int>();
  spec.in_w = header.at("in_w").get<int>();
  const int categories = header.at("categories").get<int>();
  const bool head_bias = header.at("head_bias").get<bool>();

  Rng rng(0);  // initialization is immediately overwritten by the payload
  nn::Model model(spec, categories, head_bias, rng);
  model.set_producer(header.at("producer").get<std::string>());

  auto fill = [&](const json& index, auto refs, const char* what) {
    require(index.size() == refs.size(),
            "checkpoint '" + path.string() + "': " + what + " count mismatch");
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const std::string name = index[i].at("name").get<std::string>();
      const std::size_t size = index[i].at("size").get<std::size_t>();
      require(name == refs[i].name && size == refs[i].value->size(),
              "checkpoint '" + path.string() + "': " + what + " '" + name +
                  "' does not match model layout");
      in.read(reinterpret_cast<char*>(refs[i].value->data()),
              static_cast<std::streamsize>(size * sizeof(float)));
      if (!in) fail(ErrorKind::Io, "checkpoint '" + path.string() + "': truncated payload");
    }
  };
  fill(header.at("params"), model.params(), "parameter");
  fill(header.at("buffers"), model.buffers(), "buffer");
  return model;
}

// ---------------------------------------------------------- metric tables --

void write_metrics_csv(const fs::path& path, const std::string& run_id,
                       const std::vector<trainer::MetricRecord>& records) {
  std::ostringstream out;
  out << "schema_version,run_id,epoch,split,ce,cat,kd,total,accuracy,seconds\n";
  for (const auto& r : records) {
    out << kTableSchemaVersion << ',' << run_id << ',' << r.epoch << ',' << r.split << ','
        << format_double(r.ce) << ',' << format_double(r.cat) << ',' << format_double(r.kd)
        << ',' << format_double(r.total) << ',' << format_double(r.accuracy) << ','
        << format_double(r.seconds) << '\n';
  }
  atomic_write(path, out.str());
}

std::vector<trainer::MetricRecord> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "metrics table '" + path.string() + "' not readable");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)),
          "metrics table '" + path.string() + "': empty file");
  require(line == "schema_version,run_id,epoch,split,ce,cat,kd,total,accuracy,seconds",
          "metrics table '" + path.string() + "': unknown header '" + line + "'");

  std::vector<trainer::MetricRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    require(f.size() == 10, "metrics table '" + path.string() + "': malformed row '" + line + "'");
    require(std::stoi(f[0]) == kTableSchemaVersion,
            "metrics table '" + path.string() + "': schema_version " + f[0] + " unsupported");
    trainer::MetricRecord r;
    r.epoch = std::stoi(f[2]);
    r.split = f[3];
    r.ce = std::stod(f[4]);
    r.cat = std::stod(f[5]);
    r.kd = std::stod(f[6]);
    r.total = std::stod(f[7]);
    r.accuracy = std::stod(f[8]);
    r.seconds = std::stod(f[9]);
    records.push_back(r);
  }
  return records;
}

// ---------------------------------------------------------- result tables --

void write_result_csv(const fs::path& path, const ResultTable& table) {
  std::ostringstream out;
  out << "schema_version,schema_id,cell,config_hash,seed,row_kind";
  for (const auto& c : table.columns) out << ',' << c;
  out << ",note\n";
  for (const auto& r : table.rows) {
    if (r.values.size() != table.columns.size())
      fail(ErrorKind::Schema, "result table '" + table.schema_id + "': row '" + r.cell +
                                  "' has " + std::to_string(r.values.size()) + " values for " +
                                  std::to_string(table.columns.size()) + " columns");
    out << kTableSchemaVersion << ',' << table.schema_id << ',' << r.cell << ','
        << r.config_hash << ',' << r.seed << ',' << r.row_kind;
    for (double v : r.values) out << ',' << format_double(v);
    out << ',' << sanitize_note(r.note) << '\n';
  }
  atomic_write(path, out.str());
}

ResultTable read_result_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "result table '" + path.string() + "' not readable");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)),
          "result table '" + path.string() + "': empty file");
  auto header = split_csv_line(line);
  require(header.size() >= 7 && header[0] == "schema_version" && header[1] == "schema_id" &&
              header[2] == "cell" && header[3] == "config_hash" && header[4] == "seed" &&
              header[5] == "row_kind" && header.back() == "note",
          "result table '" + path.string() + "': unknown header '" + line + "'");

  ResultTable table;
  table.columns.assign(header.begin() + 6, header.end() - 1);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    require(f.size() == header.size(),
            "result table '" + path.string() + "': malformed row '" + line + "'");
    require(std::stoi(f[0]) == kTableSchemaVersion,
            "result table '" + path.string() + "': schema_version " + f[0] + " unsupported");
    if (table.schema_id.empty()) table.schema_id = f[1];
    ResultRow row;
    row.cell = f[2];
    row.config_hash = f[3];
    row.seed = f[4];
    row.row_kind = f[5];
    for (std::size_t i = 6; i + 1 < f.size(); ++i) row.values.push_back(std::stod(f[i]));
    row.note = f.back();
    table.rows.push_back(std::move(row));
  }
  return table;
}

// -------------------------------------------------------------- CAM dumps --

namespace {

std::string npy_header(int n, int c, int h, int w) {
  std::ostringstream dict;
  dict << "{'descr': '<f4', 'fortran_order': False, 'shape': (" << n << ", " << c << ", " << h
       << ", " << w << "), }";
  std::string d = dict.str();
  // magic(6) + version(2) + header_len(2) + header must be 64-byte aligned.
  const std::size_t unpadded = 10 + d.size() + 1;
  const std::size_t pad = (64 - unpadded % 64) % 64;
  d.append(pad, ' ');
  d.push_back('\n');
  return d;
}

}  // namespace

void save_cam_stack(const fs::path& path, const cam::CamStack& stack) {
  if (stack.empty()) fail(ErrorKind::InputShape, "save_cam_stack: empty stack");
  const auto& t = stack.maps;
  std::string blob;
  blob.append("\x93NUMPY", 6);
  blob.push_back('\x01');
  blob.push_back('\x00');
  const std::string header = npy_header(t.n(), t.c(), t.h(), t.w());
  const std::uint16_t hlen = static_cast<std::uint16_t>(header.size());
  blob.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  blob.append(header);
  blob.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
  atomic_write(path, blob);

  json sidecar{{"schema_version", kTableSchemaVersion},
               {"producer", stack.producer},
               {"provenance", stack.provenance()},
               {"shape", {t.n(), t.c(), t.h(), t.w()}}};
  atomic_write(path.string() + ".json", sidecar.dump(2) + "\n");
}

Tensor load_npy(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "array file '" + path.string() + "' not readable");
  char magic[6];
  in.read(magic, 6);
  require(in && std::memcmp(magic, "\x93NUMPY", 6) == 0,
          "array file '" + path.string() + "': bad magic");
  char ver[2];
  in.read(ver, 2);
  std::uint16_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  require(static_cast<bool>(in), "array file '" + path.string() + "': truncated header");
  require(header.find("'<f4'") != std::string::npos,
          "array file '" + path.string() + "': only little-endian float32 supported");
  require(header.find("False") != std::string::npos,
          "array file '" + path.string() + "': only C-order supported");

  const std::size_t open = header.find('(');
  const std::size_t close = header.find(')');
  require(open != std::string::npos && close != std::string::npos && close > open,
          "array file '" + path.string() + "': no shape tuple");
  std::vector<int> dims;
  std::istringstream shape(header.substr(open + 1, close - open - 1));
  std::string tok;
  while (std::getline(shape, tok, ','))
    if (tok.find_first_not_of(" \t") != std::string::npos) dims.push_back(std::stoi(tok));
  require(dims.size() == 4, "array file '" + path.string() + "': expected a 4-d array");

  Tensor t(dims[0], dims[1], dims[2], dims[3]);
  in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  require(static_cast<bool>(in), "array file '" + path.string() + "': truncated payload");
  return t;
}

// --------------------------------------------------------------- manifest --

fs::path run_dir(const std::string& run_root, const std::string& hash) {
  fs::path dir = fs::path(run_root) / hash;
  fs::create_directories(dir);
  return dir;
}

std::string now_iso8601() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

void write_manifest(const fs::path& dir, const RunManifest& m) {
  json j{{"schema_version", kTableSchemaVersion},
         {"config_hash", m.config_hash},
         {"config", m.config_snapshot},
         {"seeds", m.seeds},
         {"code_version", m.code_version},
         {"started_at", m.started_at},
         {"finished_at", m.finished_at},
         {"status", m.status},
         {"artifacts", m.artifacts}};
  atomic_write(dir / "manifest.json", j.dump(2) + "\n");
}

RunManifest read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) fail(ErrorKind::Io, "manifest '" + (dir / "manifest.json").string() + "' not readable");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Schema, std::string("manifest: ") + e.what());
  }
  RunManifest m;
  m.config_hash = j.at("config_hash").get<std::string>();
  m.config_snapshot = j.at("config");
  m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  m.code_version = j.at("code_version").get<std::string>();
  m.started_at = j.at("started_at").get<std::string>();
  m.finished_at = j.at("finished_at").get<std::string>();
  m.status = j.at("status").get<std::string>();
  m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
  return m;
}

}  // namespace catkd::io
