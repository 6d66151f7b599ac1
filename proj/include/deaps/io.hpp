#pragma once

// On-disk formats shared by the data generator, the preprocessing pipeline
// and the evaluation tools:
//   <record>.f32   raw samples, 32-bit little-endian IEEE floats
//   <record>.json  sidecar with subject_id, record_id, fs, n_samples (+ labels)
//   manifest.csv   subject_id,record_id,path,duration_s (path relative to the
//                  manifest's directory)

#include "deaps/core.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace deaps::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "raw record files are written in host byte order");

inline void write_f32(const fs::path& path, const std::vector<float>& samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(samples.data()),
            static_cast<std::streamsize>(samples.size() * sizeof(float)));
  if (!out) throw RuntimeError("write failed: " + path.string());
}

inline std::vector<float> read_f32(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open: " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % sizeof(float) != 0)
    throw RuntimeError("truncated float file: " + path.string());
  in.seekg(0, std::ios::beg);
  std::vector<float> samples(bytes / sizeof(float));
  in.read(reinterpret_cast<char*>(samples.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw RuntimeError("read failed: " + path.string());
  return samples;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw RuntimeError("write failed: " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw RuntimeError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

/// Splits one CSV line on commas. Fields in this project never contain commas
/// or quotes, so no quoting rules are applied.
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct ManifestEntry {
  int subject_id = 0;
  int record_id = 0;
  std::string path;  // relative to the manifest directory, without extension
  double duration_s = 0.0;
};

struct Manifest {
  fs::path root;  // directory holding manifest.csv
  std::vector<ManifestEntry> entries;

  fs::path samples_path(const ManifestEntry& e) const { return root / (e.path + ".f32"); }
  fs::path meta_path(const ManifestEntry& e) const { return root / (e.path + ".json"); }
};

inline std::string manifest_csv(const Manifest& m) {
  std::ostringstream out;
  out << "subject_id,record_id,path,duration_s\n";
  for (const auto& e : m.entries) {
    out << e.subject_id << ',' << e.record_id << ',' << e.path << ',' << e.duration_s << '\n';
  }
  return out.str();
}

inline void write_manifest(const Manifest& m) {
  fs::create_directories(m.root);
  write_text(m.root / "manifest.csv", manifest_csv(m));
}

/// Accepts either the manifest file itself or the directory containing it.
inline Manifest read_manifest(const fs::path& where) {
  const fs::path file = fs::is_directory(where) ? where / "manifest.csv" : where;
  std::ifstream in(file);
  if (!in) throw RuntimeError("cannot open manifest: " + file.string());
  Manifest m;
  m.root = file.parent_path();
  std::string line;
  if (!std::getline(in, line) || line.rfind("subject_id,record_id,path,duration_s", 0) != 0)
    throw RuntimeError("manifest header mismatch in " + file.string());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 4) throw RuntimeError("bad manifest row: " + line);
    m.entries.push_back({std::stoi(f[0]), std::stoi(f[1]), f[2], std::stod(f[3])});
  }
  return m;
}

}  // namespace deaps::io
