#pragma once

// Dataset manifests: one CSV row per distorted cloud, identified by the
// (content_id, distortion_id, level) triple. mos is optional; rows without
// it are usable only for pre-training.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "copa/errors.hpp"

namespace copa {

struct ManifestEntry {
  std::string path;
  int content_id = 0;
  int distortion_id = 0;
  int level = 0;
  std::optional<double> mos;

  std::tuple<int, int, int> triple() const { return {content_id, distortion_id, level}; }
  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  bool operator==(const DatasetManifest&) const = default;

  std::vector<int> content_ids() const {
    std::set<int> ids;
    for (const auto& e : entries) ids.insert(e.content_id);
    return {ids.begin(), ids.end()};
  }

  // Entries grouped by content, in file order within each group.
  std::map<int, std::vector<const ManifestEntry*>> by_content() const {
    std::map<int, std::vector<const ManifestEntry*>> groups;
    for (const auto& e : entries) groups[e.content_id].push_back(&e);
    return groups;
  }

  bool all_have_mos() const {
    for (const auto& e : entries)
      if (!e.mos) return false;
    return !entries.empty();
  }
};

inline void validate(const DatasetManifest& manifest) {
  std::set<std::tuple<int, int, int>> seen;
  for (const auto& e : manifest.entries) {
    if (!seen.insert(e.triple()).second) {
      std::ostringstream msg;
      msg << "manifest: duplicate (content_id,distortion_id,level) triple (" << e.content_id
          << "," << e.distortion_id << "," << e.level << ")";
      throw ValidationError(msg.str());
    }
    if (e.mos && !std::isfinite(*e.mos))
      throw ValidationError("manifest: non-finite mos for " + e.path);
  }
}

inline constexpr const char* kManifestHeader = "path,content_id,distortion_id,level,mos";

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_manifest: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("load_manifest: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader)
    throw FormatError("load_manifest: bad header \"" + line + "\", expected \"" +
                      kManifestHeader + "\"");

  DatasetManifest manifest;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.push_back("");
    if (fields.size() != 5)
      throw FormatError("load_manifest: line " + std::to_string(line_no) + " has " +
                        std::to_string(fields.size()) + " fields, expected 5");
    ManifestEntry e;
    e.path = fields[0];
    auto parse_int = [&](const std::string& s, const char* what) {
      try {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
      } catch (const std::exception&) {
        throw FormatError("load_manifest: line " + std::to_string(line_no) +
                          ": non-numeric " + what + " \"" + s + "\"");
      }
    };
    e.content_id = parse_int(fields[1], "content_id");
    e.distortion_id = parse_int(fields[2], "distortion_id");
    e.level = parse_int(fields[3], "level");
    if (!fields[4].empty()) {
      try {
        std::size_t pos = 0;
        e.mos = std::stod(fields[4], &pos);
        if (pos != fields[4].size()) throw std::invalid_argument(fields[4]);
      } catch (const std::exception&) {
        throw FormatError("load_manifest: line " + std::to_string(line_no) +
                          ": non-numeric mos \"" + fields[4] + "\"");
      }
    }
    manifest.entries.push_back(std::move(e));
  }
  validate(manifest);
  return manifest;
}

inline void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  validate(manifest);
  std::ofstream out(path);
  if (!out) throw IoError("write_manifest: cannot open " + path + " for writing");
  out << kManifestHeader << '\n' << std::setprecision(17);
  for (const auto& e : manifest.entries) {
    if (e.path.find(',') != std::string::npos)
      throw FormatError("write_manifest: path contains a comma: " + e.path);
    out << e.path << ',' << e.content_id << ',' << e.distortion_id << ',' << e.level << ',';
    if (e.mos) out << *e.mos;
    out << '\n';
  }
  if (!out) throw IoError("write_manifest: write failed for " + path);
}

}  // namespace copa
