#include "ttp/dataset.hpp"

#include "binary_io.hpp"
#include "ttp/kv_config.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

namespace ttp {
namespace {

void write_string(detail::ByteWriter& w, const std::string& s, const char* what) {
  if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw DataError(DataErrorCode::InvalidValue, std::string(what) + " longer than 65535 bytes");
  }
  w.u16(static_cast<std::uint16_t>(s.size()));
  w.raw(s);
}

std::string read_string(detail::ByteReader& r, const char* what) {
  const auto n = r.u16(what);
  return r.str(n, what);
}

}  // namespace

bool operator==(const TrajectoryRecord& a, const TrajectoryRecord& b) {
  if (a.id != b.id || a.task_text != b.task_text || a.dataset_tag != b.dataset_tag) return false;
  if (a.goal.size() != b.goal.size() || a.goal != b.goal) return false;
  if (a.visual.rows() != b.visual.rows() || a.visual.cols() != b.visual.cols() ||
      a.visual != b.visual) {
    return false;
  }
  if (a.labels.has_value() != b.labels.has_value()) return false;
  return !a.labels || (a.labels->size() == b.labels->size() && *a.labels == *b.labels);
}

Vec progress_labels(Eigen::Index length) {
  Vec y(length);
  for (Eigen::Index t = 1; t <= length; ++t) {
    y(t - 1) = static_cast<double>(static_cast<float>(static_cast<double>(t) / length));
  }
  return y;
}

Mat fused_frames(const TrajectoryRecord& record) { return fuse_frames(record.visual, record.goal); }

void validate(const TrajectoryRecord& record, std::optional<std::size_t> index) {
  if (record.length() < 1) throw DataError(DataErrorCode::InvalidValue, "empty trajectory", index);
  if (record.goal.size() < 1 || record.visual.cols() != record.goal.size()) {
    throw DataError(DataErrorCode::DimensionMismatch,
                    "visual dimension " + std::to_string(record.visual.cols()) +
                        " != goal dimension " + std::to_string(record.goal.size()),
                    index);
  }
  if (!record.goal.allFinite() || !record.visual.allFinite()) {
    throw DataError(DataErrorCode::InvalidValue, "non-finite embedding", index);
  }
  if (record.labels) {
    const Vec& y = *record.labels;
    if (y.size() != record.length()) {
      throw DataError(DataErrorCode::DimensionMismatch, "label count differs from T", index);
    }
    for (Eigen::Index t = 0; t < y.size(); ++t) {
      if (!std::isfinite(y(t)) || y(t) <= 0.0 || y(t) > 1.0 || (t > 0 && y(t) <= y(t - 1))) {
        throw DataError(DataErrorCode::InvalidValue, "labels must increase strictly within (0, 1]",
                        index);
      }
    }
    if (y(y.size() - 1) != 1.0) {
      throw DataError(DataErrorCode::InvalidValue, "final label must be 1", index);
    }
  }
}

std::vector<std::uint8_t> encode_container(std::span<const TrajectoryRecord> records) {
  const std::uint32_t d = records.empty() ? 0 : static_cast<std::uint32_t>(records[0].encoder_dim());
  detail::ByteWriter w;
  w.raw("TTPE");
  w.u32(kContainerVersion);
  w.u32(d);
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    validate(rec, i);
    if (static_cast<std::uint32_t>(rec.encoder_dim()) != d) {
      throw DataError(DataErrorCode::DimensionMismatch, "records disagree on d", i);
    }
    write_string(w, rec.id, "id");
    write_string(w, rec.task_text, "task_text");
    write_string(w, rec.dataset_tag, "dataset_tag");
    w.u32(static_cast<std::uint32_t>(rec.length()));
    w.u8(rec.labels ? 1 : 0);
    for (Eigen::Index k = 0; k < rec.goal.size(); ++k) w.f32(static_cast<float>(rec.goal(k)));
    for (Eigen::Index t = 0; t < rec.visual.rows(); ++t) {
      for (Eigen::Index k = 0; k < rec.visual.cols(); ++k) w.f32(static_cast<float>(rec.visual(t, k)));
    }
    if (rec.labels) {
      for (Eigen::Index t = 0; t < rec.labels->size(); ++t) w.f32(static_cast<float>((*rec.labels)(t)));
    }
  }
  return w.bytes();
}

std::vector<TrajectoryRecord> decode_container(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.remaining() < 4 || r.str(4, "magic") != "TTPE") {
    throw DataError(DataErrorCode::BadMagic, "not a TTPE container");
  }
  const auto version = r.u32("version");
  if (version != kContainerVersion) {
    throw DataError(DataErrorCode::UnsupportedVersion, "container version " + std::to_string(version));
  }
  const auto d = r.u32("d");
  const auto count = r.u32("record count");
  if (count > 0 && d == 0) throw DataError(DataErrorCode::DimensionMismatch, "d = 0 with records present");

  std::vector<TrajectoryRecord> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    r.record = i;
    TrajectoryRecord rec;
    rec.id = read_string(r, "id");
    rec.task_text = read_string(r, "task_text");
    rec.dataset_tag = read_string(r, "dataset_tag");
    const auto length = r.u32("T");
    const auto has_labels = r.u8("has_labels");
    if (length == 0) throw DataError(DataErrorCode::InvalidValue, "T = 0", i);
    if (has_labels > 1) throw DataError(DataErrorCode::InvalidValue, "has_labels flag not 0/1", i);
    // Size check before allocating so a corrupt T cannot request huge buffers.
    const std::uint64_t floats = static_cast<std::uint64_t>(d) * (1 + static_cast<std::uint64_t>(length)) +
                                 (has_labels ? length : 0);
    if (floats > r.remaining() / 4) {
      throw DataError(DataErrorCode::Truncated, "record payload exceeds file size", i);
    }
    rec.goal.resize(d);
    for (std::uint32_t k = 0; k < d; ++k) rec.goal(k) = r.f32("goal");
    rec.visual.resize(length, d);
    for (std::uint32_t t = 0; t < length; ++t) {
      for (std::uint32_t k = 0; k < d; ++k) rec.visual(t, k) = r.f32("visual");
    }
    if (has_labels) {
      Vec y(length);
      for (std::uint32_t t = 0; t < length; ++t) y(t) = r.f32("labels");
      rec.labels = std::move(y);
    }
    validate(rec, i);
    records.push_back(std::move(rec));
  }
  r.record.reset();
  if (r.remaining() != 0) throw DataError(DataErrorCode::TrailingData, "bytes after last record");
  return records;
}

void save_container(const std::filesystem::path& path, std::span<const TrajectoryRecord> records) {
  detail::write_file_bytes(path, encode_container(records));
}

std::vector<TrajectoryRecord> load_container(const std::filesystem::path& path) {
  return decode_container(detail::read_file_bytes(path));
}

std::vector<std::uint8_t> encode_vector(const Vec& v) {
  if (v.size() == 0 || !v.allFinite()) {
    throw DataError(DataErrorCode::InvalidValue, "vector must be non-empty and finite");
  }
  detail::ByteWriter w;
  w.raw("TTPV");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index k = 0; k < v.size(); ++k) w.f32(static_cast<float>(v(k)));
  return w.bytes();
}

Vec decode_vector(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.remaining() < 4 || r.str(4, "magic") != "TTPV") {
    throw DataError(DataErrorCode::BadMagic, "not a TTPV vector file");
  }
  const auto version = r.u32("version");
  if (version != 1) throw DataError(DataErrorCode::UnsupportedVersion, "vector version " + std::to_string(version));
  const auto d = r.u32("d");
  if (d == 0) throw DataError(DataErrorCode::DimensionMismatch, "d = 0");
  if (d > r.remaining() / 4) throw DataError(DataErrorCode::Truncated, "vector payload exceeds file size");
  Vec v(d);
  for (std::uint32_t k = 0; k < d; ++k) v(k) = r.f32("vector");
  if (r.remaining() != 0) throw DataError(DataErrorCode::TrailingData, "bytes after vector");
  if (!v.allFinite()) throw DataError(DataErrorCode::InvalidValue, "non-finite vector entry");
  return v;
}

void save_vector(const std::filesystem::path& path, const Vec& v) {
  detail::write_file_bytes(path, encode_vector(v));
}

Vec load_vector(const std::filesystem::path& path) { return decode_vector(detail::read_file_bytes(path)); }

// ---------------------------------------------------------------------------

std::string_view to_string(Shift shift) {
  switch (shift) {
    case Shift::InDistribution: return "ID";
    case Shift::Environment: return "ES";
    case Shift::Embodiment: return "EM";
    case Shift::EnvironmentEmbodiment: return "ES&EM";
  }
  return "?";
}

Shift parse_shift(std::string_view text) {
  if (text == "ID") return Shift::InDistribution;
  if (text == "ES") return Shift::Environment;
  if (text == "EM") return Shift::Embodiment;
  if (text == "ES&EM" || text == "ES+EM") return Shift::EnvironmentEmbodiment;
  throw DataError(DataErrorCode::InvalidValue, "unknown shift tag '" + std::string(text) + "'");
}

const ManifestSplit* Manifest::find(std::string_view name) const {
  for (const auto& s : splits) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::vector<const ManifestSplit*> Manifest::evaluation_splits() const {
  std::vector<const ManifestSplit*> out;
  for (const auto& s : splits) {
    if (s.name != "train" && s.name != "val") out.push_back(&s);
  }
  return out;
}

Manifest read_manifest(const std::filesystem::path& path) {
  const auto base = path.parent_path();
  Manifest manifest;
  for (const auto& kv : read_key_values(path)) {
    if (kv.key.starts_with("split.")) {
      std::istringstream ss(kv.value);
      std::string file, shift, extra;
      if (!(ss >> file >> shift) || (ss >> extra)) {
        throw DataError(DataErrorCode::InvalidValue,
                        "line " + std::to_string(kv.line) + ": expected '<path> <shift>'");
      }
      ManifestSplit split{kv.key.substr(6), base / file, parse_shift(shift)};
      if (split.name.empty() || manifest.find(split.name)) {
        throw DataError(DataErrorCode::InvalidValue,
                        "line " + std::to_string(kv.line) + ": empty or duplicate split name");
      }
      manifest.splits.push_back(std::move(split));
    } else if (kv.key == "baseline_embedding") {
      manifest.baseline_embedding = base / kv.value;
    } else {
      throw DataError(DataErrorCode::InvalidValue,
                      "line " + std::to_string(kv.line) + ": unknown manifest key '" + kv.key + "'");
    }
  }
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::ostringstream out;
  out << "# dataset manifest: split.<name> = <file> <shift>\n";
  if (manifest.baseline_embedding) {
    out << "baseline_embedding = "
        << std::filesystem::relative(*manifest.baseline_embedding, base).generic_string() << "\n";
  }
  for (const auto& s : manifest.splits) {
    out << "split." << s.name << " = " << std::filesystem::relative(s.path, base).generic_string()
        << " " << to_string(s.shift) << "\n";
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError(DataErrorCode::Io, "cannot write " + path.string());
  f << out.str();
}

}  // namespace ttp
